mod common;

use std::path::{Path, PathBuf};

use palink::{
    harness::{run, ExitStatus, Leg, Metric, Plan, RunOptions},
    manifest::LegStatus,
    RunManifest,
};
use palink_core::scenario::{Architecture, Compensation, PaMode};

fn plan(legs: Vec<Leg>, out: &Path, jobs: usize) -> Plan {
    Plan {
        scenario: common::tiny(),
        base_dir: PathBuf::new(),
        legs,
        out: out.to_path_buf(),
        options: RunOptions { jobs, ..RunOptions::default() },
    }
}

fn files_under(root: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn single_ber_leg_writes_ber_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let leg = Leg::new(Architecture::FullyDigital, PaMode::Linear, Compensation::None, &[Metric::Ber]);
    let m = run(&plan(vec![leg], dir.path(), 1)).unwrap();
    assert_eq!(m.legs.len(), 1);
    assert_eq!(m.legs[0].status, LegStatus::Ok, "{:?}", m.legs[0].error);
    assert_eq!(ExitStatus::of(&m), ExitStatus::Success);
    assert!(dir.path().join("ber/fully-digital_linear_none/ber.csv").is_file());
    assert_eq!(RunManifest::read(dir.path()).unwrap(), m);
}

#[test]
fn manifest_covers_every_emitted_file() {
    let dir = tempfile::tempdir().unwrap();
    let legs = vec![
        Leg::new(Architecture::PartialGeb, PaMode::Nonlinear, Compensation::Dpd, &Metric::ALL),
        Leg::new(Architecture::PartialDft, PaMode::Nonlinear, Compensation::PostEq, &[Metric::Gmi]),
    ];
    let mut p = plan(legs, dir.path(), 1);
    p.options.dump_beamformer = true;
    p.options.dump_dpd = true;
    p.options.dump_bussgang = true;
    let m = run(&p).unwrap();
    assert_eq!(m.succeeded(), 2, "{:?}", m.legs);
    let mut listed: Vec<String> = m.outputs.iter().map(|o| o.path.clone()).collect();
    listed.push("manifest.json".into());
    listed.sort();
    assert_eq!(files_under(dir.path()), listed);
    for f in ["patterns/partial-geb_nonlinear_dpd/pattern.csv", "beamformers/partial-dft.json", "dpd/partial-geb_nonlinear_dpd/r0.txt"] {
        assert!(listed.iter().any(|l| l == f), "{f} missing");
    }
    let bank = palink::coeffs::read_dpd(&dir.path().join("dpd/partial-geb_nonlinear_dpd/r1.txt")).unwrap();
    assert_eq!(bank.chains.len(), 6);
}

#[test]
fn reruns_and_thread_counts_give_identical_hashes() {
    let legs = || {
        vec![
            Leg::new(Architecture::FullyConnected, PaMode::Nonlinear, Compensation::None, &Metric::ALL),
            Leg::new(Architecture::PartialGeb, PaMode::Linear, Compensation::None, &[Metric::Psd, Metric::Gmi]),
        ]
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let ma = run(&plan(legs(), a.path(), 1)).unwrap();
    let mb = run(&plan(legs(), b.path(), 1)).unwrap();
    let mc = run(&plan(legs(), c.path(), 3)).unwrap();
    assert_eq!(ma.succeeded(), 2);
    assert_eq!(ma.content_hashes(), mb.content_hashes());
    assert_eq!(ma.content_hashes(), mc.content_hashes());
}

#[test]
fn seed_changes_results() {
    let leg = || vec![Leg::new(Architecture::FullyDigital, PaMode::Nonlinear, Compensation::None, &[Metric::Gmi])];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run(&plan(leg(), a.path(), 1)).unwrap();
    let mut p = plan(leg(), b.path(), 1);
    p.scenario.seed += 1;
    let mb = run(&p).unwrap();
    assert_ne!(ma.content_hashes(), mb.content_hashes());
    assert_ne!(ma.scenario_hash, mb.scenario_hash);
}

#[test]
fn missing_pa_file_fails_only_its_leg() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad = Leg::new(Architecture::FullyDigital, PaMode::Nonlinear, Compensation::None, &[Metric::Gmi]);
    bad.pa_model = Some(PathBuf::from("does/not/exist.txt"));
    let good = Leg::new(Architecture::FullyDigital, PaMode::Linear, Compensation::None, &[Metric::Gmi]);
    let m = run(&plan(vec![bad, good], dir.path(), 2)).unwrap();
    assert_eq!(m.legs[0].status, LegStatus::Failed);
    assert!(m.legs[0].error.as_deref().unwrap().contains("exist.txt"));
    assert_eq!(m.legs[1].status, LegStatus::Ok);
    assert_eq!(ExitStatus::of(&m), ExitStatus::Partial);
    assert!(dir.path().join("gmi/fully-digital_linear_none/gmi.csv").is_file());
}

#[test]
fn all_legs_failing_is_total_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut leg = Leg::new(Architecture::PartialDft, PaMode::Linear, Compensation::None, &[Metric::Gmi]);
    leg.pa_model = Some(PathBuf::from("missing.txt"));
    let m = run(&plan(vec![leg], dir.path(), 1)).unwrap();
    assert_eq!(ExitStatus::of(&m), ExitStatus::Failure);
    assert!(m.outputs.is_empty());
}

#[test]
fn cache_reuse_does_not_change_results() {
    let cache = tempfile::tempdir().unwrap();
    let legs = || vec![Leg::new(Architecture::PartialGeb, PaMode::Nonlinear, Compensation::PostEq, &[Metric::Ber])];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let plain = run(&plan(legs(), a.path(), 1)).unwrap();
    let mut p = plan(legs(), b.path(), 1);
    p.options.cache_dir = Some(cache.path().to_path_buf());
    let cold = run(&p).unwrap();
    p.out = c.path().to_path_buf();
    let warm = run(&p).unwrap();
    assert_eq!(plain.content_hashes(), cold.content_hashes());
    assert_eq!(plain.content_hashes(), warm.content_hashes());
    let names: Vec<String> = std::fs::read_dir(cache.path()).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert!(names.iter().any(|n| n.starts_with("ccm-")));
    assert_eq!(names.iter().filter(|n| n.starts_with("bussgang-")).count(), 2);
}
