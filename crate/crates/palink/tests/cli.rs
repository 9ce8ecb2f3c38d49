mod common;

use std::process::Command;

use palink::{coeffs, scenario_file, RunManifest};
use palink_core::pa_model::PaModel;

fn palink() -> Command {
    Command::new(env!("CARGO_BIN_EXE_palink"))
}

#[test]
fn prints_a_preset_that_parses_back() {
    let out = palink().args(["scenario", "--preset", "desk"]).output().unwrap();
    assert!(out.status.success());
    let s = scenario_file::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(s, palink_core::scenario::Scenario::desk());
}

#[test]
fn run_from_scenario_file_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.toml");
    scenario_file::save(&common::tiny(), &path).unwrap();
    let out_dir = dir.path().join("out");
    let status = palink()
        .args(["run", "--scenario"])
        .arg(&path)
        .args(["--arch", "fully-connected", "--comp", "none", "--pa", "linear", "--metrics", "gmi,patterns", "--seed", "3", "--jobs", "2", "-q", "--out"])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let m = RunManifest::read(&out_dir).unwrap();
    assert_eq!(m.seed, 3);
    assert_eq!(m.legs.len(), 1);
    assert!(out_dir.join("patterns/fully-connected_linear_none/pattern.csv").is_file());
}

#[test]
fn missing_pa_model_is_a_total_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.toml");
    scenario_file::save(&common::tiny(), &path).unwrap();
    let status = palink()
        .args(["run", "-q", "--arch", "partial-dft", "--metrics", "gmi", "--pa-model", "nope.txt", "--scenario"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn bad_arguments_are_rejected() {
    let out = palink().args(["run", "--arch", "analog", "--out", "x"]).output().unwrap();
    assert!(!out.status.success());
    let out = palink().args(["run", "--metrics", "evm", "--out", "x"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn fit_pa_writes_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pa.txt");
    let status = palink().args(["fit-pa", "--out"]).arg(&path).status().unwrap();
    assert!(status.success());
    let fitted = coeffs::read_pa(&path).unwrap();
    let shipped = PaModel::reference();
    for (a, b) in fitted.poly.coeffs().iter().zip(shipped.poly.coeffs()) {
        assert!((a - b).norm() < 1e-9);
    }
}
