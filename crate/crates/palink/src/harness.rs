//! Experiment runner: enumerates legs (architecture x amplifier mode x
//! compensation), evaluates the requested metrics over the scenario's
//! channel realizations and writes CSV bundles plus a manifest.
//!
//! Results are organized by metric bundle and leg:
//!
//! ```text
//! <out>/spectra/<leg>/psd_<angle>.csv
//! <out>/patterns/<leg>/pattern.csv
//! <out>/gmi/<leg>/gmi.csv
//! <out>/ber/<leg>/ber.csv
//! <out>/manifest.json
//! ```
//!
//! Determinism: every realization draws from streams keyed by its index,
//! realizations are evaluated independently and their results are reduced
//! in index order. The thread count changes scheduling only.

use std::{
    collections::BTreeMap,
    fmt,
    panic::{catch_unwind, AssertUnwindSafe},
    path::{Path, PathBuf},
    str::FromStr,
    time::Instant,
};

use palink_core::{
    analysis::{accumulate_spectra, analytic_ber, analytic_terms_with, base_model, gmi, monte_carlo_ber, prepare, RealizationTerms},
    beamformer::design,
    channel::{user_angles, CcmSet},
    linearizer::DpdBank,
    link::Link,
    metrics::{angle_grid, BerCounter, GmiAccumulator, SpectrumAccumulator},
    pa_model::PaModel,
    scenario::{Architecture, Compensation, PaMode, Scenario},
};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::{
    cache, coeffs, dump,
    manifest::{self, LegRecord, LegStatus, RunManifest},
    outputs::{self, BerRow, GmiRow},
    scenario_file, Error, Result,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Psd,
    Patterns,
    Gmi,
    Ber,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Psd, Metric::Patterns, Metric::Gmi, Metric::Ber];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Psd => "psd",
            Metric::Patterns => "patterns",
            Metric::Gmi => "gmi",
            Metric::Ber => "ber",
        }
    }

    /// Top-level directory the metric's files go to.
    pub fn bundle(self) -> &'static str {
        match self {
            Metric::Psd => "spectra",
            Metric::Patterns => "patterns",
            Metric::Gmi => "gmi",
            Metric::Ber => "ber",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "psd" | "spectra" => Ok(Metric::Psd),
            "patterns" | "pattern" => Ok(Metric::Patterns),
            "gmi" => Ok(Metric::Gmi),
            "ber" => Ok(Metric::Ber),
            other => Err(format!("unknown metric `{other}`; expected psd, patterns, gmi or ber")),
        }
    }
}

/// One (architecture, amplifier mode, compensation) combination.
#[derive(Clone, Debug, PartialEq)]
pub struct Leg {
    pub architecture: Architecture,
    pub pa: PaMode,
    pub compensation: Compensation,
    pub metrics: Vec<Metric>,
    /// Amplifier coefficient file overriding the scenario's model.
    pub pa_model: Option<PathBuf>,
}

impl Leg {
    pub fn new(architecture: Architecture, pa: PaMode, compensation: Compensation, metrics: &[Metric]) -> Self {
        let mut metrics = metrics.to_vec();
        metrics.sort();
        metrics.dedup();
        Leg { architecture, pa, compensation, metrics, pa_model: None }
    }

    pub fn name(&self) -> String {
        format!("{}_{}_{}", self.architecture.name(), self.pa.name(), self.compensation.name())
    }

    fn wants(&self, m: Metric) -> bool {
        self.metrics.contains(&m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    /// Worker threads; 0 lets the pool choose.
    pub jobs: usize,
    /// Directory for the covariance and Bussgang caches.
    pub cache_dir: Option<PathBuf>,
    /// Write each architecture's analog beamformer to `beamformers/`.
    pub dump_beamformer: bool,
    /// Write trained predistorters to `dpd/<leg>/`.
    pub dump_dpd: bool,
    /// Write the base Bussgang model of each realization to `bussgang/<leg>/`.
    pub dump_bussgang: bool,
    /// Print progress to stderr.
    pub verbose: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { jobs: 1, cache_dir: None, dump_beamformer: false, dump_dpd: false, dump_bussgang: false, verbose: false }
    }
}

#[derive(Clone, Debug)]
pub struct Plan {
    pub scenario: Scenario,
    /// Directory that relative paths in the scenario refer to.
    pub base_dir: PathBuf,
    pub legs: Vec<Leg>,
    pub out: PathBuf,
    pub options: RunOptions,
}

impl Plan {
    /// Every combination of the given architectures, amplifier modes and
    /// compensation modes, in that nesting order, each with all `metrics`.
    pub fn cartesian(
        scenario: Scenario,
        base_dir: PathBuf,
        architectures: &[Architecture],
        pa_modes: &[PaMode],
        compensations: &[Compensation],
        metrics: &[Metric],
        out: PathBuf,
    ) -> Plan {
        let mut legs = Vec::new();
        for &a in architectures {
            for &p in pa_modes {
                for &c in compensations {
                    legs.push(Leg::new(a, p, c, metrics));
                }
            }
        }
        Plan { scenario, base_dir, legs, out, options: RunOptions::default() }
    }

    /// The standard comparison suite: for every architecture a linear
    /// reference, the uncompensated nonlinear chain, post-equalization and
    /// predistortion.
    pub fn suite(scenario: Scenario, out: PathBuf) -> Plan {
        use Metric::*;
        let mut legs = Vec::new();
        for a in Architecture::ALL {
            legs.push(Leg::new(a, PaMode::Linear, Compensation::None, &[Psd, Patterns, Gmi, Ber]));
            legs.push(Leg::new(a, PaMode::Nonlinear, Compensation::None, &[Psd, Patterns, Gmi]));
            legs.push(Leg::new(a, PaMode::Nonlinear, Compensation::PostEq, &[Gmi, Ber]));
            legs.push(Leg::new(a, PaMode::Nonlinear, Compensation::Dpd, &[Psd, Patterns, Gmi, Ber]));
        }
        Plan { scenario, base_dir: PathBuf::new(), legs, out, options: RunOptions::default() }
    }
}

/// Process exit status of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Partial = 1,
    Failure = 2,
}

impl ExitStatus {
    pub fn of(m: &RunManifest) -> ExitStatus {
        let ok = m.succeeded();
        if ok == m.legs.len() {
            ExitStatus::Success
        } else if ok == 0 {
            ExitStatus::Failure
        } else {
            ExitStatus::Partial
        }
    }
}

/// Everything one realization contributes to a leg's results.
#[derive(Default)]
struct RealizationOut {
    spectra: Option<SpectrumAccumulator>,
    gmi: Option<Vec<GmiAccumulator>>,
    terms: Option<RealizationTerms>,
    ber: Option<Vec<BerCounter>>,
    dpd: Option<DpdBank>,
    bussgang: Option<Vec<u8>>,
}

struct Context<'a> {
    plan: &'a Plan,
    /// Per-architecture scenario and statistics (or the error building them).
    stats: &'a BTreeMap<Architecture, std::result::Result<ArchData, String>>,
    default_pa: &'a std::result::Result<PaModel, String>,
}

struct ArchData {
    scenario: Scenario,
    ccm: CcmSet,
    sub: Option<CcmSet>,
}

/// Runs every leg and writes results and the manifest. Leg failures are
/// recorded in the manifest; only I/O errors on the output directory itself
/// are returned as `Err`.
pub fn run(plan: &Plan) -> Result<RunManifest> {
    let start = Instant::now();
    std::fs::create_dir_all(&plan.out).map_err(|e| Error::io(&plan.out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.options.jobs)
        .build()
        .expect("thread pool");
    let (legs, extra) = pool.install(|| run_in_pool(plan));
    let mut files: Vec<String> = legs.iter().flat_map(|l| l.outputs.clone()).chain(extra).collect();
    files.sort();
    files.dedup();
    let outputs = files.iter().map(|f| manifest::hash_file(&plan.out, f)).collect::<Result<Vec<_>>>()?;
    let m = RunManifest {
        format: manifest::FORMAT.into(),
        version: manifest::VERSION,
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        scenario: plan.scenario.name.clone(),
        scenario_hash: scenario_file::hash(&plan.scenario),
        seed: plan.scenario.seed,
        jobs: plan.options.jobs,
        wall_clock_s: start.elapsed().as_secs_f64(),
        legs,
        outputs,
    };
    m.write(&plan.out)?;
    Ok(m)
}

fn run_in_pool(plan: &Plan) -> (Vec<LegRecord>, Vec<String>) {
    let mut archs: Vec<Architecture> = plan.legs.iter().map(|l| l.architecture).collect();
    archs.sort();
    archs.dedup();
    let cache_dir = plan.options.cache_dir.as_deref();
    let built: Vec<(Architecture, std::result::Result<ArchData, String>)> = archs
        .par_iter()
        .map(|&a| {
            let data = plan.scenario.with_architecture(a).map_err(Error::from).and_then(|scenario| {
                let (ccm, sub) = cache::link_statistics(&scenario, cache_dir)?;
                Ok(ArchData { scenario, ccm, sub })
            });
            (a, data.map_err(|e| e.to_string()))
        })
        .collect();
    let stats: BTreeMap<_, _> = built.into_iter().collect();

    let mut extra = Vec::new();
    if plan.options.dump_beamformer {
        for (a, data) in &stats {
            let Ok(d) = data else { continue };
            if let Ok(b) = design(&d.scenario, &d.ccm, d.sub.as_ref()) {
                let rel = format!("beamformers/{}.json", a.name());
                if write_text(&plan.out, &rel, &dump::to_json(&b)).is_ok() {
                    extra.push(rel);
                }
            }
        }
    }

    let default_pa = scenario_file::resolve_pa(&plan.scenario.pa.model, &plan.base_dir).map_err(|e| e.to_string());
    let ctx = Context { plan, stats: &stats, default_pa: &default_pa };
    let records = plan.legs.par_iter().map(|leg| run_leg(&ctx, leg)).collect();
    (records, extra)
}

fn run_leg(ctx: &Context, leg: &Leg) -> LegRecord {
    let start = Instant::now();
    let name = leg.name();
    let result = catch_unwind(AssertUnwindSafe(|| execute_leg(ctx, leg)))
        .unwrap_or_else(|p| Err(panic_message(p.as_ref())));
    let (status, error, outputs) = match result {
        Ok(files) => (LegStatus::Ok, None, files),
        Err(e) => (LegStatus::Failed, Some(e), Vec::new()),
    };
    let wall = start.elapsed().as_secs_f64();
    if ctx.plan.options.verbose {
        match &error {
            None => eprintln!("[ok] {name} ({wall:.1} s)"),
            Some(e) => eprintln!("[failed] {name}: {e}"),
        }
    }
    LegRecord {
        name,
        architecture: leg.architecture.name().into(),
        pa: leg.pa.name().into(),
        compensation: leg.compensation.name().into(),
        metrics: leg.metrics.iter().map(|m| m.name().into()).collect(),
        status,
        error,
        wall_clock_s: wall,
        outputs,
    }
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    let msg = p
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into());
    format!("panic: {msg}")
}

/// Angles for the PSD files: the users' main directions, deduplicated.
fn psd_angles(scenario: &Scenario) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for a in user_angles(scenario) {
        if !out.contains(&a) {
            out.push(a);
        }
    }
    out
}

fn execute_leg(ctx: &Context, leg: &Leg) -> std::result::Result<Vec<String>, String> {
    let data = ctx.stats.get(&leg.architecture).expect("statistics built for every architecture").as_ref()?;
    let pa = match &leg.pa_model {
        Some(p) => coeffs::read_pa(&ctx.plan.base_dir.join(p)).map_err(|e| e.to_string())?,
        None => ctx.default_pa.clone()?,
    };
    let s = &data.scenario;
    let link = Link::with_statistics(s, leg.pa, leg.compensation, &pa, data.ccm.clone(), data.sub.clone())
        .map_err(|e| e.to_string())?;

    let psd = psd_angles(s);
    let grid = angle_grid(s.analysis.pattern_span_deg, s.analysis.pattern_step_deg);
    let mut angles = Vec::new();
    if leg.wants(Metric::Psd) {
        angles.extend(&psd);
    }
    let pattern_start = angles.len();
    if leg.wants(Metric::Patterns) {
        angles.extend(&grid);
    }
    let leg_key = leg_key(s, leg, &pa);

    let per_realization = (0..s.n_channel_realizations as u64)
        .into_par_iter()
        .map(|r| realization(ctx, leg, &link, &angles, &leg_key, r))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;

    let name = leg.name();
    let out = &ctx.plan.out;
    let mut files = Vec::new();
    let mut write = |rel: String, f: &dyn Fn(&Path) -> Result<()>| -> std::result::Result<(), String> {
        let path = out.join(&rel);
        std::fs::create_dir_all(path.parent().expect("relative path has a parent")).map_err(|e| e.to_string())?;
        f(&path).map_err(|e| e.to_string())?;
        files.push(rel);
        Ok(())
    };

    if !angles.is_empty() {
        let mut acc = SpectrumAccumulator::new(&angles, s.array.n_antennas, s.waveform.fft_size);
        for o in &per_realization {
            acc.merge(o.spectra.as_ref().expect("spectra requested")).map_err(|e| e.to_string())?;
        }
        let spectra = acc.finish().map_err(|e| e.to_string())?;
        if leg.wants(Metric::Psd) {
            for (a, &angle) in psd.iter().enumerate() {
                let rows = outputs::psd_rows(&spectra.psd(a));
                let rel = format!("{}/{name}/{}", Metric::Psd.bundle(), outputs::psd_file_name(angle));
                write(rel, &|p| outputs::write_csv(p, &rows))?;
            }
        }
        if leg.wants(Metric::Patterns) {
            let report = spectra.select(pattern_start..angles.len()).patterns(s.waveform.n_active);
            let rows = outputs::pattern_rows(&report);
            write(format!("{}/{name}/pattern.csv", Metric::Patterns.bundle()), &|p| outputs::write_csv(p, &rows))?;
        }
    }

    if leg.wants(Metric::Gmi) {
        let mut acc = vec![GmiAccumulator::default(); s.snr_grid_db.len()];
        for o in &per_realization {
            for (a, b) in acc.iter_mut().zip(o.gmi.as_ref().expect("gmi requested")) {
                a.merge(b);
            }
        }
        let rows: Vec<GmiRow> = s.snr_grid_db.iter().zip(&acc).map(|(&snr_db, a)| GmiRow { snr_db, bits: a.value() }).collect();
        write(format!("{}/{name}/gmi.csv", Metric::Gmi.bundle()), &|p| outputs::write_csv(p, &rows))?;
    }

    if leg.wants(Metric::Ber) {
        let terms: Vec<RealizationTerms> = per_realization.iter().map(|o| o.terms.clone().expect("ber requested")).collect();
        let mut counters = vec![BerCounter::default(); s.snr_grid_db.len()];
        for o in &per_realization {
            for (a, b) in counters.iter_mut().zip(o.ber.as_ref().expect("ber requested")) {
                a.merge(b);
            }
        }
        let rows: Vec<BerRow> = s
            .snr_grid_db
            .iter()
            .zip(&counters)
            .map(|(&snr_db, c)| {
                let (ci_lo, ci_hi) = c.interval();
                BerRow {
                    snr_db,
                    ber_analytical: analytic_ber(&terms, snr_db, s.waveform.mod_order),
                    ber_mc: c.rate(),
                    ci_lo,
                    ci_hi,
                }
            })
            .collect();
        write(format!("{}/{name}/ber.csv", Metric::Ber.bundle()), &|p| outputs::write_csv(p, &rows))?;
    }

    for (r, o) in per_realization.iter().enumerate() {
        if let Some(bank) = &o.dpd {
            let text = coeffs::format_dpd(bank);
            write(format!("dpd/{name}/r{r}.txt"), &|p| std::fs::write(p, &text).map_err(|e| Error::io(p, e)))?;
        }
        if let Some(bytes) = &o.bussgang {
            write(format!("bussgang/{name}/r{r}.bin"), &|p| std::fs::write(p, bytes).map_err(|e| Error::io(p, e)))?;
        }
    }
    Ok(files)
}

/// Hash of everything a leg's results depend on.
fn leg_key(s: &Scenario, leg: &Leg, pa: &PaModel) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(scenario_file::hash(s));
    h.update(leg.pa.name());
    h.update(leg.compensation.name());
    h.update(coeffs::format_pa(pa));
    h.finalize().to_vec()
}

fn realization(ctx: &Context, leg: &Leg, link: &Link, angles: &[f64], leg_key: &[u8], r: u64) -> Result<RealizationOut> {
    let s = &link.scenario;
    let opts = &ctx.plan.options;
    let state = prepare(link, r)?;
    let mut out = RealizationOut::default();
    if !angles.is_empty() {
        let mut acc = SpectrumAccumulator::new(angles, s.array.n_antennas, s.waveform.fft_size);
        accumulate_spectra(link, &state, &mut acc)?;
        out.spectra = Some(acc);
    }
    if leg.wants(Metric::Gmi) {
        out.gmi = Some(gmi(link, &state, &s.snr_grid_db)?);
    }
    if leg.wants(Metric::Ber) {
        let mut h = Sha256::new();
        h.update(leg_key);
        h.update(r.to_le_bytes());
        h.update((s.analysis.bussgang_frames as u64).to_le_bytes());
        let key: cache::Key = h.finalize().into();
        let cached = match &opts.cache_dir {
            Some(dir) => cache::read_bussgang(&bussgang_cache_path(dir, &key), &key)?,
            None => None,
        };
        let model = match cached {
            Some(m) => m,
            None => {
                let m = base_model(link, &state)?;
                if let Some(dir) = &opts.cache_dir {
                    cache::write_bussgang(&m, &key, &bussgang_cache_path(dir, &key))?;
                }
                m
            }
        };
        if opts.dump_bussgang {
            out.bussgang = Some(cache::encode_bussgang(&model, &key));
        }
        out.terms = Some(analytic_terms_with(link, &state, &model)?);
        out.ber = Some(monte_carlo_ber(link, &state, &s.snr_grid_db)?);
    }
    if opts.dump_dpd {
        out.dpd = state.dpd.clone();
    }
    Ok(out)
}

fn bussgang_cache_path(dir: &Path, key: &cache::Key) -> PathBuf {
    dir.join(format!("bussgang-{}.bin", hex::encode(&key[..8])))
}

fn write_text(root: &Path, rel: &str, text: &str) -> Result<()> {
    let path = root.join(rel);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_names_parse_back() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!("evm".parse::<Metric>().is_err());
    }

    #[test]
    fn cartesian_plan_enumerates_in_nesting_order() {
        let p = Plan::cartesian(
            Scenario::desk(),
            PathBuf::new(),
            &[Architecture::FullyDigital, Architecture::PartialDft],
            &[PaMode::Linear, PaMode::Nonlinear],
            &[Compensation::None],
            &[Metric::Ber, Metric::Gmi, Metric::Ber],
            PathBuf::from("out"),
        );
        let names: Vec<String> = p.legs.iter().map(Leg::name).collect();
        assert_eq!(
            names,
            [
                "fully-digital_linear_none",
                "fully-digital_nonlinear_none",
                "partial-dft_linear_none",
                "partial-dft_nonlinear_none"
            ]
        );
        assert_eq!(p.legs[0].metrics, [Metric::Gmi, Metric::Ber]);
    }

    #[test]
    fn suite_has_four_legs_per_architecture() {
        let p = Plan::suite(Scenario::desk(), PathBuf::from("out"));
        assert_eq!(p.legs.len(), 16);
        let dpd = p.legs.iter().filter(|l| l.compensation == Compensation::Dpd).count();
        assert_eq!(dpd, 4);
    }
}
