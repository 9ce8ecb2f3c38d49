use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use palink::{
    coeffs,
    harness::{self, ExitStatus, Metric, Plan, RunOptions},
    scenario_file,
};
use palink_core::{
    pa_model::fit_reference,
    scenario::{Architecture, Compensation, PaMode, Scenario},
};

#[derive(Parser)]
#[command(name = "palink", version, about = "Multi-user hybrid beamforming link simulator with nonlinear amplifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the cartesian product of architectures, amplifier modes and
    /// compensation modes.
    Run(RunArgs),
    /// Run the standard comparison suite at desk or full scale.
    Reproduce(ReproduceArgs),
    /// Fit the reference amplifier model and write its coefficient file.
    FitPa {
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a preset scenario as TOML.
    Scenario {
        #[arg(long, default_value = "desk")]
        preset: String,
    },
}

#[derive(Args)]
struct Common {
    /// Base seed; defaults to the scenario's own seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Amplifier coefficient file replacing the scenario's model.
    #[arg(long)]
    pa_model: Option<PathBuf>,
    /// Frames per Bussgang estimate.
    #[arg(long)]
    bussgang_frames: Option<usize>,
    /// Number of channel realizations.
    #[arg(long)]
    realizations: Option<usize>,
    /// Directory for covariance and Bussgang caches.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Write the analog beamformers to beamformers/*.json.
    #[arg(long)]
    dump_beamformer: bool,
    /// Write trained predistorter coefficients to dpd/.
    #[arg(long)]
    dump_dpd: bool,
    /// Write base Bussgang models to bussgang/.
    #[arg(long)]
    dump_bussgang: bool,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario TOML file.
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario (desk or full) when no file is given.
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Architectures, comma separated (or `all`).
    #[arg(long, value_delimiter = ',', default_value = "all")]
    arch: Vec<String>,
    /// Compensation modes: none, posteq, dpd.
    #[arg(long = "comp", alias = "compensation", value_delimiter = ',', default_value = "none")]
    comp: Vec<Compensation>,
    /// Amplifier modes: linear, nonlinear.
    #[arg(long, value_delimiter = ',', default_value = "nonlinear")]
    pa: Vec<PaMode>,
    /// Metrics: psd, patterns, gmi, ber.
    #[arg(long, value_delimiter = ',', default_value = "psd,patterns,gmi,ber")]
    metrics: Vec<Metric>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Desk,
    Full,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long, value_enum, default_value = "desk")]
    scale: Scale,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

fn architectures(names: &[String]) -> Result<Vec<Architecture>> {
    if names.iter().any(|n| n == "all") {
        return Ok(Architecture::ALL.to_vec());
    }
    names.iter().map(|n| n.parse::<Architecture>().with_context(|| format!("--arch {n}"))).collect()
}

fn configure(plan: &mut Plan, c: &Common) {
    if let Some(seed) = c.seed {
        plan.scenario.seed = seed;
    }
    if let Some(n) = c.bussgang_frames {
        plan.scenario.analysis.bussgang_frames = n;
    }
    if let Some(n) = c.realizations {
        plan.scenario.n_channel_realizations = n;
    }
    if let Some(p) = &c.pa_model {
        plan.legs.iter_mut().for_each(|l| l.pa_model = Some(p.clone()));
    }
    plan.options = RunOptions {
        jobs: c.jobs,
        cache_dir: c.cache.clone(),
        dump_beamformer: c.dump_beamformer,
        dump_dpd: c.dump_dpd,
        dump_bussgang: c.dump_bussgang,
        verbose: !c.quiet,
    };
}

fn execute(plan: &Plan) -> Result<ExitStatus> {
    plan.scenario.validate().context("invalid scenario")?;
    let m = harness::run(plan)?;
    let status = ExitStatus::of(&m);
    eprintln!(
        "{} of {} legs succeeded in {:.1} s; manifest at {}",
        m.succeeded(),
        m.legs.len(),
        m.wall_clock_s,
        plan.out.join(palink::manifest::FILE_NAME).display()
    );
    Ok(status)
}

fn main() -> std::process::ExitCode {
    match real_main() {
        Ok(s) => std::process::ExitCode::from(s as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::from(ExitStatus::Failure as u8)
        }
    }
}

fn real_main() -> Result<ExitStatus> {
    match Cli::parse().command {
        Command::Run(a) => {
            let (scenario, base_dir) = match &a.scenario {
                Some(p) => {
                    let l = scenario_file::load(p)?;
                    (l.scenario, l.base_dir)
                }
                None => (scenario_file::preset(&a.preset)?, PathBuf::new()),
            };
            let archs = architectures(&a.arch)?;
            if a.metrics.is_empty() {
                bail!("no metrics selected");
            }
            let mut plan = Plan::cartesian(scenario, base_dir, &archs, &a.pa, &a.comp, &a.metrics, a.out.clone());
            configure(&mut plan, &a.common);
            execute(&plan)
        }
        Command::Reproduce(a) => {
            let scenario = match a.scale {
                Scale::Desk => Scenario::desk(),
                Scale::Full => Scenario::full(),
            };
            let mut plan = Plan::suite(scenario, a.out.clone());
            configure(&mut plan, &a.common);
            execute(&plan)
        }
        Command::FitPa { out } => {
            let model = fit_reference()?;
            coeffs::write_pa(&model, &out)?;
            eprintln!("wrote {}", out.display());
            Ok(ExitStatus::Success)
        }
        Command::Scenario { preset } => {
            print!("{}", scenario_file::to_toml(&scenario_file::preset(&preset)?));
            Ok(ExitStatus::Success)
        }
    }
}
