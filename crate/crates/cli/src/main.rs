use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::ConfigError;

#[derive(Parser)]
#[command(name = "absorber", version, about = "Design and evaluate electroacoustic absorbers")]
struct Cli {
    /// worker threads for parallel sections (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Common {
    /// experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// output directory; overrides `out_dir` in the config
    #[arg(long)]
    out: Option<PathBuf>,
    /// overrides every seed in the config
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize H1/H2, discretize them and check stability.
    Design(Common),
    /// Absorption quartiles under random parameter errors, with and without feedback.
    Montecarlo(Common),
    /// Estimate the five model parameters from passive and probed spectra.
    Identify(IdentifyArgs),
    /// Simulated two-microphone measurement of the absorber in a tube.
    Kundt(Common),
    /// Time-domain closed-loop simulation with sine excitation.
    Simulate(SimulateArgs),
    /// Gains of the Howland current source.
    CurrentSource(CurrentSourceArgs),
    /// Write passive and probed spectra of a model, e.g. as test fixtures.
    SynthSpectra(SynthArgs),
    /// Print one of the built-in example configs (1dof, broadband, 2dof).
    Init { name: String },
}

#[derive(Args)]
struct IdentifyArgs {
    #[arg(long)]
    passive: PathBuf,
    #[arg(long)]
    front: PathBuf,
    #[arg(long)]
    rear: PathBuf,
    /// JSON with the probe gains `k1` and `k2`
    #[arg(long)]
    probes: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// controller latency in samples; overrides the config
    #[arg(long)]
    latency: Option<usize>,
}

#[derive(Args)]
struct CurrentSourceArgs {
    #[arg(long, default_value_t = 92e3)]
    r1: f64,
    #[arg(long, default_value_t = 92e3)]
    r2: f64,
    #[arg(long, default_value_t = 1.1e3)]
    r3: f64,
    #[arg(long, default_value_t = 1.1e3)]
    r4: f64,
    #[arg(long, default_value_t = 1.2)]
    r5: f64,
}

#[derive(Args)]
struct SynthArgs {
    /// config supplying the model; the reference model when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// file name prefix
    #[arg(long, default_value = "")]
    prefix: String,
    #[arg(long, default_value_t = 170.0)]
    lo_hz: f64,
    #[arg(long, default_value_t = 250.0)]
    hi_hz: f64,
    #[arg(long, default_value_t = 1.0)]
    step_hz: f64,
    /// relative complex noise added to every sample
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn out_dir(common: &Common, cfg: &config::ExperimentConfig) -> PathBuf {
    common.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."))
}

fn load(common: &Common) -> anyhow::Result<config::ExperimentConfig> {
    let mut cfg = config::ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.montecarlo.seed = seed;
        cfg.kundt.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting thread pool")?;
    }
    match cli.cmd {
        Command::Design(c) => {
            let cfg = load(&c)?;
            commands::design(&cfg, &out_dir(&c, &cfg))
        }
        Command::Montecarlo(c) => {
            let cfg = load(&c)?;
            commands::montecarlo(&cfg, &out_dir(&c, &cfg))
        }
        Command::Kundt(c) => {
            let cfg = load(&c)?;
            commands::kundt(&cfg, &out_dir(&c, &cfg))
        }
        Command::Simulate(a) => {
            let mut cfg = load(&a.common)?;
            if let Some(l) = a.latency {
                cfg.simulate.loop_cfg.latency_samples = l;
            }
            commands::simulate(&cfg, &out_dir(&a.common, &cfg))
        }
        Command::Identify(a) => commands::identify(&a.passive, &a.front, &a.rear, &a.probes, &a.out),
        Command::CurrentSource(a) => commands::current_source(a.r1, a.r2, a.r3, a.r4, a.r5),
        Command::SynthSpectra(a) => {
            let model = match &a.config {
                Some(p) => config::ExperimentConfig::load(p)?.model.resolve()?,
                None => absorber_core::DriverModel::reference(),
            };
            let band = config::GridSpec { lo_hz: a.lo_hz, hi_hz: a.hi_hz, step_hz: a.step_hz, extra_hz: vec![] };
            commands::synth_spectra(&model, &band.points()?, a.noise, a.seed, &a.out, &a.prefix)
        }
        Command::Init { name } => {
            let cfg = config::ExperimentConfig::table1(&name)
                .ok_or_else(|| ConfigError(format!("no built-in config named `{name}`")))?;
            println!("{}", cfg.to_json());
            Ok(())
        }
    }
}

/// 2 for bad configuration or input, 3 for numerical failures, 4 for I/O.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<absorber_core::Error>() {
            if e.is_io() {
                return 4;
            }
            if e.is_numerical() {
                return 3;
            }
            return 2;
        }
        if cause.is::<std::io::Error>() {
            return 4;
        }
    }
    2
}

pub(crate) fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
