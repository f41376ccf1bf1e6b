//! `biodiscover`: the pipeline as subcommands.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{FieldError, NmaxValue, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "biodiscover", version, about = "Multi-view specimen imaging and classification pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML run configuration (also BIODISCOVER_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Input dataset directory.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short = 'o', global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    n_reps: Option<usize>,
    /// Decision rule: majority or weighted.
    #[arg(long, global = true)]
    rule: Option<String>,
    #[arg(long, global = true)]
    exposure: Option<u32>,
    #[arg(long, global = true)]
    aperture: Option<f64>,
    /// External per-image scores CSV instead of the baseline classifier.
    #[arg(long, global = true)]
    scores: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, short = 'j', global = true)]
    jobs: Option<usize>,
    /// Validate configuration and inputs without writing anything.
    #[arg(long, global = true)]
    dry_run: bool,
    /// More log output (repeatable).
    #[arg(long, short = 'v', global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[arg(long, short = 'q', global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic cohort.
    Generate {
        /// Species preset.
        #[arg(long)]
        preset: Option<String>,
        /// Specimens per species, comma separated.
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<usize>>,
        /// All nine pilot camera settings, one subdirectory each.
        #[arg(long)]
        grid: bool,
        /// Raw sensor frames plus calibration frames.
        #[arg(long)]
        raw: bool,
        /// Small sensor (faster).
        #[arg(long)]
        compact: bool,
        #[arg(long)]
        transit: Option<f64>,
    },
    /// Validate a dataset manifest and its files.
    Ingest,
    /// Learn the background model from `<data>/calibration/*.png`.
    Calibrate,
    /// Detect, crop and describe the raw frames of a manifest.
    Process {
        /// Background model stem.
        #[arg(long)]
        background: Option<PathBuf>,
    },
    /// Flag specimens whose colour is more than 3 sigma from their species.
    Screen,
    /// Train the baseline on the first split.
    Train,
    /// Repeated-split evaluation.
    Evaluate,
    /// Evaluate every dataset under `<data>/*/` on shared splits.
    Grid,
    /// Camera 1 vs camera 2 vs both at equal image counts.
    AblateCameras,
    /// Accuracy against the per-specimen image cap.
    SweepNmax {
        /// Caps, comma separated; `inf` for no cap.
        #[arg(long, value_delimiter = ',')]
        nmax: Option<Vec<String>>,
    },
    /// Per-species area to dry-weight regressions.
    BiomassFit,
    /// Run specimens through the device and route them to containers.
    Simulate {
        /// Trained model JSON used to predict each specimen.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::Ingest => "ingest",
            Command::Calibrate => "calibrate",
            Command::Process { .. } => "process",
            Command::Screen => "screen",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Grid => "grid",
            Command::AblateCameras => "ablate-cameras",
            Command::SweepNmax { .. } => "sweep-nmax",
            Command::BiomassFit => "biomass-fit",
            Command::Simulate { .. } => "simulate",
        }
    }
}

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(Vec<FieldError>),
    Data(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Internal(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config",
            Failure::Data(_) => "data",
            Failure::Internal(_) => "internal",
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Config(f) => f
                .iter()
                .map(|e| format!("{}: {}", e.field, e.message))
                .collect::<Vec<_>>()
                .join("; "),
            Failure::Data(m) | Failure::Internal(m) => m.clone(),
        }
    }

    pub fn config(field: &str, message: impl Into<String>) -> Self {
        Failure::Config(vec![FieldError::new(field, message)])
    }
}

impl From<biodiscover::Error> for Failure {
    fn from(e: biodiscover::Error) -> Self {
        use biodiscover::Error as E;
        match e {
            E::Config(m) | E::Parameter(m) => Failure::config("parameters", m),
            E::IllegalTransition { .. } => Failure::Internal(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    status: &'static str,
    command: Option<&'a str>,
    exit_code: u8,
    kind: &'static str,
    message: String,
    fields: &'a [FieldError],
}

fn report_failure(command: Option<&str>, f: &Failure) -> ExitCode {
    let fields: &[FieldError] = match f {
        Failure::Config(v) => v,
        _ => &[],
    };
    let report = ErrorReport {
        status: "error",
        command,
        exit_code: f.code(),
        kind: f.kind(),
        message: f.message(),
        fields,
    };
    log::error!("{}", report.message);
    let text = serde_json::to_string(&report).unwrap_or_else(|_| "{\"status\":\"error\"}".into());
    let _ = writeln!(std::io::stderr(), "{text}");
    ExitCode::from(f.code())
}

fn init_logging(g: &Global) {
    let level = match (g.quiet, g.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        (false, 2) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env(env_logger::Env::new().filter("BIODISCOVER_LOG"))
        .format(|buf, r| writeln!(buf, "{},{},{}", r.level(), r.module_path().unwrap_or(""), r.args()))
        .init();
}

/// File, then environment, then flags.
fn resolve_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let g = &cli.global;
    let path = g.config.clone().or_else(|| std::env::var_os("BIODISCOVER_CONFIG").map(PathBuf::from));
    let mut c = RunConfig::load(path.as_deref(), std::env::vars()).map_err(Failure::Config)?;
    if let Some(d) = &g.data {
        c.paths.data = d.clone();
    }
    if let Some(o) = &g.out {
        c.paths.output = o.clone();
    }
    if let Some(s) = g.seed {
        c.seed = s;
    }
    if let Some(n) = g.n_reps {
        c.n_reps = n;
    }
    if let Some(r) = &g.rule {
        c.rule = r.clone();
    }
    if let Some(e) = g.exposure {
        c.camera.exposure_us = e;
    }
    if let Some(a) = g.aperture {
        c.camera.aperture_f = a;
    }
    if let Some(s) = &g.scores {
        c.paths.scores = Some(s.clone());
    }
    match &cli.command {
        Command::Generate {
            preset,
            counts,
            grid,
            raw,
            compact,
            transit,
        } => {
            if let Some(p) = preset {
                c.generate.preset = p.clone();
            }
            if let Some(n) = counts {
                c.generate.counts = n.clone();
            }
            c.generate.grid |= grid;
            c.generate.raw |= raw;
            if *compact {
                c.generate.sensor = config::SensorKind::Compact;
            }
            if let Some(t) = transit {
                c.generate.median_transit_s = *t;
            }
        }
        Command::Process { background: Some(b) } => c.paths.background = Some(b.clone()),
        Command::SweepNmax { nmax: Some(v) } => c.nmax = v.iter().map(|s| NmaxValue::parse(s)).collect(),
        Command::Simulate { model: Some(m) } => c.paths.model = Some(m.clone()),
        _ => {}
    }
    if g.jobs == Some(0) {
        return Err(Failure::config("jobs", "must be at least 1"));
    }
    let errs = c.validate();
    if !errs.is_empty() {
        return Err(Failure::Config(errs));
    }
    Ok(c)
}

fn run(cli: &Cli) -> Result<commands::Outcome, Failure> {
    let cfg = resolve_config(cli)?;
    if let Some(n) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Internal(e.to_string()))?;
    }
    let ctx = commands::Ctx::new(cfg, cli.global.dry_run);
    match &cli.command {
        Command::Generate { .. } => commands::generate(ctx),
        Command::Ingest => commands::ingest(ctx),
        Command::Calibrate => commands::calibrate(ctx),
        Command::Process { .. } => commands::process(ctx),
        Command::Screen => commands::screen(ctx),
        Command::Train => commands::train(ctx),
        Command::Evaluate => commands::evaluate(ctx),
        Command::Grid => commands::grid(ctx),
        Command::AblateCameras => commands::ablate_cameras(ctx),
        Command::SweepNmax { .. } => commands::sweep_nmax(ctx),
        Command::BiomassFit => commands::biomass_fit(ctx),
        Command::Simulate { .. } => commands::simulate(ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let f = Failure::config("arguments", e.render().to_string().trim().to_owned());
            return report_failure(None, &f);
        }
    };
    init_logging(&cli.global);
    let name = cli.command.name();
    let result = std::panic::catch_unwind(|| run(&cli))
        .unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(Failure::Internal(msg))
        });
    match result {
        Ok(outcome) => {
            let text = serde_json::to_string_pretty(&outcome.with_command(name)).expect("outcome serialises");
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(f) => report_failure(Some(name), &f),
    }
}
