//! `vgex`: run declarative experiments from TOML configs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;

use vgex_core::experiment::{
    resolve_out_dir, run_experiment, BoundsSection, ExperimentConfig, ExperimentKind, ResultsFormat, ResultsManifest,
};
use vgex_core::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VERDICT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "vgex",
    version,
    about = "Conjunction extremes of vector-valued Gaussian processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample paths and report empirical variances.
    SamplePaths(Common),
    /// Estimate a Pickands, Piterbarg, or window constant.
    EstimateConstant(Common),
    /// Estimate conjunction probabilities by Monte Carlo.
    EstimateProb(Common),
    /// Compare Monte Carlo probabilities with the asymptotic formulas.
    Compare(Common),
    /// Run an inequality audit; exits with 3 when a verdict fails.
    Audit(Common),
    /// Tabulate the Pickands and Piterbarg bounds (config optional).
    BoundsTable(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `master_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: config `output_dir`, else `out/<experiment_id>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl Command {
    fn parts(&self) -> (ExperimentKind, &Common) {
        match self {
            Command::SamplePaths(c) => (ExperimentKind::SamplePaths, c),
            Command::EstimateConstant(c) => (ExperimentKind::Constant, c),
            Command::EstimateProb(c) => (ExperimentKind::Probability, c),
            Command::Compare(c) => (ExperimentKind::Compare, c),
            Command::Audit(c) => (ExperimentKind::Audit, c),
            Command::BoundsTable(c) => (ExperimentKind::BoundsTable, c),
        }
    }
}

fn load(kind: ExperimentKind, common: &Common) -> Result<ExperimentConfig, Error> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if kind == ExperimentKind::BoundsTable => ExperimentConfig {
            experiment_id: "bounds_table".into(),
            kind,
            master_seed: 0,
            output_dir: None,
            processes: Default::default(),
            sample_paths: None,
            constant: None,
            probability: None,
            compare: None,
            audit: None,
            bounds_table: Some(BoundsSection::default()),
        },
        None => {
            return Err(Error::Config {
                path: "--config".into(),
                message: "required for this command".into(),
            })
        }
    };
    if config.kind != kind {
        return Err(Error::Config {
            path: "kind".into(),
            message: format!(
                "config is `{}` but the command runs `{}`",
                config.kind.as_str(),
                kind.as_str()
            ),
        });
    }
    if let Some(seed) = common.seed {
        config.master_seed = seed;
    }
    Ok(config)
}

fn print_summary(manifest: &ResultsManifest, out: &std::path::Path) {
    for r in &manifest.records {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"));
        println!(
            "{:<22} value={:<14} se={:<14} ci=[{}, {}] {} {}",
            r.estimator,
            fmt(r.value),
            fmt(r.se),
            fmt(r.lower_ci),
            fmt(r.upper_ci),
            r.verdict,
            r.notes
        );
    }
    println!(
        "wrote {} ({} records) to {} in {:.1}s",
        manifest.results_file,
        manifest.records.len(),
        out.display(),
        manifest.wall_time_s
    );
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, common) = cli.command.parts();

    let config = match load(kind, common) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(n) = common.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let format = match common.format {
        Format::Csv => ResultsFormat::Csv,
        Format::Json => ResultsFormat::Json,
    };
    let out = resolve_out_dir(&config, common.out.as_deref());
    match run_experiment(&config, &out, format) {
        Ok(manifest) => {
            print_summary(&manifest, &out);
            if manifest.has_errors() {
                ExitCode::from(EXIT_RUNTIME)
            } else if kind == ExperimentKind::Audit && manifest.has_failures() {
                ExitCode::from(EXIT_VERDICT)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
