//! `desprit`: runs decentralized power method and decentralized ESPRIT
//! experiments from configuration files.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 for numerical
//! failures (eigen-gap or rank problems, including curve points that had to
//! be skipped), 1 for I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use desprit_core::harness::{preset, run_experiment, write_outputs, ExperimentConfig, OutputFormat, SimulationMode};
use desprit_core::network::{check_convergence, DEFAULT_CONVERGENCE_TOL};
use desprit_core::{error::ErrorClass, Error, Result};

const CONFIG: u8 = 2;
const NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "desprit", version, about = "Decentralized ESPRIT and power-method experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a configuration file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run one of the shipped preset configurations.
    Preset {
        #[arg(value_parser = ["fig2", "fig3", "fig4", "fig5"])]
        name: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check a configuration file without running it.
    Validate { config: PathBuf },
    /// Print the eigenvalues and spectral gap of the consensus weights.
    Spectrum { config: PathBuf },
}

#[derive(Args)]
struct Overrides {
    /// Monte Carlo trials per point.
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed for all random streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file stem; extensions are appended.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Output format; repeat for several.
    #[arg(long, value_enum)]
    format: Vec<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Full,
    Emulated,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl Overrides {
    fn apply(&self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        if let Some(t) = self.trials {
            cfg = cfg.with_trials(t);
        }
        if let Some(s) = self.seed {
            cfg = cfg.with_seed(s);
        }
        if let Some(out) = &self.out {
            cfg = cfg.with_output(out.clone());
        }
        if let Some(m) = self.mode {
            cfg = cfg.with_mode(match m {
                Mode::Full => SimulationMode::Full,
                Mode::Emulated => SimulationMode::Emulated,
            });
        }
        if !self.format.is_empty() {
            cfg = cfg.with_formats(
                self.format
                    .iter()
                    .map(|f| match f {
                        Format::Csv => OutputFormat::Csv,
                        Format::Json => OutputFormat::Json,
                    })
                    .collect(),
            );
        }
        cfg
    }
}

fn run(cfg: ExperimentConfig) -> Result<ExitCode> {
    let exp = cfg.validate()?;
    let report = run_experiment(&exp)?;
    for path in write_outputs(&exp, &report)? {
        println!("wrote {}", path.display());
    }
    println!(
        "{}: {} points, {} skipped",
        exp.config.name,
        report.points.len(),
        report.skipped.len()
    );
    for s in &report.skipped {
        println!(
            "skipped {} p={} at {}: {}",
            s.curve_kind.name(),
            s.p.map_or("-".to_string(), |p| p.to_string()),
            s.sweep_value,
            s.reason
        );
    }
    Ok(if report.skipped.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(NUMERICAL)
    })
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, overrides } => run(overrides.apply(ExperimentConfig::load(&config)?)),
        Command::Preset { name, overrides } => {
            let cfg = preset(&name).ok_or_else(|| Error::config("preset", format!("unknown preset {name}")))?;
            run(overrides.apply(cfg))
        }
        Command::Validate { config } => {
            let exp = ExperimentConfig::load(&config)?.validate()?;
            println!(
                "{}: valid, {} points on {:?} axis, {} trials",
                exp.config.name,
                exp.points.len(),
                exp.axis,
                exp.config.trials
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Spectrum { config } => {
            let exp = ExperimentConfig::load(&config)?.validate()?;
            let diag = check_convergence(&exp.scene.weights, DEFAULT_CONVERGENCE_TOL)?;
            println!("eigenvalues:");
            for a in &diag.alphas {
                println!("  {a:.12}");
            }
            println!("second largest magnitude: {:.12}", 1.0 - diag.spectral_gap);
            println!("spectral gap: {:.12}", diag.spectral_gap);
            println!("converges: {}", diag.converges);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Input => CONFIG,
                ErrorClass::Numerical => NUMERICAL,
                ErrorClass::Io => 1,
            })
        }
    }
}
