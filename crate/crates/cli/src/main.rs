use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use semispec_cli::commands::{self, OracleRequest, Overrides};
use semispec_cli::compare::compare;
use semispec_cli::output::read_spectrum;
use semispec_core::methods::MethodRegistry;
use semispec_core::model::MorseParams;

#[derive(Parser)]
#[command(name = "semispec", version, about = "Semiclassical and grid vibrational power spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a spectrum from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Match the peaks of two spectrum files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        tol_bins: f64,
        #[arg(long, default_value_t = 1e-3)]
        prominence: f64,
    },
    /// Write a closed-form line list.
    Oracle {
        #[command(subcommand)]
        kind: OracleKind,
    },
    /// List the available methods.
    Methods,
}

#[derive(Subcommand)]
enum OracleKind {
    /// Coherent-state comb of a harmonic oscillator.
    Harmonic {
        #[arg(long, default_value_t = 1.0)]
        mass: f64,
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        #[arg(long, default_value_t = 1.0)]
        p0: f64,
        #[arg(long, default_value_t = 0.0)]
        q0: f64,
        #[arg(long, default_value_t = 20)]
        levels: usize,
        /// Squared weights of the separable mixed method.
        #[arg(long)]
        squared: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bound Morse eigenvalues (iodine parameters unless overridden).
    Morse {
        #[arg(long)]
        de: Option<f64>,
        #[arg(long)]
        re: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        mass: Option<f64>,
        #[arg(long, default_value_t = 10)]
        levels: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, method, seed, trajectories, steps, threads, out } => {
            let ov = Overrides { method, seed, trajectories, steps, threads, out };
            let cfg = commands::load_config(&config, &ov)?;
            let summary = commands::run(&cfg)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {} ({} peaks)", summary.spectrum.display(), summary.n_peaks);
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { a, b, tol_bins, prominence } => {
            let report = compare(&read_spectrum(&a)?, &read_spectrum(&b)?, tol_bins, prominence)?;
            print!("{}", report.render());
            Ok(if report.ok() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Oracle { kind } => {
            let (req, out) = match kind {
                OracleKind::Harmonic { mass, omega, p0, q0, levels, squared, out } => {
                    (OracleRequest::Harmonic { mass, omega, p0, q0, levels, squared }, out)
                }
                OracleKind::Morse { de, re, alpha, mass, levels, out } => {
                    let d = MorseParams::iodine();
                    let params = MorseParams::new(
                        de.unwrap_or(d.de),
                        re.unwrap_or(d.re),
                        alpha.unwrap_or(d.alpha),
                        mass.unwrap_or(d.mass),
                    )?;
                    (OracleRequest::Morse { params, levels }, out)
                }
            };
            commands::write_oracle(&req, &out)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Methods => {
            for m in MethodRegistry::default().iter() {
                println!("{:<14} {}", m.name(), m.description());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
