use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use underlay_core::harness::{self, ConfigError, ExperimentConfig, Figure, HarnessError};
use underlay_core::{par, specfun};

/// Underlay cognitive-radio capacity experiments.
#[derive(Parser)]
#[command(name = "underlay", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a figure preset.
    Figure {
        id: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the figure presets.
    ListFigures,
    /// Evaluate a special function (i0, i1, i0e, i1e, e1, marcum-q1, laguerre-half, harmonic).
    Specfun {
        name: String,
        #[arg(allow_hyphen_values = true)]
        args: Vec<String>,
    },
}

fn parse_args(args: &[String], want: usize) -> Result<Vec<f64>, HarnessError> {
    if args.len() != want {
        return Err(ConfigError::Invalid {
            field: "args".into(),
            detail: format!("expected {want} argument(s), got {}", args.len()),
        }
        .into());
    }
    args.iter()
        .map(|a| {
            a.parse::<f64>().map_err(|e| {
                ConfigError::Invalid {
                    field: "args".into(),
                    detail: format!("{a:?}: {e}"),
                }
                .into()
            })
        })
        .collect()
}

fn eval_specfun(name: &str, args: &[String]) -> Result<f64, HarnessError> {
    let numeric = |e: specfun::SpecFunError| HarnessError::Numerical(e.to_string());
    let one = |f: fn(f64) -> Result<f64, specfun::SpecFunError>| -> Result<f64, HarnessError> {
        let x = parse_args(args, 1)?;
        f(x[0]).map_err(numeric)
    };
    match name {
        "i0" => one(specfun::bessel_i0),
        "i1" => one(specfun::bessel_i1),
        "i0e" => one(specfun::bessel_i0e),
        "i1e" => one(specfun::bessel_i1e),
        "e1" => one(specfun::exp_integral_e1),
        "laguerre-half" => one(specfun::laguerre_half),
        "marcum-q1" => {
            let x = parse_args(args, 2)?;
            specfun::marcum_q1(x[0], x[1]).map_err(numeric)
        }
        "harmonic" => {
            let n: u64 = args
                .first()
                .filter(|_| args.len() == 1)
                .and_then(|a| a.parse().ok())
                .ok_or_else(|| ConfigError::Invalid {
                    field: "args".into(),
                    detail: "expected one non-negative integer".into(),
                })?;
            specfun::harmonic(n).map_err(numeric)
        }
        other => Err(ConfigError::Invalid {
            field: "name".into(),
            detail: format!("unknown function {other:?}"),
        }
        .into()),
    }
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(path) = out {
                cfg = cfg.with_output(path);
            }
            harness::run_and_write(&cfg, std::io::stdout().lock())?;
        }
        Command::Figure {
            id,
            seed,
            runs,
            out,
        } => {
            let mut cfg = ExperimentConfig::preset(id.parse::<Figure>()?);
            if let Some(seed) = seed {
                cfg = cfg.with_seed(seed);
            }
            if let Some(runs) = runs {
                cfg = cfg.with_runs(runs)?;
            }
            if let Some(path) = out {
                cfg = cfg.with_output(path);
            }
            harness::run_and_write(&cfg, std::io::stdout().lock())?;
        }
        Command::ListFigures => {
            for f in Figure::ALL {
                println!("{:<6} {}", f.id(), f.description());
            }
        }
        Command::Specfun { name, args } => println!("{}", eval_specfun(&name, &args)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    par::configure_from_env();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
