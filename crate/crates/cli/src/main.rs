use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fpaccel_cli::analysis::{cmd_gmres_compare, cmd_spectrum, SpectrumMethod, SpectrumOptions};
use fpaccel_cli::config::{MapName, StepRule, StepSetting};
use fpaccel_cli::tables::{cmd_table, TableKind};
use fpaccel_cli::{cmd_run, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "fpaccel", version, about = "Accelerated fixed-point experiments on CP decompositions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured method on every replicate.
    Run { config: PathBuf },
    /// Eigenvalues of q' and of a one-step companion matrix at x*.
    Spectrum {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "als")]
        map: MapArg,
        #[arg(long, value_enum, default_value = "saa1")]
        method: MethodArg,
        /// Coefficient; defaults to the closed-form optimum.
        #[arg(long, allow_negative_numbers = true)]
        beta: Option<f64>,
        /// SD step: a number, `optimal` or `one_over_l`.
        #[arg(long)]
        alpha: Option<String>,
        /// Stored fixed point; defaults to `<output_dir>/xstar_s<seed>.txt`.
        #[arg(long)]
        xstar: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one of the summary tables as CSV.
    Table {
        #[arg(value_enum)]
        kind: TableArg,
        config: PathBuf,
    },
    /// Compare GMRES on the linearized ALS system with AA and NGMRES.
    GmresCompare { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum MapArg {
    Als,
    Sd,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Saa1,
    Sngmresr1,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableArg {
    #[value(name = "sd_factors")]
    SdFactors,
    #[value(name = "als_bounds")]
    AlsBounds,
    Bruteforce,
    #[value(name = "gmres_bounds")]
    GmresBounds,
}

fn parse_alpha(s: &str) -> Result<StepSetting, CliError> {
    match s {
        "optimal" => Ok(StepSetting::Rule(StepRule::Optimal)),
        "one_over_l" => Ok(StepSetting::Rule(StepRule::OneOverL)),
        v => v
            .parse::<f64>()
            .ok()
            .filter(|a| *a > 0.0 && a.is_finite())
            .map(StepSetting::Value)
            .ok_or_else(|| CliError::Usage(format!("--alpha must be positive, `optimal` or `one_over_l`, got {v:?}"))),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = cmd_run(&cfg)?;
            println!("{}", cfg.output_dir.join("report.json").display());
            log::info!("{} files written", report.files.len());
        }
        Command::Spectrum { config, map, method, beta, alpha, xstar, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let opts = SpectrumOptions {
                map: match map {
                    MapArg::Als => MapName::Als,
                    MapArg::Sd => MapName::Sd,
                },
                method: match method {
                    MethodArg::Saa1 => SpectrumMethod::Saa1,
                    MethodArg::Sngmresr1 => SpectrumMethod::SngmresR1,
                },
                beta,
                alpha: alpha.as_deref().map(parse_alpha).transpose()?,
                xstar,
                seed,
            };
            println!("{}", cmd_spectrum(&cfg, &opts, out.as_deref())?.display());
        }
        Command::Table { kind, config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let kind = match kind {
                TableArg::SdFactors => TableKind::SdFactors,
                TableArg::AlsBounds => TableKind::AlsBounds,
                TableArg::Bruteforce => TableKind::Bruteforce,
                TableArg::GmresBounds => TableKind::GmresBounds,
            };
            println!("{}", cmd_table(&cfg, kind)?.display());
        }
        Command::GmresCompare { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            for f in cmd_gmres_compare(&cfg)? {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
