use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rgpssm::bench::{run_experiment, ExperimentConfig, ExperimentReport, Task};
use rgpssm::verify;

#[derive(Parser)]
#[command(
    name = "rgpssm",
    version,
    about = "Online GP state-space model learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a key = value config file.
    Run {
        config: PathBuf,
        /// Output directory for report.json and trace.csv.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Wing rock dynamics learning.
    Wingrock {
        /// Keep the initial hyperparameters fixed.
        #[arg(long)]
        no_hypopt: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out/wingrock")]
        out: PathBuf,
    },
    /// System identification on a recorded input/output dataset.
    Sysid {
        /// Whitespace- or comma-delimited file with input and output columns.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        dataset_name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to out/<dataset-name>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance checks; exits with status 2 if any blocking check fails.
    Verify,
}

fn run_and_write(config: &ExperimentConfig, out: &Path) -> Result<ExperimentReport> {
    print!("{}", config.to_text());
    let report = run_experiment(config)?;
    report
        .write(out)
        .with_context(|| format!("writing outputs to {}", out.display()))?;
    print_summary(&report);
    println!("wrote {}", out.display());
    Ok(report)
}

fn print_summary(r: &ExperimentReport) {
    let s = &r.summary;
    println!(
        "{} seed {}: {} steps, filter RMSE {:.4}, final n_u {}, {:.3} ms/step",
        s.task,
        s.seed,
        s.train_steps,
        s.filter_rmse,
        s.final_n_u,
        s.seconds_per_step * 1e3
    );
    if let Some(p) = s.prediction_rmse_final_quarter {
        println!("final-quarter GP prediction RMSE {p:.4}");
    }
    if let (Some(f), Some(b)) = (s.forecast_rmse, s.baseline_forecast_rmse) {
        println!(
            "{}-step forecast RMSE {f:.4} (hold-last {b:.4})",
            s.forecast_steps
        );
    }
    if let (Some(m), Some(c)) = (s.gpr_mean_error, s.gpr_cov_error) {
        println!("deviation from exact GP regression: mean {m:.2e}, covariance {c:.2e}");
    }
}

fn main() -> Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config, out } => {
            let c = ExperimentConfig::load(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            run_and_write(&c, &out)?;
        }
        Command::Wingrock {
            no_hypopt,
            seed,
            out,
        } => {
            let c = ExperimentConfig {
                seed,
                hyperopt: !no_hypopt,
                ..ExperimentConfig::for_task(Task::Wingrock)
            };
            run_and_write(&c, &out)?;
        }
        Command::Sysid {
            data,
            dataset_name,
            seed,
            out,
        } => {
            let out = out.unwrap_or_else(|| Path::new("out").join(&dataset_name));
            let c = ExperimentConfig {
                seed,
                data: Some(data.display().to_string()),
                dataset_name: Some(dataset_name),
                ..ExperimentConfig::for_task(Task::Sysid)
            };
            run_and_write(&c, &out)?;
        }
        Command::Verify => {
            let mut failed = false;
            for o in verify::run_all() {
                println!("{}", o.line());
                failed |= !o.passed && o.blocking;
            }
            if failed {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
