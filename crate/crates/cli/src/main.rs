use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tsbench_cli::{
    cmd_leaderboard, cmd_run_baselines, cmd_score, cmd_validate, CliError, LeaderboardOptions,
    OutputFormat, RunOptions, Timing,
};
use tsbench_core::aggregate::{AggregateConfig, BootstrapConfig};
use tsbench_core::baselines::BaselineKind;
use tsbench_core::dataset::DATA_ROOT_ENV;
use tsbench_core::metrics::{MetricKind, ZeroScalePolicy};
use tsbench_core::synthetic::{write_synthetic_benchmark, Profile, SyntheticConfig};

#[derive(Parser)]
#[command(
    name = "tsbench",
    version,
    about = "Rolling-origin forecast benchmark runner"
)]
#[command(after_help = format!("Relative dataset paths resolve against ${DATA_ROOT_ENV} when set."))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TimingArg {
    Wall,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum ZeroScaleArg {
    Error,
    Skip,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Mixed,
    Seasonal,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Concurrent tasks (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// `off` records runtime 0 for byte-reproducible output.
    #[arg(long, value_enum, default_value = "wall")]
    timing: TimingArg,
    /// What to do with a series whose seasonal error is zero.
    #[arg(long, value_enum, default_value = "error")]
    zero_scale: ZeroScaleArg,
}

impl RunArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            jobs: self.jobs,
            timing: match self.timing {
                TimingArg::Wall => Timing::Wall,
                TimingArg::Off => Timing::Off,
            },
            zero_scale: match self.zero_scale {
                ZeroScaleArg::Error => ZeroScalePolicy::Error,
                ZeroScaleArg::Skip => ZeroScalePolicy::Skip,
            },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check that every task loads and yields evaluation windows.
    Validate {
        #[arg(long)]
        benchmark: PathBuf,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Evaluate the built-in baselines and write one summary file per baseline.
    RunBaselines {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "seasonal_naive,naive,drift"
        )]
        baselines: Vec<BaselineKind>,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score a JSON-lines forecast submission.
    Score {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        submission: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Aggregate summaries into a leaderboard.
    Leaderboard {
        /// Summary files or glob patterns.
        #[arg(long, required = true, num_args = 1..)]
        summaries: Vec<String>,
        /// Defaults to each task's quantile metric.
        #[arg(long)]
        metric: Option<MetricKind>,
        #[arg(long, default_value = "seasonal_naive")]
        baseline: String,
        #[arg(long)]
        leakage_reference: Option<String>,
        #[arg(long, default_value_t = 1000)]
        bootstrap_samples: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also bootstrap the marginal win rates and skill scores.
        #[arg(long)]
        marginal_ci: bool,
        #[arg(long, value_delimiter = ',', default_value = "md,csv,json")]
        format: Vec<OutputFormat>,
        #[arg(long, default_value = "leaderboard")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Write a synthetic benchmark (CSV datasets plus YAML).
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        tasks: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 10.0)]
        snr: f64,
        #[arg(long, value_enum, default_value = "mixed")]
        profile: ProfileArg,
    },
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Validate { benchmark, json } => {
            let outcome = cmd_validate(&benchmark)?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&outcome).expect("report serializes")
                );
            } else {
                for t in &outcome.tasks {
                    match (&t.error, &t.report) {
                        (Some((kind, msg)), _) => println!("{}: FAILED {kind}: {msg}", t.task_name),
                        (None, Some(report)) => {
                            let cutoffs: Vec<String> = report
                                .windows
                                .iter()
                                .map(|w| w.cutoff.to_string())
                                .collect();
                            println!(
                                "{}: {} window(s), cutoffs [{}], {} series",
                                t.task_name,
                                report.windows.len(),
                                cutoffs.join(", "),
                                report.series.len()
                            );
                        }
                        (None, None) => println!("{}: ok", t.task_name),
                    }
                }
            }
            if let Some(t) = outcome.first_failure() {
                let (kind, msg) = t.error.clone().unwrap_or_default();
                eprintln!(
                    "error: task `{}` is not feasible: {kind}: {msg}",
                    t.task_name
                );
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::RunBaselines {
            benchmark,
            baselines,
            out_dir,
            run,
        } => {
            for path in cmd_run_baselines(&benchmark, &baselines, &out_dir, &run.options())? {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Score {
            benchmark,
            submission,
            out,
            run,
        } => {
            let summaries = cmd_score(&benchmark, &submission, &out, &run.options())?;
            let failed = summaries.iter().filter(|s| s.failed).count();
            println!(
                "wrote {} ({} tasks, {failed} failed)",
                out.display(),
                summaries.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Leaderboard {
            summaries,
            metric,
            baseline,
            leakage_reference,
            bootstrap_samples,
            alpha,
            seed,
            marginal_ci,
            format,
            out_dir,
            jobs,
        } => {
            let opts = LeaderboardOptions {
                metric,
                baseline,
                leakage_reference,
                aggregate: AggregateConfig {
                    bootstrap: BootstrapConfig {
                        samples: bootstrap_samples,
                        alpha,
                        seed,
                    },
                    marginal_intervals: marginal_ci,
                    ..AggregateConfig::default()
                },
                formats: format,
                jobs,
            };
            let report = cmd_leaderboard(&summaries, &out_dir, &opts)?;
            if opts.formats.contains(&OutputFormat::Markdown) {
                print!("{}", tsbench_core::report::render_markdown(&report));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth {
            out_dir,
            tasks,
            seed,
            snr,
            profile,
        } => {
            let cfg = SyntheticConfig {
                num_tasks: tasks,
                seed,
                snr,
                profile: match profile {
                    ProfileArg::Mixed => Profile::Mixed,
                    ProfileArg::Seasonal => Profile::Seasonal,
                },
            };
            let path = write_synthetic_benchmark(&out_dir, &cfg).map_err(|e| CliError::Io {
                path: out_dir.clone(),
                source: e,
            })?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}: {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}
