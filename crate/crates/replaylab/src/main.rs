//! Command-line front end: run experiment profiles, render curves, inspect
//! buffer snapshots, and verify gradients.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use replaylab::error::Error;
use replaylab::harness::config::Domain;
use replaylab::harness::plot::{load_plot_input, render_curves, PlotOptions};
use replaylab::harness::{
    grad_check_max_error, run_experiment, ExperimentConfig, GRAD_CHECK_TOLERANCE,
};
use replaylab::memory::snapshot::{read_snapshot, BufferSnapshot};

/// `--quick` step budget per grid-world task.
const QUICK_GRID_STEPS: usize = 3_000;
/// `--quick` example budget per classification task.
const QUICK_CLASS_STEPS: usize = 300;

#[derive(Parser)]
#[command(
    name = "replaylab",
    version,
    about = "Selective experience replay experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment profile end to end.
    Run {
        /// Profile file with dotted keys.
        config: PathBuf,
        /// Shrink every task budget for a fast check run.
        #[arg(long)]
        quick: bool,
        /// Write artifacts here instead of the profile's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// IDX image file for the classification domain.
        #[arg(long, requires = "mnist_labels", conflicts_with = "synthetic")]
        mnist_images: Option<PathBuf>,
        /// IDX label file for the classification domain.
        #[arg(long, requires = "mnist_images", conflicts_with = "synthetic")]
        mnist_labels: Option<PathBuf>,
        /// Force the built-in synthetic digits even if the profile names
        /// dataset files.
        #[arg(long)]
        synthetic: bool,
    },
    /// Render success curves from metrics or aggregate CSV files.
    Plot {
        /// Per-seed metrics files and/or aggregate files.
        #[arg(required = true)]
        csvs: Vec<PathBuf>,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
        /// Window-5 moving average, labeled in the legend.
        #[arg(long)]
        smooth: bool,
    },
    /// Summarize a buffer snapshot: per-task counts and rank spread.
    ReportBuffer {
        snapshot: PathBuf,
    },
    /// Verify analytic gradients against central differences on the
    /// grid-world architecture.
    GradCheck {
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Print every record of a buffer snapshot as plain text.
    DumpBuffer {
        snapshot: PathBuf,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a profile without running it.
    ValidateConfig {
        config: PathBuf,
    },
}

/// Failures split by exit code: bad input versus failure while working.
enum CliError {
    Usage(String),
    Runtime(Error),
}

fn usage<T>(result: Result<T, Error>, context: &str) -> Result<T, CliError> {
    result.map_err(|e| CliError::Usage(format!("{context}: {e}")))
}

fn runtime<T>(result: Result<T, Error>) -> Result<T, CliError> {
    result.map_err(CliError::Runtime)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code: u8 = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Run {
            config,
            quick,
            out,
            mnist_images,
            mnist_labels,
            synthetic,
        } => {
            let shown = config.display().to_string();
            let mut cfg = usage(ExperimentConfig::load(&config), &shown)?;
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            if synthetic {
                cfg.data = Default::default();
            }
            if let (Some(images), Some(labels)) = (mnist_images, mnist_labels) {
                cfg.data.images = Some(images);
                cfg.data.labels = Some(labels);
            }
            if quick {
                let budget = match cfg.domain {
                    Domain::Gridworld => QUICK_GRID_STEPS,
                    Domain::Classification => QUICK_CLASS_STEPS,
                };
                cfg.tasks.steps = vec![budget; cfg.tasks.steps.len()];
            }
            usage(cfg.validate(), &shown)?;
            let report = runtime(run_experiment(&cfg))?;
            println!(
                "wrote {} ({} files)",
                report.dir.display(),
                report.manifest.files.len() + 1
            );
            for seed in &report.seeds {
                let final_mean = seed.records.last().map_or(0.0, |r| {
                    r.per_task_success.iter().sum::<f64>() / r.per_task_success.len() as f64
                });
                let retention: Vec<String> =
                    seed.retention.iter().map(|v| format!("{v:.2}")).collect();
                println!(
                    "seed {}: final mean success {final_mean:.3}, retention [{}]",
                    seed.seed,
                    retention.join(", ")
                );
            }
            Ok(())
        }
        Cmd::Plot { csvs, out, smooth } => {
            let mut inputs = Vec::new();
            for path in &csvs {
                inputs.push(usage(
                    load_plot_input(path),
                    &path.display().to_string(),
                )?);
            }
            let svg = usage(render_curves(&inputs, &PlotOptions { smooth }), "plot")?;
            runtime(std::fs::write(&out, svg).map_err(Error::from))?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Cmd::ReportBuffer { snapshot } => {
            let shown = snapshot.display().to_string();
            let snap = usage(read_snapshot(&snapshot), &shown)?;
            print_report(&snap);
            Ok(())
        }
        Cmd::GradCheck { seed } => {
            let err = runtime(grad_check_max_error(seed))?;
            println!("max relative error {err:.3e} (tolerance {GRAD_CHECK_TOLERANCE:e})");
            if err < GRAD_CHECK_TOLERANCE {
                Ok(())
            } else {
                Err(CliError::Runtime(Error::InvalidConfig(
                    "gradient check exceeded tolerance".into(),
                )))
            }
        }
        Cmd::DumpBuffer { snapshot, out } => {
            let shown = snapshot.display().to_string();
            let snap = usage(read_snapshot(&snapshot), &shown)?;
            let text = dump_text(&snap);
            match out {
                Some(path) => {
                    runtime(std::fs::write(&path, text).map_err(Error::from))?;
                    println!("wrote {}", path.display());
                }
                None => print!("{text}"),
            }
            Ok(())
        }
        Cmd::ValidateConfig { config } => {
            let shown = config.display().to_string();
            let cfg = usage(ExperimentConfig::load(&config), &shown)?;
            usage(cfg.validate(), &shown)?;
            println!("ok");
            Ok(())
        }
    }
}

fn print_report(snap: &BufferSnapshot) {
    let total = snap.records.len();
    println!("records: {total}");
    for (task, count) in snap.composition() {
        let pct = 100.0 * count as f64 / total.max(1) as f64;
        println!("task {task}: {count} ({pct:.1}%)");
    }
    if total > 0 {
        let mut ranks: Vec<f64> = snap.records.iter().map(|r| r.rank).collect();
        ranks.sort_by(|a, b| a.total_cmp(b));
        let median = if total % 2 == 1 {
            ranks[total / 2]
        } else {
            (ranks[total / 2 - 1] + ranks[total / 2]) / 2.0
        };
        println!(
            "rank min {:.6} median {median:.6} max {:.6}",
            ranks[0],
            ranks[total - 1]
        );
    }
}

/// One space-separated line per record; floats carry 17 significant digits
/// so the text parses back to the same bits.
fn dump_text(snap: &BufferSnapshot) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("task_id step_index rank reward ret action state...\n");
    for r in &snap.records {
        let _ = write!(
            out,
            "{} {} {:.16e} {:.16e} {:.16e} {}",
            r.task_id, r.step_index, r.rank, r.reward, r.ret, r.action
        );
        for v in &r.state {
            let _ = write!(out, " {v:.16e}");
        }
        out.push('\n');
    }
    out
}
