use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use gwgen::config::{AdversaryChoice, ExperimentConfig, OrthChoice, Task};
use gwgen::runner;
use gwgen_core::trainer::TrainOutcome;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OrthModeArg {
    Procrustes,
    LayerwiseFull,
    LayerwiseOffdiag,
    SaxeInitOnly,
}

impl From<OrthModeArg> for OrthChoice {
    fn from(a: OrthModeArg) -> Self {
        match a {
            OrthModeArg::Procrustes => OrthChoice::Procrustes,
            OrthModeArg::LayerwiseFull => OrthChoice::LayerwiseFull,
            OrthModeArg::LayerwiseOffdiag => OrthChoice::LayerwiseOffdiag,
            OrthModeArg::SaxeInitOnly => OrthChoice::SaxeInitOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    Mixture2d,
    Mixture3dTo2d,
    Mixture2dTo3d,
    Scurve,
    Graph,
}

impl From<TaskArg> for Task {
    fn from(a: TaskArg) -> Self {
        match a {
            TaskArg::Mixture2d => Task::Mixture2d,
            TaskArg::Mixture3dTo2d => Task::Mixture3dTo2d,
            TaskArg::Mixture2dTo3d => Task::Mixture2dTo3d,
            TaskArg::Scurve => Task::Scurve,
            TaskArg::Graph => Task::Graph,
        }
    }
}

/// Generative modeling across incomparable spaces with the
/// Gromov-Wasserstein discrepancy.
#[derive(Parser)]
#[command(name = "gwgen", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config file.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Use raw Euclidean distances instead of a learned adversary.
        #[arg(long)]
        no_adversary: bool,
        /// Stop adversary updates at this iteration (keeps using its features).
        #[arg(long)]
        freeze_adversary_at: Option<usize>,
        /// Override the l1 shaping weight (0 disables).
        #[arg(long)]
        l1: Option<f64>,
        /// Adversary orthogonality regularizer.
        #[arg(long, value_enum)]
        orth_mode: Option<OrthModeArg>,
        /// Override the iteration count.
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Evaluate a generated sample CSV against a reference.
    Eval {
        /// Generated samples (CSV with dim0,dim1,... header).
        #[arg(long)]
        samples: PathBuf,
        /// Reference: a sample CSV, or a graph edge list for the graph task.
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        /// Mode count for mixture references.
        #[arg(long, default_value_t = 4)]
        modes: usize,
        /// Neighborhood size for the overlap metric.
        #[arg(long, default_value_t = 10)]
        knn_k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[allow(clippy::too_many_arguments)]
fn run_command(
    config: PathBuf,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    no_adversary: bool,
    freeze_adversary_at: Option<usize>,
    l1: Option<f64>,
    orth_mode: Option<OrthModeArg>,
    iters: Option<usize>,
) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(dir) = out_dir {
        cfg.out_dir = dir.to_string_lossy().into_owned();
    }
    if no_adversary {
        cfg.train.adversary = AdversaryChoice::Identity;
    }
    if let Some(t0) = freeze_adversary_at {
        cfg.train.freeze_adversary_at = t0;
    }
    if let Some(lambda) = l1 {
        cfg.train.l1 = lambda;
    }
    if let Some(mode) = orth_mode {
        cfg.train.orth_mode = mode.into();
    }
    if let Some(n) = iters {
        cfg.train.total_iters = n;
    }
    cfg.validate()?;

    let artifacts = runner::run(&cfg)?;
    eprintln!(
        "run finished: outcome {:?}, artifacts in {}",
        artifacts.outcome,
        artifacts.out_dir.display()
    );
    match artifacts.outcome {
        TrainOutcome::Completed => Ok(ExitCode::SUCCESS),
        _ => Ok(ExitCode::from(2)),
    }
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            out_dir,
            no_adversary,
            freeze_adversary_at,
            l1,
            orth_mode,
            iters,
        } => run_command(
            config,
            seed,
            out_dir,
            no_adversary,
            freeze_adversary_at,
            l1,
            orth_mode,
            iters,
        ),
        Command::Eval {
            samples,
            reference,
            task,
            modes,
            knn_k,
            seed,
            out,
        } => {
            let (report, extras) =
                runner::eval_command(&samples, &reference, task.into(), modes, knn_k, seed)?;
            let doc = serde_json::json!({
                "mode_coverage": report.mode_coverage,
                "centroid_distance_correlation": report.centroid_distance_correlation,
                "knn_overlap": report.knn_overlap,
                "final_gw": report.final_gw,
                "extras": extras,
            });
            let text = serde_json::to_string_pretty(&doc)?;
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => println!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
