use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use keyplan::config::Mode;
use keyplan::pipeline::{self, Overrides};
use keyplan::Result;
use keyplan_core::oracle::Representation;

#[derive(Parser)]
#[command(name = "keyplan", version, about = "Keypoint diffusion motion planning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Sample random box scenes.
    GenScenes(Flags),
    /// Generate scenes, point clouds and oracle plans into a dataset shard.
    GenDataset(Flags),
    /// Plan-length statistics of a dataset.
    Stats(Flags),
    /// Train the point-cloud autoencoder.
    TrainAe(Flags),
    /// Train the diffusion denoiser.
    TrainDiffusion(Flags),
    /// Plan one held-out task and dump every candidate.
    Plan(Flags),
    /// Evaluate models on the held-out tasks.
    Evaluate(Flags),
    /// Compare neural planning time against the oracle planner.
    BaselineOracle(Flags),
    /// Repeat a run from its manifest.
    Rerun {
        manifest: PathBuf,
        /// Output directory; defaults to the manifest's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RepArg {
    Keypoint,
    Fixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Desk,
    Paper,
}

#[derive(Args)]
struct Flags {
    /// Base configuration: a config JSON or a manifest of an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: runs/<command>].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    mode: ModeArg,
    /// Leave the point-cloud embedding out of the condition.
    #[arg(long)]
    ablation: bool,
    #[arg(long, value_enum)]
    representation: Option<RepArg>,
    /// Train only on plans with more than four keypoints.
    #[arg(long)]
    refined: bool,
    #[arg(long)]
    batch_k: Option<usize>,
    #[arg(long)]
    oracle_budget_s: Option<f64>,
    /// Dataset shard (.kdds).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Autoencoder checkpoint.
    #[arg(long)]
    ae: Option<PathBuf>,
    /// Denoiser checkpoint, optionally as name=path; repeatable for evaluate.
    #[arg(long)]
    model: Vec<String>,
    /// Raw per-task CSV from evaluate.
    #[arg(long)]
    tasks: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    n_scenes: Option<usize>,
    #[arg(long)]
    max_tasks: Option<usize>,
    /// Index into the held-out tasks.
    #[arg(long)]
    task: Option<usize>,
    /// Start the reverse process from uniform instead of Gaussian noise.
    #[arg(long)]
    uniform_noise: bool,
}

fn dispatch(cli: Cli) -> Result<()> {
    let (name, f) = match cli.command {
        Sub::Rerun { manifest, out } => {
            let out = out.unwrap_or_else(|| manifest.parent().map(PathBuf::from).unwrap_or_default());
            let m = pipeline::rerun(&manifest, &out)?;
            println!("{}", out.join("manifest.json").display());
            eprintln!("re-ran {} into {}", m.command, out.display());
            return Ok(());
        }
        Sub::GenScenes(f) => ("gen-scenes", f),
        Sub::GenDataset(f) => ("gen-dataset", f),
        Sub::Stats(f) => ("stats", f),
        Sub::TrainAe(f) => ("train-ae", f),
        Sub::TrainDiffusion(f) => ("train-diffusion", f),
        Sub::Plan(f) => ("plan", f),
        Sub::Evaluate(f) => ("evaluate", f),
        Sub::BaselineOracle(f) => ("baseline-oracle", f),
    };
    let base = f.config.as_deref().map(|p| pipeline::load_base(name, p)).transpose()?;
    let mode = match f.mode {
        ModeArg::Desk => Mode::Desk,
        ModeArg::Paper => Mode::Paper,
    };
    let overrides = Overrides {
        seed: f.seed,
        ablation: f.ablation,
        representation: f.representation.map(|r| match r {
            RepArg::Keypoint => Representation::Keypoint,
            RepArg::Fixed => Representation::FixedStep,
        }),
        refined: f.refined,
        batch_k: f.batch_k,
        oracle_budget_s: f.oracle_budget_s,
        dataset: f.dataset,
        ae: f.ae,
        models: f.model.iter().map(|s| pipeline::parse_model_entry(s)).collect(),
        tasks: f.tasks,
        epochs: f.epochs,
        n_scenes: f.n_scenes,
        max_tasks: f.max_tasks,
        task: f.task,
        uniform_noise: f.uniform_noise,
    };
    let cmd = pipeline::resolve(name, base, mode, overrides)?;
    let out = f.out.unwrap_or_else(|| PathBuf::from("runs").join(name));
    pipeline::run(&cmd, &out)?;
    println!("{}", out.join("manifest.json").display());
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            println!("{}", e.to_json());
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
