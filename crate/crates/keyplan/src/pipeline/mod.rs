//! Subcommand implementations. Each writes its artifacts plus `metrics.csv`
//! and `manifest.json` into an output directory.

mod data;
mod eval;
mod train;

use std::path::{Path, PathBuf};

use keyplan_core::data::DatasetConfig;
use keyplan_core::diffusion::InitNoise;
use keyplan_core::oracle::Representation;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use data::{dataset_metrics, length_stats_rows};
pub use eval::{
    metrics_row, read_candidates_csv, read_task_csv, run_tasks, test_tasks, write_candidates_csv, write_task_csv, CandidateRow, EvalTask,
    TaskRun, METRICS_HEADER,
};
pub use train::{load_autoencoder, load_model, scene_embeddings, AeSidecar, LoadedModel, ModelSidecar};

use crate::config::*;
use crate::error::{CliError, Result};
use crate::formats::{read_json, write_bytes};
use crate::manifest::{Manifest, MANIFEST_FILE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
pub enum Command {
    GenScenes(GenScenesConfig),
    GenDataset(DatasetConfig),
    Stats(StatsConfig),
    TrainAe(TrainAeConfig),
    TrainDiffusion(TrainDiffusionConfig),
    Plan(PlanConfig),
    Evaluate(EvaluateConfig),
    BaselineOracle(BaselineConfig),
}

pub const COMMANDS: [&str; 8] = [
    "gen-scenes",
    "gen-dataset",
    "stats",
    "train-ae",
    "train-diffusion",
    "plan",
    "evaluate",
    "baseline-oracle",
];

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenScenes(_) => COMMANDS[0],
            Command::GenDataset(_) => COMMANDS[1],
            Command::Stats(_) => COMMANDS[2],
            Command::TrainAe(_) => COMMANDS[3],
            Command::TrainDiffusion(_) => COMMANDS[4],
            Command::Plan(_) => COMMANDS[5],
            Command::Evaluate(_) => COMMANDS[6],
            Command::BaselineOracle(_) => COMMANDS[7],
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Command::GenScenes(c) => c.seed,
            Command::GenDataset(c) => c.seed,
            Command::Stats(_) => 0,
            Command::TrainAe(c) => c.train.seed,
            Command::TrainDiffusion(c) => c.train.seed,
            Command::Plan(c) => c.seed,
            Command::Evaluate(c) => c.seed,
            Command::BaselineOracle(c) => c.seed,
        }
    }

    pub fn config_value(&self) -> Value {
        serde_json::to_value(self).expect("plain data")["config"].take()
    }

    pub fn from_parts(command: &str, config: Value) -> Result<Command> {
        serde_json::from_value(serde_json::json!({ "command": command, "config": config }))
            .map_err(|e| CliError::Usage(format!("invalid {command} config: {e}")))
    }

    /// Files whose hashes go into the manifest.
    fn inputs(&self) -> Result<Vec<PathBuf>> {
        let mut v = Vec::new();
        match self {
            Command::GenScenes(_) | Command::GenDataset(_) => {}
            Command::Stats(c) => v.push(c.dataset.clone()),
            Command::TrainAe(c) => v.push(c.dataset.clone()),
            Command::TrainDiffusion(c) => {
                v.push(c.dataset.clone());
                if !c.train.ablation {
                    v.extend(c.ae.clone());
                }
            }
            Command::Plan(c) => {
                v.push(c.dataset.clone());
                v.extend(model_files(&c.model)?);
            }
            Command::Evaluate(c) => {
                v.push(c.dataset.clone());
                for m in &c.models {
                    v.extend(model_files(&m.path)?);
                }
            }
            Command::BaselineOracle(c) => {
                v.push(c.dataset.clone());
                v.push(c.tasks.clone());
            }
        }
        Ok(v)
    }
}

fn model_files(model: &Path) -> Result<Vec<PathBuf>> {
    let side: ModelSidecar = read_json(&model.with_extension("json"))?;
    let mut v = vec![model.to_path_buf(), model.with_extension("json")];
    v.extend(side.autoencoder);
    Ok(v)
}

/// Runs `cmd`, writing into `out`, and returns the manifest it wrote.
pub fn run(cmd: &Command, out: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let files = match cmd {
        Command::GenScenes(c) => data::gen_scenes(c, out)?,
        Command::GenDataset(c) => data::gen_dataset(c, out)?,
        Command::Stats(c) => data::stats(c, out)?,
        Command::TrainAe(c) => train::train_ae(c, out)?,
        Command::TrainDiffusion(c) => train::train_diffusion(c, out)?,
        Command::Plan(c) => eval::plan(c, out)?,
        Command::Evaluate(c) => eval::evaluate(c, out)?,
        Command::BaselineOracle(c) => eval::baseline_oracle(c, out)?,
    };
    let mut m = Manifest::new(cmd.name(), cmd.seed(), cmd.config_value());
    for p in cmd.inputs()? {
        m.add_input(&p)?;
    }
    m.finish(out, &files)
}

/// Reads the command stored in a manifest.
pub fn command_from_manifest(path: &Path) -> Result<Command> {
    let m: Manifest = read_json(path)?;
    Command::from_parts(&m.command, m.config)
}

/// Re-runs the command recorded in `manifest` into `out`.
pub fn rerun(manifest: &Path, out: &Path) -> Result<Manifest> {
    run(&command_from_manifest(manifest)?, out)
}

/// Command-line values layered over a base configuration.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub ablation: bool,
    pub representation: Option<Representation>,
    pub refined: bool,
    pub batch_k: Option<usize>,
    pub oracle_budget_s: Option<f64>,
    pub dataset: Option<PathBuf>,
    pub ae: Option<PathBuf>,
    pub models: Vec<ModelEntry>,
    pub tasks: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub n_scenes: Option<usize>,
    pub max_tasks: Option<usize>,
    pub task: Option<usize>,
    pub uniform_noise: bool,
}

impl Overrides {
    fn given(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        let mut flag = |set: bool, name| {
            if set {
                v.push(name)
            }
        };
        flag(self.seed.is_some(), "seed");
        flag(self.ablation, "ablation");
        flag(self.representation.is_some(), "representation");
        flag(self.refined, "refined");
        flag(self.batch_k.is_some(), "batch-k");
        flag(self.oracle_budget_s.is_some(), "oracle-budget-s");
        flag(self.dataset.is_some(), "dataset");
        flag(self.ae.is_some(), "ae");
        flag(!self.models.is_empty(), "model");
        flag(self.tasks.is_some(), "tasks");
        flag(self.epochs.is_some(), "epochs");
        flag(self.n_scenes.is_some(), "n-scenes");
        flag(self.max_tasks.is_some(), "max-tasks");
        flag(self.task.is_some(), "task");
        flag(self.uniform_noise, "uniform-noise");
        v
    }
}

fn allowed(command: &str) -> &'static [&'static str] {
    match command {
        "gen-scenes" => &["seed", "n-scenes"],
        "gen-dataset" => &["seed", "n-scenes", "oracle-budget-s"],
        "stats" => &["dataset"],
        "train-ae" => &["seed", "dataset", "epochs"],
        "train-diffusion" => &["seed", "dataset", "ae", "ablation", "representation", "refined", "epochs"],
        "plan" => &["seed", "dataset", "model", "task", "batch-k", "uniform-noise"],
        "evaluate" => &["seed", "dataset", "model", "max-tasks", "batch-k", "uniform-noise"],
        "baseline-oracle" => &["seed", "dataset", "tasks", "oracle-budget-s"],
        _ => &[],
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::fs::canonicalize(p).map_err(|e| CliError::io(p, e))
}

fn required(p: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    absolute(&p.ok_or_else(|| CliError::Usage(format!("--{flag} is required")))?)
}

/// Loads a config file, which may be a bare config or a run manifest.
pub fn load_base(command: &str, path: &Path) -> Result<Value> {
    let v: Value = read_json(path)?;
    match (v.get("command"), v.get("config")) {
        (Some(Value::String(c)), Some(cfg)) => {
            if c != command {
                return Err(CliError::Usage(format!("{} is a {c} manifest, not {command}", path.display())));
            }
            Ok(cfg.clone())
        }
        _ => Ok(v),
    }
}

/// Builds the command from an optional base config, the mode defaults and
/// the overrides. Input paths are made absolute and must exist.
pub fn resolve(command: &str, base: Option<Value>, mode: Mode, o: Overrides) -> Result<Command> {
    if !COMMANDS.contains(&command) {
        return Err(CliError::Usage(format!("unknown command {command}")));
    }
    if let Some(bad) = o.given().into_iter().find(|f| !allowed(command).contains(f)) {
        return Err(CliError::Usage(format!("--{bad} does not apply to {command}")));
    }
    let parse = |v: Value| Command::from_parts(command, v);
    let mut cmd = match base {
        Some(v) => parse(v)?,
        None => {
            let placeholder = PathBuf::new();
            match command {
                "gen-scenes" => Command::GenScenes(GenScenesConfig::new(mode)),
                "gen-dataset" => Command::GenDataset(dataset_config(mode)),
                "stats" => Command::Stats(StatsConfig {
                    dataset: placeholder,
                    metric: Default::default(),
                }),
                "train-ae" => Command::TrainAe(TrainAeConfig::new(mode, placeholder)),
                "train-diffusion" => Command::TrainDiffusion(TrainDiffusionConfig::new(mode, placeholder)),
                "plan" => Command::Plan(PlanConfig {
                    dataset: placeholder.clone(),
                    model: placeholder,
                    task: 0,
                    planner: PlannerParams::default(),
                    seed: 0,
                }),
                "evaluate" => Command::Evaluate(EvaluateConfig {
                    dataset: placeholder,
                    models: Vec::new(),
                    planner: PlannerParams::default(),
                    seed: 0,
                    max_tasks: None,
                }),
                _ => Command::BaselineOracle(BaselineConfig {
                    dataset: placeholder.clone(),
                    tasks: placeholder,
                    budget: dataset_config(mode).budget,
                    seed: 0,
                }),
            }
        }
    };
    let path_or = |given: Option<PathBuf>, current: &Path, flag: &str| -> Result<PathBuf> {
        required(given.or_else(|| (!current.as_os_str().is_empty()).then(|| current.to_path_buf())), flag)
    };
    let planner = |p: &mut PlannerParams| {
        if let Some(k) = o.batch_k {
            p.k = k;
        }
        if o.uniform_noise {
            p.init = InitNoise::Uniform;
        }
    };
    match &mut cmd {
        Command::GenScenes(c) => {
            c.seed = o.seed.unwrap_or(c.seed);
            c.n_scenes = o.n_scenes.unwrap_or(c.n_scenes);
        }
        Command::GenDataset(c) => {
            c.seed = o.seed.unwrap_or(c.seed);
            c.n_scenes = o.n_scenes.unwrap_or(c.n_scenes);
            c.budget.wall_clock_seconds = o.oracle_budget_s.unwrap_or(c.budget.wall_clock_seconds);
            c.validate()?;
        }
        Command::Stats(c) => c.dataset = path_or(o.dataset, &c.dataset, "dataset")?,
        Command::TrainAe(c) => {
            c.dataset = path_or(o.dataset, &c.dataset, "dataset")?;
            c.train.seed = o.seed.unwrap_or(c.train.seed);
            c.train.epochs = o.epochs.unwrap_or(c.train.epochs);
        }
        Command::TrainDiffusion(c) => {
            c.dataset = path_or(o.dataset, &c.dataset, "dataset")?;
            c.train.seed = o.seed.unwrap_or(c.train.seed);
            c.train.epochs = o.epochs.unwrap_or(c.train.epochs);
            c.train.ablation |= o.ablation;
            c.refined |= o.refined;
            c.representation = o.representation.unwrap_or(c.representation);
            if let Some(ae) = o.ae {
                c.ae = Some(ae);
            }
            c.ae = if c.train.ablation {
                None
            } else {
                Some(required(c.ae.take(), "ae").map_err(|e| match e {
                    CliError::Usage(_) => CliError::Usage("--ae is required unless --ablation is given".into()),
                    e => e,
                })?)
            };
        }
        Command::Plan(c) => {
            c.dataset = path_or(o.dataset, &c.dataset, "dataset")?;
            if o.models.len() > 1 {
                return Err(CliError::Usage("plan takes a single --model".into()));
            }
            c.model = path_or(o.models.into_iter().next().map(|m| m.path), &c.model, "model")?;
            c.task = o.task.unwrap_or(c.task);
            c.seed = o.seed.unwrap_or(c.seed);
            planner(&mut c.planner);
        }
        Command::Evaluate(c) => {
            c.dataset = path_or(o.dataset, &c.dataset, "dataset")?;
            if !o.models.is_empty() {
                c.models = o.models;
            }
            if c.models.is_empty() {
                return Err(CliError::Usage("at least one --model is required".into()));
            }
            for m in &mut c.models {
                m.path = absolute(&m.path)?;
            }
            c.seed = o.seed.unwrap_or(c.seed);
            c.max_tasks = o.max_tasks.or(c.max_tasks);
            planner(&mut c.planner);
        }
        Command::BaselineOracle(c) => {
            c.dataset = path_or(o.dataset, &c.dataset, "dataset")?;
            c.tasks = path_or(o.tasks, &c.tasks, "tasks")?;
            c.seed = o.seed.unwrap_or(c.seed);
            c.budget.wall_clock_seconds = o.oracle_budget_s.unwrap_or(c.budget.wall_clock_seconds);
            c.budget.validate()?;
        }
    }
    Ok(cmd)
}

/// `name=path` or a bare path named after its parent directory.
pub fn parse_model_entry(s: &str) -> ModelEntry {
    if let Some((name, path)) = s.split_once('=') {
        return ModelEntry {
            name: name.into(),
            path: path.into(),
        };
    }
    let path = PathBuf::from(s);
    let name = path
        .parent()
        .and_then(|p| p.file_name())
        .or_else(|| path.file_stem())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    ModelEntry { name, path }
}

pub(crate) fn write_text(out: &Path, name: &str, text: &str, files: &mut Vec<String>) -> Result<()> {
    write_bytes(&out.join(name), text.as_bytes())?;
    files.push(name.into());
    Ok(())
}

/// Writes a CSV with the given header and rows.
pub(crate) fn write_csv(out: &Path, name: &str, header: &[&str], rows: &[Vec<String>], files: &mut Vec<String>) -> Result<()> {
    let path = out.join(name);
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::format(&path, e);
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::format(&path, e))?;
    write_bytes(&path, &bytes)?;
    files.push(name.into());
    Ok(())
}

/// `key,value` metrics file.
pub(crate) fn write_kv(out: &Path, name: &str, rows: &[(&str, String)], files: &mut Vec<String>) -> Result<()> {
    let rows: Vec<Vec<String>> = rows.iter().map(|(k, v)| vec![k.to_string(), v.clone()]).collect();
    write_csv(out, name, &["key", "value"], &rows, files)
}

pub(crate) fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn manifest_path(out: &Path) -> PathBuf {
    out.join(MANIFEST_FILE)
}
