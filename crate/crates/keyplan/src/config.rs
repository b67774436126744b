//! Per-subcommand run configurations.
//!
//! Every subcommand is fully described by one of these records; the record
//! is written to the run manifest so the run can be repeated.

use std::path::PathBuf;

use keyplan_core::cloud::{AeTrainConfig, AutoencoderSpec};
use keyplan_core::data::{DatasetConfig, LengthMetric};
use keyplan_core::diffusion::{DenoiserSpec, DiffusionTrainConfig, InitNoise};
use keyplan_core::oracle::{PlannerBudget, Representation};
use keyplan_core::scene::SceneParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenScenesConfig {
    pub seed: u64,
    pub n_scenes: usize,
    pub scene: SceneParams,
}

impl GenScenesConfig {
    pub fn new(mode: Mode) -> Self {
        GenScenesConfig {
            seed: 0,
            n_scenes: 500,
            scene: match mode {
                Mode::Desk => SceneParams::desk(),
                Mode::Paper => SceneParams::paper(),
            },
        }
    }
}

pub fn dataset_config(mode: Mode) -> DatasetConfig {
    match mode {
        Mode::Desk => DatasetConfig::desk(),
        Mode::Paper => DatasetConfig::paper(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig {
    pub dataset: PathBuf,
    pub metric: LengthMetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainAeConfig {
    pub dataset: PathBuf,
    pub spec: AutoencoderSpec,
    pub train: AeTrainConfig,
    /// Held-out clouds written next to their reconstructions.
    pub dump_clouds: usize,
}

impl TrainAeConfig {
    pub fn new(mode: Mode, dataset: PathBuf) -> Self {
        TrainAeConfig {
            dataset,
            spec: match mode {
                Mode::Desk => AutoencoderSpec::desk(),
                Mode::Paper => AutoencoderSpec::paper(),
            },
            train: AeTrainConfig::default(),
            dump_clouds: 4,
        }
    }
}

/// Denoiser size; input and condition sizes come from the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSize {
    pub widths: Vec<usize>,
    pub groups: usize,
    pub time_dim: usize,
    pub kernel: usize,
}

impl NetworkSize {
    pub fn new(mode: Mode) -> Self {
        let s = match mode {
            Mode::Desk => DenoiserSpec::desk(0, 0),
            Mode::Paper => DenoiserSpec::paper(0, 0),
        };
        NetworkSize {
            widths: s.widths,
            groups: s.groups,
            time_dim: s.time_dim,
            kernel: s.kernel,
        }
    }

    pub fn spec(&self, action_dim: usize, horizon: usize, cond_dim: usize) -> DenoiserSpec {
        DenoiserSpec {
            action_dim,
            horizon,
            cond_dim,
            widths: self.widths.clone(),
            groups: self.groups,
            time_dim: self.time_dim,
            kernel: self.kernel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDiffusionConfig {
    pub dataset: PathBuf,
    /// Autoencoder checkpoint; unused by ablation models.
    pub ae: Option<PathBuf>,
    pub representation: Representation,
    /// Train only on plans with more than four keypoints.
    pub refined: bool,
    pub network: NetworkSize,
    pub steps: usize,
    pub train: DiffusionTrainConfig,
}

impl TrainDiffusionConfig {
    pub fn new(mode: Mode, dataset: PathBuf) -> Self {
        TrainDiffusionConfig {
            dataset,
            ae: None,
            representation: Representation::Keypoint,
            refined: false,
            network: NetworkSize::new(mode),
            steps: 100,
            train: match mode {
                Mode::Desk => DiffusionTrainConfig::desk(),
                Mode::Paper => DiffusionTrainConfig::paper(),
            },
        }
    }
}

/// Batched-planner parameters shared by `plan` and `evaluate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    pub k: usize,
    pub goal_tol: f64,
    pub max_rounds: usize,
    pub interp_step: f64,
    pub collision_resolution: f64,
    pub init: InitNoise,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            k: 32,
            goal_tol: 0.05,
            max_rounds: 4,
            interp_step: 0.05,
            collision_resolution: keyplan_core::arm::DEFAULT_EDGE_RESOLUTION,
            init: InitNoise::Gaussian,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub dataset: PathBuf,
    pub model: PathBuf,
    /// Position in the list of held-out tasks.
    pub task: usize,
    pub planner: PlannerParams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateConfig {
    pub dataset: PathBuf,
    pub models: Vec<ModelEntry>,
    pub planner: PlannerParams,
    pub seed: u64,
    /// Evaluate only the first `n` held-out tasks.
    pub max_tasks: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub dataset: PathBuf,
    /// Raw per-task CSV written by `evaluate`.
    pub tasks: PathBuf,
    pub budget: PlannerBudget,
    pub seed: u64,
}
