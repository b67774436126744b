//! Shared fixtures: a tiny end-to-end run and a straight-line stub model.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use keyplan::config::{EvaluateConfig, ModelEntry, NetworkSize, PlannerParams, TrainAeConfig, TrainDiffusionConfig};
use keyplan::pipeline::{run, Command};
use keyplan_core::cloud::AutoencoderSpec;
use keyplan_core::data::DatasetConfig;
use keyplan_core::neuro::ActionModel;
use keyplan_core::oracle::Representation;

/// Emits the straight line from the conditioned start to the goal.
pub struct StraightLine {
    pub d: usize,
    pub cond_dim: usize,
}

impl ActionModel for StraightLine {
    fn action_dim(&self) -> usize {
        self.d
    }

    fn horizon(&self) -> usize {
        16
    }

    fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    fn representation(&self) -> Representation {
        Representation::Keypoint
    }

    fn sample(&self, conds: &[Vec<f64>], _: &[u64]) -> keyplan_core::Result<Vec<Vec<f64>>> {
        Ok(conds
            .iter()
            .map(|c| {
                let (s, g) = (&c[..self.d], &c[self.d..2 * self.d]);
                (1..=16)
                    .flat_map(|r| {
                        let f = r as f64 / 16.0;
                        s.iter().zip(g).map(move |(a, b)| a + f * (b - a))
                    })
                    .collect()
            })
            .collect())
    }
}

pub fn tiny_dataset_config(seed: u64) -> DatasetConfig {
    let mut c = DatasetConfig::desk();
    c.seed = seed;
    c.n_scenes = 6;
    c.plans_per_scene = 3;
    c.cloud_points = 64;
    c.test_every = 3;
    c.budget.max_iterations = 5_000;
    c
}

pub fn tiny_network() -> NetworkSize {
    NetworkSize {
        widths: vec![8, 16],
        groups: 4,
        time_dim: 8,
        kernel: 3,
    }
}

pub struct TinyRun {
    pub root: PathBuf,
    pub dataset: PathBuf,
    pub ae: PathBuf,
    pub full: PathBuf,
    pub ablation: PathBuf,
    pub eval: PathBuf,
    pub commands: Vec<(String, Command)>,
}

/// Generates, trains and evaluates at toy scale under `root`.
pub fn tiny_run(root: &Path) -> TinyRun {
    let dir = |n: &str| root.join(n);
    let mut commands = Vec::new();
    let mut go = |name: &str, cmd: Command| {
        run(&cmd, &dir(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        commands.push((name.to_string(), cmd));
    };
    go("data", Command::GenDataset(tiny_dataset_config(3)));
    let dataset = dir("data").join("dataset.kdds");
    go("stats", Command::Stats(keyplan::config::StatsConfig { dataset: dataset.clone(), metric: Default::default() }));
    let mut ae = TrainAeConfig::new(keyplan::config::Mode::Desk, dataset.clone());
    ae.spec = AutoencoderSpec {
        dim: 2,
        encoder_widths: [8, 16, 8],
        decoder_hidden: vec![16],
        points_out: 16,
    };
    ae.train.epochs = 2;
    go("ae", Command::TrainAe(ae));
    let ae_path = dir("ae").join("ae.kdnp");
    let train = |ablation: bool| {
        let mut c = TrainDiffusionConfig::new(keyplan::config::Mode::Desk, dataset.clone());
        c.ae = (!ablation).then(|| ae_path.clone());
        c.network = tiny_network();
        c.steps = 10;
        c.train.epochs = 2;
        c.train.ablation = ablation;
        c
    };
    go("full", Command::TrainDiffusion(train(false)));
    go("ablation", Command::TrainDiffusion(train(true)));
    let planner = PlannerParams {
        k: 4,
        max_rounds: 2,
        ..PlannerParams::default()
    };
    let models = vec![
        ModelEntry { name: "full".into(), path: dir("full").join("model.kdnp") },
        ModelEntry { name: "ablation".into(), path: dir("ablation").join("model.kdnp") },
    ];
    go("eval", Command::Evaluate(EvaluateConfig { dataset: dataset.clone(), models, planner, seed: 5, max_tasks: Some(4) }));
    TinyRun {
        root: root.to_path_buf(),
        dataset,
        ae: ae_path,
        full: dir("full").join("model.kdnp"),
        ablation: dir("ablation").join("model.kdnp"),
        eval: dir("eval"),
        commands,
    }
}
