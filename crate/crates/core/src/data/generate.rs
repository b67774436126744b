use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::repr::{extract_keypoints, resample_fixed_step, second_difference_norm, KeypointParams, SecondDiffNorm};
use super::samples::{build_samples, refine_partition, Normalizer, TaskSample, HORIZON};
use crate::arm::{sample_valid_config, ArmSpec};
use crate::clock::Clock;
use crate::oracle::{plan_oracle, OracleParams, Plan, PlannerBudget, Representation};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scene::{sample_point_cloud, sample_scene, PointCloud, Scene, SceneParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub seed: u64,
    pub n_scenes: usize,
    pub plans_per_scene: usize,
    pub scene: SceneParams,
    pub arm: ArmSpec,
    pub budget: PlannerBudget,
    pub oracle: OracleParams,
    /// Surface points per scene.
    pub cloud_points: usize,
    /// Fixed-step spacing, radians.
    pub fixed_step: f64,
    pub keypoint_norm: SecondDiffNorm,
    /// Keypoint threshold; calibrated from the corpus when absent.
    pub epsilon: Option<f64>,
    /// Every `test_every`-th scene goes to the test split.
    pub test_every: usize,
    pub max_sample_attempts: usize,
}

impl DatasetConfig {
    pub fn desk() -> Self {
        DatasetConfig {
            seed: 0,
            n_scenes: 500,
            plans_per_scene: 10,
            scene: SceneParams::desk(),
            arm: ArmSpec::desk(),
            budget: PlannerBudget::desk(),
            oracle: OracleParams::default(),
            cloud_points: 1024,
            fixed_step: 0.1,
            keypoint_norm: SecondDiffNorm::Linf,
            epsilon: None,
            test_every: 10,
            max_sample_attempts: 10_000,
        }
    }

    pub fn paper() -> Self {
        DatasetConfig {
            n_scenes: 5000,
            plans_per_scene: 20,
            scene: SceneParams::paper(),
            arm: ArmSpec::paper(),
            budget: PlannerBudget {
                wall_clock_seconds: 20.0,
                max_iterations: 200_000,
            },
            cloud_points: 4096,
            ..DatasetConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arm.validate()?;
        self.budget.validate()?;
        if self.arm.workspace_dim() != self.scene.dim() {
            return Err(Error::ConfigMismatch {
                what: "workspace dimension",
                expected: self.scene.dim(),
                got: self.arm.workspace_dim(),
            });
        }
        if self.n_scenes == 0 || self.plans_per_scene == 0 || self.cloud_points == 0 || self.test_every == 0 {
            return Err(Error::InvalidArgument("dataset sizes must be positive".into()));
        }
        if !(self.fixed_step > 0.0) || self.epsilon.is_some_and(|e| !(e > 0.0)) {
            return Err(Error::InvalidArgument("fixed step and epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneEntry {
    pub scene: Scene,
    pub split: Split,
    pub cloud: PointCloud,
}

/// A smoothed oracle plan with the scene it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanRecord {
    pub scene_index: usize,
    pub plan: Plan,
}

/// A scene rejected during generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discarded {
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub epsilon: f64,
    pub scenes: Vec<SceneEntry>,
    pub plans: Vec<PlanRecord>,
    pub discarded: Vec<Discarded>,
}

impl Dataset {
    pub fn keypoint_params(&self) -> KeypointParams {
        KeypointParams {
            epsilon: self.epsilon,
            norm: self.config.keypoint_norm,
        }
    }

    pub fn fixed_step(&self, i: usize) -> Plan {
        resample_fixed_step(&self.plans[i].plan, self.config.fixed_step)
    }

    pub fn keypoints(&self, i: usize) -> Plan {
        extract_keypoints(&self.fixed_step(i), &self.keypoint_params())
    }

    pub fn keypoint_count(&self, i: usize) -> usize {
        self.keypoints(i).len()
    }

    pub fn represent(&self, i: usize, rep: Representation) -> Plan {
        match rep {
            Representation::Raw => self.plans[i].plan.clone(),
            Representation::FixedStep => self.fixed_step(i),
            Representation::Keypoint => self.keypoints(i),
        }
    }

    pub fn split_of(&self, i: usize) -> Split {
        self.scenes[self.plans[i].scene_index].split
    }

    /// Plan indices in `split`, optionally restricted to plans with more than
    /// four keypoints.
    pub fn plan_indices(&self, split: Split, refined: bool) -> Vec<usize> {
        let idx: Vec<usize> = (0..self.plans.len()).filter(|&i| self.split_of(i) == split).collect();
        if !refined {
            return idx;
        }
        let counts: Vec<usize> = idx.iter().map(|&i| self.keypoint_count(i)).collect();
        let (kept, _) = refine_partition(&counts, 5);
        kept.into_iter().map(|k| idx[k]).collect()
    }

    /// Training samples for the given plans in representation `rep`.
    /// `embeddings[scene_index]` is attached when given.
    pub fn samples(&self, indices: &[usize], rep: Representation, embeddings: Option<&[Vec<f64>]>) -> Vec<TaskSample> {
        let norm = Normalizer::from_spec(&self.config.arm);
        indices
            .iter()
            .flat_map(|&i| {
                let e = embeddings.map(|e| e[self.plans[i].scene_index].as_slice());
                build_samples(&self.represent(i, rep), i, &norm, HORIZON, e)
            })
            .collect()
    }
}

/// Picks the keypoint threshold from a log grid so the median keypoint count
/// lands in `[4, 8]`, closest to 6; larger thresholds win ties.
///
/// Plans that keep only their endpoints at every grid threshold are left out
/// of the median. If every plan is such a straight line, the largest
/// threshold is returned.
pub fn calibrate_epsilon(fixed_plans: &[Plan], norm: SecondDiffNorm) -> f64 {
    let grid = |k: usize| libm::pow(10.0, -5.0 + 0.1 * k as f64);
    let per_plan: Vec<Vec<f64>> = fixed_plans
        .iter()
        .map(|p| {
            p.configs
                .windows(3)
                .map(|w| second_difference_norm(&w[0], &w[1], &w[2], norm))
                .collect::<Vec<f64>>()
        })
        .filter(|d| d.iter().any(|&x| x > grid(0)))
        .collect();
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=60 {
        let eps = grid(k);
        let mut counts: Vec<usize> = per_plan.iter().map(|d| 2 + d.iter().filter(|&&x| x > eps).count()).collect();
        if counts.is_empty() {
            return grid(60);
        }
        counts.sort_unstable();
        let median = counts[counts.len() / 2] as f64;
        let miss = if median < 4.0 {
            4.0 - median
        } else if median > 8.0 {
            median - 8.0
        } else {
            0.0
        };
        let score = miss * 100.0 + (median - 6.0).abs();
        if score <= best.0 {
            best = (score, eps);
        }
    }
    best.1
}

/// Generates scenes, clouds and oracle plans as a pure function of the
/// config (and, when the wall-clock budget binds, of `clock`).
///
/// Scene candidates use seeds derived from `config.seed` in order. A scene is
/// discarded when start/goal sampling fails or when the oracle fails on at
/// least half of `2 * plans_per_scene` attempts; the next candidate takes its
/// slot. Slot `k` is a test scene when `k % test_every == test_every - 1`.
pub fn generate_dataset(
    config: &DatasetConfig,
    clock: &impl Clock,
    mut progress: impl FnMut(usize, usize),
) -> Result<Dataset> {
    config.validate()?;
    let mut scenes = Vec::with_capacity(config.n_scenes);
    let mut plans = Vec::with_capacity(config.n_scenes * config.plans_per_scene);
    let mut discarded = Vec::new();
    let max_candidates = config.n_scenes * 10 + 100;
    let mut candidate = 0u64;
    while scenes.len() < config.n_scenes {
        if candidate as usize >= max_candidates {
            return Err(Error::InvalidArgument(alloc::format!(
                "gave up after {candidate} scene candidates ({} discarded)",
                discarded.len()
            )));
        }
        let seed = derive_seed(config.seed, candidate);
        candidate += 1;
        match scene_plans(config, seed, clock) {
            Ok((scene, cloud, scene_plans)) => {
                let k = scenes.len();
                let split = if k % config.test_every == config.test_every - 1 { Split::Test } else { Split::Train };
                plans.extend(scene_plans.into_iter().map(|plan| PlanRecord { scene_index: k, plan }));
                scenes.push(SceneEntry { scene, split, cloud });
                progress(scenes.len(), config.n_scenes);
            }
            Err(reason) => discarded.push(Discarded { seed, reason }),
        }
    }
    let epsilon = match config.epsilon {
        Some(e) => e,
        None => {
            let fixed: Vec<Plan> = plans.iter().map(|r| resample_fixed_step(&r.plan, config.fixed_step)).collect();
            calibrate_epsilon(&fixed, config.keypoint_norm)
        }
    };
    Ok(Dataset {
        config: config.clone(),
        epsilon,
        scenes,
        plans,
        discarded,
    })
}

fn scene_plans(config: &DatasetConfig, seed: u64, clock: &impl Clock) -> core::result::Result<(Scene, PointCloud, Vec<Plan>), String> {
    let scene = sample_scene(&config.scene, seed).map_err(|e| e.to_string())?;
    let mut rng = rng_from_seed(derive_seed(seed, 1));
    let cloud = if scene.obstacles.is_empty() {
        PointCloud {
            dim: scene.dim(),
            points: alloc::vec![0.0; config.cloud_points * scene.dim()],
        }
    } else {
        sample_point_cloud(&scene, config.cloud_points, &mut rng).map_err(|e| e.to_string())?
    };
    let mut rng = rng_from_seed(derive_seed(seed, 2));
    let mut out = Vec::with_capacity(config.plans_per_scene);
    let cap = 2 * config.plans_per_scene;
    let mut failures = 0;
    for _ in 0..cap {
        if out.len() == config.plans_per_scene {
            break;
        }
        let start = sample_valid_config(&config.arm, &scene, &mut rng, config.max_sample_attempts).map_err(|e| e.to_string())?;
        let goal = sample_valid_config(&config.arm, &scene, &mut rng, config.max_sample_attempts).map_err(|e| e.to_string())?;
        match plan_oracle(&config.arm, &scene, &start, &goal, &config.budget, &config.oracle, &mut rng, clock) {
            Ok(p) => out.push(p),
            Err(_) => failures += 1,
        }
    }
    if out.len() < config.plans_per_scene {
        return Err(alloc::format!("oracle failed {failures} of {} attempts", failures + out.len()));
    }
    Ok((scene, cloud, out))
}
