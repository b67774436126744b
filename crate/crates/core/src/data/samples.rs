use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::arm::ArmSpec;
use crate::oracle::Plan;

/// Rows per action window.
pub const HORIZON: usize = 16;

/// Affine map between joint limits and `[-1, 1]` per joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Normalizer {
    pub fn from_spec(spec: &ArmSpec) -> Self {
        Normalizer {
            lo: spec.joint_limits.iter().map(|l| l.0).collect(),
            hi: spec.joint_limits.iter().map(|l| l.1).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn normalize(&self, q: &[f64]) -> Vec<f64> {
        q.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(x, (l, h))| 2.0 * (x - l) / (h - l) - 1.0)
            .collect()
    }

    pub fn denormalize(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| l + (v + 1.0) * 0.5 * (h - l))
            .collect()
    }
}

/// One training record: condition and the following `HORIZON` configurations,
/// all in normalized joint space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSample {
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub scene_id: u64,
    /// Index of the source plan within its dataset.
    pub plan_index: usize,
    /// `HORIZON x D`, row-major.
    pub target: Vec<f64>,
    pub cloud_embedding: Option<Vec<f64>>,
}

fn clamp_unit(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x.clamp(-1.0, 1.0)).collect()
}

/// One sample per plan index `i` in `0..len-1`: start `q_i`, goal `q_last`
/// and target `q_{i+1..=i+HORIZON}` padded with the goal.
pub fn build_samples(
    plan: &Plan,
    plan_index: usize,
    normalizer: &Normalizer,
    horizon: usize,
    cloud_embedding: Option<&[f64]>,
) -> Vec<TaskSample> {
    let c = &plan.configs;
    if c.len() < 2 {
        return Vec::new();
    }
    let norm: Vec<Vec<f64>> = c.iter().map(|q| clamp_unit(normalizer.normalize(q))).collect();
    let goal = &norm[norm.len() - 1];
    (0..c.len() - 1)
        .map(|i| {
            let mut target = Vec::with_capacity(horizon * goal.len());
            for r in 0..horizon {
                target.extend_from_slice(norm.get(i + 1 + r).unwrap_or(goal));
            }
            TaskSample {
                start: norm[i].clone(),
                goal: goal.clone(),
                scene_id: plan.scene_id,
                plan_index,
                target,
                cloud_embedding: cloud_embedding.map(|e| e.to_vec()),
            }
        })
        .collect()
}

/// Splits indices by keypoint count: `(kept, removed)` where kept have at
/// least `min_keypoints`.
pub fn refine_partition(keypoint_counts: &[usize], min_keypoints: usize) -> (Vec<usize>, Vec<usize>) {
    (0..keypoint_counts.len()).partition(|&i| keypoint_counts[i] >= min_keypoints)
}
