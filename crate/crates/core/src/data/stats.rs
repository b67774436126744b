use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::oracle::Plan;
use crate::{Error, Result};

/// How plan length is aggregated over joints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthMetric {
    /// Sum of L2 step norms.
    #[default]
    L2,
    /// Sum of per-joint absolute changes.
    L1,
}

impl LengthMetric {
    pub fn length(self, plan: &Plan) -> f64 {
        match self {
            LengthMetric::L2 => plan.arc_length,
            LengthMetric::L1 => plan.configs.windows(2).map(|w| math::dist1(&w[0], &w[1])).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub count: usize,
    pub mean: f64,
    /// Population variance.
    pub var: f64,
    pub max: f64,
    pub min: f64,
    /// Keypoint count to number of plans.
    pub keypoint_histogram: BTreeMap<usize, usize>,
}

/// Length statistics over `plans`, plus a histogram of `keypoint_counts`.
pub fn dataset_stats(plans: &[Plan], keypoint_counts: &[usize], metric: LengthMetric) -> Result<DatasetStats> {
    if plans.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let lengths: Vec<f64> = plans.iter().map(|p| metric.length(p)).collect();
    let n = lengths.len() as f64;
    let mean = lengths.iter().sum::<f64>() / n;
    let var = lengths.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
    let mut hist = BTreeMap::new();
    for &k in keypoint_counts {
        *hist.entry(k).or_insert(0) += 1;
    }
    Ok(DatasetStats {
        count: plans.len(),
        mean,
        var,
        max: lengths.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min: lengths.iter().copied().fold(f64::INFINITY, f64::min),
        keypoint_histogram: hist,
    })
}
