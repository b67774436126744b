//! Evaluation aggregates: success rates, plan-length differences, timing
//! summaries, in-batch histograms and the runtime comparison against the
//! oracle planner.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::neuro::Timing;
use crate::oracle::Plan;
use crate::{Error, Result};

/// Plans with more keypoints than this form the hard subset.
pub const HARD_KEYPOINTS: usize = 4;

pub const HISTOGRAM_BINS: usize = 10;

/// `arc_length(generated) - arc_length(reference)`; negative when the
/// generated plan is shorter.
pub fn length_diff(generated: &Plan, reference: &Plan) -> f64 {
    generated.arc_length - reference.arc_length
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population variance.
    pub var: f64,
    pub max: f64,
    pub min: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Summary {
            mean,
            var,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
        })
    }
}

/// Counts of values in ten equal bins over `[0, 1]`; 1.0 lands in the last bin.
pub fn histogram(values: &[f64]) -> [usize; HISTOGRAM_BINS] {
    let mut bins = [0; HISTOGRAM_BINS];
    for &v in values {
        let b = ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        bins[b] += 1;
    }
    bins
}

/// Raw per-task evaluation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: u64,
    pub success: bool,
    /// Keypoint count of the reference plan, if there is one.
    pub reference_keypoints: Option<usize>,
    pub length_diff: Option<f64>,
    pub in_batch: f64,
    pub rounds_used: usize,
    pub timing: Timing,
}

impl TaskOutcome {
    pub fn is_hard(&self) -> bool {
        self.reference_keypoints.is_some_and(|k| k > HARD_KEYPOINTS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Tasks with a reference plan; all rates are over these.
    pub tasks: usize,
    pub without_reference: usize,
    pub hard_tasks: usize,
    /// Percent.
    pub success_all: f64,
    /// Percent; `None` when the hard subset is empty.
    pub success_hard: Option<f64>,
    /// Over successful tasks only.
    pub length_diff: Option<Summary>,
    pub total_s: Option<Summary>,
    pub inference_s: Option<Summary>,
    pub collision_s: Option<Summary>,
    pub in_batch_histogram: [usize; HISTOGRAM_BINS],
}

/// Aggregates raw rows in `task_id` order.
pub fn evaluate(outcomes: &[TaskOutcome]) -> Result<EvalReport> {
    let mut rows: Vec<&TaskOutcome> = outcomes.iter().collect();
    rows.sort_by_key(|o| o.task_id);
    let without_reference = rows.iter().filter(|o| o.reference_keypoints.is_none()).count();
    rows.retain(|o| o.reference_keypoints.is_some());
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let pct = |n: usize, d: usize| 100.0 * n as f64 / d as f64;
    let ok = rows.iter().filter(|o| o.success).count();
    let hard: Vec<&&TaskOutcome> = rows.iter().filter(|o| o.is_hard()).collect();
    let hard_ok = hard.iter().filter(|o| o.success).count();
    let diffs: Vec<f64> = rows.iter().filter(|o| o.success).filter_map(|o| o.length_diff).collect();
    let col = |f: fn(&Timing) -> f64| Summary::of(&rows.iter().map(|o| f(&o.timing)).collect::<Vec<_>>());
    Ok(EvalReport {
        tasks: rows.len(),
        without_reference,
        hard_tasks: hard.len(),
        success_all: pct(ok, rows.len()),
        success_hard: if hard.is_empty() { None } else { Some(pct(hard_ok, hard.len())) },
        length_diff: Summary::of(&diffs),
        total_s: col(|t| t.total_s),
        inference_s: col(|t| t.inference_s),
        collision_s: col(|t| t.collision_s),
        in_batch_histogram: histogram(&rows.iter().map(|o| o.in_batch).collect::<Vec<_>>()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub task_id: u64,
    pub oracle_s: f64,
    pub neural_s: f64,
    pub inference_s: f64,
    pub collision_s: f64,
    /// `oracle_s / neural_s`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeComparison {
    pub rows: Vec<RuntimeRow>,
    pub mean_oracle_s: f64,
    pub mean_neural_s: f64,
    pub mean_inference_s: f64,
    pub mean_collision_s: f64,
    /// `mean_oracle_s / mean_neural_s`.
    pub ratio: f64,
}

/// Pairs neural and oracle timings by task id; both lists must cover the
/// same tasks.
pub fn compare_runtime(neural: &[(u64, Timing)], oracle: &[(u64, f64)]) -> Result<RuntimeComparison> {
    if neural.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut n: Vec<&(u64, Timing)> = neural.iter().collect();
    let mut o: Vec<&(u64, f64)> = oracle.iter().collect();
    n.sort_by_key(|r| r.0);
    o.sort_by_key(|r| r.0);
    if n.len() != o.len() || n.iter().zip(&o).any(|(a, b)| a.0 != b.0) {
        return Err(Error::InvalidArgument("neural and oracle task lists differ".into()));
    }
    let rows: Vec<RuntimeRow> = n
        .iter()
        .zip(&o)
        .map(|(a, b)| RuntimeRow {
            task_id: a.0,
            oracle_s: b.1,
            neural_s: a.1.total_s,
            inference_s: a.1.inference_s,
            collision_s: a.1.collision_s,
            ratio: b.1 / a.1.total_s,
        })
        .collect();
    let mean = |f: fn(&RuntimeRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    let mean_oracle_s = mean(|r| r.oracle_s);
    let mean_neural_s = mean(|r| r.neural_s);
    Ok(RuntimeComparison {
        mean_oracle_s,
        mean_neural_s,
        mean_inference_s: mean(|r| r.inference_s),
        mean_collision_s: mean(|r| r.collision_s),
        ratio: mean_oracle_s / mean_neural_s,
        rows,
    })
}
