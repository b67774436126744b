//! Plan representations, training samples, statistics and dataset generation.

mod generate;
mod repr;
mod samples;
mod stats;

pub use generate::{calibrate_epsilon, generate_dataset, Dataset, DatasetConfig, Discarded, PlanRecord, SceneEntry, Split};
pub use repr::{extract_keypoints, resample_fixed_step, second_difference_norm, KeypointParams, SecondDiffNorm};
pub use samples::{build_samples, refine_partition, Normalizer, TaskSample, HORIZON};
pub use stats::{dataset_stats, DatasetStats, LengthMetric};
