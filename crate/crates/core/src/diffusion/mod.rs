//! DDPM noise schedule, FiLM-conditioned temporal UNet denoiser, training and
//! conditional sampling of action windows.

mod sample;
mod schedule;
mod train;
mod unet;

pub use sample::{reverse_step, sample_actions, InitNoise, SampleConfig};
pub use schedule::{q_sample, DiffusionSchedule};
pub use train::{condition_vector, train_diffusion, DiffusionTrainConfig, LrSchedule};
pub use unet::{timestep_embedding, Denoiser, DenoiserSpec};

use serde::{Deserialize, Serialize};

use crate::data::Normalizer;

/// Everything needed to rebuild a trained denoiser next to its weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub action_dim: usize,
    pub horizon: usize,
    pub steps: usize,
    pub cond_dim: usize,
    pub spec: DenoiserSpec,
    /// True when the point-cloud embedding is left out of the condition.
    pub ablation: bool,
    pub embedding_dim: usize,
    pub normalizer: Normalizer,
    pub representation: crate::oracle::Representation,
}
