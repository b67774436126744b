use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::schedule::DiffusionSchedule;
use super::unet::Denoiser;
use crate::data::TaskSample;
use crate::math;
use crate::nd::{AdamConfig, Tape, Tensor};
use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// `start ⊕ goal`, followed by the cloud embedding unless `ablation` is set.
pub fn condition_vector(sample: &TaskSample, ablation: bool) -> Vec<f64> {
    let mut c = sample.start.clone();
    c.extend_from_slice(&sample.goal);
    if !ablation {
        if let Some(e) = &sample.cloud_embedding {
            c.extend_from_slice(e);
        }
    }
    c
}

/// Learning rate over the optimizer steps of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Linear warmup over `warmup` steps, then cosine decay to zero.
    Cosine { warmup: usize },
}

impl LrSchedule {
    /// Multiplier of the base rate at optimizer step `step` of `total`.
    pub fn factor(&self, step: usize, total: usize) -> f64 {
        match *self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine { warmup } => {
                if step < warmup {
                    return (step + 1) as f64 / warmup as f64;
                }
                let span = total.saturating_sub(warmup).max(1);
                let p = ((step - warmup) as f64 / span as f64).min(1.0);
                0.5 * (1.0 + math::cos(core::f64::consts::PI * p))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionTrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    pub seed: u64,
    pub ablation: bool,
}

impl Default for DiffusionTrainConfig {
    fn default() -> Self {
        DiffusionTrainConfig {
            epochs: 50,
            batch: 64,
            adam: AdamConfig::default(),
            lr_schedule: LrSchedule::default(),
            seed: 0,
            ablation: false,
        }
    }
}

impl DiffusionTrainConfig {
    /// Desk-scale training: smaller batches and a higher peak rate with
    /// warmup and cosine decay.
    pub fn desk() -> Self {
        DiffusionTrainConfig {
            batch: 32,
            adam: AdamConfig { lr: 3e-3, ..AdamConfig::default() },
            lr_schedule: LrSchedule::Cosine { warmup: 500 },
            ..Self::default()
        }
    }

    /// Diffusion-policy style training: base rate with warmup and cosine decay.
    pub fn paper() -> Self {
        DiffusionTrainConfig {
            lr_schedule: LrSchedule::Cosine { warmup: 500 },
            ..Self::default()
        }
    }
}

/// Noise-prediction training with an MSE loss. Calls `on_epoch(epoch,
/// mean_loss)` and returns per-epoch mean losses.
pub fn train_diffusion(
    model: &mut Denoiser,
    schedule: &DiffusionSchedule,
    samples: &[TaskSample],
    cfg: &DiffusionTrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let conds: Vec<Vec<f64>> = samples.iter().map(|s| condition_vector(s, cfg.ablation)).collect();
    let w = model.spec.horizon * model.spec.action_dim;
    for (s, c) in samples.iter().zip(&conds) {
        if c.len() != model.spec.cond_dim {
            return Err(Error::ConfigMismatch {
                what: "condition dim",
                expected: model.spec.cond_dim,
                got: c.len(),
            });
        }
        if s.target.len() != w {
            return Err(Error::ConfigMismatch {
                what: "action window length",
                expected: w,
                got: s.target.len(),
            });
        }
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let total_steps = cfg.epochs * samples.len().div_ceil(cfg.batch);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let adam = AdamConfig {
                lr: cfg.adam.lr * cfg.lr_schedule.factor(step, total_steps),
                ..cfg.adam
            };
            step += 1;
            let loss = train_step(model, schedule, samples, &conds, chunk, &adam, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("diffusion loss at epoch {epoch}")));
            }
            total += loss * chunk.len() as f64;
        }
        let mean = total / samples.len() as f64;
        history.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(history)
}

/// One Adam step on the given rows; returns the batch loss before the update.
pub(crate) fn train_step(
    model: &mut Denoiser,
    schedule: &DiffusionSchedule,
    samples: &[TaskSample],
    conds: &[Vec<f64>],
    rows: &[usize],
    adam: &AdamConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    let spec = &model.spec;
    let b = rows.len();
    let w = spec.horizon * spec.action_dim;
    let mut xt = Vec::with_capacity(b * w);
    let mut noise = Vec::with_capacity(b * w);
    let mut ts = Vec::with_capacity(b);
    let mut cond = Vec::with_capacity(b * spec.cond_dim);
    for &i in rows {
        let t = rng.random_range(0..schedule.steps());
        let ab = schedule.alpha_bars[t];
        let (sa, sb) = (math::sqrt(ab), math::sqrt(1.0 - ab));
        for &x0 in &samples[i].target {
            let n: f64 = StandardNormal.sample(rng);
            xt.push(sa * x0 + sb * n);
            noise.push(n);
        }
        ts.push(t);
        cond.extend_from_slice(&conds[i]);
    }
    let shape = alloc::vec![b, spec.horizon, spec.action_dim];
    let xt = Tensor::new(shape.clone(), xt)?;
    let noise = Tensor::new(shape, noise)?;
    let cond = Tensor::new(alloc::vec![b, spec.cond_dim], cond)?;
    let (loss, grads) = {
        let mut tape = Tape::new();
        let p = model.store.bind(&mut tape);
        let x = tape.input_ref(&xt);
        let c = tape.input_ref(&cond);
        let n = tape.input_ref(&noise);
        let pred = model.forward_var(&mut tape, &p, x, &ts, c)?;
        let l = tape.mse(pred, n)?;
        let loss = tape.value(l).item()?;
        if !loss.is_finite() {
            return Ok(loss);
        }
        let mut g = tape.backward(l)?;
        (loss, model.store.collect_grads(&p, &mut g))
    };
    model.store.adam_step(&grads, adam)?;
    Ok(loss)
}
