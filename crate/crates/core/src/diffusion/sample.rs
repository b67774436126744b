use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::schedule::DiffusionSchedule;
use super::unet::Denoiser;
use crate::math;
use crate::nd::Tensor;
use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// Distribution of the initial window `x_T`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitNoise {
    #[default]
    Gaussian,
    /// Uniform on `[-sqrt(3), sqrt(3)]`, which has unit variance.
    Uniform,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub init: InitNoise,
}

/// One ancestral step from `x_t` given the predicted noise `eps` and fresh
/// standard normal `z`. The implied `x_0` is clipped to `[-1, 1]`; no noise
/// is added at `t = 0`.
pub fn reverse_step(schedule: &DiffusionSchedule, t: usize, x_t: &[f64], eps: &[f64], z: &[f64]) -> Vec<f64> {
    let ab = schedule.alpha_bars[t];
    let ab_prev = schedule.alpha_bar_prev(t);
    let beta = schedule.betas[t];
    let c0 = math::sqrt(ab_prev) * beta / (1.0 - ab);
    let ct = math::sqrt(schedule.alphas[t]) * (1.0 - ab_prev) / (1.0 - ab);
    let sigma = if t > 0 { math::sqrt(schedule.posterior_variance(t)) } else { 0.0 };
    let (sa, sb) = (math::sqrt(ab), math::sqrt(1.0 - ab));
    x_t.iter()
        .zip(eps)
        .zip(z)
        .map(|((x, e), n)| {
            let x0 = ((x - sb * e) / sa).clamp(-1.0, 1.0);
            c0 * x0 + ct * x + sigma * n
        })
        .collect()
}

fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Denoises one window per entry of `conds`. Row `i` draws all of its noise
/// from its own stream seeded with `row_seeds[i]`, so a row's result does not
/// depend on the other rows of the batch.
pub fn sample_actions(
    model: &Denoiser,
    schedule: &DiffusionSchedule,
    conds: &[Vec<f64>],
    row_seeds: &[u64],
    cfg: &SampleConfig,
) -> Result<Vec<Vec<f64>>> {
    let k = conds.len();
    if row_seeds.len() != k {
        return Err(Error::InvalidArgument("one seed per condition row is required".into()));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let spec = &model.spec;
    let c = spec.cond_dim;
    if let Some(bad) = conds.iter().find(|r| r.len() != c) {
        return Err(Error::ConfigMismatch {
            what: "condition dim",
            expected: c,
            got: bad.len(),
        });
    }
    let w = spec.horizon * spec.action_dim;
    let mut rngs: Vec<_> = row_seeds.iter().map(|&s| rng_from_seed(s)).collect();
    let mut x: Vec<f64> = Vec::with_capacity(k * w);
    for r in rngs.iter_mut() {
        match cfg.init {
            InitNoise::Gaussian => x.extend(gaussian(r, w)),
            InitNoise::Uniform => {
                let h = math::sqrt(3.0);
                x.extend((0..w).map(|_| r.random_range(-h..h)));
            }
        }
    }
    let cond = Tensor::new(alloc::vec![k, c], conds.concat())?;
    for t in (0..schedule.steps()).rev() {
        let xt = Tensor::new(alloc::vec![k, spec.horizon, spec.action_dim], x)?;
        let eps = model.predict(&xt, &alloc::vec![t; k], &cond)?;
        let mut next = Vec::with_capacity(k * w);
        for (i, r) in rngs.iter_mut().enumerate() {
            let z = if t > 0 { gaussian(r, w) } else { alloc::vec![0.0; w] };
            let span = i * w..(i + 1) * w;
            next.extend(reverse_step(schedule, t, &xt.data()[span.clone()], &eps.data()[span], &z));
        }
        x = next;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sampled action window".into()));
    }
    Ok(x.chunks(w).map(|c| c.iter().map(|v| v.clamp(-1.0, 1.0)).collect()).collect())
}
