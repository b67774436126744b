use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

/// Discrete forward-process schedule with `T` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl DiffusionSchedule {
    /// Squared-cosine schedule: `alpha_bar(t) = cos^2(((t / T) + s) / (1 + s) * pi / 2)`
    /// with `s = 0.008`, discretised as `beta_i = 1 - alpha_bar((i+1)/T) / alpha_bar(i/T)`
    /// and capped at 0.999.
    pub fn squared_cosine(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("schedule needs at least one step".into()));
        }
        let f = |t: f64| {
            let c = math::cos((t + 0.008) / 1.008 * math::FRAC_PI_2);
            c * c
        };
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                let (t1, t2) = (i as f64 / steps as f64, (i + 1) as f64 / steps as f64);
                (1.0 - f(t2) / f(t1)).min(0.999)
            })
            .collect();
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        Ok(DiffusionSchedule {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `alpha_bar_{t-1}`, with `alpha_bar_{-1} = 1`.
    pub fn alpha_bar_prev(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Variance of the reverse step at `t` ("fixed small").
    pub fn posterior_variance(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bar_prev(t)) / (1.0 - self.alpha_bars[t]) * self.betas[t]
    }
}

/// `sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise`.
pub fn q_sample(schedule: &DiffusionSchedule, x0: &[f64], t: usize, noise: &[f64]) -> Vec<f64> {
    let ab = schedule.alpha_bars[t];
    let (a, b) = (math::sqrt(ab), math::sqrt(1.0 - ab));
    x0.iter().zip(noise).map(|(x, n)| a * x + b * n).collect()
}
