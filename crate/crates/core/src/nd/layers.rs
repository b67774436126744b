//! Parameter holders for the standard layers.

use alloc::format;

use rand::Rng;

use super::params::{Bound, ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::math;
use crate::Result;

fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

/// Fully connected layer, `w: [in, out]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut impl Rng) -> Result<Self> {
        let k = 1.0 / math::sqrt(input as f64);
        Ok(Linear {
            w: store.add(&format!("{name}.w"), uniform(&[input, output], k, rng))?,
            b: store.add(&format!("{name}.b"), uniform(&[output], k, rng))?,
        })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, p: &Bound, x: Var) -> Result<Var> {
        tape.linear(x, p.var(self.w), p.var(self.b))
    }
}

/// 1D convolution, `w: [c_out, c_in, kernel]`.
#[derive(Debug, Clone, Copy)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let k = 1.0 / math::sqrt((cin * kernel) as f64);
        Ok(Conv1d {
            w: store.add(&format!("{name}.w"), uniform(&[cout, cin, kernel], k, rng))?,
            b: store.add(&format!("{name}.b"), uniform(&[cout], k, rng))?,
            stride,
            pad,
        })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, p: &Bound, x: Var) -> Result<Var> {
        tape.conv1d(x, p.var(self.w), Some(p.var(self.b)), self.stride, self.pad)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GroupNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub groups: usize,
}

impl GroupNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, groups: usize) -> Result<Self> {
        Ok(GroupNorm {
            gamma: store.add(&format!("{name}.gamma"), Tensor::full(&[channels], 1.0))?,
            beta: store.add(&format!("{name}.beta"), Tensor::zeros(&[channels]))?,
            groups,
        })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, p: &Bound, x: Var) -> Result<Var> {
        tape.group_norm(x, p.var(self.gamma), p.var(self.beta), self.groups)
    }
}
