use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::nd::{Bound, Conv1d, GroupNorm, Linear, ParamStore, Tape, Tensor, Var};
use crate::rng::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserSpec {
    /// Joint count `D`.
    pub action_dim: usize,
    /// Window length, rows.
    pub horizon: usize,
    pub cond_dim: usize,
    /// Channel width per resolution level.
    pub widths: Vec<usize>,
    pub groups: usize,
    pub time_dim: usize,
    pub kernel: usize,
}

impl DenoiserSpec {
    /// Desk-scale network: three levels, window 16 pooled to 8 and 4.
    pub fn desk(action_dim: usize, cond_dim: usize) -> Self {
        DenoiserSpec {
            action_dim,
            horizon: crate::data::HORIZON,
            cond_dim,
            widths: alloc::vec![16, 32, 64],
            groups: 8,
            time_dim: 32,
            kernel: 3,
        }
    }

    /// Diffusion-policy sized network.
    pub fn paper(action_dim: usize, cond_dim: usize) -> Self {
        DenoiserSpec {
            widths: alloc::vec![256, 512, 1024],
            time_dim: 256,
            kernel: 5,
            ..DenoiserSpec::desk(action_dim, cond_dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("denoiser spec: {m}")));
        if self.action_dim == 0 || self.horizon == 0 || self.widths.is_empty() {
            return bad("dimensions must be positive".into());
        }
        let pool = 1usize << (self.widths.len() - 1);
        if !self.horizon.is_multiple_of(pool) {
            return bad(format!("horizon {} not divisible by {pool}", self.horizon));
        }
        if self.groups == 0 || self.widths.iter().any(|&w| w == 0 || w % self.groups != 0) {
            return bad(format!("widths {:?} must be multiples of {} groups", self.widths, self.groups));
        }
        if self.time_dim < 2 || !self.time_dim.is_multiple_of(2) {
            return bad(format!("time embedding dim {} must be even", self.time_dim));
        }
        if self.kernel.is_multiple_of(2) {
            return bad(format!("kernel {} must be odd", self.kernel));
        }
        Ok(())
    }
}

/// Sinusoidal embedding of integer timesteps, `[len(t), dim]` with sines
/// in the first half and cosines in the second.
pub fn timestep_embedding(t: &[usize], dim: usize) -> Tensor {
    let half = dim / 2;
    let scale = if half > 1 { math::ln(10_000.0) / (half - 1) as f64 } else { 0.0 };
    let mut data = Vec::with_capacity(t.len() * dim);
    for &ti in t {
        let freqs = (0..half).map(|i| ti as f64 * math::exp(-scale * i as f64));
        let f: Vec<f64> = freqs.collect();
        data.extend(f.iter().map(|&a| math::sin(a)));
        data.extend(f.iter().map(|&a| math::cos(a)));
    }
    Tensor::new(alloc::vec![t.len(), dim], data).expect("sized above")
}

#[derive(Debug, Clone, Copy)]
struct ConvBlock {
    conv: Conv1d,
    norm: GroupNorm,
}

impl ConvBlock {
    fn new(s: &mut ParamStore, name: &str, cin: usize, cout: usize, spec: &DenoiserSpec, rng: &mut impl Rng) -> Result<Self> {
        Ok(ConvBlock {
            conv: Conv1d::new(s, &format!("{name}.conv"), cin, cout, spec.kernel, 1, spec.kernel / 2, rng)?,
            norm: GroupNorm::new(s, &format!("{name}.norm"), cout, spec.groups)?,
        })
    }

    fn forward(&self, tape: &mut Tape<'_>, p: &Bound, x: Var) -> Result<Var> {
        let h = self.conv.forward(tape, p, x)?;
        let h = self.norm.forward(tape, p, h)?;
        Ok(tape.mish(h))
    }
}

#[derive(Debug, Clone, Copy)]
struct ResBlock {
    first: ConvBlock,
    second: ConvBlock,
    film: Linear,
    residual: Option<Conv1d>,
    out: usize,
}

impl ResBlock {
    fn new(
        s: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        global: usize,
        spec: &DenoiserSpec,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(ResBlock {
            first: ConvBlock::new(s, &format!("{name}.0"), cin, cout, spec, rng)?,
            second: ConvBlock::new(s, &format!("{name}.1"), cout, cout, spec, rng)?,
            film: Linear::new(s, &format!("{name}.film"), global, 2 * cout, rng)?,
            residual: if cin != cout {
                Some(Conv1d::new(s, &format!("{name}.res"), cin, cout, 1, 1, 0, rng)?)
            } else {
                None
            },
            out: cout,
        })
    }

    /// `g` is the activated global condition `[B, G]`.
    fn forward(&self, tape: &mut Tape<'_>, p: &Bound, x: Var, g: Var) -> Result<Var> {
        let h = self.first.forward(tape, p, x)?;
        let film = self.film.forward(tape, p, g)?;
        let scale = tape.slice(film, 0, self.out)?;
        let shift = tape.slice(film, self.out, self.out)?;
        let h = tape.modulate(h, scale, shift)?;
        let h = self.second.forward(tape, p, h)?;
        let r = match &self.residual {
            Some(c) => c.forward(tape, p, x)?,
            None => x,
        };
        tape.add(h, r)
    }
}

#[derive(Debug, Clone)]
struct Level {
    blocks: [ResBlock; 2],
    /// Strided conv (down path) or nearest upsample followed by a conv (up path).
    resample: Option<Conv1d>,
}

/// FiLM-conditioned temporal UNet predicting the noise of an action window.
#[derive(Debug, Clone)]
pub struct Denoiser {
    pub spec: DenoiserSpec,
    pub store: ParamStore,
    time: [Linear; 2],
    down: Vec<Level>,
    mid: [ResBlock; 2],
    up: Vec<Level>,
    head: ConvBlock,
    out: Conv1d,
}

impl Denoiser {
    pub fn new(spec: DenoiserSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let s = &mut ParamStore::new();
        let td = spec.time_dim;
        let time = [
            Linear::new(s, "time.0", td, 4 * td, rng)?,
            Linear::new(s, "time.1", 4 * td, td, rng)?,
        ];
        let global = td + spec.cond_dim;
        let mut dims = alloc::vec![spec.action_dim];
        dims.extend_from_slice(&spec.widths);
        let pairs: Vec<(usize, usize)> = dims.windows(2).map(|w| (w[0], w[1])).collect();
        let n = pairs.len();

        let mut down = Vec::with_capacity(n);
        for (i, &(cin, cout)) in pairs.iter().enumerate() {
            let name = format!("down.{i}");
            down.push(Level {
                blocks: [
                    ResBlock::new(s, &format!("{name}.0"), cin, cout, global, &spec, rng)?,
                    ResBlock::new(s, &format!("{name}.1"), cout, cout, global, &spec, rng)?,
                ],
                resample: if i + 1 < n {
                    Some(Conv1d::new(s, &format!("{name}.down"), cout, cout, 3, 2, 1, rng)?)
                } else {
                    None
                },
            });
        }
        let wid = *spec.widths.last().unwrap();
        let mid = [
            ResBlock::new(s, "mid.0", wid, wid, global, &spec, rng)?,
            ResBlock::new(s, "mid.1", wid, wid, global, &spec, rng)?,
        ];
        let mut up = Vec::with_capacity(n.saturating_sub(1));
        for (i, &(cin, cout)) in pairs[1..].iter().rev().enumerate() {
            let name = format!("up.{i}");
            up.push(Level {
                blocks: [
                    ResBlock::new(s, &format!("{name}.0"), 2 * cout, cin, global, &spec, rng)?,
                    ResBlock::new(s, &format!("{name}.1"), cin, cin, global, &spec, rng)?,
                ],
                resample: Some(Conv1d::new(s, &format!("{name}.up"), cin, cin, 3, 1, 1, rng)?),
            });
        }
        let w0 = spec.widths[0];
        let head = ConvBlock::new(s, "head", w0, w0, &spec, rng)?;
        let out = Conv1d::new(s, "out", w0, spec.action_dim, 1, 1, 0, rng)?;
        Ok(Denoiser {
            spec,
            store: core::mem::take(s),
            time,
            down,
            mid,
            up,
            head,
            out,
        })
    }

    /// Rebuilds a model from named checkpoint tensors.
    pub fn from_named(spec: DenoiserSpec, entries: &[(String, Tensor)]) -> Result<Self> {
        let mut d = Denoiser::new(spec, &mut rng_from_seed(0))?;
        d.store.load_named(entries)?;
        Ok(d)
    }

    /// `x: [B, horizon, D]`, one timestep per row and `cond: [B, C]`; returns
    /// the predicted noise with the shape of `x`.
    pub fn forward_var(&self, tape: &mut Tape<'_>, p: &Bound, x: Var, t: &[usize], cond: Var) -> Result<Var> {
        let spec = &self.spec;
        let xs = tape.value(x).shape().to_vec();
        let cs = tape.value(cond).shape().to_vec();
        let b = xs[0];
        if xs.len() != 3 || xs[1] != spec.horizon || xs[2] != spec.action_dim {
            return Err(Error::shape("denoiser input", &[b, spec.horizon, spec.action_dim], &xs));
        }
        if cs.len() != 2 || cs[1] != spec.cond_dim {
            return Err(Error::ConfigMismatch {
                what: "condition dim",
                expected: spec.cond_dim,
                got: cs.get(1).copied().unwrap_or(0),
            });
        }
        if cs[0] != b || t.len() != b {
            return Err(Error::shape("denoiser batch", &[b, b], &[cs[0], t.len()]));
        }

        let emb = tape.input(timestep_embedding(t, spec.time_dim));
        let e = self.time[0].forward(tape, p, emb)?;
        let e = tape.mish(e);
        let e = self.time[1].forward(tape, p, e)?;
        let g = tape.concat(e, cond)?;
        let g = tape.mish(g);

        let mut h = tape.swap_last2(x)?;
        let mut skips = Vec::with_capacity(self.down.len());
        for level in &self.down {
            h = level.blocks[0].forward(tape, p, h, g)?;
            h = level.blocks[1].forward(tape, p, h, g)?;
            skips.push(h);
            if let Some(c) = &level.resample {
                h = c.forward(tape, p, h)?;
            }
        }
        for block in &self.mid {
            h = block.forward(tape, p, h, g)?;
        }
        for level in &self.up {
            let skip = skips.pop().expect("one skip per level");
            h = tape.concat(h, skip)?;
            h = level.blocks[0].forward(tape, p, h, g)?;
            h = level.blocks[1].forward(tape, p, h, g)?;
            if let Some(c) = &level.resample {
                h = tape.upsample2(h)?;
                h = c.forward(tape, p, h)?;
            }
        }
        h = self.head.forward(tape, p, h)?;
        h = self.out.forward(tape, p, h)?;
        tape.swap_last2(h)
    }

    /// Noise prediction with the EMA weights.
    pub fn predict(&self, x: &Tensor, t: &[usize], cond: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let xv = tape.input_ref(x);
        let cv = tape.input_ref(cond);
        let y = self.forward_var(&mut tape, &p, xv, t, cv)?;
        Ok(tape.value(y).clone())
    }
}
