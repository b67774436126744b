//! PointNet-style point-cloud autoencoder trained on Chamfer distance.
//!
//! Clouds are expected in the normalized `[-1, 1]^d` frame (see
//! [`crate::scene::PointCloud::normalized`]); reconstructions come back in
//! the same frame.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nd::{AdamConfig, Bound, Conv1d, Linear, ParamStore, Tape, Tensor, Var};
use crate::rng::rng_from_seed;
use crate::scene::PointCloud;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    /// Workspace dimension of the points.
    pub dim: usize,
    /// Per-point feature widths; the last is the embedding size.
    pub encoder_widths: [usize; 3],
    pub decoder_hidden: Vec<usize>,
    pub points_out: usize,
}

impl AutoencoderSpec {
    pub fn desk() -> Self {
        AutoencoderSpec {
            dim: 2,
            encoder_widths: [32, 64, 64],
            decoder_hidden: alloc::vec![128, 256],
            points_out: 256,
        }
    }

    pub fn paper() -> Self {
        AutoencoderSpec {
            dim: 3,
            encoder_widths: [64, 128, 256],
            decoder_hidden: alloc::vec![256, 512],
            points_out: 1024,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.encoder_widths[2]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.points_out == 0 || self.encoder_widths.contains(&0) || self.decoder_hidden.contains(&0) {
            return Err(Error::InvalidArgument("autoencoder widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Autoencoder {
    pub spec: AutoencoderSpec,
    pub store: ParamStore,
    encoder: [Conv1d; 3],
    decoder: Vec<Linear>,
}

/// Points of equally sized clouds as `[batch, d, p]` (channels first).
fn channels_first(clouds: &[&PointCloud]) -> Result<Tensor> {
    let (d, p) = (clouds[0].dim, clouds[0].len());
    if clouds.iter().any(|c| c.dim != d || c.len() != p) {
        return Err(Error::InvalidArgument("clouds in a batch must share size and dimension".into()));
    }
    let mut data = Vec::with_capacity(clouds.len() * d * p);
    for c in clouds {
        for k in 0..d {
            data.extend(c.iter().map(|pt| pt[k]));
        }
    }
    Tensor::new(alloc::vec![clouds.len(), d, p], data)
}

fn points_last(clouds: &[&PointCloud]) -> Result<Tensor> {
    let (d, p) = (clouds[0].dim, clouds[0].len());
    let data = clouds.iter().flat_map(|c| c.points.iter().copied()).collect();
    Tensor::new(alloc::vec![clouds.len(), p, d], data)
}

impl Autoencoder {
    pub fn new(spec: AutoencoderSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let mut store = ParamStore::new();
        let w = spec.encoder_widths;
        let encoder = [
            Conv1d::new(&mut store, "enc.0", spec.dim, w[0], 1, 1, 0, rng)?,
            Conv1d::new(&mut store, "enc.1", w[0], w[1], 1, 1, 0, rng)?,
            Conv1d::new(&mut store, "enc.2", w[1], w[2], 1, 1, 0, rng)?,
        ];
        let mut decoder = Vec::new();
        let mut prev = w[2];
        for (i, &h) in spec.decoder_hidden.iter().enumerate() {
            decoder.push(Linear::new(&mut store, &format!("dec.{i}"), prev, h, rng)?);
            prev = h;
        }
        let last = spec.decoder_hidden.len();
        decoder.push(Linear::new(&mut store, &format!("dec.{last}"), prev, spec.points_out * spec.dim, rng)?);
        Ok(Autoencoder {
            spec,
            store,
            encoder,
            decoder,
        })
    }

    /// Rebuilds a model from named checkpoint tensors.
    pub fn from_named(spec: AutoencoderSpec, entries: &[(alloc::string::String, Tensor)]) -> Result<Self> {
        let mut ae = Autoencoder::new(spec, &mut rng_from_seed(0))?;
        ae.store.load_named(entries)?;
        Ok(ae)
    }

    /// `x: [batch, d, p]` to embeddings `[batch, E]`.
    pub fn encode_var(&self, tape: &mut Tape<'_>, p: &Bound, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, conv) in self.encoder.iter().enumerate() {
            h = conv.forward(tape, p, h)?;
            if i < 2 {
                h = tape.silu(h);
            }
        }
        tape.max_axis(h, 2)
    }

    /// Embeddings `[batch, E]` to points `[batch, points_out, d]`.
    pub fn decode_var(&self, tape: &mut Tape<'_>, p: &Bound, z: Var) -> Result<Var> {
        let mut h = z;
        let n = self.decoder.len();
        for (i, lin) in self.decoder.iter().enumerate() {
            h = lin.forward(tape, p, h)?;
            if i + 1 < n {
                h = tape.silu(h);
            }
        }
        let batch = tape.value(h).shape()[0];
        tape.reshape(h, &[batch, self.spec.points_out, self.spec.dim])
    }

    /// Mean Chamfer loss of reconstructing `clouds`.
    pub fn loss_var(&self, tape: &mut Tape<'_>, p: &Bound, clouds: &[&PointCloud]) -> Result<Var> {
        let x = tape.input(channels_first(clouds)?);
        let target = tape.input(points_last(clouds)?);
        let z = self.encode_var(tape, p, x)?;
        let y = self.decode_var(tape, p, z)?;
        chamfer_var(tape, y, target)
    }

    /// Embeddings of normalized clouds, using the EMA weights.
    pub fn encode_many(&self, clouds: &[&PointCloud]) -> Result<Vec<Vec<f64>>> {
        if clouds.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let x = tape.input(channels_first(clouds)?);
        let z = self.encode_var(&mut tape, &p, x)?;
        Ok(tape.value(z).data().chunks(self.spec.embedding_dim()).map(|c| c.to_vec()).collect())
    }

    pub fn encode(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        if cloud.is_empty() {
            return Err(Error::InvalidArgument("cannot encode an empty cloud".into()));
        }
        Ok(self.encode_many(&[cloud])?.remove(0))
    }

    pub fn reconstruct(&self, cloud: &PointCloud) -> Result<PointCloud> {
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let x = tape.input(channels_first(&[cloud])?);
        let z = self.encode_var(&mut tape, &p, x)?;
        let y = self.decode_var(&mut tape, &p, z)?;
        Ok(PointCloud {
            dim: self.spec.dim,
            points: tape.value(y).data().to_vec(),
        })
    }
}

/// Chamfer distance between point batches `a: [b, p, d]` and `c: [b, q, d]`,
/// averaged over the batch.
pub fn chamfer_var(tape: &mut Tape<'_>, a: Var, c: Var) -> Result<Var> {
    let d = tape.sq_dist(a, c)?;
    let to_c = tape.min_axis(d, 2)?;
    let to_a = tape.min_axis(d, 1)?;
    let m1 = tape.mean(to_c);
    let m2 = tape.mean(to_a);
    tape.add(m1, m2)
}

/// Mean squared nearest distance from `a` to `b` plus from `b` to `a`.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() || a.dim != b.dim {
        return Err(Error::InvalidArgument("chamfer needs non-empty clouds of equal dimension".into()));
    }
    let one_way = |x: &PointCloud, y: &PointCloud| {
        x.iter()
            .map(|p| {
                y.iter()
                    .map(|q| p.iter().zip(q).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / x.len() as f64
    };
    Ok(one_way(a, b) + one_way(b, a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeTrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        AeTrainConfig {
            epochs: 50,
            batch: 16,
            adam: AdamConfig {
                lr: 1e-3,
                ..AdamConfig::default()
            },
            seed: 0,
        }
    }
}

/// Trains on normalized clouds; calls `on_epoch(epoch, mean_loss)` and
/// returns the per-epoch mean losses.
pub fn train_autoencoder(
    ae: &mut Autoencoder,
    clouds: &[PointCloud],
    cfg: &AeTrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if clouds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut order: Vec<usize> = (0..clouds.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<&PointCloud> = chunk.iter().map(|&i| &clouds[i]).collect();
            let (loss, grads) = {
                let mut tape = Tape::new();
                let p = ae.store.bind(&mut tape);
                let l = ae.loss_var(&mut tape, &p, &batch)?;
                let loss = tape.value(l).item()?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("autoencoder loss at epoch {epoch}")));
                }
                let mut g = tape.backward(l)?;
                (loss, ae.store.collect_grads(&p, &mut g))
            };
            ae.store.adam_step(&grads, &cfg.adam)?;
            total += loss * chunk.len() as f64;
        }
        let mean = total / clouds.len() as f64;
        history.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(history)
}
