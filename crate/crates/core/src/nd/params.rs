use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::tape::{Grads, Tape, Var};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(usize);

/// Adam with an exponential moving average of the weights.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub ema_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            ema_decay: 0.995,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    m: Vec<f64>,
    v: Vec<f64>,
    ema: Tensor,
}

impl Param {
    pub fn ema(&self) -> &Tensor {
        &self.ema
    }
}

/// Named parameters in insertion order, with Adam moments and an EMA shadow.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: BTreeMap<String, usize>,
    step: u64,
}

/// Tape variables for every parameter of a store, in store order.
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Bound {
    /// Wraps tape variables given in store order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound(vars)
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::InvalidArgument(alloc::format!("duplicate parameter `{name}`")));
        }
        let n = value.len();
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(Param {
            name: name.to_string(),
            ema: value.clone(),
            value,
            m: alloc::vec![0.0; n],
            v: alloc::vec![0.0; n],
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.params[i].value)
    }

    /// Binds every parameter as a borrowed trainable leaf.
    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> Bound {
        Bound(self.params.iter().map(|p| tape.param_ref(&p.value)).collect())
    }

    /// Binds the EMA shadow weights instead of the live ones.
    pub fn bind_ema<'p>(&'p self, tape: &mut Tape<'p>) -> Bound {
        Bound(self.params.iter().map(|p| tape.param_ref(&p.ema)).collect())
    }

    /// Binds the EMA shadow weights as constants, for inference.
    pub fn bind_frozen<'p>(&'p self, tape: &mut Tape<'p>) -> Bound {
        Bound(self.params.iter().map(|p| tape.input_ref(&p.ema)).collect())
    }

    /// Collects gradients in store order; parameters the loss does not touch get zeros.
    pub fn collect_grads(&self, bound: &Bound, grads: &mut Grads) -> Vec<Tensor> {
        self.params
            .iter()
            .zip(&bound.0)
            .map(|(p, v)| grads.take(*v).unwrap_or_else(|| Tensor::zeros(p.value.shape())))
            .collect()
    }

    /// One Adam update followed by an EMA update of the shadow weights.
    pub fn adam_step(&mut self, grads: &[Tensor], cfg: &AdamConfig) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::shape("adam_step", &[self.params.len()], &[grads.len()]));
        }
        for (p, g) in self.params.iter().zip(grads) {
            if p.value.shape() != g.shape() {
                return Err(Error::shape("adam_step", p.value.shape(), g.shape()));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(alloc::format!("gradient of `{}`", p.name)));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - crate::math::powi(cfg.beta1, t);
        let bc2 = 1.0 - crate::math::powi(cfg.beta2, t);
        for (p, g) in self.params.iter_mut().zip(grads) {
            let vals = p.value.data_mut();
            for (i, gi) in g.data().iter().enumerate() {
                p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * gi;
                p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * gi * gi;
                let mhat = p.m[i] / bc1;
                let vhat = p.v[i] / bc2;
                vals[i] -= cfg.lr * mhat / (crate::math::sqrt(vhat) + cfg.eps);
            }
            for (e, v) in p.ema.data_mut().iter_mut().zip(p.value.data()) {
                *e = cfg.ema_decay * *e + (1.0 - cfg.ema_decay) * v;
            }
        }
        Ok(())
    }

    /// A fresh store whose values are this store's EMA weights.
    pub fn ema_snapshot(&self) -> ParamStore {
        let mut out = ParamStore::new();
        for p in &self.params {
            out.add(&p.name, p.ema.clone()).expect("names unique");
        }
        out
    }

    /// `(name, value)` pairs in store order.
    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|p| (p.name.as_str(), &p.value))
    }

    /// Overwrites values (and EMA shadows) from named tensors; every parameter
    /// must be present with a matching shape.
    pub fn load_named(&mut self, entries: &[(String, Tensor)]) -> Result<()> {
        let map: BTreeMap<&str, &Tensor> = entries.iter().map(|(n, t)| (n.as_str(), t)).collect();
        for p in &self.params {
            let t = map.get(p.name.as_str()).ok_or_else(|| Error::MissingParam(p.name.clone()))?;
            if t.shape() != p.value.shape() {
                return Err(Error::shape("load_named", p.value.shape(), t.shape()));
            }
        }
        for p in &mut self.params {
            let t = map[p.name.as_str()];
            p.value = t.clone();
            p.ema = t.clone();
        }
        Ok(())
    }
}
