//! Central finite-difference gradient oracle.
//!
//! Independent of the tape's backward rules: it only ever evaluates forward
//! passes and differences them.

#![allow(dead_code)]

use keyplan_core::nd::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};

pub const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;

/// Reduces any output to a scalar with a fixed random projection so every
/// output element contributes to the checked gradient.
fn project(tape: &mut Tape<'_>, out: Var, seed: u64) -> Var {
    let shape = tape.value(out).shape().to_vec();
    if tape.value(out).len() == 1 {
        return out;
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let r = Tensor::from_fn(&shape, |_| rng.random_range(-1.0..1.0));
    let r = tape.input(r);
    let prod = tape.mul(out, r).unwrap();
    tape.sum(prod)
}

fn eval(f: &dyn Fn(&mut Tape<'_>, &[Var]) -> Var, inputs: &[Tensor], seed: u64) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars);
    let loss = project(&mut tape, out, seed);
    tape.value(loss).item().unwrap()
}

/// Relative error `|analytic - numeric| / max(|analytic|, |numeric|)` (L2 norms)
/// for each input.
pub fn rel_errors(f: &dyn Fn(&mut Tape<'_>, &[Var]) -> Var, inputs: &[Tensor]) -> Vec<f64> {
    let seed = 0xFD;
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars);
    let loss = project(&mut tape, out, seed);
    let grads = tape.backward(loss).unwrap();
    let mut errs = Vec::new();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads
            .get(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        let mut num = vec![0.0; inputs[k].len()];
        for i in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += H;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= H;
            num[i] = (eval(f, &plus, seed) - eval(f, &minus, seed)) / (2.0 * H);
        }
        let diff: f64 = analytic
            .data()
            .iter()
            .zip(&num)
            .map(|(a, n)| (a - n) * (a - n))
            .sum::<f64>()
            .sqrt();
        let na = analytic.data().iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = num.iter().map(|a| a * a).sum::<f64>().sqrt();
        errs.push(diff / na.max(nn).max(1e-12));
    }
    errs
}

pub fn max_rel_error(f: &dyn Fn(&mut Tape<'_>, &[Var]) -> Var, inputs: &[Tensor]) -> f64 {
    rel_errors(f, inputs).into_iter().fold(0.0, f64::max)
}

pub fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}
