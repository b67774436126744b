//! One finite-difference case per tape op.

#![allow(dead_code)]

use keyplan_core::nd::{Tape, Tensor, Var};

use super::gradcheck::random;

pub type OpFn = Box<dyn Fn(&mut Tape<'_>, &[Var]) -> Var>;

/// Every differentiable tape op with small random inputs.
pub fn op_cases() -> Vec<(&'static str, OpFn, Vec<Tensor>)> {
    vec![
        (
            "matmul",
            Box::new(|t: &mut Tape<'_>, v: &[Var]| t.matmul(v[0], v[1]).unwrap()),
            vec![random(&[3, 4], 1), random(&[4, 5], 2)],
        ),
        (
            "linear",
            Box::new(|t: &mut Tape<'_>, v: &[Var]| t.linear(v[0], v[1], v[2]).unwrap()),
            vec![random(&[3, 4], 3), random(&[4, 2], 4), random(&[2], 5)],
        ),
        (
            "conv1d same",
            Box::new(|t: &mut Tape<'_>, v: &[Var]| t.conv1d(v[0], v[1], Some(v[2]), 1, 1).unwrap()),
            vec![random(&[2, 3, 7], 6), random(&[4, 3, 3], 7), random(&[4], 8)],
        ),
        (
            "conv1d strided",
            Box::new(|t: &mut Tape<'_>, v: &[Var]| t.conv1d(v[0], v[1], Some(v[2]), 2, 1).unwrap()),
            vec![random(&[2, 2, 8], 9), random(&[3, 2, 3], 10), random(&[3], 11)],
        ),
        (
            "conv1d k5 no bias",
            Box::new(|t: &mut Tape<'_>, v: &[Var]| t.conv1d(v[0], v[1], None, 1, 2).unwrap()),
            vec![random(&[1, 2, 6], 12), random(&[2, 2, 5], 13)],
        ),
        (
            "group_norm",
            Box::new(|t: &mut Tape<'_>, v: &[Var]| t.group_norm(v[0], v[1], v[2], 2).unwrap()),
            vec![random(&[2, 4, 5], 14), random(&[4], 15), random(&[4], 16)],
        ),
        (
            "group_norm rank2",
            Box::new(|t: &mut Tape<'_>, v: &[Var]| t.group_norm(v[0], v[1], v[2], 3).unwrap()),
            vec![random(&[2, 6], 17), random(&[6], 18), random(&[6], 19)],
        ),
        ("mish", Box::new(|t: &mut Tape<'_>, v: &[Var]| t.mish(v[0])), vec![scaled(random(&[13], 20), 4.0)]),
        ("silu", Box::new(|t: &mut Tape<'_>, v: &[Var]| t.silu(v[0])), vec![scaled(random(&[13], 21), 4.0)]),
        (
            "add",
            Box::new(|t: &mut Tape<'_>, v: &[Var]| t.add(v[0], v[1]).unwrap()),
            vec![random(&[2, 3], 22), random(&[2, 3], 23)],
        ),
        (
            "sub",
            Box::new(|t: &mut Tape<'_>, v: &[Var]| t.sub(v[0], v[1]).unwrap()),
            vec![random(&[2, 3], 24), random(&[2, 3], 25)],
        ),
        (
            "mul",
            Box::new(|t: &mut Tape<'_>, v: &[Var]| t.mul(v[0], v[1]).unwrap()),
            vec![random(&[2, 3], 26), random(&[2, 3], 27)],
        ),
        ("scale", Box::new(|t: &mut Tape<'_>, v: &[Var]| t.scale(v[0], -1.7)), vec![random(&[5], 28)]),
        (
            "modulate",
            Box::new(|t: &mut Tape<'_>, v: &[Var]| t.modulate(v[0], v[1], v[2]).unwrap()),
            vec![random(&[2, 3, 4], 29), random(&[2, 3], 30), random(&[2, 3], 31)],
        ),
        (
            "concat",
            Box::new(|t: &mut Tape<'_>, v: &[Var]| t.concat(v[0], v[1]).unwrap()),
            vec![random(&[2, 3, 4], 32), random(&[2, 1, 4], 33)],
        ),
        (
            "slice",
            Box::new(|t: &mut Tape<'_>, v: &[Var]| t.slice(v[0], 1, 2).unwrap()),
            vec![random(&[2, 4, 3], 34)],
        ),
        ("upsample2", Box::new(|t: &mut Tape<'_>, v: &[Var]| t.upsample2(v[0]).unwrap()), vec![random(&[2, 2, 3], 35)]),
        ("swap_last2", Box::new(|t: &mut Tape<'_>, v: &[Var]| t.swap_last2(v[0]).unwrap()), vec![random(&[2, 3, 4], 36)]),
        ("reshape", Box::new(|t: &mut Tape<'_>, v: &[Var]| t.reshape(v[0], &[6, 2]).unwrap()), vec![random(&[3, 4], 37)]),
        (
            "mse",
            Box::new(|t: &mut Tape<'_>, v: &[Var]| t.mse(v[0], v[1]).unwrap()),
            vec![random(&[3, 4], 38), random(&[3, 4], 39)],
        ),
        ("max_axis", Box::new(|t: &mut Tape<'_>, v: &[Var]| t.max_axis(v[0], 2).unwrap()), vec![random(&[2, 3, 9], 40)]),
        ("min_axis", Box::new(|t: &mut Tape<'_>, v: &[Var]| t.min_axis(v[0], 1).unwrap()), vec![random(&[2, 7, 3], 41)]),
        (
            "sq_dist",
            Box::new(|t: &mut Tape<'_>, v: &[Var]| t.sq_dist(v[0], v[1]).unwrap()),
            vec![random(&[2, 4, 3], 42), random(&[2, 5, 3], 43)],
        ),
        ("mean", Box::new(|t: &mut Tape<'_>, v: &[Var]| t.mean(v[0])), vec![random(&[3, 3], 44)]),
        ("sum", Box::new(|t: &mut Tape<'_>, v: &[Var]| t.sum(v[0])), vec![random(&[3, 3], 45)]),
    ]
}

fn scaled(mut t: Tensor, c: f64) -> Tensor {
    t.data_mut().iter_mut().for_each(|v| *v *= c);
    t
}
