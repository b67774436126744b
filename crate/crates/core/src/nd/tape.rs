use alloc::vec;
use alloc::vec::Vec;

use super::gemm::{gemm, Layout};
use super::tensor::Tensor;
use crate::math;
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Value<'p> {
    Owned(Tensor),
    Borrowed(&'p Tensor),
}

impl Value<'_> {
    fn get(&self) -> &Tensor {
        match self {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Conv1d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        cols: Vec<f64>,
    },
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Mish(Var),
    Silu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Modulate {
        x: Var,
        scale: Var,
        shift: Var,
    },
    Concat(Var, Var),
    Slice {
        x: Var,
        start: usize,
    },
    Upsample2(Var),
    SwapLast2(Var),
    Reshape(Var),
    Mse(Var, Var),
    Extremum {
        x: Var,
        axis: usize,
        arg: Vec<usize>,
    },
    SqDist(Var, Var),
    Mean(Var),
    Sum(Var),
}

struct Node<'p> {
    value: Value<'p>,
    op: Op,
    requires_grad: bool,
}

/// Recording of one forward pass.
///
/// Leaves may borrow tensors (parameters) for the lifetime `'p`, so binding a
/// parameter set costs nothing.
#[derive(Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

/// Gradients of one backward pass, indexed by [`Var`].
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

/// Splits a shape around `axis` into (outer, extent, inner).
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        None => *slot = Some(g),
    }
}

#[inline]
fn mish_parts(x: f64) -> (f64, f64) {
    // tanh(softplus(x)) = n / (n + 2) with n = e^x (e^x + 2)
    if x > 20.0 {
        return (x, 1.0);
    }
    let e = math::exp(x);
    let n = e * (e + 2.0);
    let t = n / (n + 2.0);
    let sig = e / (1.0 + e);
    (x * t, t + x * (1.0 - t * t) * sig)
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.nodes[v.0].value.get()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant input; no gradient is propagated into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Trainable leaf owning its value.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Trainable leaf borrowing its value.
    pub fn param_ref(&mut self, t: &'p Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Borrowed(t),
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf borrowing its value.
    pub fn input_ref(&mut self, t: &'p Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Borrowed(t),
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            self.value(a).data(),
            Layout::row_major(m, k),
            self.value(b).data(),
            Layout::row_major(k, n),
            0.0,
            &mut out,
            Layout::row_major(m, n),
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// Adds `b: [n]` to every row of `x: [.., n]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (sx, sb) = (self.value(x).shape(), self.value(b).shape());
        let n = *sx.last().unwrap();
        if sb.len() != 1 || sb[0] != n {
            return Err(Error::shape("add_bias", sx, sb));
        }
        let mut out = self.value(x).clone();
        let bias = self.value(b).data();
        for row in out.data_mut().chunks_mut(n) {
            for (o, bb) in row.iter_mut().zip(bias) {
                *o += bb;
            }
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(out, Op::AddBias(x, b), rg))
    }

    /// `x @ w + b` for `x: [batch, in]`, `w: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    /// 1D convolution. `x: [batch, c_in, len]`, `w: [c_out, c_in, k]`, `b: [c_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sw) = (self.value(x).shape().to_vec(), self.value(w).shape().to_vec());
        if sx.len() != 3 || sw.len() != 3 || sx[1] != sw[1] || stride == 0 || sx[2] + 2 * pad < sw[2] {
            return Err(Error::shape("conv1d", &sx, &sw));
        }
        if let Some(b) = b {
            let sb = self.value(b).shape();
            if sb.len() != 1 || sb[0] != sw[0] {
                return Err(Error::shape("conv1d bias", &sw, sb));
            }
        }
        let (batch, cin, len) = (sx[0], sx[1], sx[2]);
        let (cout, k) = (sw[0], sw[2]);
        let lout = (len + 2 * pad - k) / stride + 1;
        let ncol = batch * lout;
        let xd = self.value(x).data();
        let mut cols = Vec::with_capacity(cin * k * ncol);
        for ci in 0..cin {
            for kk in 0..k {
                // output positions whose tap `kk` lands inside the input
                let first = pad.saturating_sub(kk).div_ceil(stride).min(lout);
                let last = if len + pad > kk { ((len + pad - kk - 1) / stride + 1).min(lout) } else { 0 }.max(first);
                for bi in 0..batch {
                    let xrow = &xd[(bi * cin + ci) * len..(bi * cin + ci + 1) * len];
                    cols.resize(cols.len() + first, 0.0);
                    if last > first {
                        let s0 = first * stride + kk - pad;
                        if stride == 1 {
                            cols.extend_from_slice(&xrow[s0..s0 + (last - first)]);
                        } else {
                            cols.extend(xrow[s0..].iter().step_by(stride).take(last - first));
                        }
                    }
                    cols.resize(cols.len() + lout - last, 0.0);
                }
            }
        }
        let mut tmp = vec![0.0; cout * ncol];
        gemm(
            self.value(w).data(),
            Layout::row_major(cout, cin * k),
            &cols,
            Layout::row_major(cin * k, ncol),
            0.0,
            &mut tmp,
            Layout::row_major(cout, ncol),
        );
        let mut out = Vec::with_capacity(batch * cout * lout);
        let bias = b.map(|b| self.value(b).data());
        for bi in 0..batch {
            for co in 0..cout {
                let bv = bias.map_or(0.0, |bb| bb[co]);
                let src = &tmp[co * ncol + bi * lout..co * ncol + (bi + 1) * lout];
                out.extend(src.iter().map(|s| s + bv));
            }
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        let cols = if rg { cols } else { Vec::new() };
        Ok(self.push(
            Tensor::new(vec![batch, cout, lout], out)?,
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                pad,
                cols,
            },
            rg,
        ))
    }

    /// Group normalization over `[batch, channels, len]` (or `[batch, channels]`).
    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Result<Var> {
        const EPS: f64 = 1e-5;
        let sx = self.value(x).shape().to_vec();
        if sx.len() < 2 || sx.len() > 3 || groups == 0 || !sx[1].is_multiple_of(groups) {
            return Err(Error::shape("group_norm", &sx, &[groups]));
        }
        let (batch, ch) = (sx[0], sx[1]);
        let len = if sx.len() == 3 { sx[2] } else { 1 };
        for p in [gamma, beta] {
            let sp = self.value(p).shape();
            if sp.len() != 1 || sp[0] != ch {
                return Err(Error::shape("group_norm affine", &sx, sp));
            }
        }
        let per = ch / groups;
        let n = (per * len) as f64;
        let xd = self.value(x).data();
        let (gd, bd) = (self.value(gamma).data(), self.value(beta).data());
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let mut xhat = if rg { vec![0.0; xd.len()] } else { Vec::new() };
        let mut rstd = vec![0.0; batch * groups];
        let mut out = vec![0.0; xd.len()];
        for bi in 0..batch {
            for g in 0..groups {
                let lo = (bi * ch + g * per) * len;
                let hi = lo + per * len;
                let seg = &xd[lo..hi];
                let mean = seg.iter().sum::<f64>() / n;
                let var = seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let r = 1.0 / math::sqrt(var + EPS);
                rstd[bi * groups + g] = r;
                for (i, v) in seg.iter().enumerate() {
                    let c = g * per + i / len;
                    let xh = (v - mean) * r;
                    if rg {
                        xhat[lo + i] = xh;
                    }
                    out[lo + i] = xh * gd[c] + bd[c];
                }
            }
        }
        Ok(self.push(
            Tensor::new(sx, out)?,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    pub fn mish(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = mish_parts(*v).0;
        }
        let rg = self.rg(x);
        self.push(out, Op::Mish(x), rg)
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v *= math::sigmoid(*v);
        }
        let rg = self.rg(x);
        self.push(out, Op::Silu(x), rg)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, sa, sb));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data).expect("same shape");
        let rg = self.rg(a) || self.rg(b);
        self.push(out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v *= c;
        }
        let rg = self.rg(x);
        self.push(out, Op::Scale(x, c), rg)
    }

    /// FiLM: `x * scale + shift` with `x: [batch, ch, len]`, `scale, shift: [batch, ch]`.
    pub fn modulate(&mut self, x: Var, scale: Var, shift: Var) -> Result<Var> {
        let sx = self.value(x).shape().to_vec();
        for p in [scale, shift] {
            let sp = self.value(p).shape();
            if sx.len() != 3 || sp.len() != 2 || sp[0] != sx[0] || sp[1] != sx[1] {
                return Err(Error::shape("modulate", &sx, sp));
            }
        }
        let len = sx[2];
        let mut out = self.value(x).clone();
        let (s, h) = (self.value(scale).data(), self.value(shift).data());
        for (row, (sv, hv)) in out.data_mut().chunks_mut(len).zip(s.iter().zip(h)) {
            for v in row {
                *v = *v * sv + hv;
            }
        }
        let rg = self.rg(x) || self.rg(scale) || self.rg(shift);
        Ok(self.push(out, Op::Modulate { x, scale, shift }, rg))
    }

    /// Concatenates along axis 1.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        if sa.len() < 2 || sa.len() != sb.len() || sa[0] != sb[0] || sa[2..] != sb[2..] {
            return Err(Error::shape("concat", &sa, &sb));
        }
        let inner: usize = sa[2..].iter().product();
        let (na, nb) = (sa[1] * inner, sb[1] * inner);
        let mut data = Vec::with_capacity(sa[0] * (na + nb));
        let (da, db) = (self.value(a).data(), self.value(b).data());
        for i in 0..sa[0] {
            data.extend_from_slice(&da[i * na..(i + 1) * na]);
            data.extend_from_slice(&db[i * nb..(i + 1) * nb]);
        }
        let mut shape = sa.clone();
        shape[1] += sb[1];
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, data)?, Op::Concat(a, b), rg))
    }

    /// Takes `len` entries starting at `start` along axis 1.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let sx = self.value(x).shape().to_vec();
        if sx.len() < 2 || len == 0 || start + len > sx[1] {
            return Err(Error::shape("slice", &sx, &[start, len]));
        }
        let inner: usize = sx[2..].iter().product();
        let xd = self.value(x).data();
        let mut data = Vec::with_capacity(sx[0] * len * inner);
        for i in 0..sx[0] {
            let base = i * sx[1] * inner;
            data.extend_from_slice(&xd[base + start * inner..base + (start + len) * inner]);
        }
        let mut shape = sx.clone();
        shape[1] = len;
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(shape, data)?, Op::Slice { x, start }, rg))
    }

    /// Nearest-neighbor upsampling by 2 along the last axis of `[batch, ch, len]`.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let sx = self.value(x).shape().to_vec();
        if sx.len() != 3 {
            return Err(Error::shape("upsample2", &sx, &[]));
        }
        let data = self.value(x).data().iter().flat_map(|&v| [v, v]).collect();
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(vec![sx[0], sx[1], sx[2] * 2], data)?,
            Op::Upsample2(x),
            rg,
        ))
    }

    /// Swaps the two trailing axes.
    pub fn swap_last2(&mut self, x: Var) -> Result<Var> {
        let sx = self.value(x).shape().to_vec();
        if sx.len() < 2 {
            return Err(Error::shape("swap_last2", &sx, &[]));
        }
        let r = sx.len();
        let (m, n) = (sx[r - 2], sx[r - 1]);
        let out = swap_last2_data(self.value(x).data(), m, n);
        let mut shape = sx.clone();
        shape.swap(r - 2, r - 1);
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(shape, out)?, Op::SwapLast2(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    /// Mean squared error between equally shaped tensors.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let n = self.value(a).len() as f64;
        let s: f64 = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(s / n), Op::Mse(a, b), rg))
    }

    fn extremum(&mut self, x: Var, axis: usize, take_max: bool) -> Result<Var> {
        let sx = self.value(x).shape().to_vec();
        if axis >= sx.len() {
            return Err(Error::shape(if take_max { "max_axis" } else { "min_axis" }, &sx, &[axis]));
        }
        let (outer, n, inner) = split_axis(&sx, axis);
        let xd = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        let mut arg = vec![0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut best = xd[o * n * inner + i];
                let mut bi = 0;
                for j in 1..n {
                    let v = xd[(o * n + j) * inner + i];
                    if (take_max && v > best) || (!take_max && v < best) {
                        best = v;
                        bi = j;
                    }
                }
                out[o * inner + i] = best;
                arg[o * inner + i] = bi;
            }
        }
        let mut shape: Vec<usize> = sx.clone();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(shape, out)?, Op::Extremum { x, axis, arg }, rg))
    }

    /// Maximum over `axis`; the axis is removed from the shape.
    pub fn max_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.extremum(x, axis, true)
    }

    /// Minimum over `axis`; the axis is removed from the shape.
    pub fn min_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.extremum(x, axis, false)
    }

    /// Pairwise squared distances `[batch, p, q]` between `a: [batch, p, d]` and `b: [batch, q, d]`.
    pub fn sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[2] {
            return Err(Error::shape("sq_dist", &sa, &sb));
        }
        let (batch, p, q, d) = (sa[0], sa[1], sb[1], sa[2]);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; batch * p * q];
        for bi in 0..batch {
            for i in 0..p {
                let pa = &da[(bi * p + i) * d..(bi * p + i + 1) * d];
                for j in 0..q {
                    let pb = &db[(bi * q + j) * d..(bi * q + j + 1) * d];
                    out[(bi * p + i) * q + j] = pa.iter().zip(pb).map(|(u, v)| (u - v) * (u - v)).sum();
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![batch, p, q], out)?, Op::SqDist(a, b), rg))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(m), Op::Mean(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum::<f64>();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Gradients of the scalar `loss` with respect to every node that requires them.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Grads { grads });
        }
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
        }
        Ok(Grads { grads })
    }

    fn send(&self, grads: &mut [Option<Tensor>], v: Var, g: impl FnOnce() -> Tensor) {
        if self.rg(v) {
            accumulate(&mut grads[v.0], g());
        }
    }

    fn backprop_node(&self, node: &Node<'p>, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                self.send(grads, *a, || {
                    let mut out = vec![0.0; m * k];
                    gemm(gd, Layout::row_major(m, n), bv.data(), Layout::transposed(k, n), 0.0, &mut out, Layout::row_major(m, k));
                    Tensor::new(vec![m, k], out).unwrap()
                });
                self.send(grads, *b, || {
                    let mut out = vec![0.0; k * n];
                    gemm(av.data(), Layout::transposed(m, k), gd, Layout::row_major(m, n), 0.0, &mut out, Layout::row_major(k, n));
                    Tensor::new(vec![k, n], out).unwrap()
                });
            }
            Op::AddBias(x, b) => {
                self.send(grads, *x, || g.clone());
                self.send(grads, *b, || {
                    let n = self.value(*b).len();
                    let mut out = vec![0.0; n];
                    for row in gd.chunks(n) {
                        for (o, v) in out.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    Tensor::new(vec![n], out).unwrap()
                });
            }
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                pad,
                cols,
            } => {
                let (sx, sw) = (self.value(*x).shape(), self.value(*w).shape());
                let (batch, cin, len) = (sx[0], sx[1], sx[2]);
                let (cout, k) = (sw[0], sw[2]);
                let lout = g.shape()[2];
                let ncol = batch * lout;
                let mut gperm = vec![0.0; cout * ncol];
                for bi in 0..batch {
                    for co in 0..cout {
                        let src = &gd[(bi * cout + co) * lout..(bi * cout + co + 1) * lout];
                        gperm[co * ncol + bi * lout..co * ncol + (bi + 1) * lout].copy_from_slice(src);
                    }
                }
                if let Some(b) = b {
                    self.send(grads, *b, || {
                        let data = gperm.chunks(ncol).map(|r| r.iter().sum()).collect();
                        Tensor::new(vec![cout], data).unwrap()
                    });
                }
                self.send(grads, *w, || {
                    let mut out = vec![0.0; cout * cin * k];
                    gemm(
                        &gperm,
                        Layout::row_major(cout, ncol),
                        cols,
                        Layout::transposed(cin * k, ncol),
                        0.0,
                        &mut out,
                        Layout::row_major(cout, cin * k),
                    );
                    Tensor::new(sw.to_vec(), out).unwrap()
                });
                self.send(grads, *x, || {
                    let mut gcols = vec![0.0; cin * k * ncol];
                    gemm(
                        self.value(*w).data(),
                        Layout::transposed(cout, cin * k),
                        &gperm,
                        Layout::row_major(cout, ncol),
                        0.0,
                        &mut gcols,
                        Layout::row_major(cin * k, ncol),
                    );
                    let mut gx = vec![0.0; batch * cin * len];
                    for ci in 0..cin {
                        for kk in 0..k {
                            let row = &gcols[(ci * k + kk) * ncol..(ci * k + kk + 1) * ncol];
                            for bi in 0..batch {
                                let xrow = &mut gx[(bi * cin + ci) * len..(bi * cin + ci + 1) * len];
                                for lo in 0..lout {
                                    let pos = (lo * stride + kk) as isize - *pad as isize;
                                    if pos >= 0 && (pos as usize) < len {
                                        xrow[pos as usize] += row[bi * lout + lo];
                                    }
                                }
                            }
                        }
                    }
                    Tensor::new(sx.to_vec(), gx).unwrap()
                });
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                xhat,
                rstd,
            } => {
                let sx = self.value(*x).shape();
                let (batch, ch) = (sx[0], sx[1]);
                let len = if sx.len() == 3 { sx[2] } else { 1 };
                let per = ch / groups;
                self.send(grads, *gamma, || {
                    let mut out = vec![0.0; ch];
                    for (i, (gv, xh)) in gd.iter().zip(xhat).enumerate() {
                        out[(i / len) % ch] += gv * xh;
                    }
                    Tensor::new(vec![ch], out).unwrap()
                });
                self.send(grads, *beta, || {
                    let mut out = vec![0.0; ch];
                    for (i, gv) in gd.iter().enumerate() {
                        out[(i / len) % ch] += gv;
                    }
                    Tensor::new(vec![ch], out).unwrap()
                });
                self.send(grads, *x, || {
                    let gam = self.value(*gamma).data();
                    let n = (per * len) as f64;
                    let mut gx = vec![0.0; gd.len()];
                    for bi in 0..batch {
                        for gr in 0..*groups {
                            let lo = (bi * ch + gr * per) * len;
                            let hi = lo + per * len;
                            let (mut m1, mut m2) = (0.0, 0.0);
                            for i in lo..hi {
                                let c = (i / len) % ch;
                                let dxh = gd[i] * gam[c];
                                m1 += dxh;
                                m2 += dxh * xhat[i];
                            }
                            m1 /= n;
                            m2 /= n;
                            let r = rstd[bi * groups + gr];
                            for i in lo..hi {
                                let c = (i / len) % ch;
                                gx[i] = r * (gd[i] * gam[c] - m1 - xhat[i] * m2);
                            }
                        }
                    }
                    Tensor::new(sx.to_vec(), gx).unwrap()
                });
            }
            Op::Mish(x) => self.send(grads, *x, || {
                let xv = self.value(*x);
                let data = xv.data().iter().zip(gd).map(|(v, gv)| gv * mish_parts(*v).1).collect();
                Tensor::new(xv.shape().to_vec(), data).unwrap()
            }),
            Op::Silu(x) => self.send(grads, *x, || {
                let xv = self.value(*x);
                let data = xv
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(v, gv)| {
                        let s = math::sigmoid(*v);
                        gv * s * (1.0 + v * (1.0 - s))
                    })
                    .collect();
                Tensor::new(xv.shape().to_vec(), data).unwrap()
            }),
            Op::Add(a, b) => {
                self.send(grads, *a, || g.clone());
                self.send(grads, *b, || g.clone());
            }
            Op::Sub(a, b) => {
                self.send(grads, *a, || g.clone());
                self.send(grads, *b, || map(g, |v| -v));
            }
            Op::Mul(a, b) => {
                self.send(grads, *a, || zip(g, self.value(*b), |u, v| u * v));
                self.send(grads, *b, || zip(g, self.value(*a), |u, v| u * v));
            }
            Op::Scale(x, c) => self.send(grads, *x, || map(g, |v| v * c)),
            Op::Modulate { x, scale, shift } => {
                let xv = self.value(*x);
                let len = xv.shape()[2];
                self.send(grads, *x, || {
                    let s = self.value(*scale).data();
                    let mut out = g.clone();
                    for (row, sv) in out.data_mut().chunks_mut(len).zip(s) {
                        for v in row {
                            *v *= sv;
                        }
                    }
                    out
                });
                self.send(grads, *scale, || {
                    let data = gd
                        .chunks(len)
                        .zip(xv.data().chunks(len))
                        .map(|(gr, xr)| gr.iter().zip(xr).map(|(u, v)| u * v).sum())
                        .collect();
                    Tensor::new(self.value(*scale).shape().to_vec(), data).unwrap()
                });
                self.send(grads, *shift, || {
                    let data = gd.chunks(len).map(|r| r.iter().sum()).collect();
                    Tensor::new(self.value(*shift).shape().to_vec(), data).unwrap()
                });
            }
            Op::Concat(a, b) => {
                let (sa, sb) = (self.value(*a).shape(), self.value(*b).shape());
                let inner: usize = sa[2..].iter().product();
                let (na, nb) = (sa[1] * inner, sb[1] * inner);
                self.send(grads, *a, || {
                    let data = (0..sa[0]).flat_map(|i| gd[i * (na + nb)..i * (na + nb) + na].iter().copied()).collect();
                    Tensor::new(sa.to_vec(), data).unwrap()
                });
                self.send(grads, *b, || {
                    let data = (0..sb[0]).flat_map(|i| gd[i * (na + nb) + na..(i + 1) * (na + nb)].iter().copied()).collect();
                    Tensor::new(sb.to_vec(), data).unwrap()
                });
            }
            Op::Slice { x, start } => self.send(grads, *x, || {
                let sx = self.value(*x).shape();
                let inner: usize = sx[2..].iter().product();
                let len = g.shape()[1];
                let mut out = vec![0.0; self.value(*x).len()];
                for i in 0..sx[0] {
                    let base = i * sx[1] * inner + start * inner;
                    out[base..base + len * inner].copy_from_slice(&gd[i * len * inner..(i + 1) * len * inner]);
                }
                Tensor::new(sx.to_vec(), out).unwrap()
            }),
            Op::Upsample2(x) => self.send(grads, *x, || {
                let data = gd.chunks(2).map(|p| p[0] + p[1]).collect();
                Tensor::new(self.value(*x).shape().to_vec(), data).unwrap()
            }),
            Op::SwapLast2(x) => self.send(grads, *x, || {
                let s = g.shape();
                let r = s.len();
                let data = swap_last2_data(gd, s[r - 2], s[r - 1]);
                Tensor::new(self.value(*x).shape().to_vec(), data).unwrap()
            }),
            Op::Reshape(x) => self.send(grads, *x, || g.clone().reshape(self.value(*x).shape()).unwrap()),
            Op::Mse(a, b) => {
                let n = self.value(*a).len() as f64;
                let c = 2.0 * gd[0] / n;
                let diff = || zip(self.value(*a), self.value(*b), |u, v| c * (u - v));
                if self.rg(*a) && self.rg(*b) {
                    let d = diff();
                    let neg = map(&d, |v| -v);
                    accumulate(&mut grads[a.0], d);
                    accumulate(&mut grads[b.0], neg);
                } else {
                    self.send(grads, *a, diff);
                    self.send(grads, *b, || map(&diff(), |v| -v));
                }
            }
            Op::Extremum { x, axis, arg } => self.send(grads, *x, || {
                let sx = self.value(*x).shape();
                let (outer, n, inner) = split_axis(sx, *axis);
                let mut out = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let j = arg[o * inner + i];
                        out[(o * n + j) * inner + i] += gd[o * inner + i];
                    }
                }
                Tensor::new(sx.to_vec(), out).unwrap()
            }),
            Op::SqDist(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (batch, p, d) = (av.shape()[0], av.shape()[1], av.shape()[2]);
                let q = bv.shape()[1];
                let (da, db) = (av.data(), bv.data());
                self.send(grads, *a, || {
                    let mut out = vec![0.0; da.len()];
                    for bi in 0..batch {
                        for i in 0..p {
                            let ia = (bi * p + i) * d;
                            for j in 0..q {
                                let gv = 2.0 * gd[(bi * p + i) * q + j];
                                let jb = (bi * q + j) * d;
                                for c in 0..d {
                                    out[ia + c] += gv * (da[ia + c] - db[jb + c]);
                                }
                            }
                        }
                    }
                    Tensor::new(av.shape().to_vec(), out).unwrap()
                });
                self.send(grads, *b, || {
                    let mut out = vec![0.0; db.len()];
                    for bi in 0..batch {
                        for i in 0..p {
                            let ia = (bi * p + i) * d;
                            for j in 0..q {
                                let gv = 2.0 * gd[(bi * p + i) * q + j];
                                let jb = (bi * q + j) * d;
                                for c in 0..d {
                                    out[jb + c] -= gv * (da[ia + c] - db[jb + c]);
                                }
                            }
                        }
                    }
                    Tensor::new(bv.shape().to_vec(), out).unwrap()
                });
            }
            Op::Mean(x) => self.send(grads, *x, || {
                let xv = self.value(*x);
                Tensor::full(xv.shape(), gd[0] / xv.len() as f64)
            }),
            Op::Sum(x) => self.send(grads, *x, || Tensor::full(self.value(*x).shape(), gd[0])),
        }
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| f(*v)).collect()).unwrap()
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(u, v)| f(*u, *v)).collect(),
    )
    .unwrap()
}

fn swap_last2_data(src: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for (blk_in, blk_out) in src.chunks(m * n).zip(out.chunks_mut(m * n)) {
        for i in 0..m {
            for j in 0..n {
                blk_out[j * m + i] = blk_in[i * n + j];
            }
        }
    }
    out
}
