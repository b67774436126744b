use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::arm::JointConfig;
use crate::math;
use crate::oracle::{Plan, Representation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondDiffNorm {
    Linf,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeypointParams {
    /// Threshold on the per-step second difference, radians.
    pub epsilon: f64,
    pub norm: SecondDiffNorm,
}

/// Norm of `q[i+1] - 2 q[i] + q[i-1]`.
pub fn second_difference_norm(prev: &[f64], cur: &[f64], next: &[f64], norm: SecondDiffNorm) -> f64 {
    let it = prev.iter().zip(cur).zip(next).map(|((a, b), c)| c - 2.0 * b + a);
    match norm {
        SecondDiffNorm::Linf => it.fold(0.0, |m, x| f64::max(m, x.abs())),
        SecondDiffNorm::L2 => math::sqrt(it.map(|x| x * x).sum()),
    }
}

/// Keeps the endpoints and every interior configuration whose second
/// difference exceeds `epsilon`.
pub fn extract_keypoints(plan: &Plan, params: &KeypointParams) -> Plan {
    let c = &plan.configs;
    if c.len() < 2 {
        return plan.clone();
    }
    let mut out = vec![c[0].clone()];
    for i in 1..c.len() - 1 {
        if second_difference_norm(&c[i - 1], &c[i], &c[i + 1], params.norm) > params.epsilon {
            out.push(c[i].clone());
        }
    }
    out.push(c[c.len() - 1].clone());
    Plan::new(out, Representation::Keypoint, plan.scene_id)
}

/// Polyline walker answering "first point beyond the cursor at chord
/// distance `h`".
struct Polyline<'a> {
    pts: &'a [JointConfig],
}

impl Polyline<'_> {
    fn at(&self, seg: usize, t: f64) -> Vec<f64> {
        math::lerp(&self.pts[seg], &self.pts[seg + 1], t)
    }

    /// From cursor `(seg, t)` at point `c`, the next `(seg, t)` at distance `h`.
    fn advance(&self, seg: usize, t: f64, c: &[f64], h: f64) -> Option<(usize, f64)> {
        let h2 = h * h;
        for j in seg..self.pts.len() - 1 {
            let a = &self.pts[j];
            let b = &self.pts[j + 1];
            let t0 = if j == seg { t } else { 0.0 };
            // |a + s d - c|^2 = h^2 with d = b - a, w = a - c
            let (mut dd, mut wd, mut ww) = (0.0, 0.0, 0.0);
            for k in 0..a.len() {
                let d = b[k] - a[k];
                let w = a[k] - c[k];
                dd += d * d;
                wd += w * d;
                ww += w * w;
            }
            if dd == 0.0 {
                continue;
            }
            let disc = wd * wd - dd * (ww - h2);
            if disc < 0.0 {
                continue;
            }
            let s = (-wd + math::sqrt(disc)) / dd;
            if s >= t0 && s <= 1.0 {
                return Some((j, s));
            }
        }
        None
    }

    /// Walks `n` chords of length `h`. Returns the points and whether the
    /// walk ran off the end before completing.
    fn walk(&self, h: f64, n: usize) -> (Vec<Vec<f64>>, usize, f64, bool) {
        let mut seg = 0;
        let mut t = 0.0;
        let mut cur = self.pts[0].0.clone();
        let mut out = vec![cur.clone()];
        for _ in 0..n {
            match self.advance(seg, t, &cur, h) {
                Some((s, tt)) => {
                    seg = s;
                    t = tt;
                    cur = self.at(seg, t);
                    out.push(cur.clone());
                }
                None => return (out, seg, t, true),
            }
        }
        (out, seg, t, false)
    }
}

/// Resamples onto the polyline so consecutive configurations sit at equal
/// L2 distance, no larger than `step`, keeping both endpoints.
///
/// For a chord count `n` (from `ceil(L / step)` upward) the chord length `h`
/// is solved so that `n - 1` chords walked along the polyline leave the
/// final configuration exactly `h` away. Sign changes are bracketed on a grid
/// and refined by bisection.
pub fn resample_fixed_step(plan: &Plan, step: f64) -> Plan {
    let c = &plan.configs;
    let wrap = |configs: Vec<JointConfig>| Plan::new(configs, Representation::FixedStep, plan.scene_id);
    if c.len() < 2 || plan.arc_length == 0.0 {
        return wrap(c.clone());
    }
    let total = plan.arc_length;
    let first_n = (math::ceil(total / step) as usize).max(1);
    if first_n == 1 {
        return wrap(vec![c[0].clone(), c[c.len() - 1].clone()]);
    }
    let poly = Polyline { pts: c };
    let end = &c[c.len() - 1];
    for n in first_n..first_n + 32 {
        if let Some(pts) = close_walk(&poly, end, n, total / n as f64, step) {
            return wrap(pts.into_iter().map(JointConfig).collect());
        }
    }
    // equal arc-length spacing; chords may be shorter at corners
    let n = first_n;
    let mut cum = vec![0.0];
    for w in c.windows(2) {
        cum.push(cum[cum.len() - 1] + math::dist2(&w[0], &w[1]));
    }
    let mut out = Vec::with_capacity(n + 1);
    let mut seg = 0;
    for i in 0..=n {
        let s = total * i as f64 / n as f64;
        while seg + 1 < c.len() - 1 && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { ((s - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(JointConfig(poly.at(seg, t)));
    }
    out[n] = end.clone();
    wrap(out)
}

fn close_walk(poly: &Polyline<'_>, end: &[f64], n: usize, h_max: f64, step: f64) -> Option<Vec<Vec<f64>>> {
    // residual: distance left to the end after n - 1 chords, minus h
    let residual = |h: f64| {
        let (pts, _, _, ran_off) = poly.walk(h, n - 1);
        if ran_off {
            f64::NEG_INFINITY
        } else {
            math::dist2(&pts[n - 1], end) - h
        }
    };
    let h0 = h_max * 1e-9;
    let r0 = residual(h0);
    if r0 <= 0.0 {
        return None;
    }
    if residual(h_max) <= 0.0 {
        if let Some(pts) = bisect(poly, end, n, h0, h_max, step, &residual) {
            return Some(pts);
        }
    }
    // the walk jumps where the polyline doubles back; bracket on a grid
    const GRID: usize = 64;
    let (mut prev_h, mut prev_r) = (h0, r0);
    for k in 1..=GRID {
        let h = h_max * k as f64 / GRID as f64;
        let r = residual(h);
        if prev_r > 0.0 && r <= 0.0 {
            if let Some(pts) = bisect(poly, end, n, prev_h, h, step, &residual) {
                return Some(pts);
            }
        }
        (prev_h, prev_r) = (h, r);
    }
    None
}

fn bisect(
    poly: &Polyline<'_>,
    end: &[f64],
    n: usize,
    mut lo: f64,
    mut hi: f64,
    step: f64,
    residual: &impl Fn(f64) -> f64,
) -> Option<Vec<Vec<f64>>> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h = if residual(lo).abs() <= residual(hi).abs() { lo } else { hi };
    let (mut pts, _, _, ran_off) = poly.walk(h, n - 1);
    if ran_off || pts.len() != n {
        return None;
    }
    pts.push(end.to_vec());
    let first = math::dist2(&pts[0], &pts[1]);
    if first > step || pts.windows(2).any(|w| (math::dist2(&w[0], &w[1]) - first).abs() > 1e-10) {
        return None;
    }
    Some(pts)
}
