//! Oriented boxes and exact point/segment distances.
//!
//! Boxes rotate about the vertical axis only. Planar (2D) geometry is carried
//! in 3-vectors with a zero third coordinate and zero vertical half extent.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;

pub type Vec3 = [f64; 3];

#[inline]
fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
#[inline]
fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
#[inline]
fn mul(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}
#[inline]
fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Lifts a 2- or 3-dimensional point into a [`Vec3`].
pub fn lift(p: &[f64]) -> Vec3 {
    [p[0], p[1], if p.len() > 2 { p[2] } else { 0.0 }]
}

/// Cuboid (rectangle in 2D) obstacle with a yaw rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxObstacle {
    pub center: Vec<f64>,
    pub half_extents: Vec<f64>,
    pub rotation: f64,
}

impl BoxObstacle {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Frame-cached form used in the hot collision paths.
    pub fn prepared(&self) -> PreparedBox {
        let h = lift(&self.half_extents);
        PreparedBox {
            center: lift(&self.center),
            half: h,
            cos: math::cos(self.rotation),
            sin: math::sin(self.rotation),
            radius: math::sqrt(dot(h, h)),
            planar: self.dim() == 2,
        }
    }

    pub fn distance_to_point(&self, p: &[f64]) -> f64 {
        self.prepared().point_distance(lift(p))
    }

    pub fn distance_to_segment(&self, a: &[f64], b: &[f64]) -> f64 {
        self.prepared().segment_distance(lift(a), lift(b))
    }

    /// World-frame corners (4 in 2D, 8 in 3D).
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let pb = self.prepared();
        let d = self.dim();
        let n = 1 << d;
        (0..n)
            .map(|m| {
                let mut l = [0.0; 3];
                for (i, li) in l.iter_mut().enumerate().take(d) {
                    *li = if m >> i & 1 == 1 { pb.half[i] } else { -pb.half[i] };
                }
                pb.to_world(l)[..d].to_vec()
            })
            .collect()
    }
}

/// A [`BoxObstacle`] with its rotation cached.
#[derive(Debug, Clone, Copy)]
pub struct PreparedBox {
    pub center: Vec3,
    pub half: Vec3,
    cos: f64,
    sin: f64,
    /// Circumscribed sphere radius.
    pub radius: f64,
    planar: bool,
}

impl PreparedBox {
    pub fn to_local(&self, p: Vec3) -> Vec3 {
        let d = sub(p, self.center);
        [self.cos * d[0] + self.sin * d[1], -self.sin * d[0] + self.cos * d[1], d[2]]
    }

    pub fn to_world(&self, l: Vec3) -> Vec3 {
        add(
            [self.cos * l[0] - self.sin * l[1], self.sin * l[0] + self.cos * l[1], l[2]],
            self.center,
        )
    }

    fn local_point_distance(&self, l: Vec3) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            let e = l[i].abs() - self.half[i];
            if e > 0.0 {
                s += e * e;
            }
        }
        math::sqrt(s)
    }

    pub fn point_distance(&self, p: Vec3) -> f64 {
        self.local_point_distance(self.to_local(p))
    }

    /// Whether the local segment `a + t (b - a)`, `t` in `[0, 1]`, meets the box.
    fn local_segment_hits(&self, a: Vec3, b: Vec3) -> bool {
        let d = sub(b, a);
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for i in 0..3 {
            let h = self.half[i];
            if d[i].abs() < 1e-300 {
                if a[i] < -h || a[i] > h {
                    return false;
                }
            } else {
                let inv = 1.0 / d[i];
                let (mut lo, mut hi) = ((-h - a[i]) * inv, (h - a[i]) * inv);
                if lo > hi {
                    core::mem::swap(&mut lo, &mut hi);
                }
                t0 = t0.max(lo);
                t1 = t1.min(hi);
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }

    /// Exact distance from a segment to the box (zero when they intersect).
    pub fn segment_distance(&self, a: Vec3, b: Vec3) -> f64 {
        let (la, lb) = (self.to_local(a), self.to_local(b));
        if self.local_segment_hits(la, lb) {
            return 0.0;
        }
        let mut best = self.local_point_distance(la).min(self.local_point_distance(lb));
        let h = self.half;
        let mut edge = |p: Vec3, q: Vec3| {
            best = best.min(segment_segment_distance(la, lb, p, q));
        };
        if self.planar {
            let c = [[-h[0], -h[1], 0.0], [h[0], -h[1], 0.0], [h[0], h[1], 0.0], [-h[0], h[1], 0.0]];
            for i in 0..4 {
                edge(c[i], c[(i + 1) % 4]);
            }
        } else {
            for axis in 0..3 {
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                for su in [-1.0, 1.0] {
                    for sv in [-1.0, 1.0] {
                        let mut p = [0.0; 3];
                        p[u] = su * h[u];
                        p[v] = sv * h[v];
                        let mut q = p;
                        p[axis] = -h[axis];
                        q[axis] = h[axis];
                        edge(p, q);
                    }
                }
            }
        }
        best
    }
}

/// Closest distance between segments `p1 q1` and `p2 q2`.
pub fn segment_segment_distance(p1: Vec3, q1: Vec3, p2: Vec3, q2: Vec3) -> f64 {
    const EPS: f64 = 1e-18;
    let d1 = sub(q1, p1);
    let d2 = sub(q2, p2);
    let r = sub(p1, p2);
    let a = dot(d1, d1);
    let e = dot(d2, d2);
    let f = dot(d2, r);
    let (s, t);
    if a <= EPS && e <= EPS {
        return math::sqrt(dot(r, r));
    }
    if a <= EPS {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = dot(d1, r);
        if e <= EPS {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = dot(d1, d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > EPS * a * e { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    let c1 = add(p1, mul(d1, s));
    let c2 = add(p2, mul(d2, t));
    let w = sub(c1, c2);
    math::sqrt(dot(w, w))
}

/// Distance from `p` to segment `a b`.
pub fn point_segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    segment_segment_distance(p, p, a, b)
}
