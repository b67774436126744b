//! Brute-force collision oracles written without the library's geometry code.

#![allow(dead_code)]

use keyplan_core::arm::{sample_valid_config, ArmSpec};
use keyplan_core::rng::rng_from_seed;
use keyplan_core::scene::{sample_scene, Scene, SceneParams};
use rand::Rng;

/// Joint positions by accumulating absolute angles (planar) or by explicit
/// axis-angle composition (spatial).
pub fn fk_points(spec: &ArmSpec, q: &[f64]) -> Vec<[f64; 3]> {
    let b = &spec.base_pose.position;
    let mut p = [b[0], b[1], if b.len() > 2 { b[2] } else { 0.0 }];
    let mut out = vec![p];
    if b.len() == 2 {
        let mut theta = spec.base_pose.yaw;
        for i in 0..spec.dof {
            theta += q[i];
            p[0] += spec.link_lengths[i] * theta.cos();
            p[1] += spec.link_lengths[i] * theta.sin();
            out.push(p);
        }
    } else {
        // frame columns: x axis, y axis, z axis
        let (s, c) = spec.base_pose.yaw.sin_cos();
        let mut ex = [c, s, 0.0];
        let mut ey = [-s, c, 0.0];
        let mut ez = [0.0, 0.0, 1.0];
        for i in 0..spec.dof {
            let (s, c) = q[i].sin_cos();
            if i % 2 == 0 {
                let nx = [0, 1, 2].map(|k| c * ex[k] + s * ey[k]);
                let ny = [0, 1, 2].map(|k| -s * ex[k] + c * ey[k]);
                ex = nx;
                ey = ny;
            } else {
                let nx = [0, 1, 2].map(|k| c * ex[k] - s * ez[k]);
                let nz = [0, 1, 2].map(|k| s * ex[k] + c * ez[k]);
                ex = nx;
                ez = nz;
            }
            for k in 0..3 {
                p[k] += spec.link_lengths[i] * ex[k];
            }
            out.push(p);
        }
    }
    out
}

/// Distance from a point to an oriented box by clamping in the box frame.
fn point_box(scene: &Scene, o: usize, p: [f64; 3]) -> f64 {
    let b = &scene.obstacles[o];
    let d = b.center.len();
    let (s, c) = b.rotation.sin_cos();
    let dx = p[0] - b.center[0];
    let dy = p[1] - b.center[1];
    let local = [c * dx + s * dy, -s * dx + c * dy, if d > 2 { p[2] - b.center[2] } else { 0.0 }];
    let mut acc = 0.0;
    for i in 0..d {
        let h = b.half_extents[i];
        let e = (local[i].abs() - h).max(0.0);
        acc += e * e;
    }
    acc.sqrt()
}

/// Validity by sampling `per_link` points along every link.
pub fn config_valid_sampled(spec: &ArmSpec, scene: &Scene, q: &[f64], per_link: usize) -> bool {
    if q.len() != spec.dof || q.iter().zip(&spec.joint_limits).any(|(v, (lo, hi))| v < lo || v > hi) {
        return false;
    }
    let pts = fk_points(spec, q);
    let d = scene.bounds.lo.len();
    for p in &pts {
        for i in 0..d {
            if p[i] < scene.bounds.lo[i] || p[i] > scene.bounds.hi[i] {
                return false;
            }
        }
    }
    for w in pts.windows(2) {
        for k in 0..per_link {
            let t = k as f64 / (per_link - 1) as f64;
            let p = [0, 1, 2].map(|i| w[0][i] + t * (w[1][i] - w[0][i]));
            for o in 0..scene.obstacles.len() {
                if point_box(scene, o, p) <= spec.link_radius {
                    return false;
                }
            }
        }
    }
    true
}

/// Edge validity by checking configs at spacing `resolution` with `check`.
pub fn edge_valid_dense(a: &[f64], b: &[f64], resolution: f64, check: impl Fn(&[f64]) -> bool) -> bool {
    let len = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let n = ((len / resolution).ceil() as usize).max(1);
    let mut q = vec![0.0; a.len()];
    for i in 0..=n {
        let t = i as f64 / n as f64;
        for k in 0..a.len() {
            q[k] = a[k] + t * (b[k] - a[k]);
        }
        if !check(&q) {
            return false;
        }
    }
    true
}

pub fn desk_scenes(n: u64) -> Vec<Scene> {
    (0..n).map(|s| sample_scene(&SceneParams::desk(), 1000 + s).unwrap()).collect()
}

/// Edges between a valid config and a random nearby target, as the planners produce.
pub fn edge_cases(spec: &ArmSpec, scenes: &[Scene], n: usize, seed: u64) -> Vec<(usize, Vec<f64>, Vec<f64>)> {
    let mut out = Vec::with_capacity(n);
    let mut rng = rng_from_seed(seed);
    let mut i = 0;
    while out.len() < n {
        let s = i % scenes.len();
        i += 1;
        let a = sample_valid_config(spec, &scenes[s], &mut rng, 10_000).unwrap();
        let b = spec.sample_uniform(&mut rng);
        let t: f64 = rng.random_range(0.05..1.0);
        let b: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x + t * (y - x)).collect();
        out.push((s, a.0, b));
    }
    out
}
