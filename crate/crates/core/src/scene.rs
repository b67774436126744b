//! Random box-obstacle scenes and surface point clouds.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{lift, BoxObstacle};
use crate::math;
use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// Axis-aligned workspace bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Aabb {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Aabb {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| *x >= *l && *x <= *h)
    }

    pub fn diagonal(&self) -> f64 {
        math::dist2(&self.lo, &self.hi)
    }

    /// Maps workspace coordinates to `[-1, 1]` per axis.
    pub fn normalize(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(x, (l, h))| 2.0 * (x - l) / (h - l) - 1.0)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    pub bounds: Aabb,
    pub obstacles: Vec<BoxObstacle>,
}

impl Scene {
    pub fn empty(bounds: Aabb) -> Self {
        Scene {
            seed: 0,
            bounds,
            obstacles: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }
}

/// Keeps obstacles away from a point (typically the arm base).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeepOut {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    /// Inclusive range of obstacle counts, drawn uniformly.
    pub n_obstacles: (usize, usize),
    /// Range of each half extent, meters.
    pub half_extent_range: (f64, f64),
    /// Minimum pairwise distance between obstacle centers, meters.
    pub min_spacing: f64,
    pub bounds: Aabb,
    pub keep_out: Option<KeepOut>,
    pub max_attempts: usize,
}

impl SceneParams {
    /// Planar desk-scale world.
    pub fn desk() -> Self {
        SceneParams {
            n_obstacles: (3, 4),
            half_extent_range: (0.05, 0.25),
            min_spacing: 0.30,
            bounds: Aabb::cube(2, -1.5, 1.5),
            keep_out: Some(KeepOut {
                center: vec![0.0, 0.0],
                radius: 0.35,
            }),
            max_attempts: 10_000,
        }
    }

    /// Spatial world for the 8-DOF arm.
    pub fn paper() -> Self {
        SceneParams {
            n_obstacles: (3, 4),
            half_extent_range: (0.05, 0.25),
            min_spacing: 0.30,
            bounds: Aabb {
                lo: vec![-1.5, -1.5, 0.0],
                hi: vec![1.5, 1.5, 1.5],
            },
            keep_out: Some(KeepOut {
                center: vec![0.0, 0.0, 0.4],
                radius: 0.35,
            }),
            max_attempts: 10_000,
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }
}

fn sample_obstacle(params: &SceneParams, rng: &mut impl Rng) -> BoxObstacle {
    let d = params.dim();
    let (hl, hh) = params.half_extent_range;
    let half_extents = (0..d).map(|_| if hl < hh { rng.random_range(hl..hh) } else { hl }).collect();
    let center = (0..d)
        .map(|i| {
            let (l, h) = (params.bounds.lo[i], params.bounds.hi[i]);
            rng.random_range(l..h)
        })
        .collect();
    BoxObstacle {
        center,
        half_extents,
        rotation: rng.random_range(0.0..math::PI),
    }
}

fn placement_ok(params: &SceneParams, placed: &[BoxObstacle], candidate: &BoxObstacle) -> bool {
    if !candidate.corners().iter().all(|c| params.bounds.contains(c)) {
        return false;
    }
    if let Some(k) = &params.keep_out {
        if candidate.distance_to_point(&k.center) < k.radius {
            return false;
        }
    }
    placed
        .iter()
        .all(|o| math::dist2(&o.center, &candidate.center) >= params.min_spacing)
}

/// Samples a scene as a pure function of `(params, seed)`.
pub fn sample_scene(params: &SceneParams, seed: u64) -> Result<Scene> {
    let mut rng = rng_from_seed(seed);
    let (lo, hi) = params.n_obstacles;
    if lo > hi {
        return Err(Error::InvalidArgument(alloc::format!("obstacle range {lo}..={hi}")));
    }
    let n = rng.random_range(lo..=hi);
    let mut obstacles = Vec::with_capacity(n);
    let mut attempts = 0;
    while obstacles.len() < n {
        if attempts >= params.max_attempts {
            return Err(Error::PlacementInfeasible { attempts });
        }
        attempts += 1;
        let cand = sample_obstacle(params, &mut rng);
        if placement_ok(params, &obstacles, &cand) {
            obstacles.push(cand);
        }
    }
    Ok(Scene {
        seed,
        bounds: params.bounds.clone(),
        obstacles,
    })
}

/// `P x d` points, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub dim: usize,
    pub points: Vec<f64>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks(self.dim)
    }

    /// Copy mapped into `[-1, 1]^d` by the workspace bounds.
    pub fn normalized(&self, bounds: &Aabb) -> PointCloud {
        PointCloud {
            dim: self.dim,
            points: self.iter().flat_map(|p| bounds.normalize(p)).collect(),
        }
    }
}

/// Face `(axis, sign)` areas of a box: edge lengths in 2D, face areas in 3D.
fn face_weights(b: &BoxObstacle) -> Vec<(usize, f64, f64)> {
    let d = b.dim();
    let h = &b.half_extents;
    let mut out = Vec::with_capacity(2 * d);
    for axis in 0..d {
        let area: f64 = (0..d).filter(|&i| i != axis).map(|i| 2.0 * h[i]).product();
        for sign in [-1.0, 1.0] {
            out.push((axis, sign, area));
        }
    }
    out
}

/// Samples `n` points on obstacle surfaces, picking faces with probability
/// proportional to their area and points uniformly within a face.
pub fn sample_point_cloud(scene: &Scene, n: usize, rng: &mut impl Rng) -> Result<PointCloud> {
    if scene.obstacles.is_empty() {
        return Err(Error::EmptyScene);
    }
    if n == 0 {
        return Err(Error::InvalidArgument("point count must be positive".into()));
    }
    let d = scene.dim();
    let faces: Vec<(usize, usize, f64, f64)> = scene
        .obstacles
        .iter()
        .enumerate()
        .flat_map(|(o, b)| face_weights(b).into_iter().map(move |(a, s, w)| (o, a, s, w)))
        .collect();
    let total: f64 = faces.iter().map(|f| f.3).sum();
    let prepared: Vec<_> = scene.obstacles.iter().map(|b| b.prepared()).collect();
    let mut points = Vec::with_capacity(n * d);
    for _ in 0..n {
        let mut r = rng.random_range(0.0..total);
        let mut pick = faces.len() - 1;
        for (i, f) in faces.iter().enumerate() {
            if r < f.3 {
                pick = i;
                break;
            }
            r -= f.3;
        }
        let (o, axis, sign, _) = faces[pick];
        let h = &scene.obstacles[o].half_extents;
        let mut local = [0.0; 3];
        for i in 0..d {
            local[i] = if i == axis { sign * h[i] } else { rng.random_range(-h[i]..h[i]) };
        }
        let w = prepared[o].to_world(local);
        points.extend_from_slice(&w[..d]);
    }
    Ok(PointCloud { dim: d, points })
}

/// Distance from `p` to the nearest obstacle surface.
pub fn distance_to_surface(scene: &Scene, p: &[f64]) -> f64 {
    scene
        .obstacles
        .iter()
        .map(|b| {
            let pb = b.prepared();
            let l = pb.to_local(lift(p));
            let outside = pb.point_distance(lift(p));
            if outside > 0.0 {
                outside
            } else {
                (0..b.dim()).map(|i| pb.half[i] - l[i].abs()).fold(f64::INFINITY, f64::min)
            }
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn spacing_and_bounds_hold() {
        let p = SceneParams::desk();
        for seed in 0..200 {
            let s = sample_scene(&p, seed).unwrap();
            assert!((3..=4).contains(&s.obstacles.len()));
            for (i, a) in s.obstacles.iter().enumerate() {
                assert!(a.half_extents.iter().all(|&h| h > 0.0));
                assert!(a.corners().iter().all(|c| s.bounds.contains(c)));
                for b in &s.obstacles[i + 1..] {
                    assert!(math::dist2(&a.center, &b.center) >= 0.30);
                }
            }
        }
    }

    #[test]
    fn zero_obstacles_is_valid() {
        let p = SceneParams {
            n_obstacles: (0, 0),
            ..SceneParams::desk()
        };
        let s = sample_scene(&p, 7).unwrap();
        assert!(s.obstacles.is_empty());
    }

    #[test]
    fn deterministic_in_seed() {
        let p = SceneParams::desk();
        assert_eq!(sample_scene(&p, 11).unwrap(), sample_scene(&p, 11).unwrap());
        assert_ne!(sample_scene(&p, 11).unwrap(), sample_scene(&p, 12).unwrap());
    }

    #[test]
    fn infeasible_placement_is_reported() {
        let p = SceneParams {
            n_obstacles: (4, 4),
            min_spacing: 10.0,
            max_attempts: 500,
            ..SceneParams::desk()
        };
        assert!(matches!(sample_scene(&p, 1), Err(Error::PlacementInfeasible { .. })));
    }

    #[test]
    fn cloud_on_single_unit_box() {
        let scene = Scene {
            seed: 0,
            bounds: Aabb::cube(2, -2.0, 2.0),
            obstacles: vec![BoxObstacle {
                center: vec![0.0, 0.0],
                half_extents: vec![0.5, 0.5],
                rotation: 0.0,
            }],
        };
        let pc = sample_point_cloud(&scene, 1000, &mut rng_from_seed(3)).unwrap();
        assert_eq!(pc.len(), 1000);
        for p in pc.iter() {
            assert!(distance_to_surface(&scene, p) < 1e-9);
        }
    }

    #[test]
    fn empty_scene_cloud_errors() {
        let scene = Scene::empty(Aabb::cube(2, -1.0, 1.0));
        assert_eq!(sample_point_cloud(&scene, 5, &mut rng_from_seed(0)), Err(Error::EmptyScene));
    }
}
