//! Serial-chain kinematics and collision checking.
//!
//! Links are thick segments (capsules in 3D). Self-collision is not checked.

use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{lift, PreparedBox, Vec3};
use crate::math;
use crate::scene::{Aabb, Scene};
use crate::{Error, Result};

/// Default joint-space spacing (radians) of collision checks along an edge.
pub const DEFAULT_EDGE_RESOLUTION: f64 = 0.01;

/// Joint angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig(pub Vec<f64>);

impl Deref for JointConfig {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for JointConfig {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(v: Vec<f64>) -> Self {
        JointConfig(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasePose {
    pub position: Vec<f64>,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub dof: usize,
    pub link_lengths: Vec<f64>,
    pub link_radius: f64,
    pub joint_limits: Vec<(f64, f64)>,
    pub base_pose: BasePose,
}

impl ArmSpec {
    /// Planar four-link arm at the workspace origin.
    pub fn desk() -> Self {
        ArmSpec {
            dof: 4,
            link_lengths: alloc::vec![0.45, 0.40, 0.30, 0.25],
            link_radius: 0.04,
            joint_limits: alloc::vec![(-math::PI, math::PI), (-2.5, 2.5), (-2.5, 2.5), (-2.5, 2.5)],
            base_pose: BasePose {
                position: alloc::vec![0.0, 0.0],
                yaw: 0.0,
            },
        }
    }

    /// Spatial eight-joint arm mounted 40 cm above the table.
    pub fn paper() -> Self {
        ArmSpec {
            dof: 8,
            link_lengths: alloc::vec![0.10, 0.25, 0.10, 0.25, 0.10, 0.20, 0.05, 0.10],
            link_radius: 0.04,
            joint_limits: alloc::vec![(-2.5, 2.5); 8],
            base_pose: BasePose {
                position: alloc::vec![0.0, 0.0, 0.4],
                yaw: 0.0,
            },
        }
    }

    /// Workspace dimension (2 or 3), from the base position.
    pub fn workspace_dim(&self) -> usize {
        self.base_pose.position.len()
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(alloc::format!("arm spec: {m}")));
        if self.dof < 2 {
            return bad("dof must be at least 2");
        }
        if self.link_lengths.len() != self.dof || self.joint_limits.len() != self.dof {
            return bad("link_lengths and joint_limits need one entry per joint");
        }
        if self.link_lengths.iter().any(|&l| l <= 0.0) {
            return bad("link lengths must be positive");
        }
        if self.joint_limits.iter().any(|&(lo, hi)| lo >= hi) {
            return bad("joint limits need lo < hi");
        }
        if !(2..=3).contains(&self.workspace_dim()) {
            return bad("base position must be 2D or 3D");
        }
        if self.link_radius < 0.0 {
            return bad("link radius must be non-negative");
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.dof && q.iter().zip(&self.joint_limits).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn sample_uniform(&self, rng: &mut impl Rng) -> JointConfig {
        JointConfig(self.joint_limits.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect())
    }
}

/// Joint positions from the base to the end effector; segment `i` joins
/// points `i` and `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSegments {
    pub dim: usize,
    pub points: Vec<Vec3>,
}

impl LinkSegments {
    pub fn segments(&self) -> impl Iterator<Item = (Vec3, Vec3)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn end_effector(&self) -> &[f64] {
        &self.points.last().unwrap()[..self.dim]
    }
}

type Mat3 = [[f64; 3]; 3];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn rot_z(t: f64) -> Mat3 {
    let (s, c) = (math::sin(t), math::cos(t));
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

fn rot_y(t: f64) -> Mat3 {
    let (s, c) = (math::sin(t), math::cos(t));
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

/// Forward kinematics. In the plane every joint turns about the normal, so
/// joint `k` sits at the running sum of `l_i (cos(sum theta), sin(sum theta))`.
/// In space the joint axes alternate between the local z and y axes.
pub fn forward_kinematics(spec: &ArmSpec, q: &[f64]) -> LinkSegments {
    let dim = spec.workspace_dim();
    let mut points = Vec::with_capacity(spec.dof + 1);
    let mut p = lift(&spec.base_pose.position);
    points.push(p);
    if dim == 2 {
        let mut angle = spec.base_pose.yaw;
        for (l, qi) in spec.link_lengths.iter().zip(q) {
            angle += qi;
            p = [p[0] + l * math::cos(angle), p[1] + l * math::sin(angle), 0.0];
            points.push(p);
        }
    } else {
        let mut r = rot_z(spec.base_pose.yaw);
        for (i, (l, qi)) in spec.link_lengths.iter().zip(q).enumerate() {
            let local = if i % 2 == 0 { rot_z(*qi) } else { rot_y(*qi) };
            r = mat_mul(&r, &local);
            p = [p[0] + l * r[0][0], p[1] + l * r[1][0], p[2] + l * r[2][0]];
            points.push(p);
        }
    }
    LinkSegments { dim, points }
}

/// Collision world: an arm and a scene with obstacle frames cached.
#[derive(Debug, Clone)]
pub struct Checker<'a> {
    pub spec: &'a ArmSpec,
    pub bounds: &'a Aabb,
    boxes: Vec<PreparedBox>,
}

impl<'a> Checker<'a> {
    pub fn new(spec: &'a ArmSpec, scene: &'a Scene) -> Self {
        Checker {
            spec,
            bounds: &scene.bounds,
            boxes: scene.obstacles.iter().map(|b| b.prepared()).collect(),
        }
    }

    fn segments_free(&self, links: &LinkSegments) -> bool {
        let r = self.spec.link_radius;
        for (a, b) in links.segments() {
            for bx in &self.boxes {
                // circumscribed-sphere reject before the exact test
                let reach = bx.radius + r;
                let d = crate::geom::point_segment_distance(bx.center, a, b);
                if d > reach {
                    continue;
                }
                if bx.segment_distance(a, b) <= r {
                    return false;
                }
            }
        }
        true
    }

    pub fn config_valid(&self, q: &[f64]) -> bool {
        if !self.spec.within_limits(q) {
            return false;
        }
        let links = forward_kinematics(self.spec, q);
        if !links.points.iter().all(|p| self.bounds.contains(&p[..links.dim])) {
            return false;
        }
        self.segments_free(&links)
    }

    /// Every configuration on the straight joint-space edge, at spacing at
    /// most `resolution`, is valid. Symmetric in its endpoints.
    pub fn edge_valid(&self, a: &[f64], b: &[f64], resolution: f64) -> bool {
        let (a, b) = if a.partial_cmp(b) == Some(core::cmp::Ordering::Greater) { (b, a) } else { (a, b) };
        let len = math::dist2(a, b);
        let n = (math::ceil(len / resolution) as usize).max(1);
        if !self.config_valid(a) || !self.config_valid(b) {
            return false;
        }
        let mut q = alloc::vec![0.0; a.len()];
        // coarse-to-fine order finds collisions early; the checked set is the same
        let mut stride = n.next_power_of_two();
        while stride > 1 {
            let half = stride / 2;
            let mut i = half;
            while i < n {
                if !i.is_multiple_of(stride) {
                    let t = i as f64 / n as f64;
                    for (k, qk) in q.iter_mut().enumerate() {
                        *qk = a[k] + t * (b[k] - a[k]);
                    }
                    if !self.config_valid(&q) {
                        return false;
                    }
                }
                i += half;
            }
            stride = half;
        }
        true
    }
}

pub fn config_valid(spec: &ArmSpec, scene: &Scene, q: &[f64]) -> bool {
    Checker::new(spec, scene).config_valid(q)
}

pub fn edge_valid(spec: &ArmSpec, scene: &Scene, a: &[f64], b: &[f64], resolution: f64) -> bool {
    Checker::new(spec, scene).edge_valid(a, b, resolution)
}

/// Uniform rejection sampling of a valid configuration.
pub fn sample_valid_config(spec: &ArmSpec, scene: &Scene, rng: &mut impl Rng, max_attempts: usize) -> Result<JointConfig> {
    let checker = Checker::new(spec, scene);
    for _ in 0..max_attempts {
        let q = spec.sample_uniform(rng);
        if checker.config_valid(&q) {
            return Ok(q);
        }
    }
    Err(Error::SamplingExhausted { attempts: max_attempts })
}

/// Like [`sample_valid_config`] but pins the absolute angle of the last link
/// (planar arms only), a joint-space stand-in for a fixed grasp orientation.
pub fn sample_valid_config_with_end_angle(
    spec: &ArmSpec,
    scene: &Scene,
    end_angle: f64,
    rng: &mut impl Rng,
    max_attempts: usize,
) -> Result<JointConfig> {
    if spec.workspace_dim() != 2 {
        return Err(Error::InvalidArgument("end-angle sampling needs a planar arm".into()));
    }
    let checker = Checker::new(spec, scene);
    for _ in 0..max_attempts {
        let mut q = spec.sample_uniform(rng);
        let partial: f64 = q[..spec.dof - 1].iter().sum::<f64>() + spec.base_pose.yaw;
        let mut last = end_angle - partial;
        last -= 2.0 * math::PI * math::floor((last + math::PI) / (2.0 * math::PI));
        q[spec.dof - 1] = last;
        if checker.config_valid(&q) {
            return Ok(q);
        }
    }
    Err(Error::SamplingExhausted { attempts: max_attempts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::BoxObstacle;
    use crate::rng::rng_from_seed;
    use alloc::vec;

    fn two_link() -> ArmSpec {
        ArmSpec {
            dof: 2,
            link_lengths: vec![1.0, 1.0],
            link_radius: 0.05,
            joint_limits: vec![(-math::PI, math::PI); 2],
            base_pose: BasePose {
                position: vec![0.0, 0.0],
                yaw: 0.0,
            },
        }
    }

    #[test]
    fn fk_straight_and_bent() {
        let s = two_link();
        let l = forward_kinematics(&s, &[0.0, 0.0]);
        assert_eq!(l.points[0], [0.0, 0.0, 0.0]);
        assert_eq!(l.points[1], [1.0, 0.0, 0.0]);
        assert_eq!(l.points[2], [2.0, 0.0, 0.0]);
        let l = forward_kinematics(&s, &[math::FRAC_PI_2, 0.0]);
        assert!(l.end_effector()[0].abs() < 1e-15);
        assert!((l.end_effector()[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_scene_accepts_in_limits() {
        let s = ArmSpec::desk();
        let scene = Scene::empty(Aabb::cube(2, -1.5, 1.5));
        assert!(config_valid(&s, &scene, &[0.1, 0.2, -0.3, 1.0]));
        assert!(!config_valid(&s, &scene, &[4.0, 0.2, -0.3, 1.0]));
    }

    #[test]
    fn box_around_base_blocks_everything() {
        let s = ArmSpec::desk();
        let scene = Scene {
            seed: 0,
            bounds: Aabb::cube(2, -1.5, 1.5),
            obstacles: vec![BoxObstacle {
                center: vec![0.0, 0.0],
                half_extents: vec![0.1, 0.1],
                rotation: 0.4,
            }],
        };
        let mut rng = rng_from_seed(1);
        for _ in 0..200 {
            assert!(!config_valid(&s, &scene, &s.sample_uniform(&mut rng)));
        }
        assert!(matches!(
            sample_valid_config(&s, &scene, &mut rng, 50),
            Err(Error::SamplingExhausted { attempts: 50 })
        ));
    }

    #[test]
    fn edge_cases() {
        let s = ArmSpec::desk();
        let scene = Scene {
            seed: 0,
            bounds: Aabb::cube(2, -1.5, 1.5),
            obstacles: vec![BoxObstacle {
                center: vec![1.0, 0.0],
                half_extents: vec![0.1, 0.1],
                rotation: 0.0,
            }],
        };
        let free = [math::FRAC_PI_2, 0.0, 0.0, 0.0];
        let hit = [0.0, 0.0, 0.0, 0.0];
        assert!(edge_valid(&s, &scene, &free, &free, 0.01));
        assert!(!edge_valid(&s, &scene, &free, &hit, 0.01));
        assert!(!edge_valid(&s, &scene, &hit, &free, 0.01));
        let other = [math::PI * 0.9, 0.0, 0.0, 0.0];
        assert!(edge_valid(&s, &scene, &free, &other, 0.01));
    }

    #[test]
    fn end_angle_sampler_pins_last_link() {
        let s = ArmSpec::desk();
        let scene = Scene::empty(Aabb::cube(2, -1.5, 1.5));
        let mut rng = rng_from_seed(5);
        let q = sample_valid_config_with_end_angle(&s, &scene, 0.5, &mut rng, 1000).unwrap();
        let total: f64 = q.iter().sum();
        let wrapped = (total - 0.5) / (2.0 * math::PI);
        assert!((wrapped - libm::round(wrapped)).abs() < 1e-12);
    }

    #[test]
    fn spatial_fk_has_link_lengths() {
        let s = ArmSpec::paper();
        let mut rng = rng_from_seed(2);
        let q = s.sample_uniform(&mut rng);
        let l = forward_kinematics(&s, &q);
        for ((a, b), len) in l.segments().zip(&s.link_lengths) {
            let d = math::dist2(&a, &b);
            assert!((d - len).abs() < 1e-12);
        }
    }
}
