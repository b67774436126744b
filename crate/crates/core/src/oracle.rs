//! Ground-truth planner: RRT-Connect followed by shortcut smoothing.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arm::{ArmSpec, Checker, JointConfig, DEFAULT_EDGE_RESOLUTION};
use crate::clock::Clock;
use crate::math;
use crate::scene::Scene;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerBudget {
    pub wall_clock_seconds: f64,
    pub max_iterations: usize,
}

impl PlannerBudget {
    /// Desk default: 5 s and an iteration cap that keeps runs reproducible.
    pub fn desk() -> Self {
        PlannerBudget {
            wall_clock_seconds: 5.0,
            max_iterations: 20_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(alloc::format!("planner budget: {m}")));
        if !(self.wall_clock_seconds > 0.0) || self.max_iterations == 0 {
            return bad("bounds must be positive");
        }
        if !self.wall_clock_seconds.is_finite() && self.max_iterations == usize::MAX {
            return bad("at least one bound must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Raw,
    FixedStep,
    Keypoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub configs: Vec<JointConfig>,
    pub representation: Representation,
    pub scene_id: u64,
    pub arc_length: f64,
}

/// Sum of L2 distances between consecutive configurations.
pub fn arc_length(configs: &[JointConfig]) -> f64 {
    configs.windows(2).map(|w| math::dist2(&w[0], &w[1])).sum()
}

impl Plan {
    /// Builds a plan, dropping exact consecutive duplicates.
    pub fn new(configs: Vec<JointConfig>, representation: Representation, scene_id: u64) -> Self {
        let mut out: Vec<JointConfig> = Vec::with_capacity(configs.len());
        for q in configs {
            if out.last().is_none_or(|p| p.0 != q.0) {
                out.push(q);
            }
        }
        let arc_length = arc_length(&out);
        Plan {
            configs: out,
            representation,
            scene_id,
            arc_length,
        }
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn start(&self) -> &JointConfig {
        &self.configs[0]
    }

    pub fn goal(&self) -> &JointConfig {
        self.configs.last().unwrap()
    }

    pub fn with_representation(mut self, r: Representation) -> Self {
        self.representation = r;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    /// Tree extension step, radians.
    pub step: f64,
    pub goal_bias: f64,
    pub shortcut_rounds: usize,
    /// Edge collision resolution, radians.
    pub resolution: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            step: 0.1,
            goal_bias: 0.1,
            shortcut_rounds: 200,
            resolution: DEFAULT_EDGE_RESOLUTION,
        }
    }
}

struct Tree {
    nodes: Vec<Vec<f64>>,
    parent: Vec<usize>,
}

impl Tree {
    fn new(root: &[f64]) -> Self {
        Tree {
            nodes: vec![root.to_vec()],
            parent: vec![usize::MAX],
        }
    }

    fn nearest(&self, q: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d: f64 = n.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    fn push(&mut self, q: Vec<f64>, parent: usize) -> usize {
        self.nodes.push(q);
        self.parent.push(parent);
        self.nodes.len() - 1
    }

    fn path_to_root(&self, mut i: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        while i != usize::MAX {
            out.push(self.nodes[i].clone());
            i = self.parent[i];
        }
        out
    }
}

enum Extend {
    Reached(usize),
    Advanced(usize),
    Trapped,
}

fn steer(from: &[f64], to: &[f64], step: f64) -> (Vec<f64>, bool) {
    let d = math::dist2(from, to);
    if d <= step {
        (to.to_vec(), true)
    } else {
        let t = step / d;
        (from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect(), false)
    }
}

fn extend(tree: &mut Tree, checker: &Checker<'_>, q: &[f64], p: &OracleParams) -> Extend {
    let near = tree.nearest(q);
    let (new, reached) = steer(&tree.nodes[near], q, p.step);
    if !checker.edge_valid(&tree.nodes[near], &new, p.resolution) {
        return Extend::Trapped;
    }
    let id = tree.push(new, near);
    if reached {
        Extend::Reached(id)
    } else {
        Extend::Advanced(id)
    }
}

fn connect(tree: &mut Tree, checker: &Checker<'_>, q: &[f64], p: &OracleParams) -> Extend {
    loop {
        match extend(tree, checker, q, p) {
            Extend::Advanced(_) => continue,
            other => return other,
        }
    }
}

/// RRT-Connect from `start` to `goal`, then [`shortcut_smooth`].
///
/// The search stops with [`Error::NoPlanFound`] when either budget bound is
/// hit. With a [`crate::clock::FrozenClock`] only the iteration cap applies
/// and the result is a pure function of the inputs and `rng`.
#[allow(clippy::too_many_arguments)]
pub fn plan_oracle(
    spec: &ArmSpec,
    scene: &Scene,
    start: &[f64],
    goal: &[f64],
    budget: &PlannerBudget,
    params: &OracleParams,
    rng: &mut impl Rng,
    clock: &impl Clock,
) -> Result<Plan> {
    budget.validate()?;
    let checker = Checker::new(spec, scene);
    if !checker.config_valid(start) || !checker.config_valid(goal) {
        return Err(Error::InvalidArgument("start and goal must be valid configurations".into()));
    }
    let t0 = clock.now_s();
    if start == goal {
        return Ok(Plan::new(vec![start.to_vec().into()], Representation::Raw, scene.seed));
    }
    if checker.edge_valid(start, goal, params.resolution) {
        return Ok(Plan::new(
            vec![start.to_vec().into(), goal.to_vec().into()],
            Representation::Raw,
            scene.seed,
        ));
    }
    let mut ta = Tree::new(start);
    let mut tb = Tree::new(goal);
    // true while `ta` is rooted at the start
    let mut a_is_start = true;
    let mut iterations = 0;
    loop {
        let elapsed = clock.now_s() - t0;
        if iterations >= budget.max_iterations || elapsed >= budget.wall_clock_seconds {
            return Err(Error::NoPlanFound {
                iterations,
                seconds: elapsed,
            });
        }
        iterations += 1;
        let target = if rng.random::<f64>() < params.goal_bias {
            tb.nodes[0].clone()
        } else {
            spec.sample_uniform(rng).0
        };
        let new = match extend(&mut ta, &checker, &target, params) {
            Extend::Trapped => None,
            Extend::Advanced(i) | Extend::Reached(i) => Some(i),
        };
        if let Some(i) = new {
            let q = ta.nodes[i].clone();
            if let Extend::Reached(j) = connect(&mut tb, &checker, &q, params) {
                let mut from_a = ta.path_to_root(i);
                from_a.reverse();
                let from_b = tb.path_to_root(j);
                // the joint node is present in both halves
                from_a.extend(from_b.into_iter().skip(1));
                if !a_is_start {
                    from_a.reverse();
                }
                let raw = Plan::new(from_a.into_iter().map(JointConfig).collect(), Representation::Raw, scene.seed);
                return Ok(shortcut_smooth_with(&checker, raw, params.shortcut_rounds, params.resolution, rng));
            }
        }
        core::mem::swap(&mut ta, &mut tb);
        a_is_start = !a_is_start;
    }
}

fn point_at(configs: &[JointConfig], cum: &[f64], s: f64) -> (usize, Vec<f64>) {
    // segment index k with cum[k] <= s <= cum[k+1]
    let k = match cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
        Ok(k) => k.min(configs.len() - 2),
        Err(k) => k.saturating_sub(1).min(configs.len() - 2),
    };
    let seg = cum[k + 1] - cum[k];
    let t = if seg > 0.0 { ((s - cum[k]) / seg).clamp(0.0, 1.0) } else { 0.0 };
    let q = configs[k].iter().zip(configs[k + 1].iter()).map(|(a, b)| a + t * (b - a)).collect();
    (k, q)
}

fn shortcut_smooth_with(checker: &Checker<'_>, plan: Plan, rounds: usize, resolution: f64, rng: &mut impl Rng) -> Plan {
    let rep = plan.representation;
    let id = plan.scene_id;
    let mut configs = plan.configs;
    for _ in 0..rounds {
        if configs.len() < 3 {
            break;
        }
        let mut cum = Vec::with_capacity(configs.len());
        cum.push(0.0);
        for w in configs.windows(2) {
            let last = *cum.last().unwrap();
            cum.push(last + math::dist2(&w[0], &w[1]));
        }
        let total = *cum.last().unwrap();
        if total <= 0.0 {
            break;
        }
        let mut s1 = rng.random_range(0.0..total);
        let mut s2 = rng.random_range(0.0..total);
        if s1 > s2 {
            core::mem::swap(&mut s1, &mut s2);
        }
        let (k1, q1) = point_at(&configs, &cum, s1);
        let (k2, q2) = point_at(&configs, &cum, s2);
        if k1 == k2 {
            continue;
        }
        let old = (cum[k1 + 1] - s1) + (cum[k2] - cum[k1 + 1]) + (s2 - cum[k2]);
        let new = math::dist2(&q1, &q2);
        if new >= old || !checker.edge_valid(&q1, &q2, resolution) {
            continue;
        }
        let mut next = Vec::with_capacity(configs.len());
        next.extend_from_slice(&configs[..=k1]);
        next.push(JointConfig(q1));
        next.push(JointConfig(q2));
        next.extend_from_slice(&configs[k2 + 1..]);
        configs = Plan::new(next, rep, id).configs;
    }
    // greedy vertex pass: jump to the farthest directly reachable vertex
    let mut out = vec![configs[0].clone()];
    let mut i = 0;
    while i + 1 < configs.len() {
        let mut j = configs.len() - 1;
        while j > i + 1 && !checker.edge_valid(&configs[i], &configs[j], resolution) {
            j -= 1;
        }
        out.push(configs[j].clone());
        i = j;
    }
    Plan::new(out, rep, id)
}

/// Random-shortcut smoothing followed by a greedy vertex pass. Never
/// lengthens the plan, keeps both endpoints and only introduces edges that
/// pass [`Checker::edge_valid`].
pub fn shortcut_smooth(spec: &ArmSpec, scene: &Scene, plan: Plan, rounds: usize, rng: &mut impl Rng) -> Plan {
    let checker = Checker::new(spec, scene);
    shortcut_smooth_with(&checker, plan, rounds, DEFAULT_EDGE_RESOLUTION, rng)
}

/// Re-checks every edge of a plan and its joint limits.
pub fn plan_is_valid(spec: &ArmSpec, scene: &Scene, plan: &Plan, resolution: f64) -> bool {
    let checker = Checker::new(spec, scene);
    if plan.configs.is_empty() || !plan.configs.iter().all(|q| checker.config_valid(q)) {
        return false;
    }
    plan.configs.windows(2).all(|w| checker.edge_valid(&w[0], &w[1], resolution))
}
