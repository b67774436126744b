//! Batched neural trajectory generation.
//!
//! Each round samples one action window per live candidate, appends the
//! de-normalized window to the candidate's plan and collision-checks the new
//! part. A candidate that collides is dropped; one that is collision-free but
//! short of the goal continues from its last configuration in the next round.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::arm::{ArmSpec, Checker, JointConfig, DEFAULT_EDGE_RESOLUTION};
use crate::clock::Clock;
use crate::data::Normalizer;
use crate::diffusion::{sample_actions, Denoiser, DiffusionSchedule, SampleConfig};
use crate::math;
use crate::oracle::{Plan, Representation};
use crate::rng::derive_seed;
use crate::scene::Scene;
use crate::{Error, Result};

/// Anything that maps conditions to normalized action windows.
pub trait ActionModel {
    fn action_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    fn cond_dim(&self) -> usize;
    fn representation(&self) -> Representation;
    /// One `horizon x action_dim` row-major window per condition; row `i`
    /// must depend only on `conds[i]` and `row_seeds[i]`.
    fn sample(&self, conds: &[Vec<f64>], row_seeds: &[u64]) -> Result<Vec<Vec<f64>>>;
}

/// A trained denoiser together with its reverse process.
#[derive(Debug, Clone)]
pub struct DiffusionPolicy {
    pub denoiser: Denoiser,
    pub schedule: DiffusionSchedule,
    pub sampling: SampleConfig,
    pub representation: Representation,
}

impl ActionModel for DiffusionPolicy {
    fn action_dim(&self) -> usize {
        self.denoiser.spec.action_dim
    }

    fn horizon(&self) -> usize {
        self.denoiser.spec.horizon
    }

    fn cond_dim(&self) -> usize {
        self.denoiser.spec.cond_dim
    }

    fn representation(&self) -> Representation {
        self.representation
    }

    fn sample(&self, conds: &[Vec<f64>], row_seeds: &[u64]) -> Result<Vec<Vec<f64>>> {
        sample_actions(&self.denoiser, &self.schedule, conds, row_seeds, &self.sampling)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub scene: Scene,
    pub start: JointConfig,
    pub goal: JointConfig,
    /// Candidates per batch.
    pub k: usize,
    /// L-infinity goal tolerance, radians.
    pub goal_tol: f64,
    pub max_rounds: usize,
    /// Spacing of the interpolated plan that is collision-checked, radians.
    pub interp_step: f64,
    pub collision_resolution: f64,
}

impl PlanRequest {
    pub fn new(scene: Scene, start: JointConfig, goal: JointConfig) -> Self {
        PlanRequest {
            scene,
            start,
            goal,
            k: 32,
            goal_tol: 0.05,
            max_rounds: 4,
            interp_step: 0.05,
            collision_resolution: DEFAULT_EDGE_RESOLUTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(alloc::format!("plan request: {m}")));
        if self.k == 0 || self.max_rounds == 0 {
            return bad("k and max_rounds must be at least 1");
        }
        if !(self.goal_tol > 0.0 && self.interp_step > 0.0 && self.collision_resolution > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.start.len() != self.goal.len() {
            return bad("start and goal differ in dimension");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    NoPlanWithinRounds,
    AllCollide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Success,
    Failure(FailureReason),
}

/// Outcome of one candidate in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDiag {
    pub round: usize,
    pub index: usize,
    pub collision_free: bool,
    pub reached_goal: bool,
    /// Arc length of the candidate's plan so far.
    pub arc_length: f64,
}

/// Every configuration a candidate visited, tagged with the round that
/// produced it and whether the edge leading into it collides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTrace {
    pub configs: Vec<JointConfig>,
    pub rounds: Vec<usize>,
    pub collides: Vec<bool>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub inference_s: f64,
    pub collision_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub status: PlanStatus,
    pub best_plan: Option<Plan>,
    pub k: usize,
    /// Diagnostics of the candidates alive in each round.
    pub rounds: Vec<Vec<CandidateDiag>>,
    pub traces: Vec<CandidateTrace>,
    pub timing: Timing,
    pub rounds_used: usize,
}

impl PlanResult {
    pub fn is_success(&self) -> bool {
        self.status == PlanStatus::Success
    }
}

/// Fraction of the `k` first-round candidates that are collision-free and
/// reach the goal.
pub fn in_batch_success_rate(result: &PlanResult) -> f64 {
    in_batch_success_rate_of(result.rounds.first().map_or(&[][..], |r| r), result.k)
}

/// [`in_batch_success_rate`] from raw first-round diagnostics.
pub fn in_batch_success_rate_of(first_round: &[CandidateDiag], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let ok = first_round.iter().filter(|d| d.collision_free && d.reached_goal).count();
    ok as f64 / k as f64
}

/// Inputs fixed for a whole planning call besides the request.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext<'a> {
    pub arm: &'a ArmSpec,
    pub normalizer: &'a Normalizer,
    /// Scene embedding appended to the condition; `None` for ablation models.
    pub embedding: Option<&'a [f64]>,
}

struct Candidate {
    configs: Vec<JointConfig>,
    trace: CandidateTrace,
    alive: bool,
}

/// Points every `step` along `a -> b`, excluding `a` and including `b`.
fn interpolate(a: &[f64], b: &[f64], step: f64) -> Vec<Vec<f64>> {
    let d = math::dist2(a, b);
    let n = (math::ceil(d / step) as usize).max(1);
    (1..=n).map(|i| math::lerp(a, b, i as f64 / n as f64)).collect()
}

/// Samples `request.k` candidate plans per round and returns the shortest one
/// that is collision-free and ends within `goal_tol` of the goal.
///
/// Candidate `i` in round `r` is seeded with `derive_seed(derive_seed(seed, r), i)`,
/// so the first `k` candidates behave the same for every batch size `>= k`.
pub fn plan_batched(
    model: &impl ActionModel,
    ctx: &PlanContext<'_>,
    request: &PlanRequest,
    seed: u64,
    clock: &impl Clock,
) -> Result<PlanResult> {
    request.validate()?;
    let d = ctx.arm.dof;
    if request.start.len() != d || model.action_dim() != d || ctx.normalizer.dim() != d {
        return Err(Error::ConfigMismatch {
            what: "joint count",
            expected: d,
            got: if model.action_dim() != d { model.action_dim() } else { request.start.len() },
        });
    }
    let emb_len = ctx.embedding.map_or(0, |e| e.len());
    if model.cond_dim() != 2 * d + emb_len {
        return Err(Error::ConfigMismatch {
            what: "condition dim",
            expected: model.cond_dim(),
            got: 2 * d + emb_len,
        });
    }
    let t0 = clock.now_s();
    let checker = Checker::new(ctx.arm, &request.scene);
    let rep = model.representation();
    let goal = &request.goal;
    let goal_norm = ctx.normalizer.normalize(goal);
    let reached = |q: &[f64]| math::dist_inf(q, goal) <= request.goal_tol;
    let mut timing = Timing::default();

    let start_ok = checker.config_valid(&request.start);
    let mut cands: Vec<Candidate> = (0..request.k)
        .map(|_| Candidate {
            configs: alloc::vec![request.start.clone()],
            trace: CandidateTrace {
                configs: alloc::vec![request.start.clone()],
                rounds: alloc::vec![0],
                collides: alloc::vec![!start_ok],
            },
            alive: start_ok,
        })
        .collect();

    if start_ok && reached(&request.start) {
        let diags = (0..request.k)
            .map(|i| CandidateDiag {
                round: 0,
                index: i,
                collision_free: true,
                reached_goal: true,
                arc_length: 0.0,
            })
            .collect();
        timing.total_s = clock.now_s() - t0;
        return Ok(PlanResult {
            status: PlanStatus::Success,
            best_plan: Some(Plan::new(alloc::vec![request.start.clone()], rep, request.scene.seed)),
            k: request.k,
            rounds: alloc::vec![diags],
            traces: cands.into_iter().map(|c| c.trace).collect(),
            timing,
            rounds_used: 1,
        });
    }

    let mut rounds = Vec::new();
    let mut best: Option<Plan> = None;
    let mut all_collide_first = !start_ok;
    let h = model.horizon();
    for round in 0..request.max_rounds {
        let live: Vec<usize> = (0..cands.len()).filter(|&i| cands[i].alive).collect();
        if live.is_empty() {
            break;
        }
        let round_seed = derive_seed(seed, round as u64);
        let conds: Vec<Vec<f64>> = live
            .iter()
            .map(|&i| {
                let cur = cands[i].configs.last().unwrap();
                let mut c = ctx.normalizer.normalize(cur);
                c.extend_from_slice(&goal_norm);
                if let Some(e) = ctx.embedding {
                    c.extend_from_slice(e);
                }
                c
            })
            .collect();
        let seeds: Vec<u64> = live.iter().map(|&i| derive_seed(round_seed, i as u64)).collect();
        let ti = clock.now_s();
        let windows = model.sample(&conds, &seeds)?;
        timing.inference_s += clock.now_s() - ti;
        if windows.len() != live.len() || windows.iter().any(|w| w.len() != h * d) {
            return Err(Error::InvalidArgument("model returned malformed windows".into()));
        }

        let tc = clock.now_s();
        let mut diags = Vec::with_capacity(live.len());
        for (&i, w) in live.iter().zip(&windows) {
            let cand = &mut cands[i];
            let mut prev = cand.configs.last().unwrap().0.clone();
            let mut free = true;
            let mut hit = false;
            for row in w.chunks(d) {
                let q = ctx.normalizer.denormalize(row);
                let ok = interpolate(&prev, &q, request.interp_step)
                    .iter()
                    .scan(prev.clone(), |p, next| {
                        let ok = checker.edge_valid(p, next, request.collision_resolution);
                        *p = next.clone();
                        Some(ok)
                    })
                    .all(|ok| ok);
                cand.trace.configs.push(JointConfig(q.clone()));
                cand.trace.rounds.push(round);
                cand.trace.collides.push(!ok);
                if !ok {
                    free = false;
                    break;
                }
                cand.configs.push(JointConfig(q.clone()));
                prev = q;
                if reached(&prev) {
                    hit = true;
                    break;
                }
            }
            cand.alive = free && !hit;
            let arc = crate::oracle::arc_length(&cand.configs);
            diags.push(CandidateDiag {
                round,
                index: i,
                collision_free: free,
                reached_goal: free && hit,
                arc_length: arc,
            });
            if free && hit {
                let plan = Plan::new(cand.configs.clone(), rep, request.scene.seed);
                if best.as_ref().is_none_or(|b| plan.arc_length < b.arc_length) {
                    best = Some(plan);
                }
            }
        }
        timing.collision_s += clock.now_s() - tc;
        if round == 0 {
            all_collide_first = diags.iter().all(|c| !c.collision_free);
        }
        rounds.push(diags);
        if best.is_some() {
            break;
        }
    }
    let status = match (&best, all_collide_first) {
        (Some(_), _) => PlanStatus::Success,
        (None, true) => PlanStatus::Failure(FailureReason::AllCollide),
        (None, false) => PlanStatus::Failure(FailureReason::NoPlanWithinRounds),
    };
    timing.total_s = clock.now_s() - t0;
    Ok(PlanResult {
        status,
        best_plan: best,
        k: request.k,
        rounds_used: rounds.len(),
        rounds,
        traces: cands.into_iter().map(|c| c.trace).collect(),
        timing,
    })
}

/// Human-readable status, e.g. for CSV cells.
pub fn status_label(status: &PlanStatus) -> String {
    match status {
        PlanStatus::Success => "success".into(),
        PlanStatus::Failure(FailureReason::NoPlanWithinRounds) => "no_plan_within_rounds".into(),
        PlanStatus::Failure(FailureReason::AllCollide) => "all_collide".into(),
    }
}
