use std::collections::BTreeMap;
use std::path::Path;

use keyplan_core::arm::{ArmSpec, JointConfig};
use keyplan_core::clock::Clock;
use keyplan_core::data::{Dataset, Normalizer, Split};
use keyplan_core::metrics::{compare_runtime, evaluate as aggregate, EvalReport, Summary, TaskOutcome, HISTOGRAM_BINS};
use keyplan_core::neuro::{
    in_batch_success_rate, plan_batched, status_label, ActionModel, PlanContext, PlanRequest, PlanResult, Timing,
};
use keyplan_core::oracle::{plan_oracle, Plan};
use keyplan_core::rng::{derive_seed, stream};
use keyplan_core::scene::Scene;
use keyplan_core::Error;

use super::train::{load_model, scene_embeddings};
use super::{opt, write_csv, write_kv, write_text};
use crate::config::{BaselineConfig, EvaluateConfig, PlanConfig, PlannerParams};
use crate::error::{CliError, Result};
use crate::formats::{read_shard, write_json};
use crate::{plot, WallClock};

/// One held-out planning problem.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTask {
    pub id: u64,
    pub scene_index: usize,
    pub scene: Scene,
    pub start: JointConfig,
    pub goal: JointConfig,
    pub reference: Option<Plan>,
    pub reference_keypoints: Option<usize>,
}

/// Every test-split plan as a task, identified by its plan index.
pub fn test_tasks(ds: &Dataset) -> Vec<EvalTask> {
    ds.plan_indices(Split::Test, false)
        .into_iter()
        .map(|i| {
            let rec = &ds.plans[i];
            EvalTask {
                id: i as u64,
                scene_index: rec.scene_index,
                scene: ds.scenes[rec.scene_index].scene.clone(),
                start: rec.plan.start().clone(),
                goal: rec.plan.goal().clone(),
                reference: Some(rec.plan.clone()),
                reference_keypoints: Some(ds.keypoint_count(i)),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TaskRun {
    pub scene_index: usize,
    pub outcome: TaskOutcome,
    pub result: PlanResult,
}

fn request(task: &EvalTask, p: &PlannerParams) -> PlanRequest {
    PlanRequest {
        k: p.k,
        goal_tol: p.goal_tol,
        max_rounds: p.max_rounds,
        interp_step: p.interp_step,
        collision_resolution: p.collision_resolution,
        ..PlanRequest::new(task.scene.clone(), task.start.clone(), task.goal.clone())
    }
}

/// Plans every task with `model`. Task `id` is planned with seed
/// `derive_seed(seed, id)`; `embeddings` is indexed by scene index.
#[allow(clippy::too_many_arguments)]
pub fn run_tasks(
    model: &impl ActionModel,
    arm: &ArmSpec,
    normalizer: &Normalizer,
    tasks: &[EvalTask],
    embeddings: Option<&[Vec<f64>]>,
    params: &PlannerParams,
    seed: u64,
    clock: &impl Clock,
) -> Result<Vec<TaskRun>> {
    let mut runs = Vec::with_capacity(tasks.len());
    for (n, t) in tasks.iter().enumerate() {
        let ctx = PlanContext {
            arm,
            normalizer,
            embedding: embeddings.map(|e| e[t.scene_index].as_slice()),
        };
        let result = plan_batched(model, &ctx, &request(t, params), derive_seed(seed, t.id), clock)?;
        let length_diff = match (&result.best_plan, &t.reference) {
            (Some(b), Some(r)) => Some(keyplan_core::metrics::length_diff(b, r)),
            _ => None,
        };
        let outcome = TaskOutcome {
            task_id: t.id,
            success: result.is_success(),
            reference_keypoints: t.reference_keypoints,
            length_diff,
            in_batch: in_batch_success_rate(&result),
            rounds_used: result.rounds_used,
            timing: result.timing,
        };
        if (n + 1) % 50 == 0 {
            eprintln!("tasks {}/{}", n + 1, tasks.len());
        }
        runs.push(TaskRun {
            scene_index: t.scene_index,
            outcome,
            result,
        });
    }
    Ok(runs)
}

const TASK_HEADER: [&str; 12] = [
    "task_id",
    "scene_index",
    "success",
    "status",
    "reference_keypoints",
    "hard",
    "length_diff",
    "in_batch",
    "rounds_used",
    "inference_s",
    "collision_s",
    "total_s",
];

pub fn write_task_csv(out: &Path, name: &str, runs: &[TaskRun], files: &mut Vec<String>) -> Result<()> {
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            let o = &r.outcome;
            vec![
                o.task_id.to_string(),
                r.scene_index.to_string(),
                o.success.to_string(),
                status_label(&r.result.status),
                o.reference_keypoints.map(|k| k.to_string()).unwrap_or_default(),
                o.is_hard().to_string(),
                opt(o.length_diff),
                o.in_batch.to_string(),
                o.rounds_used.to_string(),
                o.timing.inference_s.to_string(),
                o.timing.collision_s.to_string(),
                o.timing.total_s.to_string(),
            ]
        })
        .collect();
    write_csv(out, name, &TASK_HEADER, &rows, files)
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::Reader::from_path(path).map_err(|e| CliError::format(path, e))
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CliError::format(path, format!("bad value in column {i} of {rec:?}")))
}

fn opt_field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<Option<T>> {
    match rec.get(i) {
        Some("") => Ok(None),
        _ => field(path, rec, i).map(Some),
    }
}

/// Parses a raw per-task CSV back into outcomes.
pub fn read_task_csv(path: &Path) -> Result<Vec<TaskOutcome>> {
    let mut r = reader(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::format(path, e))?;
        out.push(TaskOutcome {
            task_id: field(path, &rec, 0)?,
            success: field(path, &rec, 2)?,
            reference_keypoints: opt_field(path, &rec, 4)?,
            length_diff: opt_field(path, &rec, 6)?,
            in_batch: field(path, &rec, 7)?,
            rounds_used: field(path, &rec, 8)?,
            timing: Timing {
                inference_s: field(path, &rec, 9)?,
                collision_s: field(path, &rec, 10)?,
                total_s: field(path, &rec, 11)?,
            },
        });
    }
    Ok(out)
}

/// One candidate's diagnostics in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRow {
    pub task_id: u64,
    pub k: usize,
    pub round: usize,
    pub index: usize,
    pub collision_free: bool,
    pub reached_goal: bool,
    pub arc_length: f64,
}

pub fn write_candidates_csv(out: &Path, name: &str, runs: &[TaskRun], files: &mut Vec<String>) -> Result<()> {
    let mut rows = Vec::new();
    for r in runs {
        for d in r.result.rounds.iter().flatten() {
            rows.push(vec![
                r.outcome.task_id.to_string(),
                r.result.k.to_string(),
                d.round.to_string(),
                d.index.to_string(),
                d.collision_free.to_string(),
                d.reached_goal.to_string(),
                d.arc_length.to_string(),
            ]);
        }
    }
    let header = ["task_id", "k", "round", "index", "collision_free", "reached_goal", "arc_length"];
    write_csv(out, name, &header, &rows, files)
}

pub fn read_candidates_csv(path: &Path) -> Result<Vec<CandidateRow>> {
    let mut r = reader(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::format(path, e))?;
        out.push(CandidateRow {
            task_id: field(path, &rec, 0)?,
            k: field(path, &rec, 1)?,
            round: field(path, &rec, 2)?,
            index: field(path, &rec, 3)?,
            collision_free: field(path, &rec, 4)?,
            reached_goal: field(path, &rec, 5)?,
            arc_length: field(path, &rec, 6)?,
        });
    }
    Ok(out)
}

pub(super) fn plan(cfg: &PlanConfig, out: &Path) -> Result<Vec<String>> {
    let ds = read_shard(&cfg.dataset)?.dataset;
    let tasks = test_tasks(&ds);
    let task = tasks
        .get(cfg.task)
        .ok_or_else(|| CliError::Usage(format!("task {} out of range ({} held-out tasks)", cfg.task, tasks.len())))?;
    let m = load_model(&cfg.model, cfg.planner.init)?;
    let emb = match &m.autoencoder {
        Some(ae) => Some(scene_embeddings(ae, &ds)?),
        None => None,
    };
    let runs = run_tasks(
        &m.policy,
        &ds.config.arm,
        &m.sidecar.meta.normalizer,
        std::slice::from_ref(task),
        emb.as_deref(),
        &cfg.planner,
        cfg.seed,
        &WallClock::new(),
    )?;
    let run = &runs[0];
    let d = ds.config.arm.dof;
    let mut files = Vec::new();

    let mut header = vec!["candidate".to_string(), "round".into(), "step".into()];
    header.extend((1..=d).map(|j| format!("q_{j}")));
    header.push("collision_flag".into());
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut rows = Vec::new();
    for (c, tr) in run.result.traces.iter().enumerate() {
        for (s, q) in tr.configs.iter().enumerate() {
            let mut row = vec![c.to_string(), tr.rounds[s].to_string(), s.to_string()];
            row.extend(q.iter().map(|x| x.to_string()));
            row.push(u8::from(tr.collides[s]).to_string());
            rows.push(row);
        }
    }
    write_csv(out, "candidates.csv", &header, &rows, &mut files)?;
    let best_rows: Vec<Vec<String>> = run
        .result
        .best_plan
        .iter()
        .flat_map(|p| p.configs.iter().enumerate())
        .map(|(s, q)| std::iter::once(s.to_string()).chain(q.iter().map(|x| x.to_string())).collect())
        .collect();
    let mut bh = vec!["step"];
    bh.extend(&header[3..3 + d]);
    write_csv(out, "best_plan.csv", &bh, &best_rows, &mut files)?;
    write_json(&out.join("result.json"), &run.result)?;
    files.push("result.json".into());

    let mut paths: Vec<(Vec<JointConfig>, &str)> = Vec::new();
    if let Some(b) = &run.result.best_plan {
        paths.push((b.configs.clone(), "#1f77b4"));
    }
    if let Some(r) = &task.reference {
        paths.push((r.configs.clone(), "#555555"));
    }
    for tr in &run.result.traces {
        paths.push((tr.configs.clone(), if tr.collides.iter().any(|&c| c) { "#ffaaaa" } else { "#aaccff" }));
    }
    if ds.config.scene.dim() == 2 {
        write_text(out, "plan.svg", &plot::scene_chart(&format!("task {}", task.id), &task.scene, &ds.config.arm, &paths), &mut files)?;
    }
    let o = &run.outcome;
    write_kv(
        out,
        "metrics.csv",
        &[
            ("task_id", o.task_id.to_string()),
            ("status", status_label(&run.result.status)),
            ("rounds_used", o.rounds_used.to_string()),
            ("in_batch", o.in_batch.to_string()),
            ("best_arc_length", opt(run.result.best_plan.as_ref().map(|p| p.arc_length))),
            ("length_diff", opt(o.length_diff)),
        ],
        &mut files,
    )?;
    Ok(files)
}

fn summary_cells(s: Option<Summary>) -> [String; 4] {
    match s {
        Some(s) => [s.mean, s.var, s.max, s.min].map(|v| v.to_string()),
        None => Default::default(),
    }
}

/// Table-2-shaped row of an evaluation report.
pub fn metrics_row(name: &str, r: &EvalReport, outcomes: &[TaskOutcome]) -> Vec<String> {
    let in_batch = outcomes.iter().filter(|o| o.reference_keypoints.is_some()).map(|o| o.in_batch);
    let mean_in_batch = in_batch.clone().sum::<f64>() / r.tasks as f64;
    let mut row = vec![
        name.to_string(),
        r.tasks.to_string(),
        r.hard_tasks.to_string(),
        r.without_reference.to_string(),
        r.success_all.to_string(),
        opt(r.success_hard),
    ];
    row.extend(summary_cells(r.length_diff));
    row.push(mean_in_batch.to_string());
    row
}

pub const METRICS_HEADER: [&str; 11] = [
    "model",
    "tasks",
    "hard_tasks",
    "without_reference",
    "success_all",
    "success_hard",
    "length_diff_mean",
    "length_diff_var",
    "length_diff_max",
    "length_diff_min",
    "in_batch_mean",
];

pub(super) fn evaluate(cfg: &EvaluateConfig, out: &Path) -> Result<Vec<String>> {
    let ds = read_shard(&cfg.dataset)?.dataset;
    let mut tasks = test_tasks(&ds);
    if let Some(n) = cfg.max_tasks {
        tasks.truncate(n);
    }
    if tasks.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    let mut files = Vec::new();
    let mut metrics = Vec::new();
    let mut timing = Vec::new();
    let mut hist_rows = Vec::new();
    let mut hists = Vec::new();
    let mut reports = BTreeMap::new();
    for entry in &cfg.models {
        eprintln!("evaluating {} on {} tasks", entry.name, tasks.len());
        let m = load_model(&entry.path, cfg.planner.init)?;
        let emb = match &m.autoencoder {
            Some(ae) => Some(scene_embeddings(ae, &ds)?),
            None => None,
        };
        let runs = run_tasks(
            &m.policy,
            &ds.config.arm,
            &m.sidecar.meta.normalizer,
            &tasks,
            emb.as_deref(),
            &cfg.planner,
            cfg.seed,
            &WallClock::new(),
        )?;
        write_task_csv(out, &format!("tasks_{}.csv", entry.name), &runs, &mut files)?;
        write_candidates_csv(out, &format!("candidates_{}.csv", entry.name), &runs, &mut files)?;
        let outcomes: Vec<TaskOutcome> = runs.into_iter().map(|r| r.outcome).collect();
        let report = aggregate(&outcomes)?;
        metrics.push(metrics_row(&entry.name, &report, &outcomes));
        for (q, s) in [("total_s", report.total_s), ("inference_s", report.inference_s), ("collision_s", report.collision_s)] {
            let mut row = vec![entry.name.clone(), q.to_string()];
            row.extend(summary_cells(s));
            timing.push(row);
        }
        for (b, n) in report.in_batch_histogram.iter().enumerate() {
            let lo = b as f64 / HISTOGRAM_BINS as f64;
            hist_rows.push(vec![entry.name.clone(), lo.to_string(), (lo + 0.1).min(1.0).to_string(), n.to_string()]);
        }
        hists.push((entry.name.clone(), report.in_batch_histogram));
        reports.insert(entry.name.clone(), report);
    }
    write_csv(out, "metrics.csv", &METRICS_HEADER, &metrics, &mut files)?;
    write_csv(out, "timing.csv", &["model", "quantity", "mean", "var", "max", "min"], &timing, &mut files)?;
    write_csv(out, "in_batch.csv", &["model", "bin_lo", "bin_hi", "tasks"], &hist_rows, &mut files)?;
    let series: Vec<(&str, [usize; HISTOGRAM_BINS])> = hists.iter().map(|(n, h)| (n.as_str(), *h)).collect();
    write_text(out, "in_batch.svg", &plot::histogram_chart("in-batch success rate", "fraction of batch", &series), &mut files)?;
    write_json(&out.join("report.json"), &reports)?;
    files.push("report.json".into());
    Ok(files)
}

pub(super) fn baseline_oracle(cfg: &BaselineConfig, out: &Path) -> Result<Vec<String>> {
    let ds = read_shard(&cfg.dataset)?.dataset;
    let tasks: BTreeMap<u64, EvalTask> = test_tasks(&ds).into_iter().map(|t| (t.id, t)).collect();
    let neural_rows = read_task_csv(&cfg.tasks)?;
    if neural_rows.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    let clock = WallClock::new();
    let mut neural = Vec::new();
    let mut budget = Vec::new();
    let mut actual = Vec::new();
    let mut rows = Vec::new();
    for n in &neural_rows {
        let t = tasks.get(&n.task_id).ok_or_else(|| {
            Error::InvalidArgument(format!("task list mismatch: task {} is not a held-out task of this dataset", n.task_id))
        })?;
        let mut rng = stream(cfg.seed, t.id);
        let t0 = clock.now_s();
        let res = plan_oracle(&ds.config.arm, &t.scene, &t.start, &t.goal, &cfg.budget, &ds.config.oracle, &mut rng, &clock);
        let elapsed = clock.now_s() - t0;
        neural.push((n.task_id, n.timing));
        budget.push((n.task_id, cfg.budget.wall_clock_seconds));
        actual.push((n.task_id, elapsed));
        rows.push((n.task_id, elapsed, res.is_ok(), n.timing));
    }
    let by_budget = compare_runtime(&neural, &budget)?;
    let by_actual = compare_runtime(&neural, &actual)?;
    rows.sort_by_key(|r| r.0);
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .zip(&by_budget.rows)
        .map(|((id, el, ok, tm), r)| {
            vec![
                id.to_string(),
                cfg.budget.wall_clock_seconds.to_string(),
                el.to_string(),
                ok.to_string(),
                tm.total_s.to_string(),
                tm.inference_s.to_string(),
                tm.collision_s.to_string(),
                r.ratio.to_string(),
            ]
        })
        .collect();
    let mut files = Vec::new();
    let header = [
        "task_id",
        "oracle_budget_s",
        "oracle_actual_s",
        "oracle_success",
        "neural_total_s",
        "neural_inference_s",
        "neural_collision_s",
        "ratio",
    ];
    write_csv(out, "runtime.csv", &header, &csv_rows, &mut files)?;
    let oracle_ok = rows.iter().filter(|r| r.2).count();
    write_kv(
        out,
        "runtime_summary.csv",
        &[
            ("tasks", rows.len().to_string()),
            ("oracle_budget_s", cfg.budget.wall_clock_seconds.to_string()),
            ("mean_oracle_actual_s", by_actual.mean_oracle_s.to_string()),
            ("oracle_success", oracle_ok.to_string()),
            ("mean_neural_s", by_budget.mean_neural_s.to_string()),
            ("mean_inference_s", by_budget.mean_inference_s.to_string()),
            ("mean_collision_s", by_budget.mean_collision_s.to_string()),
            ("ratio_budget", by_budget.ratio.to_string()),
            ("ratio_actual", by_actual.ratio.to_string()),
        ],
        &mut files,
    )?;
    write_kv(
        out,
        "metrics.csv",
        &[
            ("tasks", rows.len().to_string()),
            ("oracle_budget_s", cfg.budget.wall_clock_seconds.to_string()),
            ("oracle_max_iterations", cfg.budget.max_iterations.to_string()),
        ],
        &mut files,
    )?;
    Ok(files)
}
