//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.
//!
//! Desk-scale artifacts are kept under the cargo target directory and reused
//! when their manifest records the same configuration.

#[path = "../../core/tests/support/mod.rs"]
mod support;
mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use keyplan::config::{Mode, ModelEntry};
use keyplan::formats::{read_json, read_shard};
use keyplan::manifest::Manifest;
use keyplan::pipeline::{self, manifest_path, read_candidates_csv, read_task_csv, resolve, Overrides};
use keyplan_core::arm::{config_valid, Checker, ArmSpec, DEFAULT_EDGE_RESOLUTION};
use keyplan_core::data::{refine_partition, SecondDiffNorm, Split};
use keyplan_core::metrics::{evaluate, HARD_KEYPOINTS};
use keyplan_core::oracle::Representation;
use keyplan_core::rng::rng_from_seed;
use support::collision::{config_valid_sampled, desk_scenes, edge_cases, edge_valid_dense};
use support::gradcheck::{max_rel_error, REL_TOL};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let spec = ArmSpec::desk();
    let scenes = desk_scenes(50);
    let mut rng = rng_from_seed(7);
    let mut config_disagree = 0;
    for i in 0..1000 {
        let scene = &scenes[i % scenes.len()];
        let q = spec.sample_uniform(&mut rng);
        config_disagree += (config_valid(&spec, scene, &q) != config_valid_sampled(&spec, scene, &q, 1000)) as usize;
    }
    let mut edge_disagree = 0;
    for (s, a, b) in edge_cases(&spec, &scenes, 1000, 99) {
        let checker = Checker::new(&spec, &scenes[s]);
        let coarse = checker.edge_valid(&a, &b, DEFAULT_EDGE_RESOLUTION);
        edge_disagree += (coarse != edge_valid_dense(&a, &b, 1e-4, |q| checker.config_valid(q))) as usize;
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        config_disagree == 0 && edge_disagree == 0 && secs < 60.0,
        format!("config {config_disagree}/1000 and edge {edge_disagree}/1000 disagreements in {secs:.1} s"),
    )
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let mut worst = ("", 0.0f64);
    let mut n = 0;
    for (name, f, inputs) in support::ops::op_cases() {
        let e = max_rel_error(&*f, &inputs);
        n += 1;
        if e >= worst.1 {
            worst = (name, e);
        }
    }
    let denoiser = support::models::denoiser_graph_error();
    let ae = support::models::autoencoder_graph_error();
    let secs = t.elapsed().as_secs_f64();
    let max = worst.1.max(denoiser).max(ae);
    outcome(
        max < REL_TOL && secs < 300.0,
        format!(
            "{n} ops worst {} {:.1e}, denoiser {denoiser:.1e}, autoencoder {ae:.1e} (tol {REL_TOL:.0e}) in {secs:.1} s",
            worst.0, worst.1
        ),
    )
}

fn diffusion_sanity() -> Outcome {
    let steps = 1500;
    let (hist, err) = support::models::overfit_one(steps);
    let rev = support::models::reverse_step_error();
    outcome(
        err <= 0.05 && rev < 1e-9,
        format!(
            "overfit L-inf {err:.4} after {steps} steps (loss {:.3} -> {:.5}), reverse step closed form {rev:.1e}",
            hist[0],
            hist.last().unwrap()
        ),
    )
}

fn second_diff(p: &[f64], c: &[f64], n: &[f64], norm: SecondDiffNorm) -> f64 {
    let v: Vec<f64> = (0..c.len()).map(|k| n[k] - 2.0 * c[k] + p[k]).collect();
    match norm {
        SecondDiffNorm::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        SecondDiffNorm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
    }
}

fn dataset_properties(dataset: &Path) -> Outcome {
    let shard = read_shard(dataset).unwrap();
    let ds = &shard.dataset;
    let norm = ds.config.keypoint_norm;
    let eps = ds.epsilon;
    let mut kp_violations = 0;
    let mut spacing = 0.0f64;
    for i in 0..100.min(ds.plans.len()) {
        let fixed = ds.fixed_step(i);
        let kp = ds.keypoints(i);
        kp_violations += (kp.start() != fixed.start()) as usize + (kp.goal() != fixed.goal()) as usize;
        let c = &fixed.configs;
        let mut kept = kp.configs.iter().skip(1).peekable();
        for j in 1..c.len().saturating_sub(1) {
            let d = second_diff(&c[j - 1], &c[j], &c[j + 1], norm);
            if kept.peek() == Some(&&c[j]) {
                kept.next();
                kp_violations += (d <= eps) as usize;
            } else {
                kp_violations += (d > eps) as usize;
            }
        }
        let steps: Vec<f64> = c
            .windows(2)
            .map(|w| w[0].iter().zip(w[1].iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .collect();
        for s in &steps {
            spacing = spacing.max((s - steps[0]).abs());
        }
    }

    let train = ds.plan_indices(Split::Train, false);
    let kp_total: usize = train.iter().map(|&i| ds.keypoints(i).len() - 1).sum();
    let kp_samples = shard.samples.iter().filter(|s| ds.split_of(s.plan_index) == Split::Train).count();
    let fixed_total: usize = train.iter().map(|&i| ds.fixed_step(i).len() - 1).sum();
    let fixed_samples = ds.samples(&train, Representation::FixedStep, None).len();
    let counts_ok = kp_total == kp_samples && fixed_total == fixed_samples;

    let refined = ds.plan_indices(Split::Train, true);
    let expect: Vec<usize> = train.iter().copied().filter(|&i| ds.keypoints(i).len() > 4).collect();
    let counts: Vec<usize> = train.iter().map(|&i| ds.keypoint_count(i)).collect();
    let (kept, removed) = refine_partition(&counts, HARD_KEYPOINTS + 1);
    let boundary = refine_partition(&[4, 5], HARD_KEYPOINTS + 1) == (vec![1], vec![0]);
    let refine_ok = refined == expect
        && boundary
        && kept.iter().all(|&k| counts[k] > 4)
        && removed.iter().all(|&k| counts[k] <= 4)
        && kept.len() + removed.len() == counts.len();
    outcome(
        kp_violations == 0 && spacing <= 1e-9 && counts_ok && refine_ok,
        format!(
            "eps {eps:.3e}: {kp_violations} keypoint violations on 100 plans, spacing spread {spacing:.1e}, samples {kp_samples}/{kp_total} keypoint {fixed_samples}/{fixed_total} fixed-step, refined {} of {} train plans (partition {})",
            refined.len(),
            train.len(),
            if refine_ok { "exact" } else { "wrong" }
        ),
    )
}

/// Runs one pipeline step unless an identical run already exists.
struct Desk {
    root: PathBuf,
    seconds: BTreeMap<String, f64>,
}

impl Desk {
    fn step(&mut self, name: &str, command: &str, o: Overrides) -> PathBuf {
        let out = self.root.join(name);
        let cmd = resolve(command, None, Mode::Desk, o).unwrap_or_else(|e| panic!("{name}: {e}"));
        let time_file = out.join("seconds.txt");
        let cached = read_json::<Manifest>(&manifest_path(&out))
            .ok()
            .filter(|m| m.config == cmd.config_value() && time_file.exists());
        let secs = match cached {
            Some(_) => std::fs::read_to_string(&time_file).unwrap().trim().parse().unwrap(),
            None => {
                eprintln!("acceptance: running {name}");
                let t = Instant::now();
                pipeline::run(&cmd, &out).unwrap_or_else(|e| panic!("{name}: {e}"));
                let s = t.elapsed().as_secs_f64();
                std::fs::write(&time_file, format!("{s}\n")).unwrap();
                s
            }
        };
        self.seconds.insert(name.to_string(), secs);
        out
    }
}

fn kv(p: &Path) -> BTreeMap<String, String> {
    let mut r = csv::Reader::from_path(p).unwrap();
    r.records().map(|r| r.unwrap()).map(|r| (r[0].to_string(), r[1].to_string())).collect()
}

fn metrics_by_model(p: &Path) -> BTreeMap<String, BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(p).unwrap();
    let h = r.headers().unwrap().clone();
    r.records()
        .map(|r| r.unwrap())
        .map(|r| (r[0].to_string(), h.iter().zip(r.iter()).map(|(a, b)| (a.to_string(), b.to_string())).collect()))
        .collect()
}

fn num(m: &BTreeMap<String, String>, k: &str) -> f64 {
    m[k].parse().unwrap_or(f64::NAN)
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let report = |n: usize, name: &'static str, o: Outcome, results: &mut Vec<(&str, Outcome)>| {
        println!("criterion {n} {name}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };
    report(1, "oracle equivalence", oracle_equivalence(), &mut results);
    report(2, "gradients", gradients(), &mut results);
    report(3, "diffusion sanity", diffusion_sanity(), &mut results);

    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-desk");
    let mut desk = Desk { root: root.clone(), seconds: BTreeMap::new() };
    let data = desk.step("data", "gen-dataset", Overrides::default());
    let dataset = data.join("dataset.kdds");
    report(4, "dataset properties", dataset_properties(&dataset), &mut results);

    let ds_o = || Overrides { dataset: Some(dataset.clone()), ..Default::default() };
    desk.step("stats", "stats", ds_o());
    let ae = desk.step("ae", "train-ae", ds_o()).join("ae.kdnp");
    let kp = desk.step("keypoint", "train-diffusion", Overrides { ae: Some(ae.clone()), ..ds_o() });
    let refined = desk.step("refined", "train-diffusion", Overrides { ae: Some(ae.clone()), refined: true, ..ds_o() });
    let ablation = desk.step("ablation", "train-diffusion", Overrides { ablation: true, ..ds_o() });
    let models = vec![
        ModelEntry { name: "keypoint".into(), path: kp.join("model.kdnp") },
        ModelEntry { name: "refined".into(), path: refined.join("model.kdnp") },
        ModelEntry { name: "ablation".into(), path: ablation.join("model.kdnp") },
    ];
    let eval = desk.step("eval", "evaluate", Overrides { models, ..ds_o() });
    let baseline = desk.step(
        "baseline",
        "baseline-oracle",
        Overrides { tasks: Some(eval.join("tasks_keypoint.csv")), ..ds_o() },
    );
    let s = &desk.seconds;
    let train_s = s["ae"] + s["keypoint"] + s["refined"] + s["ablation"];
    let eval_per_model = s["eval"] / 3.0;

    // 5: success of the batched keypoint model and the refined comparison
    let metrics = metrics_by_model(&eval.join("metrics.csv"));
    let mut recount_ok = true;
    for name in ["keypoint", "refined", "ablation"] {
        let outcomes = read_task_csv(&eval.join(format!("tasks_{name}.csv"))).unwrap();
        let r = evaluate(&outcomes).unwrap();
        recount_ok &= (r.success_all - num(&metrics[name], "success_all")).abs() < 1e-9;
    }
    let (sa, sh) = (num(&metrics["keypoint"], "success_all"), num(&metrics["keypoint"], "success_hard"));
    let rh = num(&metrics["refined"], "success_hard");
    let hard = num(&metrics["keypoint"], "hard_tasks");
    report(
        5,
        "desk end-to-end",
        outcome(
            sa >= 60.0 && rh >= sh - 2.0 && recount_ok && s["data"] < 7200.0 && train_s < 7200.0 && eval_per_model < 900.0,
            format!(
                "success_all {sa:.2}% (target 70, gate 60), success_hard {sh:.2}% -> refined {rh:.2}% on {hard} hard tasks; generation {:.0} s, training {train_s:.0} s, evaluation {eval_per_model:.0} s per model",
                s["data"]
            ),
        ),
        &mut results,
    );

    // 6: neural planning time against the oracle budget
    let rs = kv(&baseline.join("runtime_summary.csv"));
    let ratio = num(&rs, "ratio_budget");
    report(
        6,
        "runtime ratio",
        outcome(
            ratio >= 5.0,
            format!(
                "budget {} s / neural {:.3} s = {ratio:.2}x (inference {:.3} s, collision {:.3} s); oracle actual {:.3} s, {:.2}x",
                rs["oracle_budget_s"],
                num(&rs, "mean_neural_s"),
                num(&rs, "mean_inference_s"),
                num(&rs, "mean_collision_s"),
                num(&rs, "mean_oracle_actual_s"),
                num(&rs, "ratio_actual")
            ),
        ),
        &mut results,
    );

    // 7: ablation outputs and autoencoder reconstruction quality
    let aem = kv(&root.join("ae/metrics.csv"));
    let chamfer_ratio = num(&aem, "chamfer_over_diagonal_sq");
    let hist_rows = std::fs::read_to_string(eval.join("in_batch.csv")).unwrap();
    let shaped = ["keypoint", "ablation"].iter().all(|m| {
        metrics.contains_key(*m)
            && hist_rows.lines().filter(|l| l.starts_with(&format!("{m},"))).count() == 10
            && !read_candidates_csv(&eval.join(format!("candidates_{m}.csv"))).unwrap().is_empty()
    });
    let side: keyplan::pipeline::ModelSidecar = read_json(&ablation.join("model.json")).unwrap();
    report(
        7,
        "ablation harness",
        outcome(
            shaped && side.meta.ablation && chamfer_ratio <= 0.01,
            format!(
                "ablation success_all {:.2}% vs full {sa:.2}%, cond dim {} vs {}; held-out chamfer {:.4} = {:.3}% of diagonal squared",
                num(&metrics["ablation"], "success_all"),
                side.meta.cond_dim,
                num(&kv(&kp.join("metrics.csv")), "cond_dim"),
                num(&aem, "heldout_chamfer_mean"),
                100.0 * chamfer_ratio
            ),
        ),
        &mut results,
    );

    // 8: rerun from manifests
    let tmp = tempfile::tempdir().unwrap();
    let tiny = common::tiny_run(&tmp.path().join("tiny"));
    let mut runs: Vec<(String, PathBuf)> = tiny.commands.iter().map(|(n, _)| (format!("tiny/{n}"), tmp.path().join("tiny").join(n))).collect();
    let extra = [
        ("gen-scenes", Overrides { n_scenes: Some(20), ..Default::default() }),
        (
            "plan",
            Overrides {
                dataset: Some(tiny.dataset.clone()),
                models: vec![ModelEntry { name: "m".into(), path: tiny.full.clone() }],
                task: Some(1),
                ..Default::default()
            },
        ),
        ("baseline-oracle", Overrides { dataset: Some(tiny.dataset.clone()), tasks: Some(tiny.eval.join("tasks_full.csv")), ..Default::default() }),
    ];
    for (cmd, o) in extra {
        let out = tmp.path().join("tiny").join(cmd);
        pipeline::run(&resolve(cmd, None, Mode::Desk, o).unwrap(), &out).unwrap();
        runs.push((format!("tiny/{cmd}"), out));
    }
    runs.push(("desk/stats".into(), root.join("stats")));
    runs.push(("desk/ae".into(), root.join("ae")));
    let mut mismatched = Vec::new();
    let mut commands = std::collections::BTreeSet::new();
    for (name, dir) in &runs {
        let again = tmp.path().join("rerun").join(name);
        let m = pipeline::rerun(&manifest_path(dir), &again).unwrap();
        commands.insert(m.command);
        if std::fs::read(dir.join("metrics.csv")).unwrap() != std::fs::read(again.join("metrics.csv")).unwrap() {
            mismatched.push(name.clone());
        }
    }
    let all = commands.len() == pipeline::COMMANDS.len();
    report(
        8,
        "determinism",
        outcome(
            mismatched.is_empty() && all,
            format!("{} reruns covering {}/{} subcommands, mismatched: {mismatched:?}", runs.len(), commands.len(), pipeline::COMMANDS.len()),
        ),
        &mut results,
    );

    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
