use std::path::Path;

use keyplan_core::clock::FrozenClock;
use keyplan_core::data::{dataset_stats, generate_dataset, Dataset, DatasetConfig, LengthMetric, Split};
use keyplan_core::metrics::HARD_KEYPOINTS;
use keyplan_core::oracle::{Plan, Representation};
use keyplan_core::scene::sample_scene;

use super::{write_csv, write_kv, write_text};
use crate::config::{GenScenesConfig, StatsConfig};
use crate::error::Result;
use crate::formats::{decode_shard, encode_shard, read_shard, write_bytes, write_json, write_scenes_jsonl};
use crate::plot;

pub(super) fn gen_scenes(cfg: &GenScenesConfig, out: &Path) -> Result<Vec<String>> {
    let scenes = (0..cfg.n_scenes as u64)
        .map(|i| sample_scene(&cfg.scene, keyplan_core::rng::derive_seed(cfg.seed, i)))
        .collect::<keyplan_core::Result<Vec<_>>>()?;
    let mut files = Vec::new();
    write_scenes_jsonl(&out.join("scenes.jsonl"), &scenes.iter().collect::<Vec<_>>())?;
    files.push("scenes.jsonl".into());
    let counts: Vec<f64> = scenes.iter().map(|s| s.obstacles.len() as f64).collect();
    let mean = counts.iter().sum::<f64>() / counts.len().max(1) as f64;
    write_kv(
        out,
        "metrics.csv",
        &[("scenes", scenes.len().to_string()), ("mean_obstacles", mean.to_string())],
        &mut files,
    )?;
    if let Some(s) = scenes.first() {
        write_text(out, "scene_0.svg", &plot::scene_chart("scene 0", s, &keyplan_core::arm::ArmSpec::desk(), &[]), &mut files)?;
    }
    Ok(files)
}

pub(super) fn gen_dataset(cfg: &DatasetConfig, out: &Path) -> Result<Vec<String>> {
    let raw = generate_dataset(cfg, &FrozenClock, |done, total| {
        if done % 25 == 0 || done == total {
            eprintln!("scenes {done}/{total}");
        }
    })?;
    // Round-trip once so everything downstream sees the stored f32 values.
    let ds = decode_shard(&encode_shard(&raw)).expect("shard round trip").dataset;
    let bytes = encode_shard(&ds);
    let mut files = Vec::new();
    write_bytes(&out.join("dataset.kdds"), &bytes)?;
    files.push("dataset.kdds".into());
    write_scenes_jsonl(&out.join("scenes.jsonl"), &ds.scenes.iter().map(|s| &s.scene).collect::<Vec<_>>())?;
    files.push("scenes.jsonl".into());
    write_json(&out.join("arm.json"), &ds.config.arm)?;
    files.push("arm.json".into());
    let discarded: Vec<Vec<String>> = ds.discarded.iter().map(|d| vec![d.seed.to_string(), d.reason.clone()]).collect();
    write_csv(out, "discarded.csv", &["seed", "reason"], &discarded, &mut files)?;
    write_kv(out, "metrics.csv", &dataset_metrics(&ds), &mut files)?;
    Ok(files)
}

/// Size and split summary of a dataset.
pub fn dataset_metrics(ds: &Dataset) -> Vec<(&'static str, String)> {
    let train = ds.plan_indices(Split::Train, false);
    let test = ds.plan_indices(Split::Test, false);
    let refined = ds.plan_indices(Split::Train, true);
    let hard_test = test.iter().filter(|&&i| ds.keypoint_count(i) > HARD_KEYPOINTS).count();
    let n_kp: usize = train.iter().map(|&i| ds.keypoint_count(i) - 1).sum();
    let test_scenes = ds.scenes.iter().filter(|s| s.split == Split::Test).count();
    vec![
        ("scenes", ds.scenes.len().to_string()),
        ("train_scenes", (ds.scenes.len() - test_scenes).to_string()),
        ("test_scenes", test_scenes.to_string()),
        ("discarded_scenes", ds.discarded.len().to_string()),
        ("plans", ds.plans.len().to_string()),
        ("train_plans", train.len().to_string()),
        ("test_plans", test.len().to_string()),
        ("refined_train_plans", refined.len().to_string()),
        ("hard_test_plans", hard_test.to_string()),
        ("epsilon", ds.epsilon.to_string()),
        ("train_keypoint_samples", n_kp.to_string()),
    ]
}

/// `split,count,mean,var,max,min` rows of plan lengths in `rep`.
pub fn length_stats_rows(ds: &Dataset, rep: Representation, metric: LengthMetric) -> Result<Vec<Vec<String>>> {
    let mut rows = Vec::new();
    for (name, split) in [("train", Split::Train), ("test", Split::Test)] {
        let idx = ds.plan_indices(split, false);
        if idx.is_empty() {
            continue;
        }
        let plans: Vec<Plan> = idx.iter().map(|&i| ds.represent(i, rep)).collect();
        let s = dataset_stats(&plans, &[], metric)?;
        rows.push(vec![
            name.into(),
            s.count.to_string(),
            s.mean.to_string(),
            s.var.to_string(),
            s.max.to_string(),
            s.min.to_string(),
        ]);
    }
    Ok(rows)
}

pub(super) fn stats(cfg: &StatsConfig, out: &Path) -> Result<Vec<String>> {
    let ds = read_shard(&cfg.dataset)?.dataset;
    let mut files = Vec::new();
    let header = ["split", "count", "mean", "var", "max", "min"];
    write_csv(out, "stats.csv", &header, &length_stats_rows(&ds, Representation::Raw, cfg.metric)?, &mut files)?;

    let mut all = Vec::new();
    for (name, rep) in [
        ("raw", Representation::Raw),
        ("fixed_step", Representation::FixedStep),
        ("keypoint", Representation::Keypoint),
    ] {
        for mut r in length_stats_rows(&ds, rep, cfg.metric)? {
            r.insert(0, name.into());
            all.push(r);
        }
    }
    let mut kp_rows = Vec::new();
    for (name, split) in [("train", Split::Train), ("test", Split::Test)] {
        let idx = ds.plan_indices(split, false);
        let counts: Vec<usize> = idx.iter().map(|&i| ds.keypoint_count(i)).collect();
        let plans: Vec<Plan> = idx.iter().map(|&i| ds.plans[i].plan.clone()).collect();
        if plans.is_empty() {
            continue;
        }
        for (k, n) in dataset_stats(&plans, &counts, cfg.metric)?.keypoint_histogram {
            kp_rows.push(vec![name.to_string(), k.to_string(), n.to_string()]);
        }
    }
    write_csv(out, "keypoints.csv", &["split", "keypoints", "plans"], &kp_rows, &mut files)?;
    write_csv(out, "metrics.csv", &["representation", "split", "count", "mean", "var", "max", "min"], &all, &mut files)?;
    Ok(files)
}
