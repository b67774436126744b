//! On-disk formats: checkpoints with JSON sidecars, scene files, arm files
//! and the binary dataset shard.

use std::fs;
use std::path::Path;

use keyplan_core::arm::{ArmSpec, JointConfig};
use keyplan_core::data::{Dataset, DatasetConfig, Discarded, PlanRecord, SceneEntry, Split, TaskSample, HORIZON};
use keyplan_core::nd::{decode_checkpoint, encode_checkpoint, ParamStore, Tensor};
use keyplan_core::oracle::{Plan, Representation};
use keyplan_core::scene::{PointCloud, Scene};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SHARD_MAGIC: &[u8; 5] = b"KDDS1";

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read_bytes(path)?).map_err(|e| CliError::format(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e))?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

/// Writes the EMA weights of `store`.
pub fn save_checkpoint(path: &Path, store: &ParamStore) -> Result<()> {
    let ema = store.ema_snapshot();
    write_bytes(path, &encode_checkpoint(ema.named()))
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>> {
    Ok(decode_checkpoint(&read_bytes(path)?)?)
}

pub fn write_scenes_jsonl(path: &Path, scenes: &[&Scene]) -> Result<()> {
    let mut out = String::new();
    for s in scenes {
        out.push_str(&serde_json::to_string(s).map_err(|e| CliError::format(path, e))?);
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

pub fn read_scenes_jsonl(path: &Path) -> Result<Vec<Scene>> {
    let text = String::from_utf8(read_bytes(path)?).map_err(|e| CliError::format(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::format(path, format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn read_arm(path: &Path) -> Result<ArmSpec> {
    let arm: ArmSpec = read_json(path)?;
    arm.validate()?;
    Ok(arm)
}

#[derive(Serialize, Deserialize)]
struct ShardMeta {
    config: DatasetConfig,
    epsilon: f64,
    discarded: Vec<Discarded>,
}

/// A decoded shard: the dataset and its normalized keypoint samples (one
/// record per sample, embeddings not included).
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub dataset: Dataset,
    pub samples: Vec<TaskSample>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }

    fn f32s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }

    fn blob(&mut self, b: &[u8]) {
        self.u64(b.len());
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> std::result::Result<usize, String> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| format!("count {v} too large"))
    }

    fn f32s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let b = self.take(n.checked_mul(4).ok_or("length overflow")?)?;
        Ok(b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect())
    }

    fn blob(&mut self) -> std::result::Result<&'a [u8], String> {
        let n = self.u64()?;
        self.take(n)
    }
}

/// Serializes a dataset with its keypoint samples. Values are stored as
/// `f32`, so decoding then re-encoding is lossless.
pub fn encode_shard(ds: &Dataset) -> Vec<u8> {
    let d = ds.config.arm.dof;
    let dim = ds.config.scene.dim();
    let all: Vec<usize> = (0..ds.plans.len()).collect();
    let samples = ds.samples(&all, Representation::Keypoint, None);
    let mut w = Writer(SHARD_MAGIC.to_vec());
    for v in [d, HORIZON, ds.config.cloud_points, 0, ds.scenes.len(), ds.plans.len(), samples.len()] {
        w.u64(v);
    }
    let meta = ShardMeta {
        config: ds.config.clone(),
        epsilon: ds.epsilon,
        discarded: ds.discarded.clone(),
    };
    w.blob(&serde_json::to_vec(&meta).expect("plain data"));
    for s in &ds.scenes {
        w.0.push(match s.split {
            Split::Train => 0,
            Split::Test => 1,
        });
        w.blob(&serde_json::to_vec(&s.scene).expect("plain data"));
    }
    for s in &ds.scenes {
        assert_eq!(s.cloud.points.len(), ds.config.cloud_points * dim, "cloud size");
        w.f32s(&s.cloud.points);
    }
    for p in &ds.plans {
        w.u64(p.scene_index);
        w.u64(p.plan.len());
        for q in &p.plan.configs {
            w.f32s(q);
        }
    }
    for s in &samples {
        w.u64(s.plan_index);
        w.f32s(&s.start);
        w.f32s(&s.goal);
        w.f32s(&s.target);
    }
    w.0
}

pub fn decode_shard(bytes: &[u8]) -> std::result::Result<Shard, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(5)? != SHARD_MAGIC {
        return Err("not a KDDS1 shard".into());
    }
    let mut header = [0usize; 7];
    for v in &mut header {
        *v = r.u64()?;
    }
    let [d, horizon, p, e, n_scenes, n_plans, n_samples] = header;
    let meta: ShardMeta = serde_json::from_slice(r.blob()?).map_err(|e| format!("meta: {e}"))?;
    if meta.config.arm.dof != d || meta.config.cloud_points != p || horizon != HORIZON {
        return Err("header disagrees with the stored config".into());
    }
    let dim = meta.config.scene.dim();
    let mut scenes = Vec::with_capacity(n_scenes.min(1 << 20));
    for _ in 0..n_scenes {
        let split = match r.u8()? {
            0 => Split::Train,
            1 => Split::Test,
            b => return Err(format!("bad split byte {b}")),
        };
        let scene: Scene = serde_json::from_slice(r.blob()?).map_err(|e| format!("scene: {e}"))?;
        scenes.push((scene, split));
    }
    let mut entries = Vec::with_capacity(scenes.len());
    for (scene, split) in scenes {
        let cloud = PointCloud {
            dim,
            points: r.f32s(p * dim)?,
        };
        entries.push(SceneEntry { scene, split, cloud });
    }
    let mut plans = Vec::with_capacity(n_plans.min(1 << 24));
    for _ in 0..n_plans {
        let scene_index = r.u64()?;
        let n = r.u64()?;
        let entry = entries.get(scene_index).ok_or_else(|| format!("plan refers to scene {scene_index}"))?;
        let configs = (0..n).map(|_| r.f32s(d).map(JointConfig)).collect::<std::result::Result<Vec<_>, _>>()?;
        plans.push(PlanRecord {
            scene_index,
            plan: Plan::new(configs, Representation::Raw, entry.scene.seed),
        });
    }
    let mut samples = Vec::with_capacity(n_samples.min(1 << 24));
    for _ in 0..n_samples {
        let plan_index = r.u64()?;
        let rec = plans.get(plan_index).ok_or_else(|| format!("sample refers to plan {plan_index}"))?;
        samples.push(TaskSample {
            start: r.f32s(d)?,
            goal: r.f32s(d)?,
            scene_id: rec.plan.scene_id,
            plan_index,
            target: r.f32s(horizon * d)?,
            cloud_embedding: if e > 0 { Some(r.f32s(e)?) } else { None },
        });
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(Shard {
        dataset: Dataset {
            config: meta.config,
            epsilon: meta.epsilon,
            scenes: entries,
            plans,
            discarded: meta.discarded,
        },
        samples,
    })
}

pub fn read_shard(path: &Path) -> Result<Shard> {
    decode_shard(&read_bytes(path)?).map_err(|e| CliError::format(path, e))
}
