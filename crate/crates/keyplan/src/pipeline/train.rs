use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use keyplan_core::cloud::{chamfer, train_autoencoder, Autoencoder, AutoencoderSpec};
use keyplan_core::data::{Dataset, Split, HORIZON};
use keyplan_core::diffusion::{self, Denoiser, DiffusionSchedule, InitNoise, ModelMeta, SampleConfig};
use keyplan_core::neuro::DiffusionPolicy;
use keyplan_core::oracle::Representation;
use keyplan_core::rng::{derive_seed, rng_from_seed};
use keyplan_core::scene::{Aabb, PointCloud};
use keyplan_core::Error;
use serde::{Deserialize, Serialize};

use super::{write_csv, write_kv, write_text};
use crate::config::{TrainAeConfig, TrainDiffusionConfig};
use crate::error::{CliError, Result};
use crate::formats::{load_checkpoint, read_json, read_shard, save_checkpoint, write_json};
use crate::plot;

/// Sidecar written next to an autoencoder checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeSidecar {
    pub spec: AutoencoderSpec,
    /// Workspace bounds used to normalize clouds.
    pub bounds: Aabb,
    /// Mean held-out Chamfer distance in workspace units.
    pub heldout_chamfer: Option<f64>,
}

/// Sidecar written next to a denoiser checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    #[serde(flatten)]
    pub meta: ModelMeta,
    pub refined: bool,
    pub autoencoder: Option<PathBuf>,
    pub train_plans: usize,
    pub train_samples: usize,
}

fn denormalize(cloud: &PointCloud, b: &Aabb) -> PointCloud {
    let d = cloud.dim;
    let points = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let k = i % d;
            b.lo[k] + (v + 1.0) * 0.5 * (b.hi[k] - b.lo[k])
        })
        .collect();
    PointCloud { dim: d, points }
}

pub(super) fn train_ae(cfg: &TrainAeConfig, out: &Path) -> Result<Vec<String>> {
    let ds = read_shard(&cfg.dataset)?.dataset;
    let bounds = ds.config.scene.bounds.clone();
    if cfg.spec.dim != bounds.dim() {
        return Err(Error::ConfigMismatch {
            what: "point dimension",
            expected: bounds.dim(),
            got: cfg.spec.dim,
        }
        .into());
    }
    let clouds = |split: Split| -> Vec<(usize, PointCloud)> {
        ds.scenes
            .iter()
            .enumerate()
            .filter(|(_, s)| s.split == split && !s.scene.obstacles.is_empty())
            .map(|(i, s)| (i, s.cloud.normalized(&bounds)))
            .collect()
    };
    let train: Vec<PointCloud> = clouds(Split::Train).into_iter().map(|c| c.1).collect();
    let held = clouds(Split::Test);
    let mut ae = Autoencoder::new(cfg.spec.clone(), &mut rng_from_seed(derive_seed(cfg.train.seed, 0xAE)))?;
    let history = train_autoencoder(&mut ae, &train, &cfg.train, |e, l| eprintln!("ae epoch {e}: {l:.6}"))?;

    let mut files = Vec::new();
    let mut dists = Vec::with_capacity(held.len());
    let mut dump = Vec::new();
    for (k, (i, c)) in held.iter().enumerate() {
        let recon = denormalize(&ae.reconstruct(c)?, &bounds);
        let orig = &ds.scenes[*i].cloud;
        dists.push(chamfer(orig, &recon)?);
        if k < cfg.dump_clouds {
            for (kind, cloud) in [("input", orig), ("reconstruction", &recon)] {
                for p in cloud.iter() {
                    let mut row = vec![i.to_string(), kind.to_string()];
                    row.extend(p.iter().map(|x| x.to_string()));
                    dump.push(row);
                }
            }
        }
    }
    let mean = (!dists.is_empty()).then(|| dists.iter().sum::<f64>() / dists.len() as f64);
    let diag_sq = bounds.diagonal().powi(2);

    save_checkpoint(&out.join("ae.kdnp"), &ae.store)?;
    files.push("ae.kdnp".into());
    let side = AeSidecar {
        spec: cfg.spec.clone(),
        bounds,
        heldout_chamfer: mean,
    };
    write_json(&out.join("ae.json"), &side)?;
    files.push("ae.json".into());
    let loss_rows: Vec<Vec<String>> = history.iter().enumerate().map(|(e, l)| vec![e.to_string(), l.to_string()]).collect();
    write_csv(out, "ae_loss.csv", &["epoch", "loss"], &loss_rows, &mut files)?;
    write_text(out, "ae_loss.svg", &plot::line_chart("autoencoder loss", "epoch", "chamfer", &[("train", &history)]), &mut files)?;
    let axes = ["x", "y", "z"];
    let mut header = vec!["scene_index", "cloud"];
    header.extend(&axes[..cfg.spec.dim.min(3)]);
    write_csv(out, "reconstructions.csv", &header, &dump, &mut files)?;
    let max = dists.iter().copied().fold(f64::NAN, f64::max);
    write_kv(
        out,
        "metrics.csv",
        &[
            ("train_clouds", train.len().to_string()),
            ("heldout_clouds", held.len().to_string()),
            ("final_loss", super::opt(history.last().copied())),
            ("heldout_chamfer_mean", super::opt(mean)),
            ("heldout_chamfer_max", super::opt((!dists.is_empty()).then_some(max))),
            ("diagonal_sq", diag_sq.to_string()),
            ("chamfer_over_diagonal_sq", super::opt(mean.map(|m| m / diag_sq))),
        ],
        &mut files,
    )?;
    Ok(files)
}

pub fn load_autoencoder(path: &Path) -> Result<(Autoencoder, AeSidecar)> {
    let side: AeSidecar = read_json(&path.with_extension("json"))?;
    let ae = Autoencoder::from_named(side.spec.clone(), &load_checkpoint(path)?)?;
    Ok((ae, side))
}

/// One embedding per scene of `ds`, computed on the normalized clouds.
pub fn scene_embeddings(ae: &Autoencoder, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
    let bounds = &ds.config.scene.bounds;
    if ae.spec.dim != bounds.dim() {
        return Err(Error::ConfigMismatch {
            what: "point dimension",
            expected: bounds.dim(),
            got: ae.spec.dim,
        }
        .into());
    }
    let clouds: Vec<PointCloud> = ds.scenes.iter().map(|s| s.cloud.normalized(bounds)).collect();
    let mut out = Vec::with_capacity(clouds.len());
    for chunk in clouds.chunks(32) {
        out.extend(ae.encode_many(&chunk.iter().collect::<Vec<_>>())?);
    }
    Ok(out)
}

pub(super) fn train_diffusion(cfg: &TrainDiffusionConfig, out: &Path) -> Result<Vec<String>> {
    let shard = read_shard(&cfg.dataset)?;
    let ds = &shard.dataset;
    let d = ds.config.arm.dof;
    let idx = ds.plan_indices(Split::Train, cfg.refined);
    let mut samples = match cfg.representation {
        Representation::Keypoint => {
            let keep: BTreeSet<usize> = idx.iter().copied().collect();
            shard.samples.iter().filter(|s| keep.contains(&s.plan_index)).cloned().collect()
        }
        rep => ds.samples(&idx, rep, None),
    };
    let ablation = cfg.train.ablation;
    let embedding_dim = if ablation {
        0
    } else {
        let path = cfg.ae.as_ref().ok_or_else(|| CliError::Usage("an autoencoder is required unless ablation is set".into()))?;
        let (ae, _) = load_autoencoder(path)?;
        let emb = scene_embeddings(&ae, ds)?;
        for s in &mut samples {
            s.cloud_embedding = Some(emb[ds.plans[s.plan_index].scene_index].clone());
        }
        ae.spec.embedding_dim()
    };
    let spec = cfg.network.spec(d, HORIZON, 2 * d + embedding_dim);
    let mut model = Denoiser::new(spec.clone(), &mut rng_from_seed(derive_seed(cfg.train.seed, 0xD1)))?;
    let schedule = DiffusionSchedule::squared_cosine(cfg.steps)?;
    eprintln!("training on {} samples from {} plans, {} parameters", samples.len(), idx.len(), model.store.numel());
    let history = diffusion::train_diffusion(&mut model, &schedule, &samples, &cfg.train, |e, l| eprintln!("epoch {e}: {l:.6}"))?;

    let mut files = Vec::new();
    save_checkpoint(&out.join("model.kdnp"), &model.store)?;
    files.push("model.kdnp".into());
    let side = ModelSidecar {
        meta: ModelMeta {
            action_dim: d,
            horizon: HORIZON,
            steps: cfg.steps,
            cond_dim: spec.cond_dim,
            spec,
            ablation,
            embedding_dim,
            normalizer: keyplan_core::data::Normalizer::from_spec(&ds.config.arm),
            representation: cfg.representation,
        },
        refined: cfg.refined,
        autoencoder: cfg.ae.clone().filter(|_| !ablation),
        train_plans: idx.len(),
        train_samples: samples.len(),
    };
    write_json(&out.join("model.json"), &side)?;
    files.push("model.json".into());
    let rows: Vec<Vec<String>> = history.iter().enumerate().map(|(e, l)| vec![e.to_string(), l.to_string()]).collect();
    write_csv(out, "loss.csv", &["epoch", "loss"], &rows, &mut files)?;
    write_text(out, "loss.svg", &plot::line_chart("denoiser loss", "epoch", "mse", &[("train", &history)]), &mut files)?;
    write_kv(
        out,
        "metrics.csv",
        &[
            ("train_plans", idx.len().to_string()),
            ("train_samples", samples.len().to_string()),
            ("cond_dim", side.meta.cond_dim.to_string()),
            ("parameters", model.store.numel().to_string()),
            ("final_loss", super::opt(history.last().copied())),
        ],
        &mut files,
    )?;
    Ok(files)
}

/// A trained policy with what is needed to build its conditions.
pub struct LoadedModel {
    pub policy: DiffusionPolicy,
    pub sidecar: ModelSidecar,
    pub autoencoder: Option<Autoencoder>,
}

pub fn load_model(path: &Path, init: InitNoise) -> Result<LoadedModel> {
    let side: ModelSidecar = read_json(&path.with_extension("json"))?;
    let meta = &side.meta;
    let mismatch = |what, expected, got| -> Result<()> {
        if expected != got {
            return Err(Error::ConfigMismatch { what, expected, got }.into());
        }
        Ok(())
    };
    mismatch("condition dim", meta.cond_dim, meta.spec.cond_dim)?;
    mismatch("condition dim", 2 * meta.action_dim + meta.embedding_dim, meta.cond_dim)?;
    mismatch("joint count", meta.action_dim, meta.spec.action_dim)?;
    let denoiser = Denoiser::from_named(meta.spec.clone(), &load_checkpoint(path)?)?;
    let autoencoder = match (&side.autoencoder, meta.ablation) {
        (_, true) => None,
        (Some(p), false) => {
            let (ae, _) = load_autoencoder(p)?;
            mismatch("embedding dim", meta.embedding_dim, ae.spec.embedding_dim())?;
            Some(ae)
        }
        (None, false) => return Err(CliError::format(path, "model needs an autoencoder but none is recorded")),
    };
    Ok(LoadedModel {
        policy: DiffusionPolicy {
            denoiser,
            schedule: DiffusionSchedule::squared_cosine(meta.steps)?,
            sampling: SampleConfig { init },
            representation: meta.representation,
        },
        sidecar: side,
        autoencoder,
    })
}
