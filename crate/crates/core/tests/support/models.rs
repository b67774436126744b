//! Model-level checks shared by the unit suites and the acceptance run.

#![allow(dead_code)]

use keyplan_core::cloud::{Autoencoder, AutoencoderSpec};
use keyplan_core::data::TaskSample;
use keyplan_core::diffusion::{
    condition_vector, reverse_step, sample_actions, train_diffusion, Denoiser, DenoiserSpec, DiffusionSchedule,
    DiffusionTrainConfig, SampleConfig,
};
use keyplan_core::nd::{AdamConfig, Bound, Tape, Tensor, Var};
use keyplan_core::rng::rng_from_seed;
use keyplan_core::scene::{sample_point_cloud, sample_scene, PointCloud, SceneParams};

use super::gradcheck::{max_rel_error, random};

pub fn tiny_denoiser(action_dim: usize, cond_dim: usize) -> DenoiserSpec {
    DenoiserSpec {
        action_dim,
        horizon: 16,
        cond_dim,
        widths: vec![8, 16],
        groups: 4,
        time_dim: 4,
        kernel: 3,
    }
}

pub fn tiny_autoencoder() -> AutoencoderSpec {
    AutoencoderSpec {
        dim: 2,
        encoder_widths: [4, 5, 6],
        decoder_hidden: vec![7],
        points_out: 5,
    }
}

pub fn desk_cloud(seed: u64, n: usize) -> PointCloud {
    let p = SceneParams::desk();
    let scene = sample_scene(&p, seed).unwrap();
    sample_point_cloud(&scene, n, &mut rng_from_seed(seed)).unwrap().normalized(&p.bounds)
}

/// Finite-difference error of the full denoiser graph, parameters and inputs.
pub fn denoiser_graph_error() -> f64 {
    let m = Denoiser::new(tiny_denoiser(2, 3), &mut rng_from_seed(2)).unwrap();
    let mut inputs: Vec<Tensor> = m.store.named().map(|(_, t)| t.clone()).collect();
    let n = inputs.len();
    inputs.push(random(&[2, 16, 2], 7));
    inputs.push(random(&[2, 3], 8));
    let f = |t: &mut Tape<'_>, v: &[Var]| {
        let p = Bound::from_vars(v[..n].to_vec());
        m.forward_var(t, &p, v[n], &[3, 61], v[n + 1]).unwrap()
    };
    max_rel_error(&f, &inputs)
}

/// Finite-difference error of the autoencoder's Chamfer loss graph.
pub fn autoencoder_graph_error() -> f64 {
    let ae = Autoencoder::new(tiny_autoencoder(), &mut rng_from_seed(4)).unwrap();
    let clouds = [desk_cloud(1, 11), desk_cloud(2, 11)];
    let inputs: Vec<Tensor> = ae.store.named().map(|(_, t)| t.clone()).collect();
    let f = |t: &mut Tape<'_>, v: &[Var]| {
        let p = Bound::from_vars(v.to_vec());
        ae.loss_var(t, &p, &[&clouds[0], &clouds[1]]).unwrap()
    };
    max_rel_error(&f, &inputs)
}

/// Largest gap between the reverse step with a zero noise prediction and its
/// hand-derived closed form.
pub fn reverse_step_error() -> f64 {
    let s = DiffusionSchedule::squared_cosine(100).unwrap();
    let base = [0.05, -0.2, 0.31];
    let z = [0.7, -1.1, 0.0];
    let mut worst: f64 = 0.0;
    for t in [0usize, 1, 37, 99] {
        let ab = s.alpha_bars[t];
        let x: Vec<f64> = base.iter().map(|b| b * ab.sqrt()).collect();
        let ab_prev = if t == 0 { 1.0 } else { s.alpha_bars[t - 1] };
        let beta = 1.0 - s.alphas[t];
        // with eps = 0 the implied x0 is x / sqrt(ab); these inputs stay unclipped
        let gain = ab_prev.sqrt() * beta / ((1.0 - ab) * ab.sqrt()) + s.alphas[t].sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        let sigma = if t == 0 { 0.0 } else { (beta * (1.0 - ab_prev) / (1.0 - ab)).sqrt() };
        let got = reverse_step(&s, t, &x, &[0.0; 3], &z);
        for i in 0..3 {
            assert!(x[i].abs() / ab.sqrt() <= 1.0);
            worst = worst.max((got[i] - (gain * x[i] + sigma * z[i])).abs());
        }
    }
    // the t = 0 update is the noiseless posterior mean, which equals x0
    let got = reverse_step(&s, 0, &base, &[0.0; 3], &z);
    for i in 0..3 {
        worst = worst.max((got[i] - base[i] / s.alpha_bars[0].sqrt()).abs());
    }
    worst
}

pub fn smooth_target(phase: f64) -> Vec<f64> {
    (0..16)
        .flat_map(|r| {
            let s = r as f64 / 15.0;
            [0.8 * (3.0 * s + phase).sin(), 0.6 * s - 0.3, -0.5 * s, 0.4 * (2.0 * s).cos() * phase.cos()]
        })
        .collect()
}

pub fn sample_with(target: Vec<f64>, start: Vec<f64>, goal: Vec<f64>) -> TaskSample {
    TaskSample {
        start,
        goal,
        scene_id: 0,
        plan_index: 0,
        target,
        cloud_embedding: Some(vec![0.25, -0.5]),
    }
}

/// Trains the desk denoiser on one sample for `steps` optimizer steps and
/// returns the loss history and the L-inf error of a sampled window.
pub fn overfit_one(steps: usize) -> (Vec<f64>, f64) {
    let mut m = Denoiser::new(DenoiserSpec::desk(4, 10), &mut rng_from_seed(7)).unwrap();
    let s = DiffusionSchedule::squared_cosine(100).unwrap();
    let target = smooth_target(0.3);
    let sample = sample_with(target.clone(), vec![-0.2, 0.1, 0.0, 0.3], vec![0.5, 0.3, -0.5, 0.2]);
    let cond = condition_vector(&sample, false);
    let data = vec![sample; 32];
    let cfg = DiffusionTrainConfig {
        epochs: steps,
        batch: 32,
        adam: AdamConfig { lr: 1e-3, ..AdamConfig::default() },
        seed: 1,
        ablation: false,
        ..Default::default()
    };
    let hist = train_diffusion(&mut m, &s, &data, &cfg, |_, _| {}).unwrap();
    let out = sample_actions(&m, &s, &[cond], &[99], &SampleConfig::default()).unwrap();
    let err = out[0].iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    (hist, err)
}
