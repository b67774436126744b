mod support;

use keyplan_core::cloud::{chamfer, chamfer_var, train_autoencoder, AeTrainConfig, Autoencoder, AutoencoderSpec};
use keyplan_core::nd::{Tape, Tensor, Var};
use keyplan_core::rng::rng_from_seed;
use keyplan_core::scene::{sample_point_cloud, sample_scene, PointCloud, SceneParams};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use support::gradcheck::{max_rel_error, random, REL_TOL};
use support::models::{autoencoder_graph_error, desk_cloud, tiny_autoencoder};

fn brute_chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
    let mut s1 = 0.0;
    for i in 0..a.len() {
        let mut best = f64::MAX;
        for j in 0..b.len() {
            let d: f64 = (0..a.dim).map(|k| (a.point(i)[k] - b.point(j)[k]).powi(2)).sum();
            if d < best {
                best = d;
            }
        }
        s1 += best;
    }
    let mut s2 = 0.0;
    for j in 0..b.len() {
        let mut best = f64::MAX;
        for i in 0..a.len() {
            let d: f64 = (0..a.dim).map(|k| (a.point(i)[k] - b.point(j)[k]).powi(2)).sum();
            if d < best {
                best = d;
            }
        }
        s2 += best;
    }
    s1 / a.len() as f64 + s2 / b.len() as f64
}

#[test]
fn encode_is_permutation_and_duplication_invariant() {
    let ae = Autoencoder::new(AutoencoderSpec::desk(), &mut rng_from_seed(1)).unwrap();
    let cloud = desk_cloud(3, 300);
    let base = ae.encode(&cloud).unwrap();
    let mut rows: Vec<Vec<f64>> = cloud.iter().map(|p| p.to_vec()).collect();
    rows.shuffle(&mut rng_from_seed(2));
    let shuffled = PointCloud {
        dim: 2,
        points: rows.concat(),
    };
    assert_eq!(ae.encode(&shuffled).unwrap(), base);
    let doubled = PointCloud {
        dim: 2,
        points: [cloud.points.clone(), cloud.points.clone()].concat(),
    };
    assert_eq!(ae.encode(&doubled).unwrap(), base);
    assert_eq!(base.len(), 64);
}

#[test]
fn chamfer_basics() {
    let x = desk_cloud(1, 50);
    assert_eq!(chamfer(&x, &x).unwrap(), 0.0);
    let a = PointCloud { dim: 2, points: vec![0.0, 0.0] };
    let b = PointCloud { dim: 2, points: vec![0.3, 0.4] };
    assert!((chamfer(&a, &b).unwrap() - 2.0 * 0.25).abs() < 1e-15);
}

#[test]
fn chamfer_matches_brute_force() {
    for seed in 0..10 {
        let a = desk_cloud(seed, 37 + seed as usize);
        let b = desk_cloud(seed + 100, 53);
        let brute = brute_chamfer(&a, &b);
        assert!((chamfer(&a, &b).unwrap() - brute).abs() < 1e-12);
        let mut t = Tape::new();
        let va = t.input(Tensor::new(vec![1, a.len(), 2], a.points.clone()).unwrap());
        let vb = t.input(Tensor::new(vec![1, b.len(), 2], b.points.clone()).unwrap());
        let c = chamfer_var(&mut t, va, vb).unwrap();
        assert!((t.value(c).item().unwrap() - brute).abs() < 1e-12);
    }
}

#[test]
fn chamfer_gradient_matches_finite_differences() {
    let target = random(&[2, 9, 2], 5);
    let f = move |t: &mut Tape<'_>, v: &[Var]| {
        let y = t.input(target.clone());
        chamfer_var(t, v[0], y).unwrap()
    };
    let err = max_rel_error(&f, &[random(&[2, 6, 2], 6)]);
    assert!(err < REL_TOL, "{err:e}");
}

#[test]
fn autoencoder_gradient_matches_finite_differences() {
    let err = autoencoder_graph_error();
    assert!(err < REL_TOL, "{err:e}");
}

#[test]
fn zero_epochs_keeps_initialization() {
    let mut ae = Autoencoder::new(tiny_autoencoder(), &mut rng_from_seed(4)).unwrap();
    let before = ae.store.clone();
    let cfg = AeTrainConfig { epochs: 0, ..AeTrainConfig::default() };
    let hist = train_autoencoder(&mut ae, &[desk_cloud(1, 20)], &cfg, |_, _| {}).unwrap();
    assert!(hist.is_empty());
    assert_eq!(ae.store, before);
}

#[test]
fn overfits_single_cloud_and_embedding_tracks_geometry() {
    let params = SceneParams::desk();
    let scene = sample_scene(&params, 8).unwrap();
    let cloud = sample_point_cloud(&scene, 512, &mut rng_from_seed(0)).unwrap().normalized(&params.bounds);
    let mut ae = Autoencoder::new(AutoencoderSpec::desk(), &mut rng_from_seed(1)).unwrap();
    let cfg = AeTrainConfig {
        epochs: 400,
        batch: 1,
        ..AeTrainConfig::default()
    };
    let hist = train_autoencoder(&mut ae, std::slice::from_ref(&cloud), &cfg, |_, _| {}).unwrap();
    let rec = chamfer(&ae.reconstruct(&cloud).unwrap(), &cloud).unwrap();
    // normalized frame: diagonal^2 of [-1, 1]^2 is 8
    assert!(rec < 0.01 * 8.0, "reconstruction chamfer {rec}, last loss {}", hist.last().unwrap());
    let mut moved = scene.clone();
    moved.obstacles[0].center[0] += 0.5;
    let cloud2 = sample_point_cloud(&moved, 512, &mut rng_from_seed(0)).unwrap().normalized(&params.bounds);
    let (e1, e2) = (ae.encode(&cloud).unwrap(), ae.encode(&cloud2).unwrap());
    let change: f64 = e1.iter().zip(&e2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(change > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chamfer_symmetric_and_nonnegative(a in prop::collection::vec(-1.0f64..1.0, 2..40), b in prop::collection::vec(-1.0f64..1.0, 2..40)) {
        let a = PointCloud { dim: 2, points: a[..a.len() / 2 * 2].to_vec() };
        let b = PointCloud { dim: 2, points: b[..b.len() / 2 * 2].to_vec() };
        let ab = chamfer(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, chamfer(&b, &a).unwrap());
    }
}
