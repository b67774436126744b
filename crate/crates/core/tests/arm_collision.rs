mod support;

use keyplan_core::arm::{
    config_valid, edge_valid, forward_kinematics, sample_valid_config, ArmSpec, Checker, DEFAULT_EDGE_RESOLUTION,
};
use keyplan_core::rng::{rng_from_seed, stream};
use keyplan_core::scene::{sample_scene, Scene, SceneParams};
use proptest::prelude::*;
use support::collision::{config_valid_sampled, desk_scenes, edge_cases, edge_valid_dense, fk_points};

#[test]
fn fk_matches_independent_oracle() {
    for spec in [ArmSpec::desk(), ArmSpec::paper()] {
        let mut rng = rng_from_seed(21);
        for _ in 0..1000 {
            let q = spec.sample_uniform(&mut rng);
            let lib = forward_kinematics(&spec, &q);
            let ora = fk_points(&spec, &q);
            for (a, b) in lib.points.iter().zip(&ora) {
                for k in 0..3 {
                    assert!((a[k] - b[k]).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn config_valid_matches_point_sampling() {
    let spec = ArmSpec::desk();
    let scenes = desk_scenes(50);
    let mut rng = rng_from_seed(7);
    let mut disagree = 0;
    let mut valid = 0;
    for i in 0..1000 {
        let scene = &scenes[i % scenes.len()];
        let q = spec.sample_uniform(&mut rng);
        let exact = config_valid(&spec, scene, &q);
        valid += exact as usize;
        if exact != config_valid_sampled(&spec, scene, &q, 1000) {
            disagree += 1;
        }
    }
    assert_eq!(disagree, 0);
    assert!(valid > 100 && valid < 1000, "degenerate test set: {valid} valid");
}

#[test]
fn spatial_config_valid_matches_point_sampling() {
    let spec = ArmSpec::paper();
    let scenes: Vec<Scene> = (0..20).map(|s| sample_scene(&SceneParams::paper(), s).unwrap()).collect();
    let mut rng = rng_from_seed(8);
    for i in 0..300 {
        let scene = &scenes[i % scenes.len()];
        let q = spec.sample_uniform(&mut rng);
        assert_eq!(config_valid(&spec, scene, &q), config_valid_sampled(&spec, scene, &q, 1000));
    }
}

#[test]
fn edge_valid_matches_fine_resolution() {
    let spec = ArmSpec::desk();
    let scenes = desk_scenes(50);
    let mut disagree = 0;
    let mut both = [0usize; 2];
    for (s, a, b) in edge_cases(&spec, &scenes, 1000, 99) {
        let checker = Checker::new(&spec, &scenes[s]);
        let coarse = checker.edge_valid(&a, &b, DEFAULT_EDGE_RESOLUTION);
        let fine = edge_valid_dense(&a, &b, 1e-4, |q| checker.config_valid(q));
        both[coarse as usize] += 1;
        if coarse != fine {
            assert!(coarse && !fine, "coarse check rejected an edge the fine check accepts");
            disagree += 1;
        }
    }
    assert_eq!(disagree, 0, "edge disagreements at default resolution");
    assert!(both[0] > 50 && both[1] > 50, "degenerate edge set {both:?}");
}

#[test]
fn acceptance_rate_matches_free_fraction() {
    let spec = ArmSpec::desk();
    let scene = &desk_scenes(1)[0];
    let n = 4000;
    let mut rng = rng_from_seed(3);
    let accepted = (0..n).filter(|_| sample_valid_config(&spec, scene, &mut rng, 1).is_ok()).count();
    let mut rng = rng_from_seed(4);
    let free = (0..n)
        .filter(|_| config_valid_sampled(&spec, scene, &spec.sample_uniform(&mut rng), 200))
        .count();
    let (pa, pf) = (accepted as f64 / n as f64, free as f64 / n as f64);
    assert!((pa - pf).abs() < 0.05, "acceptance {pa} vs free fraction {pf}");
}

#[test]
fn empty_scene_first_sample_accepted() {
    let spec = ArmSpec::desk();
    let scene = Scene::empty(SceneParams::desk().bounds);
    let mut r1 = stream(5, 0);
    let mut r2 = stream(5, 0);
    let q = sample_valid_config(&spec, &scene, &mut r1, 1).unwrap();
    assert_eq!(q, spec.sample_uniform(&mut r2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fk_is_lipschitz(seed in any::<u64>(), delta in 1e-6f64..0.1) {
        let spec = ArmSpec::desk();
        let mut rng = rng_from_seed(seed);
        let q = spec.sample_uniform(&mut rng);
        let q2: Vec<f64> = q.iter().map(|x| x + rng.random_range(-delta..delta)).collect();
        let a = forward_kinematics(&spec, &q);
        let b = forward_kinematics(&spec, &q2);
        let bound = spec.reach() * spec.dof as f64 * delta;
        for (p, r) in a.points.iter().zip(&b.points) {
            let d = ((p[0] - r[0]).powi(2) + (p[1] - r[1]).powi(2)).sqrt();
            prop_assert!(d < bound);
        }
    }

    #[test]
    fn larger_radius_never_validates(seed in any::<u64>(), extra in 0.0f64..0.2) {
        let spec = ArmSpec::desk();
        let scene = sample_scene(&SceneParams::desk(), seed % 64).unwrap();
        let mut fat = spec.clone();
        fat.link_radius += extra;
        let mut rng = rng_from_seed(seed);
        for _ in 0..20 {
            let q = spec.sample_uniform(&mut rng);
            if config_valid(&fat, &scene, &q) {
                prop_assert!(config_valid(&spec, &scene, &q));
            }
        }
    }

    #[test]
    fn edge_validity_is_symmetric(seed in any::<u64>()) {
        let spec = ArmSpec::desk();
        let scene = sample_scene(&SceneParams::desk(), seed % 64).unwrap();
        let mut rng = rng_from_seed(seed);
        let a = spec.sample_uniform(&mut rng);
        let b = spec.sample_uniform(&mut rng);
        prop_assert_eq!(edge_valid(&spec, &scene, &a, &b, 0.01), edge_valid(&spec, &scene, &b, &a, 0.01));
    }
}

use rand::Rng;
