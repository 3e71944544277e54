mod common;

use common::*;
use mind_core::harness::synthetic::gaussian_pool;
use mind_core::ot::{
    mind, sample_directions, sinkhorn_cost, sinkhorn_divergence, sliced_w2, sliced_w2_estimate, w2_1d,
    w2_1d_weighted, Alpha, Epsilon, MindConfig, SinkhornConfig,
};
use mind_core::rng::rng_from;
use mind_core::EmbeddingSet;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn w2_1d_examples() {
    assert_eq!(w2_1d(&[5.0, 1.0, 3.0], &[5.0, 1.0, 3.0]).unwrap(), 0.0);
    assert_eq!(w2_1d(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
    assert!(w2_1d(&[0.0, 1.0], &[1.0]).is_err());
}

#[test]
fn w2_1d_matches_permutation_oracle_n6() {
    let mut rng = rng_from(11);
    for _ in 0..20 {
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
        let fast = w2_1d(&x, &y).unwrap();
        assert!((fast - brute_force_w2_1d(&x, &y)).abs() <= 1e-10);
    }
}

#[test]
fn weighted_examples() {
    assert!((w2_1d_weighted(&[0.0, 2.0], &[0.5, 0.5], &[1.0], &[1.0]).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(w2_1d_weighted(&[1.0, 4.0], &[0.3, 0.7], &[1.0, 4.0], &[0.3, 0.7]).unwrap(), 0.0);
    assert!(w2_1d_weighted(&[1.0], &[0.9], &[1.0], &[1.0]).is_err());
}

#[test]
fn weighted_uniform_matches_unweighted_n8() {
    let mut rng = rng_from(3);
    let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w = vec![0.125; 8];
    let a = w2_1d_weighted(&x, &w, &y, &w).unwrap();
    assert!((a - w2_1d(&x, &y).unwrap()).abs() <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn brute_force_agreement(pairs in (1usize..=6).prop_flat_map(|n| (
        prop::collection::vec(-100.0f64..100.0, n),
        prop::collection::vec(-100.0f64..100.0, n),
    ))) {
        let (x, y) = pairs;
        let fast = w2_1d(&x, &y).unwrap();
        prop_assert!((fast - brute_force_w2_1d(&x, &y)).abs() <= 1e-10 * (1.0 + fast));
    }

    #[test]
    fn translation_exact(x in prop::collection::vec(-10i32..10, 1..20), c in -8i32..8) {
        let y: Vec<f64> = x.iter().rev().map(|&v| (v * 3 % 7) as f64).collect();
        let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let xs: Vec<f64> = x.iter().map(|v| v + c as f64).collect();
        let ys: Vec<f64> = y.iter().map(|v| v + c as f64).collect();
        prop_assert_eq!(w2_1d(&xs, &ys).unwrap(), w2_1d(&x, &y).unwrap());
    }

    #[test]
    fn weighted_matches_replicated_oracle(
        x in prop::collection::vec(-5.0f64..5.0, 1..6),
        y in prop::collection::vec(-5.0f64..5.0, 1..6),
        cx in prop::collection::vec(1usize..5, 6),
        cy in prop::collection::vec(1usize..5, 6),
    ) {
        let counts_x = &cx[..x.len()];
        let counts_y = &cy[..y.len()];
        let tx: usize = counts_x.iter().sum();
        let ty: usize = counts_y.iter().sum();
        let k = tx * ty;
        let wx: Vec<f64> = counts_x.iter().map(|&c| c as f64 / tx as f64).collect();
        let wy: Vec<f64> = counts_y.iter().map(|&c| c as f64 / ty as f64).collect();
        let fast = w2_1d_weighted(&x, &wx, &y, &wy).unwrap();
        let rx = replicate(&x, &wx, k);
        let ry = replicate(&y, &wy, k);
        let oracle = w2_1d(&rx, &ry).unwrap();
        prop_assert!((fast - oracle).abs() <= 1e-10 * (1.0 + oracle), "{} vs {}", fast, oracle);
    }

    #[test]
    fn mind_nonnegative_self_zero_and_shift_invariant(seed in 0u64..1000, c in -4i32..4) {
        let a = set_from(&normal_rows(12, 3, seed));
        let b = set_from(&normal_rows(12, 3, seed + 7));
        let cfg = MindConfig { projections: 16, alpha: Alpha::Auto, seed };
        let ab = mind(&a, &b, &cfg).unwrap().value;
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(mind(&a, &a, &cfg).unwrap().value, 0.0);
        let shift = |s: &EmbeddingSet| s.map(|_, _, v| v + c as f64 * 0.5).unwrap();
        let shifted = mind(&shift(&a), &shift(&b), &cfg).unwrap().value;
        prop_assert!((shifted - ab).abs() <= 1e-9 * (1.0 + ab));
    }
}

#[test]
fn sliced_one_dim_equals_w2() {
    let x = [0.3, -1.2, 4.0, 2.2, 0.0];
    let y = [1.0, 1.5, -3.0, 0.7, 2.0];
    let a = EmbeddingSet::new(x.to_vec(), 5, 1).unwrap();
    let b = EmbeddingSet::new(y.to_vec(), 5, 1).unwrap();
    let expect = w2_1d(&x, &y).unwrap();
    for m in [1, 2, 33, 100] {
        let v = sliced_w2(&a, &b, &sample_directions(m, 1, 5).unwrap()).unwrap();
        assert_eq!(v, expect, "M={m}");
    }
}

#[test]
fn sliced_mean_shift_population() {
    let d = 64;
    let n = 20_000;
    let shift = 1.5;
    let a = gaussian_pool(n, &vec![0.0; d], None, 1).unwrap();
    let b = gaussian_pool(n, &vec![shift; d], None, 2).unwrap();
    let dmu2 = shift * shift * d as f64;
    let est = sliced_w2_estimate(&a, &b, &sample_directions(2000, d, 3).unwrap()).unwrap();
    assert!((est.value - dmu2 / d as f64).abs() <= 0.05 * dmu2 / d as f64, "{est:?}");
    let m = mind(&a, &b, &MindConfig { projections: 2000, alpha: Alpha::Auto, seed: 3 }).unwrap();
    assert_eq!(m.alpha, 3.0 * d as f64);
    assert!((m.value - 3.0 * dmu2).abs() <= 0.05 * 3.0 * dmu2);
}

#[test]
fn mind_rotation_invariant_in_distribution() {
    let d = 8;
    let a = set_from(&normal_rows(400, d, 1));
    let b = set_from(&normal_rows(400, d, 2)).map(|_, j, v| if j < 2 { 2.0 * v + 1.0 } else { v }).unwrap();
    let g = normal_rows(d, d, 9);
    let q = nalgebra::DMatrix::<f64>::from_fn(d, d, |i, j| g[i][j]).qr().q();
    let rotate = |s: &EmbeddingSet| {
        let rows: Vec<Vec<f64>> =
            s.rows().map(|r| (0..d).map(|i| (0..d).map(|k| q[(i, k)] * r[k]).sum()).collect()).collect();
        set_from(&rows)
    };
    let p1 = sample_directions(4000, d, 21).unwrap();
    let p2 = sample_directions(4000, d, 22).unwrap();
    let e1 = sliced_w2_estimate(&a, &b, &p1).unwrap();
    let e2 = sliced_w2_estimate(&rotate(&a), &rotate(&b), &p2).unwrap();
    let se = (e1.std_error.powi(2) + e2.std_error.powi(2)).sqrt();
    assert!((e1.value - e2.value).abs() <= 3.0 * se, "{e1:?} {e2:?}");
}

#[test]
fn sinkhorn_matches_exact_ot_small_eps() {
    let mut rng = rng_from(5);
    for trial in 0..10 {
        let x: Vec<Vec<f64>> = (0..5).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<Vec<f64>> = (0..5).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let exact = brute_force_ot(&x, &y);
        let cfg = SinkhornConfig { epsilon: Epsilon::Relative(1e-3), ..Default::default() };
        let r = sinkhorn_cost(&set_from(&x), &set_from(&y), &cfg).unwrap();
        assert!((r.cost - exact).abs() <= 0.02 * exact, "trial {trial}: {} vs {exact}", r.cost);
    }
}

#[test]
fn sinkhorn_product_coupling_limit() {
    let x = normal_rows(6, 3, 1);
    let y: Vec<Vec<f64>> = normal_rows(4, 3, 2).into_iter().map(|r| r.iter().map(|v| v + 1.0).collect()).collect();
    let mut product = 0.0;
    for p in &x {
        for q in &y {
            product += p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
    }
    product /= 24.0;
    let cfg = SinkhornConfig { epsilon: Epsilon::Absolute(1e7), ..Default::default() };
    let r = sinkhorn_cost(&set_from(&x), &set_from(&y), &cfg).unwrap();
    assert!((r.cost - product).abs() <= 1e-5 * product);
}

#[test]
fn sinkhorn_divergence_self_zero_without_split() {
    let a = set_from(&normal_rows(30, 4, 8));
    let cfg = SinkhornConfig { split_correction: false, ..Default::default() };
    let r = sinkhorn_divergence(&a, &a, &cfg).unwrap();
    assert!(r.value.abs() <= cfg.tol, "{}", r.value);
}
