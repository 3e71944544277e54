mod common;

use common::*;
use faer::Mat;
use mind_core::harness::synthetic::gaussian_pool;
use mind_core::linalg::{eigh, sqrtm_psd, summarize, trace, trace_sqrt_product};
use mind_core::moments::{fid, mu_fid, sigma_fid, SigmaFidConfig};
use mind_core::EmbeddingSet;
use proptest::prelude::*;

fn diag(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), v.len(), |i, j| if i == j { v[i] } else { 0.0 })
}

#[test]
fn trace_sqrt_matches_general_eigensolver() {
    for seed in 0..20 {
        let sx = random_psd(8, 8, seed);
        let sy = random_psd(8, 5, seed + 100);
        let oracle = trace_sqrt_product_oracle(&to_dmatrix(sx.as_ref()), &to_dmatrix(sy.as_ref()));
        let fast = trace_sqrt_product(sx.as_ref(), sy.as_ref()).unwrap();
        assert!((fast - oracle).abs() <= 1e-6 * oracle, "seed {seed}: {fast} vs {oracle}");
    }
}

#[test]
fn eigh_agrees_with_nalgebra() {
    for seed in 0..5 {
        let s = random_psd(16, 16, seed);
        let ours = eigh(s.as_ref(), None).unwrap();
        let mut theirs: Vec<f64> = to_dmatrix(s.as_ref()).symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ours.eigenvalues.iter().zip(&theirs) {
            assert!((a - b).abs() <= 1e-9 * theirs[0]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trace_sqrt_symmetric_and_self_trace(seed in 0u64..10_000, d in 1usize..12) {
        let a = random_psd(d, d, seed);
        let b = random_psd(d, (d / 2).max(1), seed ^ 0xABCD);
        let ab = trace_sqrt_product(a.as_ref(), b.as_ref()).unwrap();
        let ba = trace_sqrt_product(b.as_ref(), a.as_ref()).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-6 * ab.max(1e-300));
        let aa = trace_sqrt_product(a.as_ref(), a.as_ref()).unwrap();
        let tr = trace(a.as_ref());
        prop_assert!((aa - tr).abs() <= 1e-8 * tr);
    }

    #[test]
    fn sqrtm_squares_back(seed in 0u64..10_000, d in 1usize..20) {
        let s = random_psd(d, d, seed);
        let r = sqrtm_psd(s.as_ref()).unwrap();
        let rr = &r * &r;
        let err = (&rr - &s).norm_l2();
        prop_assert!(err <= 1e-6 * s.norm_l2());
    }

    #[test]
    fn eigh_invariants(seed in 0u64..10_000, d in 1usize..20, k in 1usize..20) {
        let s = random_psd(d, k, seed);
        let e = eigh(s.as_ref(), None).unwrap();
        let max_abs = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| s[(i, j)].abs()).fold(0.0, f64::max);
        let u = &e.eigenvectors;
        let lam = diag(&e.eigenvalues);
        let rec = u * &lam * u.transpose();
        let utu = u.transpose() * u;
        for i in 0..d {
            for j in 0..d {
                prop_assert!((rec[(i, j)] - s[(i, j)]).abs() <= 1e-8 * (1.0 + max_abs));
                let id = if i == j { 1.0 } else { 0.0 };
                prop_assert!((utu[(i, j)] - id).abs() <= 1e-10);
            }
        }
        prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(e.rank <= k.min(d));
    }

    #[test]
    fn fid_symmetric_and_dominates_mean_term(seed in 0u64..10_000) {
        let a = set_from(&normal_rows(30, 4, seed));
        let b = set_from(&normal_rows(25, 4, seed + 1)).map(|_, j, v| v * (1.0 + j as f64) + 0.5).unwrap();
        let ab = fid(&a, &b).unwrap().value;
        let ba = fid(&b, &a).unwrap().value;
        prop_assert!((ab - ba).abs() <= 1e-6 * ab);
        prop_assert!(ab >= mu_fid(&a, &b).unwrap() - 1e-6 * (1.0 + ab));
    }
}

#[test]
fn summarize_examples() {
    let two = EmbeddingSet::new(vec![0.0, 2.0], 2, 1).unwrap();
    let g = summarize(&two).unwrap();
    assert_eq!(g.mean, vec![1.0]);
    assert_eq!(g.cov[(0, 0)], 1.0);
    let atom = EmbeddingSet::new(vec![3.0, -1.0], 1, 2).unwrap().with_weights(vec![1.0]).unwrap();
    let g = summarize(&atom).unwrap();
    assert!((0..2).all(|i| (0..2).all(|j| g.cov[(i, j)] == 0.0)));
}

#[test]
fn trace_sqrt_examples() {
    let i5 = diag(&[1.0; 5]);
    assert!((trace_sqrt_product(i5.as_ref(), i5.as_ref()).unwrap() - 5.0).abs() < 1e-12);
    let v = trace_sqrt_product(diag(&[4.0]).as_ref(), diag(&[1.0]).as_ref()).unwrap();
    assert!((v - 2.0).abs() < 1e-12);
}

#[test]
fn fid_commuting_closed_form() {
    let la = [4.0, 1.0, 0.25, 9.0];
    let lb = [1.0, 2.0, 0.5, 0.0];
    let sa = mind_core::GaussianSummary::new(vec![0.0, 1.0, 0.0, 2.0], diag(&la), 10).unwrap();
    let sb = mind_core::GaussianSummary::new(vec![1.0, 1.0, -1.0, 0.0], diag(&lb), 10).unwrap();
    let expect: f64 = 1.0 + 0.0 + 1.0 + 4.0 + la.iter().zip(&lb).map(|(x, y): (&f64, &f64)| (x.sqrt() - y.sqrt()).powi(2)).sum::<f64>();
    let got = mind_core::moments::fid_from_summaries(&sa, &sb).unwrap().value;
    assert!((got - expect).abs() <= 1e-8, "{got} vs {expect}");
}

#[test]
fn covariance_monte_carlo() {
    let l = diag(&[1.0, 2.0]);
    let s = gaussian_pool(1_000_000, &[0.0, 0.0], Some(l.as_ref()), 8).unwrap();
    let g = summarize(&s).unwrap();
    assert!((g.cov[(0, 0)] - 1.0).abs() <= 0.02);
    assert!((g.cov[(1, 1)] - 4.0).abs() <= 0.08);
    assert!(g.cov[(0, 1)].abs() <= 0.02 * 2.0);
}

#[test]
fn fid_gaussian_population() {
    let d = 8;
    let a = gaussian_pool(50_000, &vec![0.0; d], None, 1).unwrap();
    let b = gaussian_pool(50_000, &vec![1.0; d], None, 2).unwrap();
    let v = fid(&a, &b).unwrap().value;
    assert!((v - 8.0).abs() <= 0.05 * 8.0, "{v}");
}

#[test]
fn mu_fid_noise_bound() {
    let d = 4;
    let a = gaussian_pool(100_000, &vec![0.0; d], None, 3).unwrap();
    let l = diag(&[0.5, 0.25, 0.5, 0.75]);
    let b = gaussian_pool(100_000, &vec![0.0; d], Some(l.as_ref()), 4).unwrap();
    let v = mu_fid(&a, &b).unwrap();
    assert!(v <= 3.0 * d as f64 / 100_000.0, "{v}");
}

#[test]
fn sigma_fid_isotropic_shift() {
    let d = 16;
    let a = gaussian_pool(50_000, &vec![0.0; d], None, 5).unwrap();
    let b = gaussian_pool(50_000, &vec![0.5; d], None, 6).unwrap();
    let dmu2 = 0.25 * d as f64;
    let v = sigma_fid(&a, &b, &SigmaFidConfig { projections: 10_000, seed: 2 }).unwrap();
    assert!((v - dmu2 / d as f64).abs() <= 0.05 * dmu2 / d as f64, "{v}");
}
