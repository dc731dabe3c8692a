#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stlf::assoc::{knn_mutual_information, parcorr_test, pearson};

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Residuals of `v` after least squares on an intercept and `z`, via the
/// normal equations with Gaussian elimination.
fn residualize(v: &[f64], z: &[Vec<f64>]) -> Vec<f64> {
    let n = v.len();
    let p = z.len() + 1;
    let col = |j: usize, i: usize| if j == 0 { 1.0 } else { z[j - 1][i] };
    let mut a = vec![vec![0.0; p + 1]; p];
    for r in 0..p {
        for c in 0..p {
            a[r][c] = (0..n).map(|i| col(r, i) * col(c, i)).sum();
        }
        a[r][p] = (0..n).map(|i| col(r, i) * v[i]).sum();
    }
    for k in 0..p {
        let piv = (k..p)
            .max_by(|&x, &y| a[x][k].abs().total_cmp(&a[y][k].abs()))
            .unwrap();
        a.swap(k, piv);
        for r in 0..p {
            if r != k {
                let f = a[r][k] / a[k][k];
                for c in k..=p {
                    a[r][c] -= f * a[k][c];
                }
            }
        }
    }
    let beta: Vec<f64> = (0..p).map(|k| a[k][p] / a[k][k]).collect();
    (0..n)
        .map(|i| v[i] - (0..p).map(|j| beta[j] * col(j, i)).sum::<f64>())
        .collect()
}

fn plain_corr(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

// ---------------------------------------------------------------------------
// Pearson and partial correlation

#[test]
fn pearson_hand_value() {
    // means 2 and 7/3; sxy = 3, sxx = 2, syy = 14/3
    let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
    assert!((r - 3.0 / (2.0f64 * 14.0 / 3.0).sqrt()).abs() < 1e-12);
}

#[test]
fn parcorr_statistic_matches_explicit_residual_correlation() {
    let n = 400;
    let z1 = normals(n, 1);
    let z2 = normals(n, 2);
    let e = normals(n, 3);
    let x: Vec<f64> = (0..n).map(|i| 0.7 * z1[i] - 0.2 * z2[i] + e[i]).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 0.3 * x[i] + 0.5 * z2[i] + normals(n, 4)[i])
        .collect();
    let zs = vec![z1.clone(), z2.clone()];
    let want = plain_corr(&residualize(&x, &zs), &residualize(&y, &zs));
    let got = parcorr_test(&x, &y, &[&z1, &z2]).unwrap();
    assert!((got.statistic - want).abs() < 1e-10);
    assert_eq!(got.cond_dim, 2);
    assert_eq!(got.sample_size, n);
}

#[test]
fn direct_link_under_irrelevant_condition_is_significant() {
    let n = 2000;
    let x = normals(n, 11);
    let e = normals(n, 12);
    let w = normals(n, 13);
    let y: Vec<f64> = (0..n).map(|i| 0.5 * x[i] + e[i]).collect();
    assert!(parcorr_test(&x, &y, &[&w]).unwrap().p_value < 1e-3);
}

proptest! {
    #[test]
    fn pearson_symmetric_and_affine_invariant(
        seed in 0u64..1000,
        a in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0],
        b in -100.0f64..100.0,
    ) {
        let x = normals(64, seed);
        let y: Vec<f64> = normals(64, seed + 7).iter().zip(&x).map(|(e, v)| e + 0.4 * v).collect();
        let r = pearson(&x, &y).unwrap();
        prop_assert!((r - pearson(&y, &x).unwrap()).abs() < 1e-12);
        let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        prop_assert!((pearson(&ax, &y).unwrap() - a.signum() * r).abs() < 1e-12);
    }

    #[test]
    fn parcorr_affine_invariant(
        seed in 0u64..1000,
        a in prop_oneof![-20.0f64..-0.05, 0.05f64..20.0],
        c in 0.05f64..20.0,
        shift in -50.0f64..50.0,
    ) {
        let n = 120;
        let z = normals(n, seed);
        let x: Vec<f64> = normals(n, seed + 1).iter().zip(&z).map(|(e, v)| e + v).collect();
        let y: Vec<f64> = normals(n, seed + 2).iter().zip(&x).map(|(e, v)| e + 0.3 * v).collect();
        let base = parcorr_test(&x, &y, &[&z]).unwrap();
        let tx: Vec<f64> = x.iter().map(|v| a * v + shift).collect();
        let tz: Vec<f64> = z.iter().map(|v| c * v - shift).collect();
        let moved = parcorr_test(&tx, &y, &[&tz]).unwrap();
        prop_assert!((moved.statistic - a.signum() * base.statistic).abs() < 1e-9);
        prop_assert!((moved.p_value - base.p_value).abs() < 1e-9);
    }
}

// ---------------------------------------------------------------------------
// KSG mutual information

#[test]
fn ksg_is_invariant_under_monotone_transforms() {
    let n = 5000;
    let x = normals(n, 21);
    let e = normals(n, 22);
    let y: Vec<f64> = (0..n).map(|i| 0.6 * x[i] + 0.8 * e[i]).collect();
    let base = knn_mutual_information(&x, &y, 3).unwrap();
    let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let cy: Vec<f64> = y.iter().map(|v| v.powi(3) + 2.0 * v).collect();
    let moved = knn_mutual_information(&ex, &cy, 3).unwrap();
    assert!((moved - base).abs() < 0.05, "{base} vs {moved}");
}

#[test]
fn ksg_duplicate_input_is_large_and_finite() {
    let x = normals(1000, 31);
    let mi = knn_mutual_information(&x, &x, 3).unwrap();
    assert!(mi.is_finite() && mi > 2.0, "{mi}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ksg_is_non_negative_and_deterministic(seed in 0u64..10_000, rho in -0.9f64..0.9) {
        let n = 300;
        let x = normals(n, seed);
        let e = normals(n, seed ^ 0xabc);
        let y: Vec<f64> = (0..n).map(|i| rho * x[i] + (1.0 - rho * rho).sqrt() * e[i]).collect();
        let a = knn_mutual_information(&x, &y, 3).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert_eq!(a.to_bits(), knn_mutual_information(&x, &y, 3).unwrap().to_bits());
    }
}
