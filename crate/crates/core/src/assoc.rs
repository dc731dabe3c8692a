//! Association kernels shared by both selectors: Pearson correlation, the
//! partial-correlation conditional independence test, and the KSG k-NN
//! mutual information estimator.
//!
//! Every kernel standardizes its inputs internally.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssocError {
    #[error("input lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("conditioning set is rank deficient (column {0})")]
    RankDeficient(usize),
    #[error("invalid neighbor count k={0}")]
    InvalidK(usize),
}

pub type Result<T, E = AssocError> = std::result::Result<T, E>;

/// Outcome of a (conditional) independence test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiResult {
    /// Partial correlation, in [-1, 1].
    pub statistic: f64,
    /// Two-sided p-value, in [0, 1].
    pub p_value: f64,
    pub sample_size: usize,
    pub cond_dim: usize,
}

/// Digamma function for positive arguments, via upward recurrence to x >= 6
/// followed by the asymptotic expansion.
pub fn digamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut x = x;
    let mut acc = 0.0;
    while x < 6.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli-number coefficients B_2k / (2k)
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32760.0)))));
    acc + x.ln() - 0.5 * inv - series
}

/// Centers and scales to unit population variance. `None` if constant.
fn standardize(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 1e-14 * mean.abs().max(1.0)) || !sd.is_finite() {
        return None;
    }
    Some(v.iter().map(|a| (a - mean) / sd).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(AssocError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(AssocError::InsufficientSamples {
            needed: 3,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if !(sxx > 0.0) {
        return Err(AssocError::Degenerate("first input is constant"));
    }
    if !(syy > 0.0) {
        return Err(AssocError::Degenerate("second input is constant"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Two-sided p-value of a sample correlation `r` with `dof` degrees of
/// freedom under the Student-t null: `P(|T| > |t|) = I_{1-r^2}(dof/2, 1/2)`.
pub fn correlation_p_value(r: f64, dof: usize) -> f64 {
    let r2 = (r * r).min(1.0);
    if r2 >= 1.0 {
        return 0.0;
    }
    beta_reg(dof as f64 / 2.0, 0.5, 1.0 - r2).clamp(0.0, 1.0)
}

/// Orthonormal basis for the span of the (standardized) conditioning columns.
struct Residualizer {
    basis: Vec<Vec<f64>>,
}

impl Residualizer {
    fn new(z: &[&[f64]], n: usize) -> Result<Self> {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(z.len());
        for (c, col) in z.iter().enumerate() {
            if col.len() != n {
                return Err(AssocError::LengthMismatch(col.len(), n));
            }
            let mut v = standardize(col).ok_or(AssocError::RankDeficient(c))?;
            let norm0 = dot(&v, &v);
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for q in &basis {
                    let p = dot(q, &v);
                    v.iter_mut().zip(q).for_each(|(a, b)| *a -= p * b);
                }
            }
            let norm = dot(&v, &v);
            if norm <= 1e-10 * norm0 {
                return Err(AssocError::RankDeficient(c));
            }
            let s = norm.sqrt();
            v.iter_mut().for_each(|a| *a /= s);
            basis.push(v);
        }
        Ok(Self { basis })
    }

    fn residual(&self, v: &mut [f64]) {
        for _ in 0..2 {
            for q in &self.basis {
                let p = dot(q, v);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= p * b);
            }
        }
    }
}

/// Partial correlation test of `x` and `y` given the columns of `z`.
///
/// Both variables are residualized on `z` by least squares with an
/// intercept; the statistic is the correlation of the residuals and the
/// p-value uses a Student-t null with `n - |z| - 2` degrees of freedom.
pub fn parcorr_test(x: &[f64], y: &[f64], z: &[&[f64]]) -> Result<CiResult> {
    let n = x.len();
    if y.len() != n {
        return Err(AssocError::LengthMismatch(n, y.len()));
    }
    let needed = z.len() + 4;
    if n < needed {
        return Err(AssocError::InsufficientSamples { needed, got: n });
    }
    let mut rx = standardize(x).ok_or(AssocError::Degenerate("x is constant"))?;
    let mut ry = standardize(y).ok_or(AssocError::Degenerate("y is constant"))?;
    let res = Residualizer::new(z, n)?;
    res.residual(&mut rx);
    res.residual(&mut ry);
    let sxx = dot(&rx, &rx);
    let syy = dot(&ry, &ry);
    if sxx <= 1e-20 * n as f64 {
        return Err(AssocError::Degenerate(
            "x is determined by the conditioning set",
        ));
    }
    if syy <= 1e-20 * n as f64 {
        return Err(AssocError::Degenerate(
            "y is determined by the conditioning set",
        ));
    }
    let r = (dot(&rx, &ry) / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let dof = n - z.len() - 2;
    Ok(CiResult {
        statistic: r,
        p_value: correlation_p_value(r, dof),
        sample_size: n,
        cond_dim: z.len(),
    })
}

/// Default neighbor count for [`knn_mutual_information`].
pub const DEFAULT_KNN_K: usize = 3;
const JITTER_SEED: u64 = 0x5EED_4B53_4700_0001;
const JITTER_AMPLITUDE: f64 = 1e-10;

fn jittered(v: &[f64], rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    let mut s = standardize(v)?;
    for a in &mut s {
        *a += JITTER_AMPLITUDE * rng.random_range(-1.0..1.0);
    }
    Some(s)
}

/// Number of entries of sorted `vals` strictly within `eps` of `c`.
fn count_within(vals: &[f64], c: f64, eps: f64) -> usize {
    // bracket loosely, then settle the boundary with the exact |v - c| < eps
    let mut lo = vals.partition_point(|&v| v < c - eps);
    let mut hi = vals.partition_point(|&v| v <= c + eps);
    while lo < hi && (vals[lo] - c).abs() >= eps {
        lo += 1;
    }
    while hi > lo && (vals[hi - 1] - c).abs() >= eps {
        hi -= 1;
    }
    hi - lo
}

/// Mutual information in nats by the Kraskov–Stögbauer–Grassberger
/// estimator (first variant, max-norm), clamped below at zero.
///
/// Inputs are standardized and de-tied with a fixed-seed jitter, so the
/// result depends only on the input values and order. A constant input
/// carries no information and yields 0.
pub fn knn_mutual_information(x: &[f64], y: &[f64], k: usize) -> Result<f64> {
    let n = x.len();
    if y.len() != n {
        return Err(AssocError::LengthMismatch(n, y.len()));
    }
    if k == 0 {
        return Err(AssocError::InvalidK(k));
    }
    if n <= k {
        return Err(AssocError::InsufficientSamples {
            needed: k + 1,
            got: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(JITTER_SEED);
    let (Some(xs), Some(ys)) = (jittered(x, &mut rng), jittered(y, &mut rng)) else {
        return Ok(0.0);
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
    let sx: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
    let sy_by_x: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
    let mut sorted_y = ys.clone();
    sorted_y.sort_by(f64::total_cmp);

    let mut sum = 0.0;
    let mut best: Vec<f64> = Vec::with_capacity(k + 1);
    for p in 0..n {
        let (cx, cy) = (sx[p], sy_by_x[p]);
        best.clear();
        // k smallest max-norm distances, kept sorted ascending
        let push = |d: f64, best: &mut Vec<f64>| {
            if best.len() < k || d < best[best.len() - 1] {
                let pos = best.partition_point(|&b| b <= d);
                best.insert(pos, d);
                if best.len() > k {
                    best.pop();
                }
            }
        };
        let (mut l, mut r) = (p, p + 1);
        loop {
            let kth = if best.len() == k {
                best[k - 1]
            } else {
                f64::INFINITY
            };
            let dl = if l > 0 { cx - sx[l - 1] } else { f64::INFINITY };
            let dr = if r < n { sx[r] - cx } else { f64::INFINITY };
            if dl.min(dr) >= kth || (l == 0 && r == n) {
                break;
            }
            if dl <= dr {
                l -= 1;
                push(dl.max((sy_by_x[l] - cy).abs()), &mut best);
            } else {
                push(dr.max((sy_by_x[r] - cy).abs()), &mut best);
                r += 1;
            }
        }
        let eps = best[k - 1];
        let nx = count_within(&sx, cx, eps) - 1;
        let ny = count_within(&sorted_y, cy, eps) - 1;
        sum += digamma(nx as f64 + 1.0) + digamma(ny as f64 + 1.0);
    }
    let mi = digamma(k as f64) + digamma(n as f64) - sum / n as f64;
    Ok(mi.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn digamma_matches_reference() {
        for &x in &[1.0, 1.5, 2.0, 3.0, 5.5, 10.0, 123.4, 5000.0] {
            let want = statrs::function::gamma::digamma(x);
            assert!((digamma(x) - want).abs() < 1e-10, "x={x}");
        }
        // psi(1) = -euler_gamma
        assert!((digamma(1.0) + 0.577_215_664_901_532_9).abs() < 1e-12);
    }

    #[test]
    fn pearson_basics() {
        let x = [1.0, 2.0, 3.0, 4.5];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(
            pearson(&x, &[1.0; 4]),
            Err(AssocError::Degenerate(_))
        ));
        assert!(matches!(
            pearson(&x[..2], &x[..2]),
            Err(AssocError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn pearson_hand_value() {
        // x={1,2,3}, y={1,2,4}: dx={-1,0,1}, dy={-4/3,-1/3,5/3}
        // sxy=3, sxx=2, syy=42/9 -> r = 3/sqrt(2*42/9) = 3*3/sqrt(84)
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        let want = 9.0 / 84f64.sqrt();
        assert!((r - want).abs() < 1e-15);
        assert!((r - 0.981_980_506_061_965_7).abs() < 1e-12);
    }

    #[test]
    fn parcorr_empty_condition_is_pearson_t_test() {
        let x = normals(200, 1);
        let y: Vec<f64> = normals(200, 2)
            .iter()
            .zip(&x)
            .map(|(e, a)| e + 0.2 * a)
            .collect();
        let res = parcorr_test(&x, &y, &[]).unwrap();
        let r = pearson(&x, &y).unwrap();
        assert!((res.statistic - r).abs() < 1e-12);
        // independent route: Student-t survival via statrs
        use statrs::distribution::{ContinuousCDF, StudentsT};
        let dof = 198.0;
        let t = r * (dof / (1.0 - r * r)).sqrt();
        let p = 2.0 * StudentsT::new(0.0, 1.0, dof).unwrap().cdf(-t.abs());
        assert!((res.p_value - p).abs() < 1e-10);
        assert_eq!(res.cond_dim, 0);
        assert_eq!(res.sample_size, 200);
    }

    #[test]
    fn parcorr_detects_direct_link_under_irrelevant_condition() {
        let n = 2000;
        let x = normals(n, 11);
        let w = normals(n, 12);
        let y: Vec<f64> = normals(n, 13)
            .iter()
            .zip(&x)
            .map(|(e, a)| 0.5 * a + e)
            .collect();
        let res = parcorr_test(&x, &y, &[&w]).unwrap();
        assert!(res.p_value < 0.001);
        assert_eq!(res.cond_dim, 1);
    }

    #[test]
    fn parcorr_errors() {
        let x = normals(10, 3);
        let y = normals(10, 4);
        let z1 = normals(10, 5);
        let z2: Vec<f64> = z1.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!(matches!(
            parcorr_test(&x, &y, &[&z1, &z2]),
            Err(AssocError::RankDeficient(1))
        ));
        let z: Vec<Vec<f64>> = (0..7).map(|s| normals(10, 100 + s)).collect();
        let zr: Vec<&[f64]> = z.iter().map(|v| v.as_slice()).collect();
        assert!(matches!(
            parcorr_test(&x, &y, &zr),
            Err(AssocError::InsufficientSamples {
                needed: 11,
                got: 10
            })
        ));
    }

    #[test]
    fn ksg_identical_inputs_are_large_and_finite() {
        let x = normals(1000, 9);
        let mi = knn_mutual_information(&x, &x, 3).unwrap();
        assert!(mi.is_finite() && mi > 2.0, "mi={mi}");
    }

    #[test]
    fn ksg_errors_and_constant() {
        let x = normals(5, 1);
        assert!(matches!(
            knn_mutual_information(&x, &x, 5),
            Err(AssocError::InsufficientSamples { .. })
        ));
        assert!(matches!(
            knn_mutual_information(&x, &x, 0),
            Err(AssocError::InvalidK(0))
        ));
        assert_eq!(knn_mutual_information(&x, &[2.0; 5], 1).unwrap(), 0.0);
    }

    /// Brute-force KSG over all pairs; independent of the sorted search.
    fn ksg_brute(x: &[f64], y: &[f64], k: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(JITTER_SEED);
        let xs = jittered(x, &mut rng).unwrap();
        let ys = jittered(y, &mut rng).unwrap();
        let n = xs.len();
        let mut acc = 0.0;
        for i in 0..n {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (xs[i] - xs[j]).abs().max((ys[i] - ys[j]).abs()))
                .collect();
            d.sort_by(f64::total_cmp);
            let eps = d[k - 1];
            let nx = (0..n)
                .filter(|&j| j != i && (xs[i] - xs[j]).abs() < eps)
                .count();
            let ny = (0..n)
                .filter(|&j| j != i && (ys[i] - ys[j]).abs() < eps)
                .count();
            acc += statrs::function::gamma::digamma(nx as f64 + 1.0)
                + statrs::function::gamma::digamma(ny as f64 + 1.0);
        }
        (statrs::function::gamma::digamma(k as f64) + statrs::function::gamma::digamma(n as f64)
            - acc / n as f64)
            .max(0.0)
    }

    #[test]
    fn ksg_matches_brute_force() {
        for (seed, k) in [(1u64, 1usize), (2, 3), (3, 5)] {
            let x = normals(300, seed);
            let y: Vec<f64> = normals(300, seed + 50)
                .iter()
                .zip(&x)
                .map(|(e, a)| (a * 1.3).sin() + 0.5 * e)
                .collect();
            let fast = knn_mutual_information(&x, &y, k).unwrap();
            let slow = ksg_brute(&x, &y, k);
            assert!((fast - slow).abs() < 1e-9, "k={k} fast={fast} slow={slow}");
        }
    }

    #[test]
    fn ksg_deterministic_with_ties() {
        let x: Vec<f64> = (0..400).map(|i| (i % 7) as f64).collect();
        let y: Vec<f64> = (0..400).map(|i| (i % 5) as f64).collect();
        let a = knn_mutual_information(&x, &y, 3).unwrap();
        let b = knn_mutual_information(&x, &y, 3).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn pearson_symmetric_and_affine(seed in 0u64..1000, a in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0], b in -100.0f64..100.0) {
                let x = normals(40, seed);
                let y: Vec<f64> = normals(40, seed + 7).iter().zip(&x).map(|(e, v)| e + 0.3 * v).collect();
                let r = pearson(&x, &y).unwrap();
                prop_assert!((r - pearson(&y, &x).unwrap()).abs() < 1e-12);
                let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                prop_assert!((pearson(&ax, &y).unwrap() - a.signum() * r).abs() < 1e-12);
            }

            #[test]
            fn parcorr_affine_invariant(seed in 0u64..1000, a in 0.1f64..20.0, b in -10.0f64..10.0, c in -5.0f64..-0.2) {
                let z = normals(80, seed);
                let x: Vec<f64> = normals(80, seed + 1).iter().zip(&z).map(|(e, v)| e + v).collect();
                let y: Vec<f64> = normals(80, seed + 2).iter().zip(&z).zip(&x).map(|((e, v), w)| e + v + 0.3 * w).collect();
                let base = parcorr_test(&x, &y, &[&z]).unwrap();
                let x2: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                let y2: Vec<f64> = y.iter().map(|v| c * v + 1.0).collect();
                let z2: Vec<f64> = z.iter().map(|v| -3.0 * v + b).collect();
                let t = parcorr_test(&x2, &y2, &[&z2]).unwrap();
                prop_assert!((t.statistic + base.statistic).abs() < 1e-9);
                prop_assert!((t.p_value - base.p_value).abs() < 1e-9);
                prop_assert!(base.statistic.abs() <= 1.0);
                prop_assert!((0.0..=1.0).contains(&base.p_value));
            }

            #[test]
            fn ksg_non_negative(seed in 0u64..200) {
                let x = normals(200, seed);
                let y = normals(200, seed + 999);
                prop_assert!(knn_mutual_information(&x, &y, 3).unwrap() >= 0.0);
            }
        }
    }
}
