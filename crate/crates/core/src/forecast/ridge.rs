use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ForecastError, Forecaster, Result, WindowInput, WindowSample};

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1.0;

/// Multi-output ridge regression on the flattened lookback window.
///
/// Every horizon step has its own coefficient vector and intercept. The
/// intercept is not penalized: inputs and outputs are centered on the
/// training means before solving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub lambda: f64,
    pub n_inputs: usize,
    pub horizon: usize,
    /// Row-major `n_inputs x horizon` coefficients.
    pub weights: Vec<f64>,
    pub intercept: Vec<f64>,
}

impl RidgeModel {
    pub fn fit(samples: &[WindowSample], lambda: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(ForecastError::InsufficientSamples {
                needed: 2,
                got: samples.len(),
            });
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(ForecastError::InvalidConfig(format!(
                "ridge lambda must be finite and non-negative, got {lambda}"
            )));
        }
        let n = samples.len();
        let d = samples[0].input.x.len();
        let h = samples[0].y.len();
        for s in samples {
            if s.input.x.len() != d || s.y.len() != h {
                return Err(ForecastError::ShapeMismatch {
                    expected: d,
                    got: s.input.x.len(),
                });
            }
        }
        let mut x = DMatrix::from_fn(n, d, |i, j| samples[i].input.x[j]);
        let mut y = DMatrix::from_fn(n, h, |i, j| samples[i].y[j]);
        let x_mean: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
        let y_mean: Vec<f64> = (0..h).map(|j| y.column(j).mean()).collect();
        for (j, m) in x_mean.iter().enumerate() {
            x.column_mut(j).add_scalar_mut(-m);
        }
        for (j, m) in y_mean.iter().enumerate() {
            y.column_mut(j).add_scalar_mut(-m);
        }

        let w = if d <= n {
            let mut a = x.tr_mul(&x);
            for i in 0..d {
                a[(i, i)] += lambda;
            }
            let chol = a.cholesky().ok_or(ForecastError::Singular)?;
            check_conditioning(&chol, lambda)?;
            chol.solve(&x.tr_mul(&y))
        } else {
            let mut k = &x * x.transpose();
            for i in 0..n {
                k[(i, i)] += lambda;
            }
            let chol = k.cholesky().ok_or(ForecastError::Singular)?;
            check_conditioning(&chol, lambda)?;
            x.tr_mul(&chol.solve(&y))
        };
        if w.iter().any(|v| !v.is_finite()) {
            return Err(ForecastError::Singular);
        }

        let intercept = (0..h)
            .map(|k| y_mean[k] - (0..d).map(|j| x_mean[j] * w[(j, k)]).sum::<f64>())
            .collect();
        let weights = (0..d)
            .flat_map(|j| (0..h).map(move |k| (j, k)))
            .map(|(j, k)| w[(j, k)])
            .collect();
        Ok(Self {
            lambda,
            n_inputs: d,
            horizon: h,
            weights,
            intercept,
        })
    }

    /// Coefficient of input `j` for horizon step `k`.
    pub fn weight(&self, j: usize, k: usize) -> f64 {
        self.weights[j * self.horizon + k]
    }

    /// Coefficients as a `n_inputs x horizon` matrix.
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_inputs, self.horizon, &self.weights)
    }

    pub fn intercept_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.intercept)
    }
}

/// Without a penalty, a numerically rank-deficient system is reported rather
/// than solved.
fn check_conditioning(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, lambda: f64) -> Result<()> {
    if lambda > 0.0 {
        return Ok(());
    }
    let l = chol.l_dirty();
    let diag = (0..l.nrows()).map(|i| l[(i, i)].abs());
    let (lo, hi) = diag.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if lo <= hi * 1e-7 {
        return Err(ForecastError::Singular);
    }
    Ok(())
}

impl Forecaster for RidgeModel {
    fn name(&self) -> &'static str {
        "ridge"
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict(&self, input: &WindowInput) -> Result<Vec<f64>> {
        if input.x.len() != self.n_inputs {
            return Err(ForecastError::ShapeMismatch {
                expected: self.n_inputs,
                got: input.x.len(),
            });
        }
        let mut out = self.intercept.clone();
        for (j, &v) in input.x.iter().enumerate() {
            let row = &self.weights[j * self.horizon..(j + 1) * self.horizon];
            for (o, w) in out.iter_mut().zip(row) {
                *o += v * w;
            }
        }
        Ok(out)
    }
}
