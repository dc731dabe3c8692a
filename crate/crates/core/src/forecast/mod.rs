//! Windowed supervised forecasters sharing one contract.
//!
//! A window pairs `L` hours of predictors with the next `H` hours of the
//! target. The predictor half lives in [`WindowInput`], which is all a
//! [`Forecaster`] ever sees, so no model can read the values it is asked to
//! predict.

mod gru;
mod ridge;

pub use gru::{
    gru_loss_and_grad, EarlyStopper, GruCheckpoint, GruConfig, GruModel, GruShape, TrainConfig,
    TrainSummary, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use ridge::{RidgeModel, DEFAULT_RIDGE_LAMBDA};

use std::ops::Range;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{Panel, PanelError};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("row range of {got} hours is shorter than lookback + horizon = {needed}")]
    RangeTooShort { needed: usize, got: usize },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("input has {got} values, model expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("normal equations are singular; use a ridge penalty lambda > 0")]
    Singular,
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

pub type Result<T, E = ForecastError> = std::result::Result<T, E>;

pub const DEFAULT_LOOKBACK: usize = 168;
pub const DEFAULT_HORIZON: usize = 24;
pub const WEEKLY_PERIOD: usize = 168;

fn default_lookback() -> usize {
    DEFAULT_LOOKBACK
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}

fn default_target() -> String {
    crate::panel::LOAD_COLUMN.to_string()
}

/// Shape of the supervised windows cut from a panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    #[serde(default = "default_lookback")]
    pub lookback: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Predictor columns fed at every lookback hour, in this order.
    #[serde(default)]
    pub features: Vec<String>,
    #[serde(default = "default_target")]
    pub target: String,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            lookback: DEFAULT_LOOKBACK,
            horizon: DEFAULT_HORIZON,
            features: Vec::new(),
            target: default_target(),
        }
    }
}

impl WindowConfig {
    pub fn new(lookback: usize, horizon: usize, features: Vec<String>, target: &str) -> Self {
        Self {
            lookback,
            horizon,
            features,
            target: target.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lookback == 0 || self.horizon == 0 {
            return Err(ForecastError::InvalidConfig(
                "lookback and horizon must be at least 1".into(),
            ));
        }
        if self.features.is_empty() {
            return Err(ForecastError::InvalidConfig(
                "at least one feature column is required".into(),
            ));
        }
        Ok(())
    }
}

/// The observable half of a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowInput {
    /// Row-major `lookback x n_features` predictor matrix.
    pub x: Vec<f64>,
    pub n_features: usize,
    /// Target values over the lookback hours.
    pub target_history: Vec<f64>,
    /// Timestamp of the first forecast hour.
    pub origin: DateTime<Utc>,
}

impl WindowInput {
    pub fn lookback(&self) -> usize {
        self.target_history.len()
    }

    /// Predictor vector at lookback step `t`.
    pub fn step(&self, t: usize) -> &[f64] {
        &self.x[t * self.n_features..(t + 1) * self.n_features]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub input: WindowInput,
    /// Target values over the horizon.
    pub y: Vec<f64>,
}

/// Cuts every stride-1 window lying inside `rows`, dropping windows that
/// touch a masked predictor or target cell.
pub fn make_windows(
    panel: &Panel,
    wcfg: &WindowConfig,
    rows: Range<usize>,
) -> Result<Vec<WindowSample>> {
    wcfg.validate()?;
    panel.check_range(&rows)?;
    let (l, h) = (wcfg.lookback, wcfg.horizon);
    let got = rows.len();
    if got < l + h {
        return Err(ForecastError::RangeTooShort { needed: l + h, got });
    }
    let feats = wcfg
        .features
        .iter()
        .map(|f| panel.require(f))
        .collect::<Result<Vec<_>, _>>()?;
    let tgt = panel.require(&wcfg.target)?;

    // bad[r] is true when row r has a masked cell among the window columns.
    let mut bad_input = vec![false; panel.len()];
    for &c in feats.iter().chain(std::iter::once(&tgt)) {
        for (r, &ok) in panel.observed_at(c).iter().enumerate() {
            bad_input[r] |= !ok;
        }
    }
    let bad_target: Vec<bool> = panel.observed_at(tgt).iter().map(|&o| !o).collect();
    let prefix = |bad: &[bool]| {
        let mut p = vec![0usize; bad.len() + 1];
        for (i, &b) in bad.iter().enumerate() {
            p[i + 1] = p[i] + b as usize;
        }
        p
    };
    let (pi, pt) = (prefix(&bad_input), prefix(&bad_target));

    let nf = feats.len();
    let tcol = panel.column_at(tgt);
    let cols: Vec<&[f64]> = feats.iter().map(|&c| panel.column_at(c)).collect();
    let mut out = Vec::new();
    for s in rows.start..=rows.end - l - h {
        let e = s + l;
        if pi[e] - pi[s] > 0 || pt[e + h] - pt[e] > 0 {
            continue;
        }
        let mut x = Vec::with_capacity(l * nf);
        for r in s..e {
            x.extend(cols.iter().map(|c| c[r]));
        }
        out.push(WindowSample {
            input: WindowInput {
                x,
                n_features: nf,
                target_history: tcol[s..e].to_vec(),
                origin: panel.timestamps()[e],
            },
            y: tcol[e..e + h].to_vec(),
        });
    }
    Ok(out)
}

/// A fitted model mapping a window's observable half to `H` predictions.
pub trait Forecaster: Send + Sync {
    fn name(&self) -> &'static str;
    fn horizon(&self) -> usize;
    fn predict(&self, input: &WindowInput) -> Result<Vec<f64>>;
}

/// Repeats the target value from one season earlier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalNaive {
    pub period: usize,
    pub horizon: usize,
}

impl SeasonalNaive {
    pub fn new(period: usize, horizon: usize) -> Result<Self> {
        if period == 0 || horizon == 0 {
            return Err(ForecastError::InvalidConfig(
                "seasonal period and horizon must be at least 1".into(),
            ));
        }
        Ok(Self { period, horizon })
    }

    pub fn weekly(horizon: usize) -> Self {
        Self {
            period: WEEKLY_PERIOD,
            horizon,
        }
    }
}

impl Forecaster for SeasonalNaive {
    fn name(&self) -> &'static str {
        "seasonal_naive"
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict(&self, input: &WindowInput) -> Result<Vec<f64>> {
        let l = input.lookback();
        if l < self.period {
            return Err(ForecastError::ShapeMismatch {
                expected: self.period,
                got: l,
            });
        }
        let hist = &input.target_history;
        Ok((0..self.horizon)
            .map(|h| hist[l - self.period + h % self.period])
            .collect())
    }
}

/// Mean absolute error of a forecaster over samples, in the samples' units.
pub fn mean_abs_error(model: &dyn Forecaster, samples: &[WindowSample]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in samples {
        let p = model.predict(&s.input)?;
        sum += p.iter().zip(&s.y).map(|(a, b)| (a - b).abs()).sum::<f64>();
        n += s.y.len();
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}
