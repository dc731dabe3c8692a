//! Rolling-origin evaluation: fold planning, feature regimes, model fitting
//! per fold, accuracy metrics, top-count aggregation and the
//! out-of-distribution weather study.

mod ood;

pub use ood::{
    detect_ood_windows, evaluate_ood, ood_thresholds, quantile_type7, relative_reduction, OodCell,
    OodConfig, OodRanking, OodSection, OodThreshold, OodWindow, NO_WINDOWS,
};

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::{
    make_windows, ForecastError, Forecaster, GruCheckpoint, GruConfig, GruModel, RidgeModel,
    SeasonalNaive, TrainConfig, WindowConfig, WindowInput, WindowSample, DEFAULT_HORIZON,
    DEFAULT_LOOKBACK, DEFAULT_RIDGE_LAMBDA, WEEKLY_PERIOD,
};
use crate::mifilter::{select_noncausal, MiFilterConfig, MiFilterError};
use crate::panel::{
    apply_scaler, fit_scaler, format_timestamp, is_calendar_column, Panel, PanelError,
    ScalerParams, CALENDAR_COLUMNS, PREMISE_COLUMN,
};
use crate::pcmci::{causal_feature_set, run_pcmci, LaggedGraph, PcmciConfig, PcmciError};
use crate::seed::derive_seed;

pub const HOURS_PER_YEAR: usize = 8760;
pub const DEFAULT_TRAIN_SPAN: usize = 2 * HOURS_PER_YEAR;
pub const DEFAULT_FOLDS: usize = 6;
/// Share of each training range held back for early stopping.
pub const VALIDATION_FRACTION: f64 = 0.1;
/// Actuals smaller than this in magnitude are left out of MAPE.
pub const MAPE_EPSILON: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("insufficient data: need at least {needed} hours, have {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("length mismatch: {0} predictions vs {1} actuals")]
    LengthMismatch(usize, usize),
    #[error("no values to score")]
    Empty,
    #[error("flag variable `{0}` is not in the panel")]
    MissingFlagVariable(String),
    #[error("unknown {kind} `{value}`")]
    Unknown { kind: &'static str, value: String },
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error("causal selection: {0}")]
    Pcmci(#[from] PcmciError),
    #[error("MI selection: {0}")]
    MiFilter(#[from] MiFilterError),
}

impl EvalError {
    /// True for failures of numerical routines rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            EvalError::Forecast(ForecastError::Diverged { .. } | ForecastError::Singular)
                | EvalError::Pcmci(PcmciError::Test { .. })
                | EvalError::MiFilter(MiFilterError::Estimator { .. })
        )
    }
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

// ---------------------------------------------------------------------------
// Folds

/// One rolling-origin fold as row ranges: `train < validation < test`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl Fold {
    /// Every row available for fitting: train plus validation.
    pub fn history(&self) -> Range<usize> {
        self.train.start..self.validation.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub train_span: usize,
    pub stride: usize,
    pub folds: Vec<Fold>,
}

/// Sliding training windows of `train_span` hours whose test blocks tile the
/// data after the first window. The final tenth of each training window is
/// the validation slice.
pub fn plan_folds(
    span: usize,
    train_span: usize,
    n_folds: usize,
    min_test: usize,
) -> Result<FoldPlan> {
    if n_folds == 0 || min_test == 0 {
        return Err(EvalError::InvalidConfig(
            "fold count and minimum test block must be at least 1".into(),
        ));
    }
    let val_len = (train_span as f64 * VALIDATION_FRACTION).floor() as usize;
    if val_len == 0 || val_len >= train_span {
        return Err(EvalError::InvalidConfig(format!(
            "train span of {train_span} hours leaves no room for a validation slice"
        )));
    }
    let needed = train_span + n_folds * min_test;
    if span < needed {
        return Err(EvalError::InsufficientData { needed, got: span });
    }
    let stride = (span - train_span) / n_folds;
    let folds = (0..n_folds)
        .map(|k| {
            let s = k * stride;
            let v = s + train_span - val_len;
            let e = s + train_span;
            Fold {
                index: k,
                train: s..v,
                validation: v..e,
                test: e..e + stride,
            }
        })
        .collect();
    Ok(FoldPlan {
        train_span,
        stride,
        folds,
    })
}

// ---------------------------------------------------------------------------
// Metrics

pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() {
        return Err(EvalError::LengthMismatch(pred.len(), actual.len()));
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).abs())
        .sum::<f64>()
        / pred.len() as f64)
}

/// Mean absolute percentage error in percent; `None` when every actual is
/// within [`MAPE_EPSILON`] of zero.
pub fn mape(pred: &[f64], actual: &[f64]) -> Result<Option<f64>> {
    if pred.len() != actual.len() {
        return Err(EvalError::LengthMismatch(pred.len(), actual.len()));
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    let (sum, n) = pred
        .iter()
        .zip(actual)
        .filter(|(_, a)| a.abs() >= MAPE_EPSILON)
        .fold((0.0, 0usize), |(s, n), (p, a)| {
            (s + ((p - a) / a).abs(), n + 1)
        });
    Ok((n > 0).then(|| 100.0 * sum / n as f64))
}

// ---------------------------------------------------------------------------
// Feature regimes

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Regime {
    F0,
    F1,
    F2,
    F3,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::F0, Regime::F1, Regime::F2, Regime::F3];

    pub fn description(self) -> &'static str {
        match self {
            Regime::F0 => "electricity-only",
            Regime::F1 => "all weather",
            Regime::F2 => "MI-filtered weather",
            Regime::F3 => "causally selected weather",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Regime {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "F0" => Ok(Regime::F0),
            "F1" => Ok(Regime::F1),
            "F2" => Ok(Regime::F2),
            "F3" => Ok(Regime::F3),
            _ => Err(EvalError::Unknown {
                kind: "regime",
                value: s.to_string(),
            }),
        }
    }
}

/// Predictor columns of one regime: the shared base followed by the chosen
/// weather columns in panel order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRegime {
    pub regime: Regime,
    pub columns: Vec<String>,
    pub weather: Vec<String>,
}

/// Split of a panel's columns into the always-present base and weather.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnRoles {
    pub base: Vec<String>,
    pub weather: Vec<String>,
}

pub fn column_roles(panel: &Panel, target: &str) -> Result<ColumnRoles> {
    if !panel.has_column(target) {
        return Err(PanelError::MissingColumn(target.to_string()).into());
    }
    let mut base = vec![target.to_string()];
    base.extend(
        CALENDAR_COLUMNS
            .iter()
            .filter(|c| panel.has_column(c))
            .map(|c| c.to_string()),
    );
    if panel.has_column(PREMISE_COLUMN) && target != PREMISE_COLUMN {
        base.push(PREMISE_COLUMN.to_string());
    }
    let weather = panel
        .names()
        .iter()
        .filter(|n| n.as_str() != target && n.as_str() != PREMISE_COLUMN && !is_calendar_column(n))
        .cloned()
        .collect();
    Ok(ColumnRoles { base, weather })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub pcmci: PcmciConfig,
    pub mifilter: MiFilterConfig,
}

/// Resolves each requested regime using only `rows` for data-driven
/// selection.
pub fn resolve_regimes(
    panel: &Panel,
    target: &str,
    rows: Range<usize>,
    regimes: &[Regime],
    cfg: &SelectionConfig,
) -> Result<Vec<FeatureRegime>> {
    panel.check_range(&rows)?;
    let roles = column_roles(panel, target)?;
    let build = |regime: Regime, chosen: &dyn Fn(&str) -> bool| {
        let weather: Vec<String> = roles
            .weather
            .iter()
            .filter(|w| chosen(w))
            .cloned()
            .collect();
        let mut columns = roles.base.clone();
        columns.extend(weather.iter().cloned());
        FeatureRegime {
            regime,
            columns,
            weather,
        }
    };
    let mut out = Vec::with_capacity(regimes.len());
    for &regime in regimes {
        let r = match regime {
            Regime::F0 => build(regime, &|_| false),
            Regime::F1 => build(regime, &|_| true),
            Regime::F2 if roles.weather.is_empty() => build(regime, &|_| false),
            Regime::F2 => {
                let sel =
                    select_noncausal(panel, target, &roles.weather, &cfg.mifilter, rows.clone())?;
                build(regime, &|w| sel.kept.iter().any(|k| k == w))
            }
            Regime::F3 if roles.weather.is_empty() => build(regime, &|_| false),
            Regime::F3 => {
                let graph = causal_discovery(panel, target, rows.clone(), &cfg.pcmci)?;
                let feats = causal_feature_set(&graph, target)?;
                build(regime, &|w| feats.exogenous.contains(w))
            }
        };
        out.push(r);
    }
    check_nesting(&out, &roles);
    Ok(out)
}

/// Lagged graph over the target and weather columns, estimated on the
/// longest fully observed stretch inside `rows`.
pub fn causal_discovery(
    panel: &Panel,
    target: &str,
    rows: Range<usize>,
    cfg: &PcmciConfig,
) -> Result<LaggedGraph> {
    panel.check_range(&rows)?;
    let roles = column_roles(panel, target)?;
    let mut cols = vec![target.to_string()];
    cols.extend(roles.weather.iter().cloned());
    let stretch = panel
        .longest_observed_stretch(&cols, rows)?
        .ok_or(EvalError::InsufficientData { needed: 1, got: 0 })?;
    let sub = panel.select(&cols)?.slice(stretch)?;
    Ok(run_pcmci(&sub, cfg)?)
}

fn check_nesting(regimes: &[FeatureRegime], roles: &ColumnRoles) {
    for r in regimes {
        assert!(
            r.columns.starts_with(&roles.base)
                && r.weather.iter().all(|w| roles.weather.contains(w))
                && (r.regime != Regime::F0 || r.weather.is_empty())
                && (r.regime != Regime::F1 || r.weather == roles.weather),
            "regime {} violates F0 ⊆ {} ⊆ F1",
            r.regime,
            r.regime
        );
    }
}

// ---------------------------------------------------------------------------
// Models

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SeasonalNaive,
    Ridge,
    Gru,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::SeasonalNaive => "seasonal_naive",
            ModelKind::Ridge => "ridge",
            ModelKind::Gru => "gru",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seasonal_naive" | "naive" => Ok(ModelKind::SeasonalNaive),
            "ridge" => Ok(ModelKind::Ridge),
            "gru" => Ok(ModelKind::Gru),
            _ => Err(EvalError::Unknown {
                kind: "model",
                value: s.to_string(),
            }),
        }
    }
}

fn d_lambda() -> f64 {
    DEFAULT_RIDGE_LAMBDA
}
fn d_period() -> usize {
    WEEKLY_PERIOD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "d_lambda")]
    pub ridge_lambda: f64,
    #[serde(default = "d_period")]
    pub seasonal_period: usize,
    #[serde(default)]
    pub gru: GruConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            seasonal_period: WEEKLY_PERIOD,
            gru: GruConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// A trained model in serializable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    SeasonalNaive(SeasonalNaive),
    Ridge(RidgeModel),
    Gru(GruCheckpoint),
}

impl FittedModel {
    pub fn forecaster(&self) -> Result<Box<dyn Forecaster>> {
        Ok(match self {
            FittedModel::SeasonalNaive(m) => Box::new(m.clone()),
            FittedModel::Ridge(m) => Box::new(m.clone()),
            FittedModel::Gru(ck) => Box::new(GruModel::from_checkpoint(ck.clone())?),
        })
    }
}

/// Fits one model; `val` is used only for early stopping.
pub fn fit_model(
    kind: ModelKind,
    train: &[WindowSample],
    val: &[WindowSample],
    horizon: usize,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<FittedModel> {
    Ok(match kind {
        ModelKind::SeasonalNaive => {
            FittedModel::SeasonalNaive(SeasonalNaive::new(cfg.seasonal_period, horizon)?)
        }
        ModelKind::Ridge => {
            let all: Vec<WindowSample> = train.iter().chain(val).cloned().collect();
            FittedModel::Ridge(RidgeModel::fit(&all, cfg.ridge_lambda)?)
        }
        ModelKind::Gru => {
            let tcfg = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let (m, _) = GruModel::fit(train, val, &cfg.gru, &tcfg)?;
            FittedModel::Gru(m.checkpoint())
        }
    })
}

// ---------------------------------------------------------------------------
// Evaluation configuration and per-fold fitting

fn d_lookback() -> usize {
    DEFAULT_LOOKBACK
}
fn d_horizon() -> usize {
    DEFAULT_HORIZON
}
fn d_train_span() -> usize {
    DEFAULT_TRAIN_SPAN
}
fn d_folds() -> usize {
    DEFAULT_FOLDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    #[serde(default = "d_lookback")]
    pub lookback: usize,
    #[serde(default = "d_horizon")]
    pub horizon: usize,
    #[serde(default = "d_train_span")]
    pub train_span: usize,
    #[serde(default = "d_folds")]
    pub folds: usize,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub ood: OodConfig,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            lookback: DEFAULT_LOOKBACK,
            horizon: DEFAULT_HORIZON,
            train_span: DEFAULT_TRAIN_SPAN,
            folds: DEFAULT_FOLDS,
            model: ModelConfig::default(),
            selection: SelectionConfig::default(),
            ood: OodConfig::default(),
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn window(&self, features: Vec<String>, target: &str) -> WindowConfig {
        WindowConfig::new(self.lookback, self.horizon, features, target)
    }

    pub fn plan(&self, span: usize) -> Result<FoldPlan> {
        plan_folds(span, self.train_span, self.folds, self.horizon)
    }
}

/// Scaler, regimes and models fitted on one fold's history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldArtifacts {
    pub scaler: ScalerParams,
    pub regimes: Vec<FeatureRegime>,
    pub models: Vec<ModelArtifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub model: ModelKind,
    pub regime: Regime,
    pub fitted: std::result::Result<FittedModel, String>,
}

/// Scaled panel and selections of one fold, computed from training rows.
struct PreparedFold {
    scaler: ScalerParams,
    scaled: Panel,
    regimes: Vec<FeatureRegime>,
}

fn prepare_fold(
    panel: &Panel,
    target: &str,
    fit_rows: Range<usize>,
    regimes: &[Regime],
    cfg: &EvalConfig,
) -> Result<PreparedFold> {
    let scaler = fit_scaler(panel, fit_rows.clone())?;
    let scaled = apply_scaler(panel, &scaler)?;
    let regimes = resolve_regimes(panel, target, fit_rows, regimes, &cfg.selection)?;
    Ok(PreparedFold {
        scaler,
        scaled,
        regimes,
    })
}

/// Windows whose forecast hours all fall inside `targets`.
fn windows_targeting(
    panel: &Panel,
    wcfg: &WindowConfig,
    targets: Range<usize>,
) -> Result<Vec<WindowSample>> {
    let start = targets
        .start
        .checked_sub(wcfg.lookback)
        .ok_or(EvalError::InsufficientData {
            needed: wcfg.lookback,
            got: targets.start,
        })?;
    Ok(make_windows(panel, wcfg, start..targets.end)?)
}

fn train_seed(root: u64, city: &str, fold: &str, model: ModelKind, regime: Regime) -> u64 {
    derive_seed(root, &[model.as_str(), city, fold, &regime.to_string()])
}

fn fit_cell(
    prep: &PreparedFold,
    fold: &Fold,
    regime: &FeatureRegime,
    model: ModelKind,
    target: &str,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<FittedModel> {
    let wcfg = cfg.window(regime.columns.clone(), target);
    let train = make_windows(&prep.scaled, &wcfg, fold.train.clone())?;
    let val = windows_targeting(&prep.scaled, &wcfg, fold.validation.clone())?;
    fit_model(model, &train, &val, cfg.horizon, &cfg.model, seed)
}

/// Everything fitted for one fold. Only rows before the fold's test block
/// are read.
pub fn fit_fold(
    panel: &Panel,
    target: &str,
    fold: &Fold,
    models: &[ModelKind],
    regimes: &[Regime],
    cfg: &EvalConfig,
) -> Result<FoldArtifacts> {
    let prep = prepare_fold(panel, target, fold.train.clone(), regimes, cfg)?;
    let fold_label = fold.index.to_string();
    let mut out = Vec::new();
    for &model in models {
        for r in &prep.regimes {
            let seed = train_seed(cfg.seed, panel.region(), &fold_label, model, r.regime);
            out.push(ModelArtifact {
                model,
                regime: r.regime,
                fitted: fit_cell(&prep, fold, r, model, target, cfg, seed)
                    .map_err(|e| e.to_string()),
            });
        }
    }
    Ok(FoldArtifacts {
        scaler: prep.scaler,
        regimes: prep.regimes,
        models: out,
    })
}

/// Predictions and actuals in original units for every window.
fn score_windows(
    model: &dyn Forecaster,
    windows: &[WindowSample],
    scaler: &ScalerParams,
    target: &str,
    keep: usize,
) -> Result<(f64, Option<f64>)> {
    let mut pred = Vec::new();
    let mut actual = Vec::new();
    for w in windows {
        let p = model.predict(&w.input)?;
        let k = keep.min(p.len());
        pred.extend(scaler.inverse(target, &p[..k]).expect("target is scaled"));
        actual.extend(scaler.inverse(target, &w.y[..k]).expect("target is scaled"));
    }
    Ok((mae(&pred, &actual)?, mape(&pred, &actual)?))
}

// ---------------------------------------------------------------------------
// Report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub city: String,
    pub fold: usize,
    pub train_start: String,
    pub train_end: String,
    pub validation_start: String,
    pub validation_end: String,
    pub test_start: String,
    pub test_end: String,
}

impl FoldRecord {
    fn new(panel: &Panel, fold: &Fold) -> Self {
        let ts = panel.timestamps();
        let at = |r: usize| format_timestamp(ts[r]);
        // end timestamps are inclusive last hours
        Self {
            city: panel.region().to_string(),
            fold: fold.index,
            train_start: at(fold.train.start),
            train_end: at(fold.train.end - 1),
            validation_start: at(fold.validation.start),
            validation_end: at(fold.validation.end - 1),
            test_start: at(fold.test.start),
            test_end: at(fold.test.end - 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub city: String,
    pub fold: usize,
    pub regime: Regime,
    pub weather: Vec<String>,
}

/// Metrics of one model × regime × fold × city cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub model: ModelKind,
    pub regime: Regime,
    pub fold: usize,
    pub city: String,
    pub mae: Option<f64>,
    pub mape: Option<f64>,
    pub windows: usize,
    pub error: Option<String>,
}

/// Fold-averaged metrics of one city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityMean {
    pub model: ModelKind,
    pub regime: Regime,
    pub city: String,
    pub mae: Option<f64>,
    pub mape: Option<f64>,
    pub folds_ok: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeMean {
    pub model: ModelKind,
    pub regime: Regime,
    pub mae: Option<f64>,
    pub mape: Option<f64>,
}

/// Number of cities where a regime attains the best score of its model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopCount {
    pub model: ModelKind,
    pub regime: Regime,
    pub mae_wins: usize,
    pub mape_wins: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub target: String,
    pub models: Vec<ModelKind>,
    pub regimes: Vec<Regime>,
    pub cities: Vec<String>,
    pub folds: Vec<FoldRecord>,
    pub selections: Vec<SelectionRecord>,
    pub cells: Vec<CellResult>,
    pub city_means: Vec<CityMean>,
    pub regime_means: Vec<RegimeMean>,
    pub top_counts: Vec<TopCount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ood: Option<OodSection>,
}

pub const REPORT_CSV_HEADER: &str = "model,regime,fold,city,mae,mape,windows,error";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// One row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.model,
                c.regime,
                c.fold,
                csv_field(&c.city),
                fmt_opt(c.mae),
                fmt_opt(c.mape),
                c.windows,
                csv_field(c.error.as_deref().unwrap_or(""))
            ));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        std::fs::write(dir.join("report.csv"), self.to_csv())?;
        if let Some(ood) = &self.ood {
            let mut f = std::fs::File::create(dir.join("ood_windows.csv"))?;
            f.write_all(ood.windows_csv().as_bytes())?;
        }
        Ok(())
    }

    pub fn regime_mean(&self, model: ModelKind, regime: Regime) -> Option<&RegimeMean> {
        self.regime_means
            .iter()
            .find(|m| m.model == model && m.regime == regime)
    }

    pub fn top_count(&self, model: ModelKind, regime: Regime) -> Option<&TopCount> {
        self.top_counts
            .iter()
            .find(|m| m.model == model && m.regime == regime)
    }
}

fn mean_of(vals: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (s, n) = vals
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    ((n > 0).then(|| s / n as f64), n)
}

/// Index of the smallest value; ties go to the earliest entry.
fn argmin(vals: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in vals.iter().enumerate() {
        if let Some(v) = *v {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Per-city fold means, per-regime means across cities, and top counts.
pub fn aggregate(
    cells: &[CellResult],
    models: &[ModelKind],
    regimes: &[Regime],
    cities: &[String],
) -> (Vec<CityMean>, Vec<RegimeMean>, Vec<TopCount>) {
    let mut city_means = Vec::new();
    for &model in models {
        for &regime in regimes {
            for city in cities {
                let sel = || {
                    cells
                        .iter()
                        .filter(move |c| c.model == model && c.regime == regime && &c.city == city)
                };
                let (mae, folds_ok) = mean_of(sel().map(|c| c.mae));
                let (mape, _) = mean_of(sel().map(|c| c.mape));
                city_means.push(CityMean {
                    model,
                    regime,
                    city: city.clone(),
                    mae,
                    mape,
                    folds_ok,
                });
            }
        }
    }
    let lookup = |model: ModelKind, regime: Regime, city: &str| {
        city_means
            .iter()
            .find(|m| m.model == model && m.regime == regime && m.city == city)
            .expect("every combination is present")
    };
    let mut regime_means = Vec::new();
    let mut top_counts = Vec::new();
    for &model in models {
        let mut wins: BTreeMap<Regime, (usize, usize)> =
            regimes.iter().map(|&r| (r, (0, 0))).collect();
        for city in cities {
            let maes: Vec<Option<f64>> = regimes
                .iter()
                .map(|&r| lookup(model, r, city).mae)
                .collect();
            let mapes: Vec<Option<f64>> = regimes
                .iter()
                .map(|&r| lookup(model, r, city).mape)
                .collect();
            if let Some(i) = argmin(&maes) {
                wins.get_mut(&regimes[i]).expect("regime listed").0 += 1;
            }
            if let Some(i) = argmin(&mapes) {
                wins.get_mut(&regimes[i]).expect("regime listed").1 += 1;
            }
        }
        for &regime in regimes {
            let (mae, _) = mean_of(cities.iter().map(|c| lookup(model, regime, c).mae));
            let (mape, _) = mean_of(cities.iter().map(|c| lookup(model, regime, c).mape));
            regime_means.push(RegimeMean {
                model,
                regime,
                mae,
                mape,
            });
            let (mae_wins, mape_wins) = wins[&regime];
            top_counts.push(TopCount {
                model,
                regime,
                mae_wins,
                mape_wins,
                total: mae_wins + mape_wins,
            });
        }
    }
    (city_means, regime_means, top_counts)
}

fn dedup_in_order<T: PartialEq + Copy>(xs: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for &x in xs {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Full cross of model × regime × fold × city. Selection is re-fitted on
/// each fold's training rows; a failing cell is recorded and the run goes on.
pub fn run_regime_comparison(
    panels: &[Panel],
    target: &str,
    models: &[ModelKind],
    regimes: &[Regime],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if panels.is_empty() || models.is_empty() || regimes.is_empty() {
        return Err(EvalError::InvalidConfig(
            "need at least one panel, model and regime".into(),
        ));
    }
    let models = dedup_in_order(models);
    let regimes = dedup_in_order(regimes);
    let cities: Vec<String> = panels.iter().map(|p| p.region().to_string()).collect();
    if dedup_in_order(&cities.iter().map(String::as_str).collect::<Vec<_>>()).len() != cities.len()
    {
        return Err(EvalError::InvalidConfig(
            "panel regions must be distinct".into(),
        ));
    }
    let plans = panels
        .iter()
        .map(|p| cfg.plan(p.len()))
        .collect::<Result<Vec<_>>>()?;

    let fold_jobs: Vec<(usize, &Fold)> = plans
        .iter()
        .enumerate()
        .flat_map(|(c, plan)| plan.folds.iter().map(move |f| (c, f)))
        .collect();
    let prepared: Vec<std::result::Result<PreparedFold, String>> = fold_jobs
        .par_iter()
        .map(|&(c, f)| {
            prepare_fold(&panels[c], target, f.train.clone(), &regimes, cfg)
                .map_err(|e| e.to_string())
        })
        .collect();

    let n_regimes = regimes.len();
    let cell_jobs: Vec<(usize, ModelKind, usize)> = (0..fold_jobs.len())
        .flat_map(|j| {
            models
                .iter()
                .flat_map(move |&m| (0..n_regimes).map(move |r| (j, m, r)))
        })
        .collect();
    let cells: Vec<CellResult> = cell_jobs
        .par_iter()
        .map(|&(j, model, r)| {
            let (c, fold) = fold_jobs[j];
            let panel = &panels[c];
            let regime = regimes[r];
            let mut cell = CellResult {
                model,
                regime,
                fold: fold.index,
                city: panel.region().to_string(),
                mae: None,
                mape: None,
                windows: 0,
                error: None,
            };
            let run = || -> Result<(f64, Option<f64>, usize)> {
                let prep = prepared[j]
                    .as_ref()
                    .map_err(|e| EvalError::InvalidConfig(e.clone()))?;
                let fr = &prep.regimes[r];
                let seed = train_seed(
                    cfg.seed,
                    panel.region(),
                    &fold.index.to_string(),
                    model,
                    regime,
                );
                let fitted = fit_cell(prep, fold, fr, model, target, cfg, seed)?;
                let wcfg = cfg.window(fr.columns.clone(), target);
                let test = windows_targeting(&prep.scaled, &wcfg, fold.test.clone())?;
                if test.is_empty() {
                    return Err(EvalError::Empty);
                }
                let f = fitted.forecaster()?;
                let (mae, mape) =
                    score_windows(f.as_ref(), &test, &prep.scaler, target, cfg.horizon)?;
                Ok((mae, mape, test.len()))
            };
            match run() {
                Ok((mae, mape, n)) => {
                    cell.mae = Some(mae);
                    cell.mape = mape;
                    cell.windows = n;
                }
                Err(e) => cell.error = Some(e.to_string()),
            }
            cell
        })
        .collect();

    let mut folds = Vec::new();
    let mut selections = Vec::new();
    for (j, &(c, f)) in fold_jobs.iter().enumerate() {
        folds.push(FoldRecord::new(&panels[c], f));
        if let Ok(prep) = &prepared[j] {
            for r in &prep.regimes {
                selections.push(SelectionRecord {
                    city: cities[c].clone(),
                    fold: f.index,
                    regime: r.regime,
                    weather: r.weather.clone(),
                });
            }
        }
    }
    let (city_means, regime_means, top_counts) = aggregate(&cells, &models, &regimes, &cities);
    Ok(EvalReport {
        target: target.to_string(),
        models,
        regimes,
        cities,
        folds,
        selections,
        cells,
        city_means,
        regime_means,
        top_counts,
        ood: None,
    })
}

/// Shared helper for forecasting from a single origin row.
fn window_at(panel: &Panel, wcfg: &WindowConfig, origin: usize) -> Result<Option<WindowInput>> {
    if origin < wcfg.lookback || origin + wcfg.horizon > panel.len() {
        return Ok(None);
    }
    let w = make_windows(panel, wcfg, origin - wcfg.lookback..origin + wcfg.horizon)?;
    Ok(w.into_iter().next().map(|s| s.input))
}
