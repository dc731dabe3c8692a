use std::collections::BTreeMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    argmin, fit_cell, mae, mape, prepare_fold, train_seed, window_at, EvalConfig, EvalError, Fold,
    ModelKind, Regime, Result, TopCount, VALIDATION_FRACTION,
};
use crate::panel::{format_timestamp, Panel, PanelError};

/// Marker stored in [`OodSection::status`] when no window was flagged.
pub const NO_WINDOWS: &str = "no windows";

fn d_lower() -> f64 {
    0.05
}
fn d_upper() -> f64 {
    0.95
}
fn d_flags() -> Vec<String> {
    vec!["t2m".into(), "tp".into()]
}
fn d_window() -> usize {
    24
}
fn d_exceed() -> f64 {
    0.5
}
fn d_separation() -> usize {
    24
}
fn d_holdout() -> usize {
    super::HOURS_PER_YEAR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodConfig {
    #[serde(default = "d_lower")]
    pub lower_quantile: f64,
    #[serde(default = "d_upper")]
    pub upper_quantile: f64,
    #[serde(default = "d_flags")]
    pub flag_variables: Vec<String>,
    #[serde(default = "d_window")]
    pub window_hours: usize,
    /// A window is flagged when strictly more than this share of its hours
    /// is outside the thresholds.
    #[serde(default = "d_exceed")]
    pub exceed_fraction: f64,
    /// Minimum gap in hours between the end of one accepted window and the
    /// start of the next.
    #[serde(default = "d_separation")]
    pub min_separation: usize,
    /// Trailing hours held out from training in the OOD study.
    #[serde(default = "d_holdout")]
    pub holdout_hours: usize,
}

impl Default for OodConfig {
    fn default() -> Self {
        Self {
            lower_quantile: d_lower(),
            upper_quantile: d_upper(),
            flag_variables: d_flags(),
            window_hours: d_window(),
            exceed_fraction: d_exceed(),
            min_separation: d_separation(),
            holdout_hours: d_holdout(),
        }
    }
}

impl OodConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.lower_quantile, self.upper_quantile);
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(EvalError::InvalidConfig(format!(
                "quantiles must satisfy 0 < lower < upper < 1, got {lo} and {hi}"
            )));
        }
        if self.window_hours == 0 || self.flag_variables.is_empty() {
            return Err(EvalError::InvalidConfig(
                "OOD detection needs a window length and at least one flag variable".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.exceed_fraction) {
            return Err(EvalError::InvalidConfig(
                "exceed fraction must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Linear-interpolation quantile of sorted data (Hyndman and Fan type 7).
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodThreshold {
    pub city: String,
    pub variable: String,
    pub lower: f64,
    pub upper: f64,
}

/// Per-variable thresholds from the observed values of `train` rows.
pub fn ood_thresholds(
    panel: &Panel,
    train: Range<usize>,
    cfg: &OodConfig,
) -> Result<Vec<OodThreshold>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(PanelError::EmptyRange.into());
    }
    panel.check_range(&train)?;
    cfg.flag_variables
        .iter()
        .map(|v| {
            let i = panel
                .column_index(v)
                .ok_or_else(|| EvalError::MissingFlagVariable(v.clone()))?;
            let (col, obs) = (panel.column_at(i), panel.observed_at(i));
            let mut vals: Vec<f64> = train.clone().filter(|&r| obs[r]).map(|r| col[r]).collect();
            if vals.is_empty() {
                return Err(EvalError::InsufficientData { needed: 1, got: 0 });
            }
            vals.sort_by(f64::total_cmp);
            Ok(OodThreshold {
                city: panel.region().to_string(),
                variable: v.clone(),
                lower: quantile_type7(&vals, cfg.lower_quantile),
                upper: quantile_type7(&vals, cfg.upper_quantile),
            })
        })
        .collect()
}

/// A flagged span of held-out rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodWindow {
    pub city: String,
    /// First row (inclusive) and end row (exclusive).
    pub start: usize,
    pub end: usize,
    pub start_time: String,
    /// Timestamp of the last hour in the window.
    pub end_time: String,
    /// Flag variable with the most out-of-range hours.
    pub trigger: String,
    /// Share of hours outside the thresholds on any flag variable.
    pub exceed_fraction: f64,
}

/// Scans rows from `train_end` on with stride one hour, flags windows where
/// more than the configured share of hours lies outside the training
/// quantiles on any flag variable, and accepts flagged windows greedily from
/// left to right.
pub fn detect_ood_windows(
    panel: &Panel,
    train_end: usize,
    cfg: &OodConfig,
) -> Result<Vec<OodWindow>> {
    if train_end > panel.len() {
        return Err(PanelError::RangeOutOfBounds {
            start: 0,
            end: train_end,
            len: panel.len(),
        }
        .into());
    }
    let thresholds = ood_thresholds(panel, 0..train_end, cfg)?;
    let n = panel.len();
    let w = cfg.window_hours;
    // outside[v][r]: flag variable v is observed and out of range at row r
    let outside: Vec<Vec<bool>> = thresholds
        .iter()
        .map(|t| {
            let i = panel.column_index(&t.variable).expect("checked above");
            let (col, obs) = (panel.column_at(i), panel.observed_at(i));
            (0..n)
                .map(|r| obs[r] && (col[r] < t.lower || col[r] > t.upper))
                .collect()
        })
        .collect();
    let any: Vec<bool> = (0..n).map(|r| outside.iter().any(|o| o[r])).collect();

    let ts = panel.timestamps();
    let mut out = Vec::new();
    let mut next_allowed = train_end;
    let mut s = train_end;
    while s + w <= n {
        if s >= next_allowed {
            let count = any[s..s + w].iter().filter(|&&b| b).count();
            let frac = count as f64 / w as f64;
            if frac > cfg.exceed_fraction {
                let per_var: Vec<usize> = outside
                    .iter()
                    .map(|o| o[s..s + w].iter().filter(|&&b| b).count())
                    .collect();
                let top = per_var
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .expect("at least one flag variable");
                out.push(OodWindow {
                    city: panel.region().to_string(),
                    start: s,
                    end: s + w,
                    start_time: format_timestamp(ts[s]),
                    end_time: format_timestamp(ts[s + w - 1]),
                    trigger: thresholds[top].variable.clone(),
                    exceed_fraction: frac,
                });
                next_allowed = s + w + cfg.min_separation;
            }
        }
        s += 1;
    }
    Ok(out)
}

/// Percentage by which `best` improves on `second`.
pub fn relative_reduction(best: f64, second: f64) -> f64 {
    100.0 * (second - best) / second
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodCell {
    pub model: ModelKind,
    pub regime: Regime,
    pub city: String,
    pub mae: Option<f64>,
    pub mape: Option<f64>,
    pub windows: usize,
    pub error: Option<String>,
}

/// Best and runner-up regime of one model, city and metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodRanking {
    pub model: ModelKind,
    pub city: String,
    pub metric: String,
    pub best_regime: Regime,
    pub best: f64,
    pub second_regime: Option<Regime>,
    pub second: Option<f64>,
    /// Relative error reduction of the best regime over the runner-up, in percent.
    pub reduction_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodSection {
    /// `"ok"` or [`NO_WINDOWS`].
    pub status: String,
    pub thresholds: Vec<OodThreshold>,
    pub windows: Vec<OodWindow>,
    pub cells: Vec<OodCell>,
    pub rankings: Vec<OodRanking>,
    pub top_counts: Vec<TopCount>,
}

pub const OOD_CSV_HEADER: &str = "city,start,end,trigger,exceed_fraction";

impl OodSection {
    pub fn windows_csv(&self) -> String {
        let mut out = String::from(OOD_CSV_HEADER);
        out.push('\n');
        if self.windows.is_empty() {
            out.push_str(&format!("# {NO_WINDOWS}\n"));
        }
        for w in &self.windows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                w.city, w.start_time, w.end_time, w.trigger, w.exceed_fraction
            ));
        }
        out
    }
}

fn rank(
    cells: &[OodCell],
    model: ModelKind,
    city: &str,
    metric: &str,
    regimes: &[Regime],
) -> Option<OodRanking> {
    let mut scored: Vec<(Regime, f64)> = regimes
        .iter()
        .filter_map(|&r| {
            let c = cells
                .iter()
                .find(|c| c.model == model && c.regime == r && c.city == city)?;
            let v = if metric == "mae" { c.mae } else { c.mape };
            v.map(|v| (r, v))
        })
        .collect();
    // stable sort keeps the earlier regime first on ties
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (best_regime, best) = *scored.first()?;
    let second = scored.get(1).copied();
    Some(OodRanking {
        model,
        city: city.to_string(),
        metric: metric.to_string(),
        best_regime,
        best,
        second_regime: second.map(|s| s.0),
        second: second.map(|s| s.1),
        reduction_pct: second.map(|s| relative_reduction(best, s.1)),
    })
}

/// Trains every model once per city on the window before the held-out
/// tail, then scores it on each OOD window of the tail.
pub fn evaluate_ood(
    panels: &[Panel],
    target: &str,
    models: &[ModelKind],
    regimes: &[Regime],
    cfg: &EvalConfig,
) -> Result<OodSection> {
    cfg.ood.validate()?;
    let models = super::dedup_in_order(models);
    let regimes = super::dedup_in_order(regimes);
    let mut thresholds = Vec::new();
    let mut windows = Vec::new();
    let mut cells = Vec::new();
    for panel in panels {
        let needed = cfg.ood.holdout_hours + cfg.lookback + cfg.horizon + 10;
        if panel.len() < needed {
            return Err(EvalError::InsufficientData {
                needed,
                got: panel.len(),
            });
        }
        let train_end = panel.len() - cfg.ood.holdout_hours;
        let start = train_end.saturating_sub(cfg.train_span);
        let val_len = (((train_end - start) as f64) * VALIDATION_FRACTION)
            .floor()
            .max(1.0) as usize;
        let fold = Fold {
            index: 0,
            train: start..train_end - val_len,
            validation: train_end - val_len..train_end,
            test: train_end..panel.len(),
        };
        thresholds.extend(ood_thresholds(panel, 0..train_end, &cfg.ood)?);
        let found = detect_ood_windows(panel, train_end, &cfg.ood)?;
        if found.is_empty() {
            continue;
        }
        let prep = prepare_fold(panel, target, fold.train.clone(), &regimes, cfg)?;
        let jobs: Vec<(ModelKind, usize)> = models
            .iter()
            .flat_map(|&m| (0..regimes.len()).map(move |r| (m, r)))
            .collect();
        let city_cells: Vec<OodCell> = jobs
            .par_iter()
            .map(|&(model, r)| {
                let fr = &prep.regimes[r];
                let mut cell = OodCell {
                    model,
                    regime: fr.regime,
                    city: panel.region().to_string(),
                    mae: None,
                    mape: None,
                    windows: 0,
                    error: None,
                };
                let run = || -> Result<(Option<f64>, Option<f64>, usize)> {
                    let seed = train_seed(cfg.seed, panel.region(), "ood", model, fr.regime);
                    let fitted = fit_cell(&prep, &fold, fr, model, target, cfg, seed)?;
                    let f = fitted.forecaster()?;
                    let wcfg = cfg.window(fr.columns.clone(), target);
                    let mut maes = Vec::new();
                    let mut mapes = Vec::new();
                    for w in &found {
                        let Some(input) = window_at(&prep.scaled, &wcfg, w.start)? else {
                            continue;
                        };
                        let p = f.predict(&input)?;
                        let k = p.len().min(w.end - w.start);
                        let pred = prep
                            .scaler
                            .inverse(target, &p[..k])
                            .expect("target is scaled");
                        let actual =
                            &panel.column(target).expect("target present")[w.start..w.start + k];
                        maes.push(mae(&pred, actual)?);
                        if let Some(m) = mape(&pred, actual)? {
                            mapes.push(m);
                        }
                    }
                    let avg =
                        |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
                    Ok((avg(&maes), avg(&mapes), maes.len()))
                };
                match run() {
                    Ok((mae, mape, n)) => {
                        cell.mae = mae;
                        cell.mape = mape;
                        cell.windows = n;
                    }
                    Err(e) => cell.error = Some(e.to_string()),
                }
                cell
            })
            .collect();
        cells.extend(city_cells);
        windows.extend(found);
    }

    if windows.is_empty() {
        return Ok(OodSection {
            status: NO_WINDOWS.to_string(),
            thresholds,
            windows,
            cells: Vec::new(),
            rankings: Vec::new(),
            top_counts: Vec::new(),
        });
    }
    let cities: Vec<String> =
        super::dedup_in_order(&windows.iter().map(|w| w.city.as_str()).collect::<Vec<_>>())
            .into_iter()
            .map(String::from)
            .collect();
    let mut rankings = Vec::new();
    let mut top_counts = Vec::new();
    for &model in &models {
        let mut wins: BTreeMap<Regime, (usize, usize)> =
            regimes.iter().map(|&r| (r, (0, 0))).collect();
        for city in &cities {
            for metric in ["mae", "mape"] {
                if let Some(r) = rank(&cells, model, city, metric, &regimes) {
                    rankings.push(r);
                }
            }
            let pick = |f: fn(&OodCell) -> Option<f64>| {
                let vals: Vec<Option<f64>> = regimes
                    .iter()
                    .map(|&r| {
                        cells
                            .iter()
                            .find(|c| c.model == model && c.regime == r && &c.city == city)
                            .and_then(f)
                    })
                    .collect();
                argmin(&vals)
            };
            if let Some(i) = pick(|c| c.mae) {
                wins.get_mut(&regimes[i]).expect("regime listed").0 += 1;
            }
            if let Some(i) = pick(|c| c.mape) {
                wins.get_mut(&regimes[i]).expect("regime listed").1 += 1;
            }
        }
        for &regime in &regimes {
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
    Ok(OodSection {
        status: "ok".to_string(),
        thresholds,
        windows,
        cells,
        rankings,
        top_counts,
    })
}
