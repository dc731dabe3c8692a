//! Non-causal baseline selection: rank candidates by k-NN mutual
//! information with the target, keep those above a threshold, then drop
//! candidates too correlated with an already kept, higher-ranked one.

use std::collections::BTreeMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assoc::{knn_mutual_information, pearson, AssocError, DEFAULT_KNN_K};
use crate::panel::{Panel, PanelError};

#[derive(Debug, Error)]
pub enum MiFilterError {
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error("MI of `{name}`: {source}")]
    Estimator {
        name: String,
        #[source]
        source: AssocError,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = MiFilterError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiFilterConfig {
    /// Minimum MI in nats (exclusive).
    pub mi_thres: f64,
    /// Largest admissible |Pearson| against any already kept feature.
    pub rho_max: f64,
    pub knn_k: usize,
    /// When > 0, score each candidate by its maximum MI over lags
    /// `0..=max_lag` instead of the contemporaneous MI alone.
    pub max_lag: usize,
}

impl Default for MiFilterConfig {
    fn default() -> Self {
        Self {
            mi_thres: 0.025,
            rho_max: 0.8,
            knn_k: DEFAULT_KNN_K,
            max_lag: 0,
        }
    }
}

impl MiFilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mi_thres >= 0.0) {
            return Err(MiFilterError::InvalidConfig(format!(
                "mi_thres {}",
                self.mi_thres
            )));
        }
        if !(self.rho_max > 0.0 && self.rho_max < 1.0) {
            return Err(MiFilterError::InvalidConfig(format!(
                "rho_max {}",
                self.rho_max
            )));
        }
        if self.knn_k == 0 {
            return Err(MiFilterError::InvalidConfig("knn_k must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFeature {
    pub name: String,
    pub mi: f64,
}

/// Rows of `rows` where all named columns (and, for `lag > 0`, their
/// values `lag` hours earlier) are observed.
fn complete_rows(
    panel: &Panel,
    cols: &[&str],
    rows: &Range<usize>,
    lag: usize,
) -> Result<Vec<usize>> {
    let masks = cols
        .iter()
        .map(|c| {
            panel
                .observed(c)
                .ok_or_else(|| PanelError::MissingColumn(c.to_string()))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(rows
        .clone()
        .filter(|&r| r >= rows.start + lag)
        .filter(|&r| masks.iter().all(|m| m[r] && m[r - lag]))
        .collect())
}

fn gather(col: &[f64], rows: &[usize], lag: usize) -> Vec<f64> {
    rows.iter().map(|&r| col[r - lag]).collect()
}

/// Scores each candidate by KSG mutual information with `target` over
/// `rows`, sorted by MI descending with ties broken by name.
pub fn mi_rank<S: AsRef<str> + Sync>(
    panel: &Panel,
    target: &str,
    candidates: &[S],
    cfg: &MiFilterConfig,
    rows: Range<usize>,
) -> Result<Vec<ScoredFeature>> {
    cfg.validate()?;
    panel.check_range(&rows)?;
    let y_col = panel
        .column(target)
        .ok_or_else(|| PanelError::MissingColumn(target.to_string()))?;
    let mut cols: Vec<&str> = vec![target];
    cols.extend(candidates.iter().map(|c| c.as_ref()));
    // shared complete-case rows so every candidate sees the same sample
    let base = complete_rows(panel, &cols, &rows, cfg.max_lag)?;
    let y = gather(y_col, &base, 0);
    let mut scored = candidates
        .par_iter()
        .map(|c| {
            let name = c.as_ref();
            let col = panel
                .column(name)
                .ok_or_else(|| PanelError::MissingColumn(name.to_string()))?;
            let mut best = 0.0f64;
            for lag in 0..=cfg.max_lag {
                let x = gather(col, &base, lag);
                let mi = knn_mutual_information(&x, &y, cfg.knn_k).map_err(|source| {
                    MiFilterError::Estimator {
                        name: name.to_string(),
                        source,
                    }
                })?;
                best = best.max(mi);
            }
            Ok(ScoredFeature {
                name: name.to_string(),
                mi: best,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.mi.total_cmp(&a.mi).then_with(|| a.name.cmp(&b.name)));
    Ok(scored)
}

/// Greedy pass in the given (MI-descending) order: a candidate is kept iff
/// its |Pearson| with every already kept feature is at most `rho_max`.
/// Constant candidates count as uncorrelated.
pub fn redundancy_screen(
    scored: &[ScoredFeature],
    panel: &Panel,
    cfg: &MiFilterConfig,
    rows: Range<usize>,
) -> Result<Vec<String>> {
    panel.check_range(&rows)?;
    let names: Vec<&str> = scored.iter().map(|s| s.name.as_str()).collect();
    let base = complete_rows(panel, &names, &rows, 0)?;
    let series: Vec<Vec<f64>> = names
        .iter()
        .map(|n| gather(panel.column(n).unwrap(), &base, 0))
        .collect();
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..names.len() {
        let redundant = kept.iter().any(|&k| {
            pearson(&series[i], &series[k])
                .map(|r| r.abs() > cfg.rho_max)
                .unwrap_or(false)
        });
        if !redundant {
            kept.push(i);
        }
    }
    Ok(kept.into_iter().map(|i| names[i].to_string()).collect())
}

/// Result of the MI filter, serialized as the selection JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiSelection {
    pub method: String,
    pub target: String,
    /// Kept features in MI-descending order.
    pub kept: Vec<String>,
    pub scores: BTreeMap<String, f64>,
    pub config: MiFilterConfig,
}

/// Threshold on MI, then redundancy screen.
pub fn select_noncausal<S: AsRef<str> + Sync>(
    panel: &Panel,
    target: &str,
    candidates: &[S],
    cfg: &MiFilterConfig,
    rows: Range<usize>,
) -> Result<MiSelection> {
    let scored = mi_rank(panel, target, candidates, cfg, rows.clone())?;
    let above: Vec<ScoredFeature> = scored
        .iter()
        .filter(|s| s.mi > cfg.mi_thres)
        .cloned()
        .collect();
    let kept = if above.is_empty() {
        Vec::new()
    } else {
        redundancy_screen(&above, panel, cfg, rows)?
    };
    Ok(MiSelection {
        method: "mi_filter".into(),
        target: target.to_string(),
        kept,
        scores: scored.into_iter().map(|s| (s.name, s.mi)).collect(),
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::simulation_start;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn panel(cols: Vec<(&str, Vec<f64>)>) -> Panel {
        Panel::from_columns(
            "r",
            simulation_start(),
            cols.iter().map(|c| c.0.to_string()).collect(),
            cols.into_iter().map(|c| c.1).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_candidate_ranks_first_and_linear_beats_noise() {
        let y = normals(1500, 1);
        let lin: Vec<f64> = y.iter().zip(normals(1500, 2)).map(|(a, e)| a + e).collect();
        let p = panel(vec![
            ("y", y.clone()),
            ("noise", normals(1500, 3)),
            ("lin", lin),
            ("copy", y),
        ]);
        let r = mi_rank(
            &p,
            "y",
            &["noise", "lin", "copy"],
            &MiFilterConfig::default(),
            0..1500,
        )
        .unwrap();
        let order: Vec<&str> = r.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(order, vec!["copy", "lin", "noise"]);
    }

    #[test]
    fn duplicate_is_screened_and_orthogonal_kept() {
        let a = normals(500, 1);
        let b = normals(500, 2);
        let p = panel(vec![("a", a.clone()), ("b", b), ("a_copy", a)]);
        let scored = vec![
            ScoredFeature {
                name: "a".into(),
                mi: 0.5,
            },
            ScoredFeature {
                name: "a_copy".into(),
                mi: 0.5,
            },
            ScoredFeature {
                name: "b".into(),
                mi: 0.1,
            },
        ];
        let kept = redundancy_screen(&scored, &p, &MiFilterConfig::default(), 0..500).unwrap();
        assert_eq!(kept, vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn constructed_correlation_fixture() {
        // c2 = 0.9 c1 + sqrt(1-0.81) e2 ; c3 = 0.5 c1 + sqrt(0.75) e3, built
        // from exactly orthonormalized base vectors so the correlations are exact.
        let n = 400;
        let mut base: Vec<Vec<f64>> = (0..3).map(|s| normals(n, 10 + s)).collect();
        for i in 0..3 {
            let m = base[i].iter().sum::<f64>() / n as f64;
            base[i].iter_mut().for_each(|v| *v -= m);
            for j in 0..i {
                let p: f64 = base[i].iter().zip(&base[j]).map(|(a, b)| a * b).sum();
                let (bi, bj) = (base[i].clone(), base[j].clone());
                base[i] = bi.iter().zip(&bj).map(|(a, b)| a - p * b).collect();
            }
            let s = base[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            base[i].iter_mut().for_each(|v| *v /= s);
        }
        let c1 = base[0].clone();
        let c2: Vec<f64> = (0..n)
            .map(|t| 0.9 * base[0][t] + 0.19f64.sqrt() * base[1][t])
            .collect();
        let c3: Vec<f64> = (0..n)
            .map(|t| 0.5 * base[0][t] + 0.75f64.sqrt() * base[2][t])
            .collect();
        assert!((pearson(&c1, &c2).unwrap() - 0.9).abs() < 1e-12);
        assert!((pearson(&c1, &c3).unwrap() - 0.5).abs() < 1e-12);
        let p = panel(vec![("c1", c1), ("c2", c2), ("c3", c3)]);
        let scored = ["c1", "c2", "c3"]
            .iter()
            .enumerate()
            .map(|(i, n)| ScoredFeature {
                name: n.to_string(),
                mi: 1.0 - i as f64 * 0.1,
            })
            .collect::<Vec<_>>();
        let kept = redundancy_screen(&scored, &p, &MiFilterConfig::default(), 0..n).unwrap();
        assert_eq!(kept, vec!["c1".to_string(), "c3".to_string()]);
    }

    #[test]
    fn below_threshold_gives_empty_set() {
        let p = panel(vec![
            ("y", normals(800, 1)),
            ("a", normals(800, 2)),
            ("b", normals(800, 3)),
        ]);
        let cfg = MiFilterConfig {
            mi_thres: 0.5,
            ..Default::default()
        };
        let sel = select_noncausal(&p, "y", &["a", "b"], &cfg, 0..800).unwrap();
        assert!(sel.kept.is_empty());
        assert_eq!(sel.scores.len(), 2);
        let v: serde_json::Value = serde_json::to_value(&sel).unwrap();
        assert_eq!(v["method"], "mi_filter");
        assert!(v["config"]["mi_thres"].is_number());
    }

    #[test]
    fn strong_driver_and_noisy_copy_keep_one() {
        let n = 2000;
        let d = normals(n, 1);
        let copy: Vec<f64> = d
            .iter()
            .zip(normals(n, 2))
            .map(|(a, e)| a + 0.2 * e)
            .collect();
        let y: Vec<f64> = d
            .iter()
            .zip(normals(n, 3))
            .map(|(a, e)| a + 0.5 * e)
            .collect();
        let p = panel(vec![
            ("y", y),
            ("driver", d),
            ("copy", copy),
            ("junk", normals(n, 4)),
        ]);
        let sel = select_noncausal(
            &p,
            "y",
            &["driver", "copy", "junk"],
            &MiFilterConfig::default(),
            0..n,
        )
        .unwrap();
        assert_eq!(sel.kept.len(), 1);
        assert!(sel.kept[0] == "driver" || sel.kept[0] == "copy");
    }

    #[test]
    fn lagged_variant_finds_lagged_driver() {
        let n = 1500;
        let x = normals(n, 5);
        let mut y = normals(n, 6);
        for t in 3..n {
            y[t] += x[t - 3];
        }
        let p = panel(vec![("y", y), ("x", x)]);
        let contemporaneous = mi_rank(&p, "y", &["x"], &MiFilterConfig::default(), 0..n).unwrap();
        let lagged = mi_rank(
            &p,
            "y",
            &["x"],
            &MiFilterConfig {
                max_lag: 3,
                ..Default::default()
            },
            0..n,
        )
        .unwrap();
        assert!(contemporaneous[0].mi < 0.025);
        assert!(lagged[0].mi > 0.1);
    }
}
