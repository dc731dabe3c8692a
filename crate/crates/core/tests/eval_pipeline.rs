use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stlf::eval::{
    detect_ood_windows, evaluate_ood, mae, plan_folds, run_regime_comparison, EvalConfig,
    EvalError, ModelKind, OodConfig, Regime, HOURS_PER_YEAR, NO_WINDOWS, REPORT_CSV_HEADER,
};
use stlf::forecast::TrainConfig;
use stlf::panel::Panel;

fn normals(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Load that repeats every week exactly, plus two noise weather columns.
fn weekly_panel(region: &str, n: usize, seed: u64) -> Panel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let load: Vec<f64> = (0..n)
        .map(|i| {
            let h = (i % 168) as f64;
            500.0 + 80.0 * (std::f64::consts::TAU * h / 168.0).sin() + 3.0 * (i % 24) as f64
        })
        .collect();
    let t2m = normals(n, &mut rng);
    let tp = normals(n, &mut rng);
    Panel::from_columns(
        region,
        Utc.with_ymd_and_hms(2021, 1, 4, 0, 0, 0).unwrap(),
        vec!["load".into(), "t2m".into(), "tp".into()],
        vec![load, t2m, tp],
    )
    .unwrap()
}

/// Random-walk load with oscillating `t2m` and `tp` that sit at their
/// medians over the last 200 hours, and optional spikes in `t2m` at the
/// given `(start, len)` spans.
fn spiky_panel(n: usize, seed: u64, spikes: &[(usize, usize)]) -> Panel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = normals(n, &mut rng);
    let mut level = 1000.0;
    let load: Vec<f64> = e
        .iter()
        .map(|v| {
            level += 5.0 * v;
            level
        })
        .collect();
    let calm = n - 200;
    let mut t2m: Vec<f64> = (0..n)
        .map(|i| {
            if i < calm {
                280.0 + 5.0 * (i as f64 * 0.26).sin()
            } else {
                280.0
            }
        })
        .collect();
    for &(s, len) in spikes {
        for v in &mut t2m[s..s + len] {
            *v = 330.0;
        }
    }
    let tp: Vec<f64> = (0..n)
        .map(|i| {
            if i < calm {
                0.001 * (1.0 + (i as f64 * 0.7).cos())
            } else {
                0.001
            }
        })
        .collect();
    Panel::from_columns(
        "city",
        Utc.with_ymd_and_hms(2021, 1, 4, 0, 0, 0).unwrap(),
        vec!["load".into(), "t2m".into(), "tp".into()],
        vec![load, t2m, tp],
    )
    .unwrap()
}

fn small_cfg(train_span: usize, folds: usize) -> EvalConfig {
    EvalConfig {
        lookback: 168,
        horizon: 24,
        train_span,
        folds,
        ..EvalConfig::default()
    }
}

// ---------------------------------------------------------------------------
// Fold planning

proptest! {
    #[test]
    fn fold_plans_are_ordered_and_disjoint(
        span in 50usize..5000,
        train_span in 10usize..2000,
        n in 1usize..8,
        min_test in 1usize..100,
    ) {
        let Ok(plan) = plan_folds(span, train_span, n, min_test) else {
            prop_assert!(span < train_span + n * min_test || train_span < 10);
            return Ok(());
        };
        prop_assert_eq!(plan.folds.len(), n);
        prop_assert!(plan.stride >= min_test);
        for (k, f) in plan.folds.iter().enumerate() {
            prop_assert_eq!(f.index, k);
            prop_assert_eq!(f.train.end, f.validation.start);
            prop_assert_eq!(f.validation.end, f.test.start);
            prop_assert_eq!(f.validation.end - f.train.start, train_span);
            prop_assert!(!f.train.is_empty() && !f.validation.is_empty());
            prop_assert_eq!(f.test.len(), plan.stride);
            prop_assert!(f.test.end <= span);
            if k > 0 {
                // test blocks tile the data with no overlap
                prop_assert_eq!(plan.folds[k - 1].test.end, f.test.start);
            }
        }
    }

    #[test]
    fn mae_is_symmetric_and_zero_only_on_equality(
        a in proptest::collection::vec(-1e3f64..1e3, 1..50),
        d in proptest::collection::vec(-10f64..10.0, 50),
    ) {
        let b: Vec<f64> = a.iter().zip(&d).map(|(x, y)| x + y).collect();
        let ab = mae(&a, &b).unwrap();
        prop_assert_eq!(ab, mae(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(mae(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(ab == 0.0, a == b);
    }
}

#[test]
fn six_year_record_gives_six_yearly_folds() {
    let span = (6.2 * HOURS_PER_YEAR as f64) as usize;
    let plan = plan_folds(span, 2 * HOURS_PER_YEAR, 6, 24).unwrap();
    assert_eq!(plan.folds.len(), 6);
    assert_eq!(plan.stride, (span - 2 * HOURS_PER_YEAR) / 6);
    let first = &plan.folds[0];
    assert_eq!(first.train, 0..15_768);
    assert_eq!(first.validation, 15_768..17_520);
    assert_eq!(first.test.start, 17_520);
    let last = plan.folds.last().unwrap();
    assert!(span - last.test.end < 6);
}

#[test]
fn four_year_record_with_two_folds_tests_on_whole_years() {
    let plan = plan_folds(4 * HOURS_PER_YEAR, 2 * HOURS_PER_YEAR, 2, 24).unwrap();
    assert_eq!(plan.stride, HOURS_PER_YEAR);
    assert_eq!(plan.folds[1].test, 3 * HOURS_PER_YEAR..4 * HOURS_PER_YEAR);
}

#[test]
fn too_short_record_is_rejected() {
    assert!(matches!(
        plan_folds(100, 90, 2, 24),
        Err(EvalError::InsufficientData {
            needed: 138,
            got: 100
        })
    ));
}

// ---------------------------------------------------------------------------
// Regime comparison

#[test]
fn seasonal_naive_is_exact_on_weekly_load() {
    let p = weekly_panel("a", 1400, 1);
    let cfg = small_cfg(700, 3);
    let r = run_regime_comparison(
        &[p],
        "load",
        &[ModelKind::SeasonalNaive],
        &Regime::ALL,
        &cfg,
    )
    .unwrap();
    assert_eq!(r.cells.len(), 12);
    for c in &r.cells {
        assert!(c.error.is_none(), "{:?}", c.error);
        assert!(c.mae.unwrap() < 1e-9, "{c:?}");
        assert!(c.windows > 0);
    }
}

#[test]
fn report_has_one_row_per_model_regime_fold_city() {
    let panels = [weekly_panel("a", 1200, 2), weekly_panel("b", 1200, 3)];
    let cfg = small_cfg(600, 2);
    let models = [ModelKind::SeasonalNaive, ModelKind::Ridge];
    let r = run_regime_comparison(&panels, "load", &models, &Regime::ALL, &cfg).unwrap();
    let csv = r.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(REPORT_CSV_HEADER));
    assert_eq!(lines.count(), 2 * 4 * 2 * 2);
    assert_eq!(r.folds.len(), 4);

    // each city adds at most one MAE win and one MAPE win per model
    for m in models {
        let total: usize = r
            .top_counts
            .iter()
            .filter(|t| t.model == m)
            .map(|t| t.total)
            .sum();
        assert!(total <= 2 * panels.len(), "{m}: {total}");
    }
}

#[test]
fn regimes_coincide_without_weather() {
    let full = weekly_panel("a", 1100, 4);
    let e = normals(1100, &mut ChaCha8Rng::seed_from_u64(9));
    let noisy: Vec<f64> = full
        .column("load")
        .unwrap()
        .iter()
        .zip(&e)
        .map(|(v, e)| v + 10.0 * e)
        .collect();
    let p = full
        .select(&["load"])
        .unwrap()
        .with_values("load", noisy)
        .unwrap();
    let cfg = small_cfg(600, 2);
    let r = run_regime_comparison(&[p], "load", &[ModelKind::Ridge], &Regime::ALL, &cfg).unwrap();
    for fold in 0..2 {
        let maes: Vec<f64> = Regime::ALL
            .iter()
            .map(|&reg| {
                r.cells
                    .iter()
                    .find(|c| c.fold == fold && c.regime == reg)
                    .unwrap()
                    .mae
                    .unwrap()
            })
            .collect();
        assert!(
            maes.iter().all(|m| m.to_bits() == maes[0].to_bits()),
            "{maes:?}"
        );
    }
    assert!(r.selections.iter().all(|s| s.weather.is_empty()));
}

#[test]
fn failing_cells_are_recorded_and_the_run_continues() {
    let p = weekly_panel("a", 1100, 5);
    let mut cfg = small_cfg(600, 2);
    // too few epochs for the required patience
    cfg.model.train = TrainConfig {
        max_epochs: 1,
        patience: 5,
        ..TrainConfig::default()
    };
    let r = run_regime_comparison(
        &[p],
        "load",
        &[ModelKind::Gru, ModelKind::SeasonalNaive],
        &[Regime::F0],
        &cfg,
    )
    .unwrap();
    let gru: Vec<_> = r
        .cells
        .iter()
        .filter(|c| c.model == ModelKind::Gru)
        .collect();
    assert!(gru.iter().all(|c| c.error.is_some() && c.mae.is_none()));
    assert!(r
        .cells
        .iter()
        .filter(|c| c.model == ModelKind::SeasonalNaive)
        .all(|c| c.mae.is_some()));
}

// ---------------------------------------------------------------------------
// Out-of-distribution windows

fn ood_cfg(holdout: usize) -> OodConfig {
    OodConfig {
        holdout_hours: holdout,
        ..OodConfig::default()
    }
}

#[test]
fn detection_ignores_timestamp_and_level_shifts() {
    let p = spiky_panel(1000, 1, &[(850, 30)]);
    let cfg = ood_cfg(200);
    let base = detect_ood_windows(&p, 800, &cfg).unwrap();
    assert_eq!(base.len(), 1);
    let moved = detect_ood_windows(&p.shifted(24 * 365), 800, &cfg).unwrap();
    let rows = |ws: &[stlf::eval::OodWindow]| {
        ws.iter()
            .map(|w| (w.start, w.end, w.trigger.clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(rows(&base), rows(&moved));
    assert_ne!(base[0].start_time, moved[0].start_time);

    let lifted: Vec<f64> = p.column("t2m").unwrap().iter().map(|v| v + 40.0).collect();
    let q = p.clone().with_values("t2m", lifted).unwrap();
    assert_eq!(
        rows(&base),
        rows(&detect_ood_windows(&q, 800, &cfg).unwrap())
    );
}

#[test]
fn half_a_window_out_of_range_is_not_flagged() {
    let cfg = ood_cfg(200);
    let p = spiky_panel(1000, 2, &[(850, 12)]);
    assert!(detect_ood_windows(&p, 800, &cfg).unwrap().is_empty());
    let p = spiky_panel(1000, 2, &[(850, 13)]);
    let ws = detect_ood_windows(&p, 800, &cfg).unwrap();
    assert_eq!(ws.len(), 1);
    assert_eq!(ws[0].trigger, "t2m");
    assert!((ws[0].exceed_fraction - 13.0 / 24.0).abs() < 1e-12);
}

#[test]
fn quiet_holdout_reports_no_windows() {
    let p = spiky_panel(1000, 3, &[]);
    let cfg = EvalConfig {
        ood: ood_cfg(200),
        ..small_cfg(600, 1)
    };
    let s = evaluate_ood(&[p], "load", &[ModelKind::Ridge], &Regime::ALL, &cfg).unwrap();
    assert_eq!(s.status, NO_WINDOWS);
    assert!(s.windows.is_empty() && s.cells.is_empty());
    assert!(s.windows_csv().contains(NO_WINDOWS));
    assert_eq!(s.thresholds.len(), 2);
}

#[test]
fn missing_flag_variable_is_an_error() {
    let p = spiky_panel(1000, 4, &[]).select(&["load", "tp"]).unwrap();
    let r = detect_ood_windows(&p, 800, &ood_cfg(200));
    assert!(matches!(r, Err(EvalError::MissingFlagVariable(v)) if v == "t2m"));
}

#[test]
fn single_window_scores_equal_the_direct_error() {
    let p = spiky_panel(1000, 5, &[(900, 30)]);
    let cfg = EvalConfig {
        ood: ood_cfg(200),
        ..small_cfg(600, 1)
    };
    let s = evaluate_ood(
        std::slice::from_ref(&p),
        "load",
        &[ModelKind::SeasonalNaive],
        &[Regime::F0],
        &cfg,
    )
    .unwrap();
    assert_eq!(s.status, "ok");
    assert_eq!(s.windows.len(), 1);
    let w = &s.windows[0];
    let cell = &s.cells[0];
    assert_eq!(cell.windows, 1);
    // last week's values at the same hours
    let load = p.column("load").unwrap();
    let want = (0..24)
        .map(|h| (load[w.start + h] - load[w.start + h - 168]).abs())
        .sum::<f64>()
        / 24.0;
    assert!(
        (cell.mae.unwrap() - want).abs() < 1e-9,
        "{:?} vs {want}",
        cell.mae
    );
}
