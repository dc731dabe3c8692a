//! Merging of report files and their plain-text summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use stlf::eval::{aggregate, EvalReport, OodSection, TopCount, NO_WINDOWS};

use crate::commands::{OOD_REPORT_JSON, REPORT_JSON};
use crate::CliError;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Reads every input: a directory contributes its `report.json` and
/// `ood_report.json`, a file is read as whichever of the two it parses as.
pub fn load_inputs(inputs: &[PathBuf]) -> Result<(Vec<EvalReport>, Vec<OodSection>), CliError> {
    let mut reports = Vec::new();
    let mut oods = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let (r, o) = (input.join(REPORT_JSON), input.join(OOD_REPORT_JSON));
            if !r.exists() && !o.exists() {
                return Err(CliError::Data(format!(
                    "{}: no report files",
                    input.display()
                )));
            }
            if r.exists() {
                reports.push(read_json::<EvalReport>(&r)?);
            }
            if o.exists() {
                oods.push(read_json::<OodSection>(&o)?);
            }
        } else {
            let text = std::fs::read_to_string(input).map_err(|e| CliError::io(input, e))?;
            if let Ok(r) = EvalReport::from_json(&text) {
                reports.push(r);
            } else {
                let o = serde_json::from_str::<OodSection>(&text).map_err(|e| {
                    CliError::Data(format!("{}: not a report ({e})", input.display()))
                })?;
                oods.push(o);
            }
        }
    }
    for r in &mut reports {
        if let Some(o) = r.ood.take() {
            oods.push(o);
        }
    }
    Ok((reports, oods))
}

fn union<T: Clone + PartialEq>(lists: impl Iterator<Item = Vec<T>>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for list in lists {
        for v in list {
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}

/// Concatenates the cells of several reports over the same target and
/// recomputes every aggregate. A cell present twice must agree exactly.
pub fn merge_reports(reports: &[EvalReport]) -> Result<EvalReport, CliError> {
    let first = reports
        .first()
        .ok_or_else(|| CliError::Usage("nothing to merge".into()))?;
    if let Some(r) = reports.iter().find(|r| r.target != first.target) {
        return Err(CliError::Usage(format!(
            "reports disagree on the target: `{}` vs `{}`",
            first.target, r.target
        )));
    }
    let models = union(reports.iter().map(|r| r.models.clone()));
    let regimes = union(reports.iter().map(|r| r.regimes.clone()));
    let cities = union(reports.iter().map(|r| r.cities.clone()));

    let mut folds = Vec::new();
    let mut seen_folds = BTreeSet::new();
    for f in reports.iter().flat_map(|r| &r.folds) {
        if seen_folds.insert((f.city.clone(), f.fold)) {
            folds.push(f.clone());
        }
    }
    let mut selections = Vec::new();
    let mut seen_sel = BTreeSet::new();
    for s in reports.iter().flat_map(|r| &r.selections) {
        if seen_sel.insert((s.city.clone(), s.fold, s.regime)) {
            selections.push(s.clone());
        }
    }
    let mut cells = Vec::new();
    let mut seen_cells = BTreeMap::new();
    for c in reports.iter().flat_map(|r| &r.cells) {
        let key = (c.model, c.regime, c.fold, c.city.clone());
        match seen_cells.get(&key) {
            None => {
                seen_cells.insert(key, c.clone());
                cells.push(c.clone());
            }
            Some(prev) if prev == c => {}
            Some(_) => {
                return Err(CliError::Data(format!(
                    "conflicting results for {} / {} / fold {} / {}",
                    c.model, c.regime, c.fold, c.city
                )))
            }
        }
    }
    let (city_means, regime_means, top_counts) = aggregate(&cells, &models, &regimes, &cities);
    Ok(EvalReport {
        target: first.target.clone(),
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

/// Concatenates OOD sections; top counts are summed per model and regime.
pub fn merge_ood(sections: &[OodSection]) -> Option<OodSection> {
    let first = sections.first()?;
    if sections.len() == 1 {
        return Some(first.clone());
    }
    let mut out = OodSection {
        status: String::new(),
        thresholds: union(sections.iter().map(|s| s.thresholds.clone())),
        windows: union(sections.iter().map(|s| s.windows.clone())),
        cells: union(sections.iter().map(|s| s.cells.clone())),
        rankings: union(sections.iter().map(|s| s.rankings.clone())),
        top_counts: Vec::new(),
    };
    out.status = if out.windows.is_empty() {
        NO_WINDOWS.into()
    } else {
        "ok".into()
    };
    let mut counts: Vec<TopCount> = Vec::new();
    for t in sections.iter().flat_map(|s| &s.top_counts) {
        match counts
            .iter_mut()
            .find(|c| c.model == t.model && c.regime == t.regime)
        {
            Some(c) => {
                c.mae_wins += t.mae_wins;
                c.mape_wins += t.mape_wins;
                c.total += t.total;
            }
            None => counts.push(t.clone()),
        }
    }
    out.top_counts = counts;
    Some(out)
}

// ---------------------------------------------------------------------------
// Text summaries

fn num(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

pub fn render_report(r: &EvalReport) -> String {
    let mut s = String::new();
    let failed = r.cells.iter().filter(|c| c.error.is_some()).count();
    let _ = writeln!(
        s,
        "target {}: {} cities, {} cells ({} failed)",
        r.target,
        r.cities.len(),
        r.cells.len(),
        failed
    );
    let _ = writeln!(
        s,
        "{:<15} {:<6} {:>12} {:>9} {:>9} {:>10}",
        "model", "regime", "MAE", "MAPE %", "MAE wins", "MAPE wins"
    );
    for m in &r.regime_means {
        let t = r.top_count(m.model, m.regime);
        let _ = writeln!(
            s,
            "{:<15} {:<6} {:>12} {:>9} {:>9} {:>10}",
            m.model.to_string(),
            m.regime.to_string(),
            num(m.mae, 4),
            num(m.mape, 3),
            t.map_or(0, |t| t.mae_wins),
            t.map_or(0, |t| t.mape_wins)
        );
    }
    if let Some(o) = &r.ood {
        s.push_str(&render_ood(o));
    }
    s
}

pub fn render_ood(o: &OodSection) -> String {
    let mut s = String::new();
    if o.windows.is_empty() {
        let _ = writeln!(s, "ood: {NO_WINDOWS}");
        return s;
    }
    let _ = writeln!(s, "ood: {} windows", o.windows.len());
    for w in &o.windows {
        let _ = writeln!(
            s,
            "  {} {} .. {} trigger {} ({:.2})",
            w.city, w.start_time, w.end_time, w.trigger, w.exceed_fraction
        );
    }
    for k in &o.rankings {
        let _ = writeln!(
            s,
            "  {} {} {}: best {} {} runner-up {} reduction {}%",
            k.model,
            k.city,
            k.metric,
            k.best_regime,
            num(Some(k.best), 4),
            k.second_regime
                .map_or_else(|| "-".to_string(), |r| r.to_string()),
            num(k.reduction_pct, 2)
        );
    }
    s
}
