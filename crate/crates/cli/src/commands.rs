//! Implementations of the subcommands.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stlf::eval::{
    causal_discovery, column_roles, detect_ood_windows, evaluate_ood, ood_thresholds,
    run_regime_comparison, EvalConfig, EvalError, EvalReport, ModelKind, OodSection, Regime,
    NO_WINDOWS,
};
use stlf::mifilter::select_noncausal;
use stlf::panel::{
    ingest_load_csv_filtered, ingest_weather_csv, join_align, read_holidays, wide_csv_columns,
    write_metadata, Panel, PanelMetadata,
};
use stlf::pcmci::{causal_feature_set, consensus};
use stlf::scm::{simulate, standard_spec, ScmSpec};

use crate::config::RunConfig;
use crate::report::{load_inputs, merge_ood, merge_reports, render_ood, render_report};
use crate::{
    thread_pool, CliError, EvalArgs, EvaluateArgs, IngestArgs, OodArgs, ReportArgs, SelectArgs,
    SelectMethod, SynthArgs,
};

pub const REPORT_JSON: &str = "report.json";
pub const OOD_REPORT_JSON: &str = "ood_report.json";
pub const OOD_WINDOWS_CSV: &str = "ood_windows.csv";
pub const CONFIG_TOML: &str = "config.toml";

// ---------------------------------------------------------------------------
// Files

/// Metadata side-car of a panel CSV: `panel.csv` -> `panel.meta.json`.
pub fn meta_path(panel: &Path) -> PathBuf {
    panel.with_extension("meta.json")
}

/// Spec side-car of a synthesized panel: `panel.csv` -> `panel.spec.json`.
pub fn spec_path(panel: &Path) -> PathBuf {
    panel.with_extension("spec.json")
}

/// Reads a canonical panel CSV. The region comes from the metadata side-car
/// when present and from the file stem otherwise.
pub fn load_panel(path: &Path) -> Result<Panel, CliError> {
    let region = match std::fs::read_to_string(meta_path(path)) {
        Ok(text) => {
            serde_json::from_str::<PanelMetadata>(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", meta_path(path).display())))?
                .region
        }
        Err(_) => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    Ok(Panel::read_csv(path, &region)?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_panel(panel: &Panel, path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    panel.write_csv(path)?;
    write_metadata(panel, &meta_path(path))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// ingest

pub fn ingest(cfg: &RunConfig, args: &IngestArgs) -> Result<(), CliError> {
    let load_path = args
        .load
        .clone()
        .or_else(|| cfg.data.load_csv.clone())
        .ok_or_else(|| CliError::Usage("ingest needs --load or data.load_csv".into()))?;
    let weather_path = args
        .weather
        .clone()
        .or_else(|| cfg.data.weather_csv.clone())
        .ok_or_else(|| CliError::Usage("ingest needs --weather or data.weather_csv".into()))?;
    let consumer_type = args
        .consumer_type
        .as_deref()
        .or(cfg.data.consumer_type.as_deref());
    let load = ingest_load_csv_filtered(&load_path, &args.region, consumer_type)?;

    let vars = if !args.weather_vars.is_empty() {
        args.weather_vars.clone()
    } else if !cfg.data.weather_variables.is_empty() {
        cfg.data.weather_variables.clone()
    } else {
        wide_csv_columns(&weather_path)?
    };
    let weather = ingest_weather_csv(&weather_path, &args.region, &vars)?;

    let holidays = match args.holidays.as_ref().or(cfg.data.holidays.as_ref()) {
        Some(p) => read_holidays(p)?,
        None => BTreeSet::new(),
    };
    let panel = join_align(&load, &weather)?.with_calendar(&holidays)?;
    write_panel(&panel, &args.out)?;
    println!(
        "{}: {} rows x {} columns -> {}",
        panel.region(),
        panel.len(),
        panel.names().len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// synth

pub fn synth(cfg: &RunConfig, args: &SynthArgs) -> Result<(), CliError> {
    let spec = match (&args.fixture, &args.spec) {
        (Some(name), None) => standard_spec(name)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ScmSpec::from_json(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        _ => {
            return Err(CliError::Usage(
                "give exactly one of --fixture and --spec".into(),
            ))
        }
    };
    if args.length == 0 {
        return Err(CliError::Usage("--length must be at least 1".into()));
    }
    let panel = simulate(&spec, args.length, cfg.seed)?;
    write_panel(&panel, &args.out)?;
    write_file(&spec_path(&args.out), &(spec.to_json() + "\n"))?;
    println!(
        "{} rows x {} variables (seed {}) -> {}",
        panel.len(),
        panel.names().len(),
        cfg.seed,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// select

/// Features chosen for one panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSelection {
    pub region: String,
    pub selected: Vec<String>,
    /// Significant own lags of the target (causal method only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub autoregressive_lags: Option<Vec<usize>>,
    /// MI score of every candidate in nats (MI method only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<BTreeMap<String, f64>>,
    /// File name of the lagged graph (causal method only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionFile {
    pub method: String,
    pub target: String,
    pub panels: Vec<PanelSelection>,
    /// Features selected in a strict majority of the panels.
    pub consensus: Vec<String>,
}

pub fn select(cfg: &RunConfig, args: &SelectArgs) -> Result<(), CliError> {
    let target = args.target.clone().unwrap_or_else(|| cfg.target.clone());
    let stem = args
        .out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "selection".into());
    let mut panels = Vec::new();
    for path in &args.panel {
        let panel = load_panel(path)?;
        let rows = 0..panel.len();
        let sel = match args.method {
            SelectMethod::Causal => {
                let graph = causal_discovery(&panel, &target, rows, &cfg.pcmci)?;
                let feats = causal_feature_set(&graph, &target)?;
                let name = format!("{stem}.{}.graph.json", panel.region());
                write_file(&args.out.with_file_name(&name), &(graph.to_json() + "\n"))?;
                PanelSelection {
                    region: panel.region().to_string(),
                    selected: feats.exogenous.into_iter().collect(),
                    autoregressive_lags: Some(feats.autoregressive_lags),
                    scores: None,
                    graph: Some(name),
                }
            }
            SelectMethod::Mi => {
                let roles = column_roles(&panel, &target)?;
                let sel = select_noncausal(&panel, &target, &roles.weather, &cfg.mifilter, rows)?;
                PanelSelection {
                    region: panel.region().to_string(),
                    selected: sel.kept,
                    autoregressive_lags: None,
                    scores: Some(sel.scores),
                    graph: None,
                }
            }
        };
        println!("{}: [{}]", sel.region, sel.selected.join(", "));
        panels.push(sel);
    }
    let sets: Vec<BTreeSet<String>> = panels
        .iter()
        .map(|p| p.selected.iter().cloned().collect())
        .collect();
    let file = SelectionFile {
        method: match args.method {
            SelectMethod::Causal => "causal".into(),
            SelectMethod::Mi => "mi".into(),
        },
        target,
        consensus: consensus(&sets).into_iter().collect(),
        panels,
    };
    if file.panels.len() > 1 {
        println!("consensus: [{}]", file.consensus.join(", "));
    }
    let json = serde_json::to_string_pretty(&file).expect("selection serializes");
    write_file(&args.out, &(json + "\n"))
}

// ---------------------------------------------------------------------------
// evaluate and ood

struct EvalJob {
    panels: Vec<Panel>,
    target: String,
    models: Vec<ModelKind>,
    regimes: Vec<Regime>,
    eval: EvalConfig,
    workers: usize,
}

/// Applies the flag overrides to `cfg` and loads the panels.
fn prepare(mut cfg: RunConfig, args: &EvalArgs) -> Result<(RunConfig, EvalJob), CliError> {
    if let Some(t) = &args.target {
        cfg.target = t.clone();
    }
    if !args.models.is_empty() {
        cfg.models = args.models.clone();
    }
    if !args.regimes.is_empty() {
        cfg.regimes = args.regimes.clone();
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(v) = args.lookback {
        cfg.window.lookback = v;
    }
    if let Some(v) = args.horizon {
        cfg.window.horizon = v;
    }
    if let Some(v) = args.train_span {
        cfg.folds.train_span = v;
    }
    if let Some(v) = args.folds {
        cfg.folds.count = v;
    }
    if !args.panel.is_empty() {
        cfg.data.panels = args.panel.clone();
    }
    cfg.validate()?;
    if cfg.data.panels.is_empty() {
        return Err(CliError::Usage(
            "no panels: pass --panel or set data.panels".into(),
        ));
    }
    let panels = cfg
        .data
        .panels
        .iter()
        .map(|p| load_panel(p))
        .collect::<Result<Vec<_>, _>>()?;
    let job = EvalJob {
        panels,
        target: cfg.target.clone(),
        models: cfg.model_kinds()?,
        regimes: cfg.regime_list()?,
        eval: cfg.eval_config(),
        workers: cfg.workers,
    };
    Ok((cfg, job))
}

pub fn evaluate(cfg: RunConfig, args: &EvaluateArgs) -> Result<(), CliError> {
    let (cfg, job) = prepare(cfg, &args.common)?;
    let out = &args.common.out;
    let report = thread_pool(job.workers)?.install(|| {
        run_regime_comparison(
            &job.panels,
            &job.target,
            &job.models,
            &job.regimes,
            &job.eval,
        )
    })?;
    report.write(out).map_err(|e| CliError::io(out, e))?;
    write_file(&out.join(CONFIG_TOML), &cfg.to_toml())?;
    print!("{}", render_report(&report));
    if report.cells.iter().all(|c| c.error.is_some()) {
        return Err(CliError::Data(format!(
            "every cell failed; see {}",
            out.join("report.csv").display()
        )));
    }
    Ok(())
}

/// Windows and thresholds only, without training any model.
fn detect_only(panels: &[Panel], cfg: &EvalConfig) -> Result<OodSection, EvalError> {
    cfg.ood.validate()?;
    let mut thresholds = Vec::new();
    let mut windows = Vec::new();
    for panel in panels {
        let holdout = cfg.ood.holdout_hours;
        if panel.len() <= holdout {
            return Err(EvalError::InsufficientData {
                needed: holdout + 1,
                got: panel.len(),
            });
        }
        let train_end = panel.len() - holdout;
        thresholds.extend(ood_thresholds(panel, 0..train_end, &cfg.ood)?);
        windows.extend(detect_ood_windows(panel, train_end, &cfg.ood)?);
    }
    Ok(OodSection {
        status: if windows.is_empty() {
            NO_WINDOWS.into()
        } else {
            "ok".into()
        },
        thresholds,
        windows,
        cells: Vec::new(),
        rankings: Vec::new(),
        top_counts: Vec::new(),
    })
}

pub fn ood(mut cfg: RunConfig, args: &OodArgs) -> Result<(), CliError> {
    if let Some(h) = args.holdout_hours {
        cfg.ood.holdout_hours = h;
    }
    let (cfg, job) = prepare(cfg, &args.common)?;
    let out = &args.common.out;
    let section = thread_pool(job.workers)?.install(|| {
        if args.detect_only {
            detect_only(&job.panels, &job.eval)
        } else {
            evaluate_ood(
                &job.panels,
                &job.target,
                &job.models,
                &job.regimes,
                &job.eval,
            )
        }
    })?;
    write_file(&out.join(OOD_WINDOWS_CSV), &section.windows_csv())?;
    let json = serde_json::to_string_pretty(&section).expect("ood section serializes");
    write_file(&out.join(OOD_REPORT_JSON), &(json + "\n"))?;
    write_file(&out.join(CONFIG_TOML), &cfg.to_toml())?;
    print!("{}", render_ood(&section));
    Ok(())
}

// ---------------------------------------------------------------------------
// report

pub fn report(args: &ReportArgs) -> Result<(), CliError> {
    let (reports, oods) = load_inputs(&args.input)?;
    let ood = merge_ood(&oods);
    let merged: Option<EvalReport> = if reports.is_empty() {
        None
    } else {
        let mut r = merge_reports(&reports)?;
        if ood.is_some() {
            r.ood = ood.clone();
        }
        Some(r)
    };
    match &merged {
        Some(r) => print!("{}", render_report(r)),
        None => print!("{}", render_ood(ood.as_ref().expect("at least one input"))),
    }
    if let Some(dir) = &args.out {
        if let Some(r) = &merged {
            r.write(dir).map_err(|e| CliError::io(dir, e))?;
        }
        if let Some(o) = &ood {
            write_file(&dir.join(OOD_WINDOWS_CSV), &o.windows_csv())?;
            let json = serde_json::to_string_pretty(o).expect("ood section serializes");
            write_file(&dir.join(OOD_REPORT_JSON), &(json + "\n"))?;
        }
    }
    Ok(())
}
