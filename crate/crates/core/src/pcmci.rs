//! Two-phase lagged causal discovery (PCMCI) with partial-correlation tests.
//!
//! Phase 1 (PC1) prunes a fully connected lagged graph per target by
//! iterated conditional independence tests against the currently strongest
//! candidates. Phase 2 (MCI) re-tests every surviving link conditioned on
//! the candidate parents of both endpoints; the links that stay significant
//! form the [`LaggedGraph`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assoc::{parcorr_test, AssocError, CiResult};
use crate::panel::{is_calendar_column, Panel};

/// `source` at lag `lag` driving `target`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkKey {
    pub source: String,
    pub lag: usize,
    pub target: String,
}

impl LinkKey {
    pub fn new(source: &str, lag: usize, target: &str) -> Self {
        Self {
            source: source.to_string(),
            lag,
            target: target.to_string(),
        }
    }
}

impl fmt::Display for LinkKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(t-{}) -> {}", self.source, self.lag, self.target)
    }
}

#[derive(Debug, Error)]
pub enum PcmciError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("panel has masked cells in column `{0}`; pass a fully observed stretch")]
    Masked(String),
    #[error("only {got} effective samples, need at least {needed}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("variable `{0}` is constant")]
    Degenerate(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("test of {link} failed: {source}")]
    Test {
        link: LinkKey,
        #[source]
        source: AssocError,
    },
}

pub type Result<T, E = PcmciError> = std::result::Result<T, E>;

/// Minimum number of rows every test must see.
pub const MIN_EFFECTIVE_SAMPLES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcmciConfig {
    pub tau_min: usize,
    pub tau_max: usize,
    pub pc_alpha: f64,
    pub mci_alpha: f64,
    /// Caps the conditioning-set size in both phases.
    pub max_cond_dim: Option<usize>,
    /// Benjamini–Hochberg adjustment of MCI p-values.
    pub fdr_bh: bool,
}

impl Default for PcmciConfig {
    fn default() -> Self {
        Self {
            tau_min: 1,
            tau_max: 5,
            pc_alpha: 0.05,
            mci_alpha: 0.05,
            max_cond_dim: None,
            fdr_bh: false,
        }
    }
}

impl PcmciConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_min < 1 || self.tau_min > self.tau_max {
            return Err(PcmciError::InvalidConfig(format!(
                "need 1 <= tau_min <= tau_max, got {}..{}",
                self.tau_min, self.tau_max
            )));
        }
        for (name, a) in [("pc_alpha", self.pc_alpha), ("mci_alpha", self.mci_alpha)] {
            if !(a > 0.0 && a < 1.0) {
                return Err(PcmciError::InvalidConfig(format!(
                    "{name} must lie in (0,1), got {a}"
                )));
            }
        }
        Ok(())
    }
}

/// One significant lagged link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphLink {
    #[serde(rename = "src")]
    pub source: String,
    pub lag: usize,
    #[serde(rename = "dst")]
    pub target: String,
    #[serde(rename = "stat")]
    pub statistic: f64,
    #[serde(rename = "pval")]
    pub p_value: f64,
}

impl GraphLink {
    pub fn key(&self) -> LinkKey {
        LinkKey::new(&self.source, self.lag, &self.target)
    }
}

/// Estimated lagged causal graph. Links are sorted by (source, lag, target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaggedGraph {
    pub variables: Vec<String>,
    #[serde(default = "one")]
    pub tau_min: usize,
    pub tau_max: usize,
    pub links: Vec<GraphLink>,
}

fn one() -> usize {
    1
}

impl LaggedGraph {
    pub fn link_keys(&self) -> BTreeSet<LinkKey> {
        self.links.iter().map(GraphLink::key).collect()
    }

    /// Lagged parents `(source, lag)` of `target`.
    pub fn parents(&self, target: &str) -> Vec<(String, usize)> {
        self.links
            .iter()
            .filter(|l| l.target == target)
            .map(|l| (l.source.clone(), l.lag))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    var: usize,
    lag: usize,
    /// Smallest |statistic| seen across PC iterations.
    strength: f64,
}

/// Candidate parents per variable after the PC phase, strongest first.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSets {
    variables: Vec<String>,
    parents: Vec<Vec<Cand>>,
}

impl CandidateSets {
    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    /// `(source, lag)` candidates of `target`, strongest first.
    pub fn parents_of(&self, target: &str) -> Option<Vec<(String, usize)>> {
        let j = self.variables.iter().position(|v| v == target)?;
        Some(
            self.parents[j]
                .iter()
                .map(|c| (self.variables[c.var].clone(), c.lag))
                .collect(),
        )
    }

    pub fn link_keys(&self) -> BTreeSet<LinkKey> {
        let mut out = BTreeSet::new();
        for (j, ps) in self.parents.iter().enumerate() {
            for c in ps {
                out.insert(LinkKey::new(
                    &self.variables[c.var],
                    c.lag,
                    &self.variables[j],
                ));
            }
        }
        out
    }

    /// Empty candidate sets for every variable.
    pub fn empty(variables: Vec<String>) -> Self {
        let n = variables.len();
        Self {
            variables,
            parents: vec![Vec::new(); n],
        }
    }
}

/// Full output of a PCMCI run.
#[derive(Debug, Clone)]
pub struct PcmciOutput {
    pub candidates: CandidateSets,
    /// MCI results for every tested link, sorted by key.
    pub tested: Vec<(LinkKey, CiResult)>,
    pub graph: LaggedGraph,
}

struct Data<'a> {
    names: Vec<String>,
    cols: Vec<&'a [f64]>,
    len: usize,
}

impl<'a> Data<'a> {
    fn from_panel(panel: &'a Panel, cfg: &PcmciConfig) -> Result<Self> {
        cfg.validate()?;
        let names = panel.names().to_vec();
        let mut cols = Vec::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if panel.observed_at(i).iter().any(|&m| !m) {
                return Err(PcmciError::Masked(name.clone()));
            }
            let c = panel.column_at(i);
            let first = c.first().copied().unwrap_or(0.0);
            if c.iter().all(|&v| v == first) {
                return Err(PcmciError::Degenerate(name.clone()));
            }
            cols.push(c);
        }
        let len = panel.len();
        let got = len.saturating_sub(cfg.tau_max);
        if got < MIN_EFFECTIVE_SAMPLES {
            return Err(PcmciError::TooFewSamples {
                needed: MIN_EFFECTIVE_SAMPLES,
                got,
            });
        }
        Ok(Self { names, cols, len })
    }

    /// Series of `var` at lag `lag`, aligned on rows `start..len`.
    fn lagged(&self, var: usize, lag: usize, start: usize) -> &'a [f64] {
        &self.cols[var][start - lag..self.len - lag]
    }

    fn key(&self, src: usize, lag: usize, dst: usize) -> LinkKey {
        LinkKey::new(&self.names[src], lag, &self.names[dst])
    }

    /// Canonical ordering of a conditioning set: by name, then lag.
    fn canonical(&self, conds: &mut Vec<(usize, usize)>) {
        conds.sort_by(|a, b| self.names[a.0].cmp(&self.names[b.0]).then(a.1.cmp(&b.1)));
        conds.dedup();
    }

    fn test(
        &self,
        src: (usize, usize),
        dst: usize,
        conds: &[(usize, usize)],
        start: usize,
    ) -> Result<CiResult> {
        let x = self.lagged(src.0, src.1, start);
        let y = self.lagged(dst, 0, start);
        let z: Vec<&[f64]> = conds
            .iter()
            .map(|&(v, l)| self.lagged(v, l, start))
            .collect();
        parcorr_test(x, y, &z).map_err(|source| PcmciError::Test {
            link: self.key(src.0, src.1, dst),
            source,
        })
    }

    fn sort_by_strength(&self, cands: &mut [Cand]) {
        cands.sort_by(|a, b| {
            b.strength
                .total_cmp(&a.strength)
                .then_with(|| self.names[a.var].cmp(&self.names[b.var]))
                .then(a.lag.cmp(&b.lag))
        });
    }

    fn pc1_target(&self, target: usize, cfg: &PcmciConfig) -> Result<Vec<Cand>> {
        let start = cfg.tau_max;
        let mut parents: Vec<Cand> = (0..self.names.len())
            .flat_map(|var| {
                (cfg.tau_min..=cfg.tau_max).map(move |lag| Cand {
                    var,
                    lag,
                    strength: f64::INFINITY,
                })
            })
            .collect();
        self.sort_by_strength(&mut parents);
        let max_q = cfg.max_cond_dim.unwrap_or(usize::MAX);
        let mut q = 0usize;
        while q <= max_q && !parents.is_empty() && parents.len() > q {
            let mut keep = Vec::with_capacity(parents.len());
            for (k, c) in parents.iter().enumerate() {
                let mut conds: Vec<(usize, usize)> = parents
                    .iter()
                    .enumerate()
                    .filter(|&(m, _)| m != k)
                    .take(q)
                    .map(|(_, p)| (p.var, p.lag))
                    .collect();
                self.canonical(&mut conds);
                let res = self.test((c.var, c.lag), target, &conds, start)?;
                let strength = c.strength.min(res.statistic.abs());
                if res.p_value <= cfg.pc_alpha {
                    keep.push(Cand { strength, ..*c });
                }
            }
            parents = keep;
            self.sort_by_strength(&mut parents);
            q += 1;
        }
        Ok(parents)
    }

    fn pc1(&self, cfg: &PcmciConfig) -> Result<CandidateSets> {
        let parents = (0..self.names.len())
            .into_par_iter()
            .map(|j| self.pc1_target(j, cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(CandidateSets {
            variables: self.names.clone(),
            parents,
        })
    }

    fn capped<'c>(&self, cands: &'c [Cand], cfg: &PcmciConfig) -> &'c [Cand] {
        let cap = cfg.max_cond_dim.unwrap_or(usize::MAX).min(cands.len());
        &cands[..cap]
    }

    /// First row usable by every MCI test of this run.
    fn mci_start(&self, sets: &CandidateSets, cfg: &PcmciConfig) -> usize {
        let deepest = sets
            .parents
            .iter()
            .flat_map(|ps| self.capped(ps, cfg).iter().map(|c| c.lag))
            .max()
            .unwrap_or(0);
        cfg.tau_max + deepest
    }

    fn mci_conditions(
        &self,
        src: (usize, usize),
        dst: usize,
        sets: &CandidateSets,
        cfg: &PcmciConfig,
    ) -> Vec<(usize, usize)> {
        let cap = cfg.max_cond_dim.unwrap_or(usize::MAX);
        let mut conds: Vec<(usize, usize)> = sets.parents[dst]
            .iter()
            .filter(|c| (c.var, c.lag) != src)
            .take(cap)
            .map(|c| (c.var, c.lag))
            .collect();
        conds.extend(
            self.capped(&sets.parents[src.0], cfg)
                .iter()
                .map(|c| (c.var, c.lag + src.1)),
        );
        conds.retain(|&c| c != src);
        self.canonical(&mut conds);
        conds
    }
}

/// Runs the PC1 condition-selection phase on every variable of `panel`.
///
/// The panel must be fully observed; every test uses rows `tau_max..len`.
pub fn pc1_condition_selection(panel: &Panel, cfg: &PcmciConfig) -> Result<CandidateSets> {
    Data::from_panel(panel, cfg)?.pc1(cfg)
}

/// Momentary conditional independence test of `source = (name, lag)` into
/// `target`, conditioned on the candidate parents of both endpoints.
pub fn mci_test(
    panel: &Panel,
    source: (&str, usize),
    target: &str,
    candidates: &CandidateSets,
    cfg: &PcmciConfig,
) -> Result<CiResult> {
    let data = Data::from_panel(panel, cfg)?;
    let idx = |name: &str| {
        data.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| PcmciError::UnknownVariable(name.to_string()))
    };
    let (src, dst) = ((idx(source.0)?, source.1), idx(target)?);
    if candidates.variables != data.names {
        return Err(PcmciError::InvalidConfig(
            "candidate sets were computed for different variables".into(),
        ));
    }
    let start = data
        .mci_start(candidates, cfg)
        .max(cfg.tau_max.max(source.1));
    let conds = data.mci_conditions(src, dst, candidates, cfg);
    data.test(src, dst, &conds, start)
}

/// Benjamini–Hochberg adjusted p-values, in input order.
pub fn benjamini_hochberg(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        running = running.min(p[i] * m as f64 / (rank + 1) as f64);
        out[i] = running.min(1.0);
    }
    out
}

/// PC1 followed by MCI over every candidate link; returns all intermediate
/// results alongside the graph.
pub fn run_pcmci_detailed(panel: &Panel, cfg: &PcmciConfig) -> Result<PcmciOutput> {
    let data = Data::from_panel(panel, cfg)?;
    let candidates = data.pc1(cfg)?;
    let start = data.mci_start(&candidates, cfg);
    if data.len.saturating_sub(start) < MIN_EFFECTIVE_SAMPLES {
        return Err(PcmciError::TooFewSamples {
            needed: MIN_EFFECTIVE_SAMPLES,
            got: data.len.saturating_sub(start),
        });
    }
    let jobs: Vec<(usize, usize, usize)> = candidates
        .parents
        .iter()
        .enumerate()
        .flat_map(|(j, ps)| ps.iter().map(move |c| (c.var, c.lag, j)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, lag, j)| {
            let conds = data.mci_conditions((i, lag), j, &candidates, cfg);
            data.test((i, lag), j, &conds, start)
                .map(|r| (data.key(i, lag, j), r))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut tested = results;
    tested.sort_by(|a, b| a.0.cmp(&b.0));

    let pvals: Vec<f64> = tested.iter().map(|(_, r)| r.p_value).collect();
    let decision_p = if cfg.fdr_bh {
        benjamini_hochberg(&pvals)
    } else {
        pvals
    };
    let links = tested
        .iter()
        .zip(&decision_p)
        .filter(|(_, &p)| p <= cfg.mci_alpha)
        .map(|((k, r), &p)| GraphLink {
            source: k.source.clone(),
            lag: k.lag,
            target: k.target.clone(),
            statistic: r.statistic,
            p_value: p,
        })
        .collect();
    let graph = LaggedGraph {
        variables: data.names.clone(),
        tau_min: cfg.tau_min,
        tau_max: cfg.tau_max,
        links,
    };
    Ok(PcmciOutput {
        candidates,
        tested,
        graph,
    })
}

/// Estimates the lagged causal graph of all variables in `panel`.
pub fn run_pcmci(panel: &Panel, cfg: &PcmciConfig) -> Result<LaggedGraph> {
    run_pcmci_detailed(panel, cfg).map(|o| o.graph)
}

/// Exogenous direct lagged parents of a target plus its own significant lags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalFeatures {
    pub target: String,
    pub exogenous: BTreeSet<String>,
    pub autoregressive_lags: Vec<usize>,
}

/// Projects the graph onto the direct parents of `target`. Calendar columns
/// are never reported as exogenous drivers.
pub fn causal_feature_set(graph: &LaggedGraph, target: &str) -> Result<CausalFeatures> {
    if !graph.variables.iter().any(|v| v == target) {
        return Err(PcmciError::UnknownVariable(target.to_string()));
    }
    let mut exogenous = BTreeSet::new();
    let mut ar = BTreeSet::new();
    for l in graph
        .links
        .iter()
        .filter(|l| l.target == target && l.lag >= graph.tau_min)
    {
        if l.source == target {
            ar.insert(l.lag);
        } else if !is_calendar_column(&l.source) {
            exogenous.insert(l.source.clone());
        }
    }
    Ok(CausalFeatures {
        target: target.to_string(),
        exogenous,
        autoregressive_lags: ar.into_iter().collect(),
    })
}

/// Variables present in a strict majority of the given sets.
pub fn consensus(sets: &[BTreeSet<String>]) -> BTreeSet<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in sets {
        for v in s {
            *counts.entry(v).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .filter(|&(_, c)| 2 * c > sets.len())
        .map(|(v, _)| v.to_string())
        .collect()
}

/// Link-level F1 of `found` against `truth`. Two empty sets score 1.
pub fn link_f1(found: &BTreeSet<LinkKey>, truth: &BTreeSet<LinkKey>) -> f64 {
    let tp = found.intersection(truth).count() as f64;
    let denom = found.len() as f64 + truth.len() as f64;
    if denom == 0.0 {
        1.0
    } else {
        2.0 * tp / denom
    }
}
