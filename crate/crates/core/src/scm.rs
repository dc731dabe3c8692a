//! Linear lagged structural causal models with Gaussian noise.
//!
//! These are the ground truth for causal-recovery checks: the spec itself
//! lists the true links, so a recovered graph can be scored exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use chrono::{DateTime, TimeZone, Utc};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{Panel, PanelError};
use crate::pcmci::LinkKey;

#[derive(Debug, Error)]
pub enum ScmError {
    #[error("link lag must be >= 1 (got 0 for {from} -> {to})")]
    ContemporaneousLink { from: String, to: String },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("duplicate link {0}")]
    DuplicateLink(LinkKey),
    #[error("{field} has {got} entries, expected {expected}")]
    Shape {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model is not stationary (spectral radius {0:.4} >= 1)")]
    NonStationary(f64),
    #[error("unknown fixture `{0}` (known: chain3, mediation8, independent6)")]
    UnknownFixture(String),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

pub type Result<T, E = ScmError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmLink {
    pub source: String,
    pub lag: usize,
    pub target: String,
    pub coefficient: f64,
}

impl ScmLink {
    pub fn new(source: &str, lag: usize, target: &str, coefficient: f64) -> Self {
        Self {
            source: source.into(),
            lag,
            target: target.into(),
            coefficient,
        }
    }
}

/// Additive sinusoid `amplitude * sin(2π t / period)` on a variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seasonal {
    pub amplitude: f64,
    pub period: f64,
}

pub const DEFAULT_BURN_IN: usize = 200;

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

#[derive(Debug, Clone, Deserialize)]
struct RawScmSpec {
    variables: Vec<String>,
    links: Vec<ScmLink>,
    noise_std: Vec<f64>,
    #[serde(default)]
    seasonal: Vec<Option<Seasonal>>,
    #[serde(default = "default_burn_in")]
    burn_in: usize,
}

impl TryFrom<RawScmSpec> for ScmSpec {
    type Error = ScmError;

    fn try_from(raw: RawScmSpec) -> Result<Self> {
        ScmSpec::new(
            raw.variables,
            raw.links,
            raw.noise_std,
            raw.seasonal,
            raw.burn_in,
        )
    }
}

/// A validated, stationary linear lagged SCM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScmSpec")]
pub struct ScmSpec {
    variables: Vec<String>,
    links: Vec<ScmLink>,
    noise_std: Vec<f64>,
    seasonal: Vec<Option<Seasonal>>,
    burn_in: usize,
}

impl ScmSpec {
    /// Validates structure and asserts stationarity. An empty `seasonal`
    /// means no seasonal terms.
    pub fn new(
        variables: Vec<String>,
        links: Vec<ScmLink>,
        noise_std: Vec<f64>,
        seasonal: Vec<Option<Seasonal>>,
        burn_in: usize,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for v in &variables {
            if !seen.insert(v.as_str()) {
                return Err(ScmError::DuplicateVariable(v.clone()));
            }
        }
        let nv = variables.len();
        if noise_std.len() != nv {
            return Err(ScmError::Shape {
                field: "noise_std",
                got: noise_std.len(),
                expected: nv,
            });
        }
        if let Some(s) = noise_std.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(ScmError::InvalidParameter(format!("noise_std {s}")));
        }
        let seasonal = if seasonal.is_empty() {
            vec![None; nv]
        } else {
            seasonal
        };
        if seasonal.len() != nv {
            return Err(ScmError::Shape {
                field: "seasonal",
                got: seasonal.len(),
                expected: nv,
            });
        }
        for s in seasonal.iter().flatten() {
            if !(s.period > 0.0 && s.period.is_finite() && s.amplitude.is_finite()) {
                return Err(ScmError::InvalidParameter(format!(
                    "seasonal amplitude {} period {}",
                    s.amplitude, s.period
                )));
            }
        }
        let mut keys = BTreeSet::new();
        for l in &links {
            for v in [&l.source, &l.target] {
                if !seen.contains(v.as_str()) {
                    return Err(ScmError::UnknownVariable(v.clone()));
                }
            }
            if l.lag == 0 {
                return Err(ScmError::ContemporaneousLink {
                    from: l.source.clone(),
                    to: l.target.clone(),
                });
            }
            if !l.coefficient.is_finite() {
                return Err(ScmError::InvalidParameter(format!(
                    "coefficient {}",
                    l.coefficient
                )));
            }
            let key = LinkKey::new(&l.source, l.lag, &l.target);
            if !keys.insert(key.clone()) {
                return Err(ScmError::DuplicateLink(key));
            }
        }
        let spec = Self {
            variables,
            links,
            noise_std,
            seasonal,
            burn_in,
        };
        let rho = spec.spectral_radius();
        if !(rho < 1.0) {
            return Err(ScmError::NonStationary(rho));
        }
        Ok(spec)
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn links(&self) -> &[ScmLink] {
        &self.links
    }

    pub fn noise_std(&self) -> &[f64] {
        &self.noise_std
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn max_lag(&self) -> usize {
        self.links.iter().map(|l| l.lag).max().unwrap_or(0)
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    /// Spectral radius of the VAR companion matrix.
    pub fn spectral_radius(&self) -> f64 {
        let nv = self.variables.len();
        let p = self.max_lag();
        if p == 0 || nv == 0 {
            return 0.0;
        }
        let dim = nv * p;
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        for l in &self.links {
            let (s, t) = (
                self.index(&l.source).unwrap(),
                self.index(&l.target).unwrap(),
            );
            m[(t, (l.lag - 1) * nv + s)] += l.coefficient;
        }
        for i in nv..dim {
            m[(i, i - nv)] = 1.0;
        }
        m.complex_eigenvalues()
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// First timestamp of every simulated panel.
pub fn simulation_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2018, 1, 1, 0, 0, 0).unwrap()
}

/// Region label of simulated panels.
pub const SYNTHETIC_REGION: &str = "synthetic";

/// Runs the linear recursion for `burn_in + len` steps and returns the last
/// `len` as a fully observed hourly panel.
pub fn simulate(spec: &ScmSpec, len: usize, seed: u64) -> Result<Panel> {
    let nv = spec.variables.len();
    let total = spec.burn_in + len;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let resolved: Vec<(usize, usize, usize, f64)> = spec
        .links
        .iter()
        .map(|l| {
            (
                spec.index(&l.source).unwrap(),
                l.lag,
                spec.index(&l.target).unwrap(),
                l.coefficient,
            )
        })
        .collect();
    let mut data = vec![vec![0.0; total]; nv];
    for t in 0..total {
        for (v, row) in data.iter_mut().enumerate() {
            let e: f64 = StandardNormal.sample(&mut rng);
            let mut x = spec.noise_std[v] * e;
            if let Some(s) = spec.seasonal[v] {
                x += s.amplitude * (2.0 * PI * t as f64 / s.period).sin();
            }
            row[t] = x;
        }
        for &(s, lag, tgt, c) in &resolved {
            if t >= lag {
                data[tgt][t] += c * data[s][t - lag];
            }
        }
    }
    let columns = data
        .into_iter()
        .map(|col| col[spec.burn_in..].to_vec())
        .collect();
    Ok(Panel::from_columns(
        SYNTHETIC_REGION,
        simulation_start(),
        spec.variables.clone(),
        columns,
    )?)
}

/// Every lagged link of the spec, including autoregressive ones.
pub fn true_links(spec: &ScmSpec) -> BTreeSet<LinkKey> {
    spec.links
        .iter()
        .map(|l| LinkKey::new(&l.source, l.lag, &l.target))
        .collect()
}

/// Direct parents of `target`, excluding its own lags.
pub fn true_parents(spec: &ScmSpec, target: &str) -> Result<BTreeSet<String>> {
    if spec.index(target).is_none() {
        return Err(ScmError::UnknownVariable(target.to_string()));
    }
    Ok(spec
        .links
        .iter()
        .filter(|l| l.target == target && l.source != target)
        .map(|l| l.source.clone())
        .collect())
}

/// Variables with a directed path into `target` that are not direct parents.
pub fn mediated_ancestors(spec: &ScmSpec, target: &str) -> Result<BTreeSet<String>> {
    let direct = true_parents(spec, target)?;
    let mut parents: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for l in &spec.links {
        if l.source != l.target {
            parents.entry(&l.target).or_default().insert(&l.source);
        }
    }
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut stack = vec![target];
    while let Some(v) = stack.pop() {
        for &p in parents.get(v).into_iter().flatten() {
            if seen.insert(p) {
                stack.push(p);
            }
        }
    }
    Ok(seen
        .into_iter()
        .filter(|v| *v != target && !direct.contains(*v))
        .map(str::to_string)
        .collect())
}

/// Names accepted by [`standard_spec`].
pub const FIXTURE_NAMES: [&str; 3] = ["chain3", "mediation8", "independent6"];

/// Target variable of each standard fixture.
pub fn fixture_target(name: &str) -> Option<&'static str> {
    match name {
        "chain3" => Some("y"),
        "mediation8" => Some("load"),
        "independent6" => Some("x5"),
        _ => None,
    }
}

/// Weather-like covariates of the `mediation8` fixture.
pub const MEDIATION8_WEATHER: [&str; 8] = [
    "tcc",
    "tcw",
    "skt",
    "avg-snlwrf",
    "avg-snswrf",
    "t2m",
    "d2m",
    "tp",
];

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Versioned standard fixtures (v1).
///
/// - `chain3`: `w -> v -> y` at lag 1 with autocorrelation.
/// - `mediation8`: eight weather-like covariates plus `load`. Load has two
///   direct drivers (`t2m` at lag 1, `tp` at lag 2); radiation acts through
///   temperature, column water through precipitation, and `tcc`, `skt` and
///   `d2m` are confounded siblings that never reach load.
/// - `independent6`: six autocorrelated series with no cross links.
pub fn standard_spec(name: &str) -> Result<ScmSpec> {
    let l = ScmLink::new;
    match name {
        "chain3" => ScmSpec::new(
            names(&["w", "v", "y"]),
            vec![
                l("w", 1, "w", 0.5),
                l("v", 1, "v", 0.4),
                l("y", 1, "y", 0.4),
                l("w", 1, "v", 0.6),
                l("v", 1, "y", 0.6),
            ],
            vec![1.0; 3],
            vec![],
            DEFAULT_BURN_IN,
        ),
        "mediation8" => {
            let mut vars = names(&MEDIATION8_WEATHER);
            vars.push("load".into());
            ScmSpec::new(
                vars,
                vec![
                    l("tcw", 1, "tcw", 0.9),
                    l("tcc", 1, "tcc", 0.4),
                    l("tcw", 1, "tcc", 0.3),
                    l("avg-snswrf", 1, "avg-snswrf", 0.85),
                    l("avg-snlwrf", 1, "avg-snlwrf", 0.85),
                    l("t2m", 1, "t2m", 0.4),
                    l("avg-snswrf", 1, "t2m", 0.4),
                    l("avg-snlwrf", 1, "t2m", 0.4),
                    l("skt", 1, "skt", 0.4),
                    l("t2m", 1, "skt", 0.4),
                    l("d2m", 1, "d2m", 0.4),
                    l("tcw", 1, "d2m", 0.3),
                    l("tcw", 1, "tp", 0.6),
                    l("load", 1, "load", 0.5),
                    l("t2m", 1, "load", 0.6),
                    l("tp", 2, "load", 0.5),
                ],
                [vec![1.0; 8], vec![0.5]].concat(),
                vec![],
                DEFAULT_BURN_IN,
            )
        }
        "independent6" => {
            let vars: Vec<String> = (0..6).map(|i| format!("x{i}")).collect();
            let links = vars.iter().map(|v| l(v, 1, v, 0.4)).collect();
            ScmSpec::new(vars, links, vec![1.0; 6], vec![], DEFAULT_BURN_IN)
        }
        other => Err(ScmError::UnknownFixture(other.to_string())),
    }
}

/// A standard fixture and one simulated panel of length `len`.
pub fn standard_fixture(name: &str, len: usize, seed: u64) -> Result<(ScmSpec, Panel)> {
    let spec = standard_spec(name)?;
    let panel = simulate(&spec, len, seed)?;
    Ok((spec, panel))
}
