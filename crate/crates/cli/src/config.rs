//! Single-file run configuration. Every field has a default; a TOML file
//! overrides any subset and command-line flags override the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stlf::eval::{EvalConfig, ModelConfig, ModelKind, OodConfig, Regime, SelectionConfig};
use stlf::forecast::{GruConfig, TrainConfig};
use stlf::mifilter::MiFilterConfig;
use stlf::pcmci::PcmciConfig;

use crate::CliError;

/// Environment variable naming the config file when `--config` is absent.
pub const CONFIG_ENV: &str = "STLF_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub load_csv: Option<PathBuf>,
    pub weather_csv: Option<PathBuf>,
    pub weather_variables: Vec<String>,
    pub holidays: Option<PathBuf>,
    pub consumer_type: Option<String>,
    pub panels: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSection {
    /// Input hours per window.
    pub lookback: usize,
    /// Forecast hours per window.
    pub horizon: usize,
}

impl Default for WindowSection {
    fn default() -> Self {
        Self {
            lookback: stlf::forecast::DEFAULT_LOOKBACK,
            horizon: stlf::forecast::DEFAULT_HORIZON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldSection {
    /// Training window length in hours.
    pub train_span: usize,
    pub count: usize,
}

impl Default for FoldSection {
    fn default() -> Self {
        Self {
            train_span: stlf::eval::DEFAULT_TRAIN_SPAN,
            count: stlf::eval::DEFAULT_FOLDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RidgeSection {
    pub lambda: f64,
}

impl Default for RidgeSection {
    fn default() -> Self {
        Self {
            lambda: stlf::forecast::DEFAULT_RIDGE_LAMBDA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every component derives its own stream from it.
    pub seed: u64,
    pub target: String,
    pub models: Vec<String>,
    pub regimes: Vec<String>,
    /// Worker threads for evaluation; 0 uses every processor.
    pub workers: usize,
    pub seasonal_period: usize,
    pub data: DataConfig,
    pub window: WindowSection,
    pub folds: FoldSection,
    pub pcmci: PcmciConfig,
    pub mifilter: MiFilterConfig,
    pub ridge: RidgeSection,
    pub gru: GruConfig,
    pub train: TrainConfig,
    pub ood: OodConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            target: stlf::panel::LOAD_COLUMN.to_string(),
            models: vec![ModelKind::Ridge.to_string()],
            regimes: Regime::ALL.iter().map(|r| r.to_string()).collect(),
            workers: 0,
            seasonal_period: stlf::forecast::WEEKLY_PERIOD,
            data: DataConfig::default(),
            window: WindowSection::default(),
            folds: FoldSection::default(),
            pcmci: PcmciConfig::default(),
            mifilter: MiFilterConfig::default(),
            ridge: RidgeSection::default(),
            gru: GruConfig::default(),
            train: TrainConfig::default(),
            ood: OodConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Loads `path`, or the file named by [`CONFIG_ENV`], or the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        match path.map(Path::to_path_buf).or(from_env) {
            Some(p) => {
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: &dyn std::fmt::Display| CliError::Usage(e.to_string());
        self.pcmci.validate().map_err(|e| usage(&e))?;
        self.mifilter.validate().map_err(|e| usage(&e))?;
        self.train.validate().map_err(|e| usage(&e))?;
        self.gru.validate().map_err(|e| usage(&e))?;
        self.ood.validate().map_err(|e| usage(&e))?;
        if self.window.lookback == 0 || self.window.horizon == 0 {
            return Err(CliError::Usage(
                "window lookback and horizon must be at least 1".into(),
            ));
        }
        self.model_kinds()?;
        self.regime_list()?;
        Ok(())
    }

    pub fn model_kinds(&self) -> Result<Vec<ModelKind>, CliError> {
        parse_list(&self.models)
    }

    pub fn regime_list(&self) -> Result<Vec<Regime>, CliError> {
        parse_list(&self.regimes)
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            lookback: self.window.lookback,
            horizon: self.window.horizon,
            train_span: self.folds.train_span,
            folds: self.folds.count,
            model: ModelConfig {
                ridge_lambda: self.ridge.lambda,
                seasonal_period: self.seasonal_period,
                gru: self.gru,
                train: self.train.clone(),
            },
            selection: SelectionConfig {
                pcmci: self.pcmci.clone(),
                mifilter: self.mifilter.clone(),
            },
            ood: self.ood.clone(),
            seed: self.seed,
        }
    }
}

fn parse_list<T: std::str::FromStr>(items: &[String]) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    if items.is_empty() {
        return Err(CliError::Usage("empty model or regime list".into()));
    }
    items
        .iter()
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|e| CliError::Usage(e.to_string()))
        })
        .collect()
}
