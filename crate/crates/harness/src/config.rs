//! Experiment configuration: TOML schema, defaults per experiment kind, and
//! validation.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Strategies,
    ValidateThm1,
    Warmup,
    Counterexample,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExperimentKind::Strategies => "strategies",
            ExperimentKind::ValidateThm1 => "validate-thm1",
            ExperimentKind::Warmup => "warmup",
            ExperimentKind::Counterexample => "counterexample",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub side: usize,
    pub object_types: usize,
    pub objects_per_type: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { side: 10, object_types: 4, objects_per_type: 2 }
    }
}

/// How the perspective family is constructed per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "construction", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PerspectiveSpec {
    /// The `k` one-hot rows.
    Basis,
    /// The `k` one-hot rows plus `duplicates` extra copies of the first.
    DuplicatedBasis { duplicates: usize },
    /// `count` random rows with entries below `threshold` zeroed.
    RandomThresholded { count: usize, threshold: f64 },
    /// `count` dense random rows.
    RandomUniform { count: usize },
}

impl Default for PerspectiveSpec {
    fn default() -> Self {
        PerspectiveSpec::DuplicatedBasis { duplicates: 12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Uniform,
    ActiveVar,
    ActiveSim,
    ActiveCorr,
    Ucb,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Uniform,
        StrategyKind::ActiveVar,
        StrategyKind::ActiveSim,
        StrategyKind::ActiveCorr,
        StrategyKind::Ucb,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            StrategyKind::Uniform => "uniform",
            StrategyKind::ActiveVar => "active-var",
            StrategyKind::ActiveSim => "active-sim",
            StrategyKind::ActiveCorr => "active-corr",
            StrategyKind::Ucb => "ucb",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl FromStr for StrategyKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        StrategyKind::ALL
            .iter()
            .copied()
            .find(|k| k.label() == s)
            .ok_or_else(|| ConfigError::new(format!("unknown strategy `{s}`")))
    }
}

/// Strategy hyperparameters; defaults are artifact choices, configurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyParams {
    /// UCB exploration constant.
    pub c: f64,
    /// Decay of the exponentially weighted feature estimates.
    pub alpha: f64,
    /// Ridge regularization of the design matrix.
    pub lambda: f64,
    /// Floor applied inside similarity denominators.
    pub similarity_floor: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self { c: 1.0, alpha: 0.9, lambda: 1.0, similarity_floor: 1e-6 }
    }
}

/// Seeds may be given as a count (`seeds = 100` meaning `0..100`) or as an
/// explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Count(u64),
    List(Vec<u64>),
}

impl SeedSpec {
    pub fn resolve(&self) -> Vec<u64> {
        match self {
            SeedSpec::Count(n) => (0..*n).collect(),
            SeedSpec::List(v) => v.clone(),
        }
    }
}

impl FromStr for SeedSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        if s.contains(',') {
            let list = s
                .split(',')
                .map(|p| p.trim().parse::<u64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ConfigError::new(format!("bad seed list `{s}`: {e}")))?;
            Ok(SeedSpec::List(list))
        } else {
            let n = s
                .trim()
                .parse::<u64>()
                .map_err(|e| ConfigError::new(format!("bad seed count `{s}`: {e}")))?;
            Ok(SeedSpec::Count(n))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub grid: GridConfig,
    pub perspectives: PerspectiveSpec,
    pub strategies: Vec<StrategyKind>,
    pub params: StrategyParams,
    pub seeds: SeedSpec,
    pub budget: usize,
    pub horizon: usize,
    pub gamma: f64,
    /// Additive Gaussian observation noise; used by the warmup study only.
    pub noise_sigma: f64,
    pub bootstrap_resamples: usize,
    /// Worker threads; 0 means all available cores.
    pub parallel: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::default_for(ExperimentKind::Strategies)
    }
}

impl ExperimentConfig {
    pub fn default_for(kind: ExperimentKind) -> Self {
        let base = Self {
            kind,
            grid: GridConfig::default(),
            perspectives: PerspectiveSpec::default(),
            strategies: vec![
                StrategyKind::Uniform,
                StrategyKind::ActiveVar,
                StrategyKind::ActiveSim,
                StrategyKind::ActiveCorr,
            ],
            params: StrategyParams::default(),
            seeds: SeedSpec::Count(100),
            budget: 60,
            horizon: 30,
            gamma: 0.3,
            noise_sigma: 0.1,
            bootstrap_resamples: 2000,
            parallel: 0,
        };
        match kind {
            ExperimentKind::Strategies => base,
            ExperimentKind::ValidateThm1 => Self {
                seeds: SeedSpec::Count(10),
                budget: 200,
                ..base
            },
            ExperimentKind::Warmup => Self {
                seeds: SeedSpec::Count(100),
                budget: 50,
                ..base
            },
            ExperimentKind::Counterexample => Self {
                seeds: SeedSpec::Count(20),
                budget: 1,
                ..base
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::new(format!("config parse error: {e}")))
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.budget < 1 {
            return Err(ConfigError::new("budget must be at least 1"));
        }
        if self.seeds.resolve().is_empty() {
            return Err(ConfigError::new("seed list must be nonempty"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(ConfigError::new("gamma must lie in (0,1)"));
        }
        if self.horizon < 1 {
            return Err(ConfigError::new("horizon must be at least 1"));
        }
        if self.grid.side == 0 || self.grid.object_types == 0 || self.grid.objects_per_type == 0 {
            return Err(ConfigError::new("grid parameters must be positive"));
        }
        if self.grid.side * self.grid.side <= self.grid.object_types * self.grid.objects_per_type {
            return Err(ConfigError::new("objects do not fit in the grid"));
        }
        if self.kind == ExperimentKind::Strategies && self.strategies.is_empty() {
            return Err(ConfigError::new("strategy list must be nonempty"));
        }
        if let PerspectiveSpec::RandomThresholded { count, threshold } = &self.perspectives {
            if *count == 0 {
                return Err(ConfigError::new("perspective count must be positive"));
            }
            if !(0.0..1.0).contains(threshold) {
                return Err(ConfigError::new("threshold must lie in [0,1)"));
            }
        }
        if let PerspectiveSpec::RandomUniform { count } = &self.perspectives {
            if *count == 0 {
                return Err(ConfigError::new("perspective count must be positive"));
            }
        }
        if !(self.params.lambda > 0.0) {
            return Err(ConfigError::new("lambda must be positive"));
        }
        if !(0.0..=1.0).contains(&self.params.alpha) {
            return Err(ConfigError::new("alpha must lie in [0,1]"));
        }
        if self.noise_sigma < 0.0 {
            return Err(ConfigError::new("noise sigma must be nonnegative"));
        }
        if self.bootstrap_resamples == 0 {
            return Err(ConfigError::new("bootstrap resamples must be positive"));
        }
        Ok(())
    }

    /// Canonical JSON used for hashing into the manifest.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// A configuration problem; mapped to exit code 2 by the CLI.
#[derive(Debug, Clone)]
pub struct ConfigError {
    message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}
