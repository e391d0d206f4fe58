//! Effective configuration: defaults, then the `--config` file, then flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use hosid::eval::{ComparisonScope, DEFAULT_CRITICAL_VALUE};
use hosid::features::{FeatureConfig, Fingerprint};
use hosid::hmm::{GmmTrainOptions, TrainOptions, DEFAULT_VARIANCE_FLOOR_RATIO, MAX_ORDER};
use hosid::speaker::EnrollOptions;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub order: usize,
    pub num_states: usize,
    pub num_mixtures: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            order: 3,
            num_states: 6,
            num_mixtures: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Fraction of the global per-dimension variance.
    pub variance_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let t = TrainOptions::default();
        Self {
            max_iters: t.max_iters,
            rel_tol: t.rel_tol,
            variance_floor: DEFAULT_VARIANCE_FLOOR_RATIO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub critical_value: f64,
    pub scope: ComparisonScope,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            critical_value: DEFAULT_CRITICAL_VALUE,
            scope: ComparisonScope::All,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub feature: FeatureConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub seed: u64,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.feature.validate()?;
        let m = &self.model;
        if !(1..=MAX_ORDER).contains(&m.order) {
            bail!("model.order must be between 1 and {MAX_ORDER}, got {}", m.order);
        }
        if m.num_states == 0 || m.num_mixtures == 0 {
            bail!("model.num_states and model.num_mixtures must be positive");
        }
        let t = &self.train;
        if t.max_iters == 0 {
            bail!("train.max_iters must be positive");
        }
        if !(t.rel_tol >= 0.0 && t.rel_tol.is_finite()) {
            bail!("train.rel_tol must be a non-negative number");
        }
        if !(t.variance_floor > 0.0 && t.variance_floor.is_finite()) {
            bail!("train.variance_floor must be positive");
        }
        if !self.eval.critical_value.is_finite() {
            bail!("eval.critical_value must be finite");
        }
        Ok(())
    }

    pub fn enroll_options(&self) -> EnrollOptions {
        let t = &self.train;
        EnrollOptions {
            num_states: self.model.num_states,
            num_mixtures: self.model.num_mixtures,
            train: TrainOptions {
                max_iters: t.max_iters,
                rel_tol: t.rel_tol,
                variance_floor_ratio: t.variance_floor,
            },
            gmm: GmmTrainOptions {
                max_iters: t.max_iters,
                rel_tol: t.rel_tol,
                variance_floor_ratio: t.variance_floor,
                ..GmmTrainOptions::default()
            },
            seed: self.seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config always serializes")
    }

    /// Short digest of the canonical JSON form.
    pub fn hash(&self) -> String {
        Fingerprint::digest(serde_json::to_string(self).expect("config always serializes").as_bytes()).to_hex()
    }
}
