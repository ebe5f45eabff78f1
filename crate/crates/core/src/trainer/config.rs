use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::discrepancy::{DEFAULT_POWER_ITERS, DEFAULT_POWER_TOL};
use crate::error::{DarnError, Result};
use crate::nn::OptimizerConfig;
use crate::simplex::DEFAULT_NU_TOL;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    /// L2-regularised simplex projection of `-g / tau`.
    Darn,
    Uniform,
    /// `softmax(-gamma g)`; a plain softmax baseline, not a reproduction of any
    /// published weighting scheme.
    SoftmaxGamma,
    /// All weight on the smallest `g` (lowest index on ties).
    Onehot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

/// How the objective's gradient with respect to `g` is formed under `darn`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum GradientPath {
    /// `alpha + J (z - alpha / ||alpha||_2)`, backpropagating through the projection.
    Jacobian,
    /// `alpha` alone.
    Envelope,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub feature_dims: Vec<usize>,
    pub label_hidden: Vec<usize>,
    pub domain_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_dims: vec![16, 16],
            label_hidden: vec![],
            domain_hidden: vec![16],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub tau: f64,
    pub aggregator: Aggregator,
    pub gamma: f64,
    pub epochs: usize,
    /// Per domain.
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub dropout: f64,
    /// Set by the caller (the experiment config carries it at the top level).
    #[serde(skip)]
    pub seed: u64,
    pub task: Task,
    pub gradient_path: GradientPath,
    pub model: ModelConfig,
    pub nu_tol: f64,
    pub power_iters: usize,
    pub power_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 1.0,
            aggregator: Aggregator::Darn,
            gamma: 1.0,
            epochs: 30,
            batch_size: 20,
            optimizer: OptimizerConfig::default(),
            dropout: 0.0,
            seed: 0,
            task: Task::Classification,
            gradient_path: GradientPath::Jacobian,
            model: ModelConfig::default(),
            nu_tol: DEFAULT_NU_TOL,
            power_iters: DEFAULT_POWER_ITERS,
            power_tol: DEFAULT_POWER_TOL,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(DarnError::config("tau", format!("must be > 0, got {}", self.tau)));
        }
        if self.aggregator == Aggregator::SoftmaxGamma && !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(DarnError::config(
                "gamma",
                format!("must be > 0 for softmax_gamma, got {}", self.gamma),
            ));
        }
        if self.epochs == 0 {
            return Err(DarnError::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(DarnError::config("batch_size", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(DarnError::config("dropout", "must be in [0, 1)"));
        }
        if !(self.nu_tol > 0.0) {
            return Err(DarnError::config("nu_tol", "must be positive"));
        }
        if self.power_iters == 0 {
            return Err(DarnError::config("power_iters", "must be at least 1"));
        }
        if !(self.power_tol > 0.0) {
            return Err(DarnError::config("power_tol", "must be positive"));
        }
        let widths = self
            .model
            .feature_dims
            .iter()
            .chain(&self.model.label_hidden)
            .chain(&self.model.domain_hidden);
        if widths.into_iter().any(|w| *w == 0) {
            return Err(DarnError::config("model", "layer widths must be positive"));
        }
        self.optimizer.validate()
    }
}
