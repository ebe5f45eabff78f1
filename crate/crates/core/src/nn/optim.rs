use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::model::{Gradients, ModelParams};
use crate::error::{DarnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    Adadelta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// SGD momentum coefficient.
    pub momentum: f64,
    /// Adadelta decay.
    pub rho: f64,
    /// Adadelta epsilon.
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::SgdMomentum,
            learning_rate: 0.01,
            momentum: 0.9,
            rho: 0.95,
            eps: 1e-6,
        }
    }
}

impl OptimizerConfig {
    /// Adadelta with learning rate 1.0, rho 0.95, eps 1e-6.
    pub fn adadelta() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adadelta,
            learning_rate: 1.0,
            ..Default::default()
        }
    }

    pub fn sgd(learning_rate: f64, momentum: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::SgdMomentum,
            learning_rate,
            momentum,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(DarnError::config("optimizer.learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(DarnError::config("optimizer.momentum", "must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(DarnError::config("optimizer.rho", "must be in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(DarnError::config("optimizer.eps", "must be positive"));
        }
        Ok(())
    }
}

/// Per-parameter accumulators.
///
/// SGD: `v <- mu v + g; theta <- theta - lr v`.
/// Adadelta: running averages of squared gradients and squared updates.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        OptimizerState {
            config,
            second: zeros.clone(),
            first: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients) -> Result<()> {
        let grad_tensors = grads.tensors();
        if grad_tensors.len() != self.first.len() {
            return Err(DarnError::DimensionMismatch {
                expected: self.first.len(),
                got: grad_tensors.len(),
            });
        }
        if grad_tensors.iter().any(|t| t.iter().any(|x| !x.is_finite())) {
            return Err(DarnError::NonFinite("gradients".into()));
        }
        let cfg = self.config.clone();
        let param_tensors = params.tensors_mut();
        for (((theta, g), first), second) in param_tensors
            .into_iter()
            .zip(grad_tensors)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            if theta.len() != g.len() || first.len() != g.len() {
                return Err(DarnError::DimensionMismatch {
                    expected: theta.len(),
                    got: g.len(),
                });
            }
            match cfg.kind {
                OptimizerKind::SgdMomentum => {
                    for ((t, &gi), v) in theta.iter_mut().zip(g).zip(first.iter_mut()) {
                        *v = cfg.momentum * *v + gi;
                        *t -= cfg.learning_rate * *v;
                    }
                }
                OptimizerKind::Adadelta => {
                    for (((t, &gi), sq_grad), sq_delta) in theta
                        .iter_mut()
                        .zip(g)
                        .zip(first.iter_mut())
                        .zip(second.iter_mut())
                    {
                        *sq_grad = cfg.rho * *sq_grad + (1.0 - cfg.rho) * gi * gi;
                        let delta = -((*sq_delta + cfg.eps).sqrt() / (*sq_grad + cfg.eps).sqrt()) * gi;
                        *sq_delta = cfg.rho * *sq_delta + (1.0 - cfg.rho) * delta * delta;
                        *t += cfg.learning_rate * delta;
                    }
                }
            }
        }
        params.bump_version();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::Architecture;

    fn scalar_model(theta: f64) -> ModelParams {
        // a single label-head bias is the only parameter we drive
        let arch = Architecture {
            input_dim: 1,
            feature_dims: vec![],
            label_hidden: vec![],
            num_outputs: 1,
            domain_hidden: vec![],
            num_domains: 1,
            dropout: 0.0,
        };
        let mut p = ModelParams::new(arch, 0).unwrap();
        p.label_head[0].bias[0] = theta;
        p
    }

    fn bias_grad(p: &ModelParams, value: f64) -> Gradients {
        let mut g = Gradients::zeros_like(p);
        g.label_head[0].bias[0] = value;
        g
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        for cfg in [OptimizerConfig::default(), OptimizerConfig::adadelta()] {
            let mut p = scalar_model(0.7);
            let before = p.clone();
            let mut opt = OptimizerState::new(cfg, &p);
            let g = Gradients::zeros_like(&p);
            for _ in 0..5 {
                opt.step(&mut p, &g).unwrap();
            }
            assert_eq!(p.tensors(), before.tensors());
        }
    }

    #[test]
    fn plain_sgd_step() {
        let mut p = scalar_model(1.0);
        let mut opt = OptimizerState::new(OptimizerConfig::sgd(0.1, 0.0), &p);
        let g = bias_grad(&p, 2.5);
        opt.step(&mut p, &g).unwrap();
        assert_eq!(p.label_head[0].bias[0], 1.0 - 0.1 * 2.5);
    }

    #[test]
    fn adadelta_minimises_scalar_quadratic() {
        // f(theta) = (theta - 0.3)^2 starting from theta = 0.2
        let target = 0.3;
        let mut p = scalar_model(0.2);
        let mut opt = OptimizerState::new(OptimizerConfig::adadelta(), &p);
        let mut converged_at = None;
        for step in 0..500 {
            let theta = p.label_head[0].bias[0];
            if (theta - target).abs() < 1e-3 {
                converged_at = Some(step);
                break;
            }
            let g = bias_grad(&p, 2.0 * (theta - target));
            opt.step(&mut p, &g).unwrap();
        }
        assert!(converged_at.is_some(), "theta = {}", p.label_head[0].bias[0]);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut p = scalar_model(0.0);
        let mut opt = OptimizerState::new(OptimizerConfig::default(), &p);
        let g = bias_grad(&p, f64::NAN);
        assert!(matches!(opt.step(&mut p, &g), Err(DarnError::NonFinite(_))));
    }
}
