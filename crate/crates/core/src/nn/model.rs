use serde::{Deserialize, Serialize};

use super::layer::{stack_backward, stack_forward, Activation, Dense, LayerGrad, StackCache};
use super::matrix::Matrix;
use super::rng::{self, derive_seed};
use crate::error::{DarnError, Result};

/// Layer sizes of a model.
///
/// The feature extractor applies ReLU after every layer; the label and domain
/// heads use ReLU on hidden layers and a linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input_dim: usize,
    pub feature_dims: Vec<usize>,
    pub label_hidden: Vec<usize>,
    pub num_outputs: usize,
    pub domain_hidden: Vec<usize>,
    pub num_domains: usize,
    /// Drop rate on the inputs of feature-extractor and label-head layers.
    pub dropout: f64,
}

impl Architecture {
    pub fn feature_dim(&self) -> usize {
        self.feature_dims.last().copied().unwrap_or(self.input_dim)
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_outputs == 0 {
            return Err(DarnError::invalid("input and output sizes must be positive"));
        }
        if self.num_domains == 0 {
            return Err(DarnError::invalid("need at least one domain head"));
        }
        let widths = self
            .feature_dims
            .iter()
            .chain(&self.label_hidden)
            .chain(&self.domain_hidden);
        if widths.into_iter().any(|w| *w == 0) {
            return Err(DarnError::invalid("hidden widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(DarnError::invalid(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

fn build_stack(
    input: usize,
    hidden: &[usize],
    output: Option<usize>,
    rng: &mut rng::Rng,
) -> Vec<Dense> {
    let mut layers = Vec::new();
    let mut width = input;
    for &h in hidden {
        layers.push(Dense::glorot(width, h, Activation::Relu, rng));
        width = h;
    }
    if let Some(out) = output {
        layers.push(Dense::glorot(width, out, Activation::Identity, rng));
    }
    layers
}

/// Parameters of the feature extractor, label head and per-domain classifier heads.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub architecture: Architecture,
    pub feature_extractor: Vec<Dense>,
    pub label_head: Vec<Dense>,
    pub domain_heads: Vec<Vec<Dense>>,
    version: u64,
}

/// Compares parameters only; the mutation counter is bookkeeping.
impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.architecture == other.architecture
            && self.feature_extractor == other.feature_extractor
            && self.label_head == other.label_head
            && self.domain_heads == other.domain_heads
    }
}

impl ModelParams {
    /// Glorot-initialised model. Layers are drawn in declaration order from one seeded stream.
    pub fn new(architecture: Architecture, seed: u64) -> Result<Self> {
        architecture.validate()?;
        let mut rng = rng::seeded(seed);
        let a = &architecture;
        let feature_extractor = build_stack(a.input_dim, &a.feature_dims, None, &mut rng);
        let label_head = build_stack(a.feature_dim(), &a.label_hidden, Some(a.num_outputs), &mut rng);
        let domain_heads = (0..a.num_domains)
            .map(|_| build_stack(a.feature_dim(), &a.domain_hidden, Some(1), &mut rng))
            .collect();
        Ok(ModelParams {
            architecture,
            feature_extractor,
            label_head,
            domain_heads,
            version: 0,
        })
    }

    /// Incremented by every optimizer step; caches from older versions are rejected.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.feature_extractor
            .iter()
            .chain(&self.label_head)
            .chain(self.domain_heads.iter().flatten())
    }

    /// Parameter blocks in declaration order: for each layer, weights then bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.feature_extractor
            .iter_mut()
            .chain(self.label_head.iter_mut())
            .chain(self.domain_heads.iter_mut().flatten())
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Label-head outputs in eval mode.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let cache = forward_heads(self, x, Mode::Eval, 0, &Heads::label_only())?;
        Ok(cache.label.expect("label head requested").output().clone())
    }

    /// Feature-extractor outputs in eval mode.
    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        let cache = forward_heads(self, x, Mode::Eval, 0, &Heads::none())?;
        Ok(cache.features.output().clone())
    }
}

/// Gradients, shape-congruent with [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub feature_extractor: Vec<LayerGrad>,
    pub label_head: Vec<LayerGrad>,
    pub domain_heads: Vec<Vec<LayerGrad>>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let zeros = |layers: &[Dense]| layers.iter().map(LayerGrad::zeros_like).collect();
        Gradients {
            feature_extractor: zeros(&params.feature_extractor),
            label_head: zeros(&params.label_head),
            domain_heads: params.domain_heads.iter().map(|h| zeros(h)).collect(),
        }
    }

    /// Same ordering as [`ModelParams::tensors`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.feature_extractor
            .iter()
            .chain(&self.label_head)
            .chain(self.domain_heads.iter().flatten())
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.feature_extractor
            .iter_mut()
            .chain(self.label_head.iter_mut())
            .chain(self.domain_heads.iter_mut().flatten())
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Which heads a forward pass evaluates on top of the shared features.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Heads {
    pub label: bool,
    pub domains: Vec<usize>,
}

impl Heads {
    pub fn none() -> Self {
        Heads::default()
    }

    pub fn label_only() -> Self {
        Heads {
            label: true,
            domains: Vec::new(),
        }
    }

    pub fn all(num_domains: usize) -> Self {
        Heads {
            label: true,
            domains: (0..num_domains).collect(),
        }
    }
}

/// Everything [`backward`] needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    version: u64,
    features: StackCache,
    label: Option<StackCache>,
    domains: Vec<(usize, StackCache)>,
}

impl ForwardCache {
    pub fn features(&self) -> &Matrix {
        self.features.output()
    }

    pub fn label_output(&self) -> Option<&Matrix> {
        self.label.as_ref().map(StackCache::output)
    }

    /// `m x 1` logits of domain head `domain`, if it was evaluated.
    pub fn domain_logits(&self, domain: usize) -> Option<&Matrix> {
        self.domains
            .iter()
            .find(|(d, _)| *d == domain)
            .map(|(_, c)| c.output())
    }
}

/// Gradient reversal, forward direction: identity.
pub fn grad_reversal_forward(x: &Matrix) -> Matrix {
    x.clone()
}

/// Gradient reversal, backward direction: negation with coefficient 1.
pub fn grad_reversal_backward(upstream: &Matrix) -> Matrix {
    upstream.map(|g| -g)
}

/// Forward pass through the features, the label head and every domain head.
pub fn forward(params: &ModelParams, x: &Matrix, mode: Mode, seed: u64) -> Result<ForwardCache> {
    let heads = Heads::all(params.domain_heads.len());
    forward_heads(params, x, mode, seed, &heads)
}

/// Forward pass evaluating only the requested heads. Dropout is active only
/// in [`Mode::Train`] and is driven entirely by `seed`.
pub fn forward_heads(
    params: &ModelParams,
    x: &Matrix,
    mode: Mode,
    seed: u64,
    heads: &Heads,
) -> Result<ForwardCache> {
    if x.cols() != params.architecture.input_dim {
        return Err(DarnError::DimensionMismatch {
            expected: params.architecture.input_dim,
            got: x.cols(),
        });
    }
    let p = params.architecture.dropout;
    let train = mode == Mode::Train && p > 0.0;
    let mut fea_rng = rng::seeded(derive_seed(seed, 1));
    let features = stack_forward(
        &params.feature_extractor,
        x,
        train.then_some((p, &mut fea_rng)),
    )?;
    let label = if heads.label {
        let mut label_rng = rng::seeded(derive_seed(seed, 2));
        Some(stack_forward(
            &params.label_head,
            features.output(),
            train.then_some((p, &mut label_rng)),
        )?)
    } else {
        None
    };
    let reversed = grad_reversal_forward(features.output());
    let mut domains = Vec::with_capacity(heads.domains.len());
    for &d in &heads.domains {
        let head = params.domain_heads.get(d).ok_or_else(|| {
            DarnError::invalid(format!(
                "domain head {d} requested but the model has {}",
                params.domain_heads.len()
            ))
        })?;
        domains.push((d, stack_forward(head, &reversed, None)?));
    }
    Ok(ForwardCache {
        version: params.version,
        features,
        label,
        domains,
    })
}

/// Gradients of a scalar loss with respect to the outputs of a forward pass.
#[derive(Clone, Debug, Default)]
pub struct OutputGrads {
    pub label: Option<Matrix>,
    /// Per domain head; head parameters receive this gradient as is, the
    /// features receive it through gradient reversal.
    pub domains: Vec<(usize, Matrix)>,
    /// Direct gradient on the feature-extractor output.
    pub features: Option<Matrix>,
}

/// Reverse pass. Returns fresh gradients for one cache.
pub fn backward(params: &ModelParams, cache: &ForwardCache, grads: &OutputGrads) -> Result<Gradients> {
    let mut out = Gradients::zeros_like(params);
    backward_into(params, cache, grads, &mut out)?;
    Ok(out)
}

/// Reverse pass that accumulates into `acc`.
pub fn backward_into(
    params: &ModelParams,
    cache: &ForwardCache,
    grads: &OutputGrads,
    acc: &mut Gradients,
) -> Result<()> {
    if cache.version != params.version {
        return Err(DarnError::StaleCache);
    }
    let fea_out = cache.features.output();
    let mut fea_grad = match &grads.features {
        Some(g) => {
            if g.shape() != fea_out.shape() {
                return Err(DarnError::DimensionMismatch {
                    expected: fea_out.as_slice().len(),
                    got: g.as_slice().len(),
                });
            }
            g.clone()
        }
        None => Matrix::zeros(fea_out.rows(), fea_out.cols()),
    };
    if let Some(g) = &grads.label {
        let label_cache = cache
            .label
            .as_ref()
            .ok_or_else(|| DarnError::invalid("label gradient given but label head was not run"))?;
        let g_in = stack_backward(&params.label_head, label_cache, g.clone(), &mut acc.label_head)?;
        fea_grad.add_assign(&g_in);
    }
    for (d, g) in &grads.domains {
        let (_, head_cache) = cache
            .domains
            .iter()
            .find(|(cd, _)| cd == d)
            .ok_or_else(|| DarnError::invalid(format!("domain head {d} was not run")))?;
        let g_in = stack_backward(
            &params.domain_heads[*d],
            head_cache,
            g.clone(),
            &mut acc.domain_heads[*d],
        )?;
        fea_grad.add_assign(&grad_reversal_backward(&g_in));
    }
    stack_backward(
        &params.feature_extractor,
        &cache.features,
        fea_grad,
        &mut acc.feature_extractor,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss;
    use approx::assert_abs_diff_eq;

    fn small_arch(dropout: f64) -> Architecture {
        Architecture {
            input_dim: 3,
            feature_dims: vec![5, 4],
            label_hidden: vec![3],
            num_outputs: 2,
            domain_hidden: vec![3],
            num_domains: 2,
            dropout,
        }
    }

    fn batch() -> Matrix {
        Matrix::from_rows(&[
            vec![0.3, -1.2, 0.8],
            vec![1.1, 0.4, -0.5],
            vec![-0.7, 0.9, 0.2],
            vec![0.05, -0.3, 1.4],
            vec![0.6, 0.6, -1.0],
            vec![-1.3, 0.1, 0.7],
            vec![0.9, -0.8, -0.2],
            vec![0.2, 1.5, 0.3],
        ])
        .unwrap()
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut p = ModelParams::new(small_arch(0.0), 1).unwrap();
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
        p.label_head.last_mut().unwrap().bias = vec![0.25, -1.5];
        let out = p.predict(&batch()).unwrap();
        for r in 0..out.rows() {
            assert_eq!(out.row(r), &[0.25, -1.5]);
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let arch = Architecture {
            input_dim: 3,
            feature_dims: vec![],
            label_hidden: vec![],
            num_outputs: 3,
            domain_hidden: vec![],
            num_domains: 1,
            dropout: 0.0,
        };
        let mut p = ModelParams::new(arch, 0).unwrap();
        p.label_head[0].weights = Matrix::identity(3);
        let x = batch();
        assert_eq!(p.predict(&x).unwrap(), x);
    }

    #[test]
    fn dropout_replays_with_seed_and_is_off_in_eval() {
        let p = ModelParams::new(small_arch(0.5), 3).unwrap();
        let x = batch();
        let a = forward(&p, &x, Mode::Train, 99).unwrap();
        let b = forward(&p, &x, Mode::Train, 99).unwrap();
        let c = forward(&p, &x, Mode::Train, 100).unwrap();
        assert_eq!(a.label_output(), b.label_output());
        assert_ne!(a.label_output(), c.label_output());
        let e1 = forward(&p, &x, Mode::Eval, 1).unwrap();
        let e2 = forward(&p, &x, Mode::Eval, 2).unwrap();
        assert_eq!(e1.label_output(), e2.label_output());
        let mut no_drop = p.clone();
        no_drop.architecture.dropout = 0.0;
        let e3 = forward(&no_drop, &x, Mode::Train, 5).unwrap();
        assert_eq!(e1.label_output(), e3.label_output());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = ModelParams::new(small_arch(0.0), 0).unwrap();
        let x = Matrix::zeros(2, 4);
        assert!(matches!(
            forward(&p, &x, Mode::Eval, 0),
            Err(DarnError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut p = ModelParams::new(small_arch(0.0), 0).unwrap();
        let cache = forward(&p, &batch(), Mode::Train, 0).unwrap();
        p.bump_version();
        let grads = OutputGrads::default();
        assert!(matches!(backward(&p, &cache, &grads), Err(DarnError::StaleCache)));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = ModelParams::new(small_arch(0.0), 4).unwrap();
        let x = batch();
        let cache = forward(&p, &x, Mode::Train, 0).unwrap();
        let grads = OutputGrads {
            label: Some(Matrix::zeros(8, 2)),
            domains: vec![(0, Matrix::zeros(8, 1)), (1, Matrix::zeros(8, 1))],
            features: None,
        };
        let g = backward(&p, &cache, &grads).unwrap();
        assert!(g.flatten().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn linear_squared_loss_gradient_matches_normal_equations() {
        // y = x w + b with squared loss: dL/dw = (2/m) X^T (Xw + b - t)
        let arch = Architecture {
            input_dim: 3,
            feature_dims: vec![],
            label_hidden: vec![],
            num_outputs: 1,
            domain_hidden: vec![],
            num_domains: 1,
            dropout: 0.0,
        };
        let mut p = ModelParams::new(arch, 11).unwrap();
        p.label_head[0].bias = vec![0.3];
        let x = batch();
        let targets: Vec<f64> = (0..8).map(|i| i as f64 * 0.25 - 1.0).collect();
        let cache = forward_heads(&p, &x, Mode::Train, 0, &Heads::label_only()).unwrap();
        let (_, grad) = loss::squared_loss(cache.label_output().unwrap(), &targets).unwrap();
        let g = backward(
            &p,
            &cache,
            &OutputGrads {
                label: Some(grad),
                ..Default::default()
            },
        )
        .unwrap();
        let w = p.label_head[0].weights.as_slice().to_vec();
        let residual: Vec<f64> = (0..8)
            .map(|r| crate::nn::matrix::dot(x.row(r), &w) + 0.3 - targets[r])
            .collect();
        for j in 0..3 {
            let expected: f64 = (0..8).map(|r| x[(r, j)] * residual[r]).sum::<f64>() * 2.0 / 8.0;
            assert_abs_diff_eq!(g.label_head[0].weights.as_slice()[j], expected, epsilon = 1e-12);
        }
        let expected_b: f64 = residual.iter().sum::<f64>() * 2.0 / 8.0;
        assert_abs_diff_eq!(g.label_head[0].bias[0], expected_b, epsilon = 1e-12);
    }

    #[test]
    fn grad_reversal_negates() {
        let v = batch();
        assert_eq!(grad_reversal_forward(&v), v);
        assert_eq!(grad_reversal_backward(&v), v.map(|x| -x));
    }

    #[test]
    fn tensor_views_agree() {
        let mut p = ModelParams::new(small_arch(0.0), 8).unwrap();
        let n = p.num_params();
        let g = Gradients::zeros_like(&p);
        assert_eq!(g.flatten().len(), n);
        let shapes: Vec<usize> = p.tensors().iter().map(|t| t.len()).collect();
        let shapes_mut: Vec<usize> = p.tensors_mut().iter().map(|t| t.len()).collect();
        assert_eq!(shapes, shapes_mut);
    }
}
