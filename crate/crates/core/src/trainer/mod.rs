//! Multi-source training loop.
//!
//! Every step draws one batch per source and one unlabelled target batch,
//! forms `g_i = task_loss_i + disc_i`, turns `g` into weights `alpha` with the
//! configured aggregator and descends `sum_i alpha_i g_i + tau ||alpha||_2`.

mod config;
mod log;

use crate::data::{epoch_batches, Batch, DomainDataset, MultiDomainDataset};
use crate::discrepancy::{
    disc_classification, disc_regression_eigen, domain_classifier_error, second_moment, DiscEstimate,
    DiscKind,
};
use crate::error::{DarnError, Result};
use crate::nn::loss::{logistic_loss, softmax_cross_entropy, squared_loss};
use crate::nn::rng::derive_seed;
use crate::nn::{
    backward_into, forward_heads, Architecture, ForwardCache, Gradients, Heads, Matrix, Mode, ModelParams,
    OptimizerState, OutputGrads,
};
use crate::simplex::{aggregate_objective, darn_jvp, darn_project, softmax, ProjectionResult, SimplexWeights};

pub use config::{Aggregator, GradientPath, ModelConfig, Task, TrainConfig};
pub use log::{EpochRecord, StepRecord, TrainLog};

/// Decay of the per-step exponential moving average of `alpha`.
pub const ALPHA_EMA_DECAY: f64 = 0.9;

/// Per-domain `g_i = task_loss_i + disc_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct GVector {
    pub task_losses: Vec<f64>,
    pub discs: Vec<f64>,
    values: Vec<f64>,
}

impl GVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn compute_g(task_losses: Vec<f64>, discs: Vec<f64>) -> Result<GVector> {
    if task_losses.len() != discs.len() {
        return Err(DarnError::DimensionMismatch {
            expected: task_losses.len(),
            got: discs.len(),
        });
    }
    if task_losses.is_empty() {
        return Err(DarnError::invalid("g needs at least one domain"));
    }
    let values: Vec<f64> = task_losses.iter().zip(&discs).map(|(l, d)| l + d).collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(DarnError::NonFinite(format!("g[{i}]")));
    }
    Ok(GVector {
        task_losses,
        discs,
        values,
    })
}

/// Weights together with what the gradient path needs.
#[derive(Clone, Debug)]
pub struct Aggregation {
    pub weights: SimplexWeights,
    /// `-g / tau`, present for `darn`.
    pub z: Option<Vec<f64>>,
    pub projection: Option<ProjectionResult>,
}

pub fn aggregate(g: &[f64], config: &TrainConfig) -> Result<SimplexWeights> {
    aggregate_detailed(g, config).map(|a| a.weights)
}

pub fn aggregate_detailed(g: &[f64], config: &TrainConfig) -> Result<Aggregation> {
    if g.is_empty() {
        return Err(DarnError::invalid("cannot aggregate an empty g"));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(DarnError::NonFinite("g".into()));
    }
    let plain = |weights| Aggregation {
        weights,
        z: None,
        projection: None,
    };
    match config.aggregator {
        Aggregator::Darn => {
            if !(config.tau > 0.0) {
                return Err(DarnError::config("tau", "must be > 0"));
            }
            let z: Vec<f64> = g.iter().map(|x| -x / config.tau).collect();
            let projection = darn_project(&z, config.nu_tol)?;
            Ok(Aggregation {
                weights: projection.weights.clone(),
                z: Some(z),
                projection: Some(projection),
            })
        }
        Aggregator::Uniform => Ok(plain(SimplexWeights::uniform(g.len()))),
        Aggregator::SoftmaxGamma => {
            let scaled: Vec<f64> = g.iter().map(|x| -config.gamma * x).collect();
            Ok(plain(softmax(&scaled)?))
        }
        Aggregator::Onehot => {
            let mut best = 0;
            for (i, x) in g.iter().enumerate() {
                if *x < g[best] {
                    best = i;
                }
            }
            Ok(plain(SimplexWeights::one_hot(g.len(), best)))
        }
    }
}

/// `dF/dg` for `F = sum alpha g + tau ||alpha||_2`.
///
/// With `z = -g / tau`, the chain rule gives `alpha + J (z - alpha / ||alpha||_2)`
/// (`J` is symmetric). The second term vanishes at the exact projection, which
/// is what the envelope path assumes. Non-`darn` weights are treated as constants.
pub fn objective_grad_g(agg: &Aggregation, path: GradientPath) -> Result<Vec<f64>> {
    let alpha = agg.weights.alpha().to_vec();
    let (Some(z), Some(proj)) = (&agg.z, &agg.projection) else {
        return Ok(alpha);
    };
    if path == GradientPath::Envelope {
        return Ok(alpha);
    }
    let norm = agg.weights.l2_norm();
    let v: Vec<f64> = z.iter().zip(&alpha).map(|(zi, ai)| zi - ai / norm).collect();
    match darn_jvp(z, proj, &v) {
        Ok(jv) => Ok(alpha.iter().zip(jv).map(|(a, j)| a + j).collect()),
        // only the correction term is undefined here
        Err(DarnError::Degenerate(_)) => Ok(alpha),
        Err(e) => Err(e),
    }
}

/// One batch per source plus one target batch.
#[derive(Clone, Debug)]
pub struct StepBatches {
    pub sources: Vec<Batch>,
    pub target: Batch,
    /// Used in divergence errors; falls back to `source {i}`.
    pub source_names: Vec<String>,
}

impl StepBatches {
    fn name(&self, i: usize) -> String {
        self.source_names
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("source {i}"))
    }
}

#[derive(Clone, Debug)]
pub struct StepMetrics {
    pub g: GVector,
    pub alpha: SimplexWeights,
    pub objective: f64,
    /// `dF/dg` as used for the update.
    pub grad_g: Vec<f64>,
}

/// Objective, metrics and (optionally) parameter gradients at `params`.
///
/// Domain heads see gradients of the objective through gradient reversal, so
/// `-grads.domain_heads` is the objective gradient for those parameters.
pub fn step_gradients(
    params: &ModelParams,
    batches: &StepBatches,
    config: &TrainConfig,
    step_seed: u64,
) -> Result<(StepMetrics, Gradients)> {
    let (metrics, grads) = step_impl(params, batches, config, step_seed, true)?;
    Ok((metrics, grads.expect("gradients requested")))
}

/// Forward-only version of [`step_gradients`].
pub fn step_metrics(
    params: &ModelParams,
    batches: &StepBatches,
    config: &TrainConfig,
    step_seed: u64,
) -> Result<StepMetrics> {
    step_impl(params, batches, config, step_seed, false).map(|(m, _)| m)
}

/// One optimizer step on the aggregated objective.
pub fn train_step(
    params: &mut ModelParams,
    optimizer: &mut OptimizerState,
    batches: &StepBatches,
    config: &TrainConfig,
    step_seed: u64,
) -> Result<StepMetrics> {
    let (metrics, grads) = step_gradients(params, batches, config, step_seed)?;
    optimizer.step(params, &grads).map_err(|e| match e {
        DarnError::NonFinite(what) => DarnError::Divergence {
            domain: "all".into(),
            detail: format!("non-finite {what}"),
        },
        other => other,
    })?;
    if !params.is_finite() {
        return Err(DarnError::Divergence {
            domain: "all".into(),
            detail: "parameters became non-finite".into(),
        });
    }
    Ok(metrics)
}

fn class_indices(labels: &[f64]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|&y| {
            if y == -1.0 {
                Ok(0)
            } else if y >= 0.0 && y.fract() == 0.0 {
                Ok(y as usize)
            } else {
                Err(DarnError::invalid(format!("label {y} is not a class index")))
            }
        })
        .collect()
}

fn batch_labels(batch: &Batch) -> Result<&[f64]> {
    batch
        .labels
        .as_deref()
        .ok_or_else(|| DarnError::invalid("source batch is unlabelled"))
}

fn diverged(batches: &StepBatches, i: usize, what: &str, value: f64) -> DarnError {
    DarnError::Divergence {
        domain: batches.name(i),
        detail: format!("{what} is {value}"),
    }
}

fn step_impl(
    params: &ModelParams,
    batches: &StepBatches,
    config: &TrainConfig,
    step_seed: u64,
    want_grads: bool,
) -> Result<(StepMetrics, Option<Gradients>)> {
    let k = batches.sources.len();
    if k == 0 {
        return Err(DarnError::invalid("need at least one source batch"));
    }
    if k != params.domain_heads.len() {
        return Err(DarnError::DimensionMismatch {
            expected: params.domain_heads.len(),
            got: k,
        });
    }
    if batches.target.features.rows() == 0 || batches.sources.iter().any(|b| b.features.rows() == 0) {
        return Err(DarnError::EmptyBatch);
    }
    match config.task {
        Task::Classification => classification_step(params, batches, config, step_seed, want_grads),
        Task::Regression => regression_step(params, batches, config, step_seed, want_grads),
    }
}

fn finish_metrics(
    batches: &StepBatches,
    config: &TrainConfig,
    task_losses: Vec<f64>,
    discs: Vec<f64>,
) -> Result<(StepMetrics, Aggregation)> {
    for (i, (l, d)) in task_losses.iter().zip(&discs).enumerate() {
        if !l.is_finite() {
            return Err(diverged(batches, i, "task loss", *l));
        }
        if !d.is_finite() {
            return Err(diverged(batches, i, "discrepancy", *d));
        }
    }
    let g = compute_g(task_losses, discs)?;
    let agg = aggregate_detailed(g.values(), config)?;
    let objective = aggregate_objective(g.values(), agg.weights.alpha(), config.tau)?;
    let grad_g = objective_grad_g(&agg, config.gradient_path)?;
    Ok((
        StepMetrics {
            g,
            alpha: agg.weights.clone(),
            objective,
            grad_g,
        },
        agg,
    ))
}

fn source_seed(step_seed: u64, i: usize) -> u64 {
    derive_seed(step_seed, i as u64)
}

fn target_seed(step_seed: u64, k: usize) -> u64 {
    derive_seed(step_seed, k as u64)
}

fn classification_step(
    params: &ModelParams,
    batches: &StepBatches,
    config: &TrainConfig,
    step_seed: u64,
    want_grads: bool,
) -> Result<(StepMetrics, Option<Gradients>)> {
    let k = batches.sources.len();
    let mut source_caches = Vec::with_capacity(k);
    let mut task_losses = Vec::with_capacity(k);
    let mut label_grads = Vec::with_capacity(k);
    for (i, b) in batches.sources.iter().enumerate() {
        let labels = class_indices(batch_labels(b)?)?;
        let heads = Heads {
            label: true,
            domains: vec![i],
        };
        let cache = forward_heads(params, &b.features, Mode::Train, source_seed(step_seed, i), &heads)?;
        let (loss, grad) = softmax_cross_entropy(cache.label_output().expect("label head"), &labels)?;
        task_losses.push(loss);
        label_grads.push(grad);
        source_caches.push(cache);
    }
    let target_heads = Heads {
        label: false,
        domains: (0..k).collect(),
    };
    let target_cache = forward_heads(
        params,
        &batches.target.features,
        Mode::Train,
        target_seed(step_seed, k),
        &target_heads,
    )?;

    let m_t = batches.target.features.rows();
    let mut discs = Vec::with_capacity(k);
    let mut eps_grads = Vec::with_capacity(k);
    for (i, cache) in source_caches.iter().enumerate() {
        let src = cache.domain_logits(i).expect("domain head").as_slice();
        let tgt = target_cache.domain_logits(i).expect("domain head").as_slice();
        let logits: Vec<f64> = src.iter().chain(tgt).copied().collect();
        let targets: Vec<f64> = (0..logits.len())
            .map(|r| if r < src.len() { 0.0 } else { 1.0 })
            .collect();
        let (eps, grad) = logistic_loss(&logits, &targets)?;
        discs.push(disc_classification(eps));
        eps_grads.push(grad);
    }

    let (metrics, _) = finish_metrics(batches, config, task_losses, discs)?;
    if !want_grads {
        return Ok((metrics, None));
    }

    // The zero clamp on disc is passed straight through: heads keep learning
    // even if their loss exceeds the constant-predictor level.
    let w = &metrics.grad_g;
    let mut grads = Gradients::zeros_like(params);
    let mut target_domain_grads = Vec::with_capacity(k);
    for (i, cache) in source_caches.iter().enumerate() {
        let m_s = batches.sources[i].features.rows();
        // heads descend eps; the reversal hands the features -(head grad)
        let head_scale = 2.0 * w[i];
        let src_grad: Vec<f64> = eps_grads[i][..m_s].iter().map(|x| head_scale * x).collect();
        let tgt_grad: Vec<f64> = eps_grads[i][m_s..].iter().map(|x| head_scale * x).collect();
        let mut label = label_grads[i].clone();
        label.scale(w[i]);
        let out = OutputGrads {
            label: Some(label),
            domains: vec![(i, Matrix::from_vec(m_s, 1, src_grad)?)],
            features: None,
        };
        backward_into(params, cache, &out, &mut grads)?;
        target_domain_grads.push((i, Matrix::from_vec(m_t, 1, tgt_grad)?));
    }
    let out = OutputGrads {
        label: None,
        domains: target_domain_grads,
        features: None,
    };
    backward_into(params, &target_cache, &out, &mut grads)?;
    Ok((metrics, Some(grads)))
}

/// `s * scale * (F v) v^T`, the gradient of `scale * v^T (F^T F) v / 2` times `s`.
fn rank_one_feature_grad(features: &Matrix, v: &[f64], coefficient: f64) -> Matrix {
    let fv = features.mul_vec(v);
    let mut out = Matrix::zeros(features.rows(), features.cols());
    for (r, fvr) in fv.iter().enumerate() {
        let c = coefficient * fvr;
        for (o, vj) in out.row_mut(r).iter_mut().zip(v) {
            *o = c * vj;
        }
    }
    out
}

fn regression_step(
    params: &ModelParams,
    batches: &StepBatches,
    config: &TrainConfig,
    step_seed: u64,
    want_grads: bool,
) -> Result<(StepMetrics, Option<Gradients>)> {
    let k = batches.sources.len();
    let target_cache = forward_heads(
        params,
        &batches.target.features,
        Mode::Train,
        target_seed(step_seed, k),
        &Heads::none(),
    )?;
    let f_t = target_cache.features();
    let m_target = second_moment(f_t)?;

    let mut source_caches = Vec::with_capacity(k);
    let mut task_losses = Vec::with_capacity(k);
    let mut pred_grads = Vec::with_capacity(k);
    let mut eigen = Vec::with_capacity(k);
    for (i, b) in batches.sources.iter().enumerate() {
        let labels = batch_labels(b)?;
        let cache: ForwardCache =
            forward_heads(params, &b.features, Mode::Train, source_seed(step_seed, i), &Heads::label_only())?;
        let (loss, grad) = squared_loss(cache.label_output().expect("label head"), labels)?;
        let m_source = second_moment(cache.features())?;
        let pair = disc_regression_eigen(
            &m_target,
            &m_source,
            config.power_iters,
            config.power_tol,
            derive_seed(step_seed, 1_000 + i as u64),
        )?;
        task_losses.push(loss);
        pred_grads.push(grad);
        eigen.push(pair);
        source_caches.push(cache);
    }
    let discs = eigen.iter().map(|e| e.magnitude).collect();
    let (metrics, _) = finish_metrics(batches, config, task_losses, discs)?;
    if !want_grads {
        return Ok((metrics, None));
    }

    let w = &metrics.grad_g;
    let m_t = f_t.rows() as f64;
    let mut grads = Gradients::zeros_like(params);
    let mut target_fea_grad = Matrix::zeros(f_t.rows(), f_t.cols());
    for (i, cache) in source_caches.iter().enumerate() {
        let pair = &eigen[i];
        // d|lambda| / dM = sign * v v^T on M_T - M_S
        let c = w[i] * pair.sign * 2.0;
        target_fea_grad.add_assign(&rank_one_feature_grad(f_t, &pair.vector, c / m_t));
        let f_s = cache.features();
        let fea = rank_one_feature_grad(f_s, &pair.vector, -c / f_s.rows() as f64);
        let mut label = pred_grads[i].clone();
        label.scale(w[i]);
        let out = OutputGrads {
            label: Some(label),
            domains: Vec::new(),
            features: Some(fea),
        };
        backward_into(params, cache, &out, &mut grads)?;
    }
    let out = OutputGrads {
        label: None,
        domains: Vec::new(),
        features: Some(target_fea_grad),
    };
    backward_into(params, &target_cache, &out, &mut grads)?;
    Ok((metrics, Some(grads)))
}

/// Number of label-head outputs the dataset needs.
pub fn num_outputs(dataset: &MultiDomainDataset, task: Task) -> Result<usize> {
    match task {
        Task::Regression => Ok(1),
        Task::Classification => {
            let mut max = 1;
            for d in dataset.sources.iter().chain([&dataset.target_eval]) {
                if let Some(c) = d.class_labels()?.into_iter().max() {
                    max = max.max(c);
                }
            }
            Ok(max + 1)
        }
    }
}

pub fn architecture(dataset: &MultiDomainDataset, config: &TrainConfig) -> Result<Architecture> {
    Ok(Architecture {
        input_dim: dataset.dim(),
        feature_dims: config.model.feature_dims.clone(),
        label_hidden: config.model.label_hidden.clone(),
        num_outputs: num_outputs(dataset, config.task)?,
        domain_hidden: config.model.domain_hidden.clone(),
        num_domains: dataset.num_sources(),
        dropout: config.dropout,
    })
}

/// Seed of the initial parameters for a training run.
pub fn init_seed(seed: u64) -> u64 {
    derive_seed(seed, 0)
}

/// Endless stream of batches: a fresh seeded shuffle on every pass.
struct BatchCycler {
    len: usize,
    batch_size: usize,
    seed: u64,
    pass: u64,
    current: std::vec::IntoIter<Vec<usize>>,
}

impl BatchCycler {
    fn new(len: usize, batch_size: usize, seed: u64) -> Result<Self> {
        let mut c = BatchCycler {
            len,
            batch_size,
            seed,
            pass: 0,
            current: Vec::new().into_iter(),
        };
        c.refill()?;
        Ok(c)
    }

    fn refill(&mut self) -> Result<()> {
        let batches = epoch_batches(self.len, self.batch_size, derive_seed(self.seed, self.pass))?;
        self.pass += 1;
        self.current = batches.into_iter();
        Ok(())
    }

    fn next_indices(&mut self) -> Result<Vec<usize>> {
        match self.current.next() {
            Some(b) => Ok(b),
            None => {
                self.refill()?;
                Ok(self.current.next().expect("non-empty pass"))
            }
        }
    }
}

fn check_labels(dataset: &MultiDomainDataset, task: Task) -> Result<()> {
    for d in dataset.sources.iter().chain([&dataset.target_eval]) {
        if d.is_empty() {
            return Err(DarnError::invalid(format!("dataset `{}` is empty", d.name)));
        }
        match task {
            Task::Classification => {
                d.class_labels()?;
            }
            Task::Regression => {
                let labels = d.labels.as_ref().expect("validated as labelled");
                if labels.iter().any(|y| !y.is_finite()) {
                    return Err(DarnError::NonFinite(format!("labels of `{}`", d.name)));
                }
            }
        }
    }
    if dataset.target_train.is_empty() {
        return Err(DarnError::invalid("target training set is empty"));
    }
    Ok(())
}

/// Full training run. Deterministic in `(dataset, config)`.
pub fn train(dataset: &MultiDomainDataset, config: &TrainConfig) -> Result<(ModelParams, TrainLog)> {
    config.validate()?;
    check_labels(dataset, config.task)?;
    let arch = architecture(dataset, config)?;
    let mut params = ModelParams::new(arch, init_seed(config.seed))?;
    let mut optimizer = OptimizerState::new(config.optimizer.clone(), &params);

    let k = dataset.num_sources();
    let names: Vec<String> = dataset.sources.iter().map(|s| s.name.clone()).collect();
    let longest = dataset.sources.iter().map(DomainDataset::len).max().unwrap_or(0);
    let steps_per_epoch = longest.div_ceil(config.batch_size);
    let mut cyclers = dataset
        .sources
        .iter()
        .chain([&dataset.target_train])
        .enumerate()
        .map(|(i, d)| BatchCycler::new(d.len(), config.batch_size, derive_seed(config.seed, 10 + i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let step_stream = derive_seed(config.seed, 3);

    let mut log = TrainLog::new(names.clone(), config.task);
    let mut ema: Option<Vec<f64>> = None;
    let mut global_step = 0u64;
    for epoch in 0..config.epochs {
        let mut task_sum = vec![0.0; k];
        let mut disc_sum = vec![0.0; k];
        let mut objective_sum = 0.0;
        let mut last_alpha = Vec::new();
        for step in 0..steps_per_epoch {
            let mut sources = Vec::with_capacity(k);
            for (i, d) in dataset.sources.iter().enumerate() {
                sources.push(d.batch(&cyclers[i].next_indices()?));
            }
            let target = dataset.target_train.batch(&cyclers[k].next_indices()?);
            let batches = StepBatches {
                sources,
                target,
                source_names: names.clone(),
            };
            let metrics = train_step(
                &mut params,
                &mut optimizer,
                &batches,
                config,
                derive_seed(step_stream, global_step),
            )?;
            global_step += 1;

            let alpha = metrics.alpha.alpha();
            match ema.as_mut() {
                None => ema = Some(alpha.to_vec()),
                Some(e) => {
                    for (ei, ai) in e.iter_mut().zip(alpha) {
                        *ei = ALPHA_EMA_DECAY * *ei + (1.0 - ALPHA_EMA_DECAY) * ai;
                    }
                }
            }
            for i in 0..k {
                task_sum[i] += metrics.g.task_losses[i];
                disc_sum[i] += metrics.g.discs[i];
            }
            objective_sum += metrics.objective;
            last_alpha = alpha.to_vec();
            log.steps.push(StepRecord {
                epoch,
                step,
                task_loss: metrics.g.task_losses.clone(),
                disc: metrics.g.discs.clone(),
                g: metrics.g.values().to_vec(),
                alpha: last_alpha.clone(),
                objective: metrics.objective,
            });
        }
        let eval_metric = evaluate(&params, &dataset.target_eval, config.task)?;
        if !eval_metric.is_finite() {
            return Err(DarnError::Divergence {
                domain: dataset.target_eval.name.clone(),
                detail: format!("evaluation metric is {eval_metric}"),
            });
        }
        let n = steps_per_epoch as f64;
        log.epochs.push(EpochRecord {
            epoch,
            alpha: last_alpha,
            alpha_ema: ema.clone().unwrap_or_default(),
            task_loss: task_sum.iter().map(|x| x / n).collect(),
            disc: disc_sum.iter().map(|x| x / n).collect(),
            objective: objective_sum / n,
            eval_metric,
        });
    }
    Ok((params, log))
}

/// Accuracy for classification, mean squared error for regression.
pub fn evaluate(params: &ModelParams, dataset: &DomainDataset, task: Task) -> Result<f64> {
    if dataset.is_empty() {
        return Err(DarnError::EmptyBatch);
    }
    let labels = dataset
        .labels
        .as_ref()
        .ok_or_else(|| DarnError::invalid(format!("dataset `{}` is unlabelled", dataset.name)))?;
    let x = dataset.features.to_dense();
    let out = params.predict(&x)?;
    match task {
        Task::Classification => {
            let classes = dataset.class_labels()?;
            let correct = classes
                .iter()
                .enumerate()
                .filter(|(r, c)| {
                    let row = out.row(*r);
                    let mut best = 0;
                    for (j, v) in row.iter().enumerate() {
                        if *v > row[best] {
                            best = j;
                        }
                    }
                    best == **c
                })
                .count();
            Ok(correct as f64 / classes.len() as f64)
        }
        Task::Regression => {
            let (mse, _) = squared_loss(&out, labels)?;
            Ok(mse)
        }
    }
}

/// Discrepancy between the target training sample and each source, computed
/// on the full samples with the model in evaluation mode.
pub fn estimate_discs(
    params: &ModelParams,
    dataset: &MultiDomainDataset,
    config: &TrainConfig,
) -> Result<Vec<DiscEstimate>> {
    let k = dataset.num_sources();
    let all_heads = Heads {
        label: false,
        domains: (0..k).collect(),
    };
    let x_t = dataset.target_train.features.to_dense();
    let target = forward_heads(params, &x_t, Mode::Eval, 0, &all_heads)?;
    let mut out = Vec::with_capacity(k);
    for (i, src) in dataset.sources.iter().enumerate() {
        let heads = Heads {
            label: false,
            domains: vec![i],
        };
        let source = forward_heads(params, &src.features.to_dense(), Mode::Eval, 0, &heads)?;
        let (value, kind) = match config.task {
            Task::Classification => {
                let src_logits = source.domain_logits(i).expect("domain head").as_slice();
                let tgt_logits = target.domain_logits(i).expect("domain head").as_slice();
                let logits: Vec<f64> = src_logits.iter().chain(tgt_logits).copied().collect();
                let is_target: Vec<bool> = (0..logits.len()).map(|r| r >= src_logits.len()).collect();
                let eps = domain_classifier_error(&logits, &is_target)?;
                (disc_classification(eps), DiscKind::Classification)
            }
            Task::Regression => {
                let pair = disc_regression_eigen(
                    &second_moment(target.features())?,
                    &second_moment(source.features())?,
                    config.power_iters,
                    config.power_tol,
                    derive_seed(config.seed, 2_000 + i as u64),
                )?;
                (pair.magnitude, DiscKind::Regression)
            }
        };
        out.push(DiscEstimate {
            value,
            kind,
            domain_index: i,
        });
    }
    Ok(out)
}
