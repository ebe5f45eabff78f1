//! Config-driven experiment runner and the `verify` property suite.

pub mod verify;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::data::{benchmark_with_adversary, load_sparse_text, MultiDomainDataset};
use crate::error::{DarnError, Result};
use crate::nn::checkpoint;
use crate::nn::rng::derive_seed;
use crate::simplex::effective_sample_size;
use crate::trainer::{estimate_discs, train, TrainConfig, TrainLog};

pub use verify::{verify, Profile, VerifyReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AdversarialCopy {
    /// Index of the source whose labels are flipped.
    pub of: usize,
    #[serde(default = "one")]
    pub fraction: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct RotatedGaussiansSpec {
    pub source_angles: Vec<f64>,
    pub target_angle: f64,
    /// Rows per domain; the target is split in half for adaptation and evaluation.
    pub m: usize,
    pub noise: f64,
    pub adversarial_copies: Vec<AdversarialCopy>,
}

impl Default for RotatedGaussiansSpec {
    fn default() -> Self {
        RotatedGaussiansSpec {
            source_angles: vec![0.0, 15.0, 30.0],
            target_angle: 10.0,
            m: 500,
            noise: 0.5,
            adversarial_copies: vec![AdversarialCopy { of: 0, fraction: 1.0 }],
        }
    }
}

/// Relative paths are resolved against the config file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SparseTextSpec {
    pub sources: Vec<PathBuf>,
    pub target_train: PathBuf,
    pub target_eval: PathBuf,
    #[serde(default)]
    pub dim: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    RotatedGaussians(RotatedGaussiansSpec),
    SparseText(SparseTextSpec),
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::RotatedGaussians(RotatedGaussiansSpec::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("darn-out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            output_dir: default_output_dir(),
            dataset: DatasetSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| DarnError::config(json_field(&e), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| DarnError::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The training config with the experiment seed applied.
    pub fn resolved_train(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        match &self.dataset {
            DatasetSpec::RotatedGaussians(g) => {
                if g.source_angles.is_empty() {
                    return Err(DarnError::config("dataset.source_angles", "need at least one source"));
                }
                if g.source_angles.iter().chain([&g.target_angle]).any(|a| !a.is_finite()) {
                    return Err(DarnError::config("dataset.source_angles", "angles must be finite"));
                }
                if g.m < 2 || g.m % 2 != 0 {
                    return Err(DarnError::config("dataset.m", format!("must be even and >= 2, got {}", g.m)));
                }
                if !(g.noise > 0.0 && g.noise.is_finite()) {
                    return Err(DarnError::config("dataset.noise", "must be positive"));
                }
                for c in &g.adversarial_copies {
                    if c.of >= g.source_angles.len() {
                        return Err(DarnError::config(
                            "dataset.adversarial_copies.of",
                            format!("no source {}", c.of),
                        ));
                    }
                    if !(0.0..=1.0).contains(&c.fraction) {
                        return Err(DarnError::config(
                            "dataset.adversarial_copies.fraction",
                            "must be in [0, 1]",
                        ));
                    }
                }
            }
            DatasetSpec::SparseText(s) => {
                if s.sources.is_empty() {
                    return Err(DarnError::config("dataset.sources", "need at least one source file"));
                }
                if s.dim == Some(0) {
                    return Err(DarnError::config("dataset.dim", "must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Builds the dataset; `base_dir` anchors relative file paths.
    pub fn build_dataset(&self, base_dir: &Path) -> Result<MultiDomainDataset> {
        match &self.dataset {
            DatasetSpec::RotatedGaussians(g) => {
                let copies: Vec<(usize, f64)> = g.adversarial_copies.iter().map(|c| (c.of, c.fraction)).collect();
                benchmark_with_adversary(
                    &g.source_angles,
                    g.target_angle,
                    g.m,
                    g.noise,
                    &copies,
                    derive_seed(self.seed, DATASET_STREAM),
                )
            }
            DatasetSpec::SparseText(s) => {
                let load = |p: &PathBuf, field: &str| {
                    let path = base_dir.join(p);
                    load_sparse_text(&path, s.dim).map_err(|e| match e {
                        DarnError::Io(io) => DarnError::config(field, format!("{}: {io}", path.display())),
                        DarnError::Parse { line, msg } => {
                            DarnError::config(field, format!("{} line {line}: {msg}", path.display()))
                        }
                        other => other,
                    })
                };
                let sources = s
                    .sources
                    .iter()
                    .map(|p| load(p, "dataset.sources"))
                    .collect::<Result<Vec<_>>>()?;
                let target_train = load(&s.target_train, "dataset.target_train")?;
                let target_eval = load(&s.target_eval, "dataset.target_eval")?;
                MultiDomainDataset::new(sources, target_train, target_eval)
            }
        }
    }
}

const DATASET_STREAM: u64 = 0xDA7A;

/// JSON Schema of [`ExperimentConfig`], as published in `configs/experiment.schema.json`.
pub fn config_schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(ExperimentConfig)).expect("schema serialises")
}

/// Best-effort name of the JSON field a serde error refers to.
fn json_field(err: &serde_json::Error) -> String {
    let msg = err.to_string();
    for marker in ["unknown field `", "missing field `", "unknown variant `"] {
        if let Some(start) = msg.find(marker) {
            let rest = &msg[start + marker.len()..];
            if let Some(end) = rest.find('`') {
                return rest[..end].to_string();
            }
        }
    }
    "config".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub domains: Vec<String>,
    pub metric: String,
    pub final_eval_metric: f64,
    pub final_alpha: Vec<f64>,
    pub final_alpha_ema: Vec<f64>,
    pub final_task_loss: Vec<f64>,
    pub final_disc: Vec<f64>,
    /// Discrepancy of each source to the target on the full samples after training.
    pub full_sample_disc: Vec<f64>,
    /// `m / ||alpha_ema||^2` with `m` the largest source size.
    pub effective_sample_size: f64,
    pub num_params: usize,
    pub steps: usize,
}

/// Files written by [`run_experiment`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub log: TrainLog,
    pub summary: Summary,
}

/// Trains as configured and writes `trainlog.csv`, `eval.csv`,
/// `summary.json` and `model.ckpt` into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, base_dir: &Path, out_dir: &Path) -> Result<RunOutput> {
    config.validate()?;
    let data = config.build_dataset(base_dir).map_err(|e| match e {
        DarnError::Config { .. } => e,
        other => DarnError::config("dataset", other.to_string()),
    })?;
    let train_cfg = config.resolved_train();
    let (params, log) = train(&data, &train_cfg)?;
    let last = log.final_epoch().expect("epochs >= 1");
    let discs = estimate_discs(&params, &data, &train_cfg)?;
    let largest = data.sources.iter().map(|s| s.len()).max().unwrap_or(0);
    let summary = Summary {
        config: config.clone(),
        domains: log.domain_names.clone(),
        metric: log.metric_name().to_string(),
        final_eval_metric: last.eval_metric,
        final_alpha: last.alpha.clone(),
        final_alpha_ema: last.alpha_ema.clone(),
        final_task_loss: last.task_loss.clone(),
        final_disc: last.disc.clone(),
        full_sample_disc: discs.iter().map(|d| d.value).collect(),
        effective_sample_size: effective_sample_size(&last.alpha_ema, largest),
        num_params: params.num_params(),
        steps: log.steps.len(),
    };

    fs::create_dir_all(out_dir)?;
    log.write_trainlog_csv(BufWriter::new(fs::File::create(out_dir.join("trainlog.csv"))?))?;
    log.write_eval_csv(BufWriter::new(fs::File::create(out_dir.join("eval.csv"))?))?;
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    fs::write(out_dir.join("summary.json"), json)?;
    checkpoint::save(
        &out_dir.join("model.ckpt"),
        &params,
        crate::trainer::init_seed(config.seed),
        train_cfg.optimizer.kind,
    )?;
    Ok(RunOutput {
        dir: out_dir.to_path_buf(),
        log,
        summary,
    })
}

/// Exit code for an error raised by [`run_experiment`].
pub fn exit_code(err: &DarnError) -> i32 {
    match err {
        DarnError::Config { .. } => EXIT_CONFIG,
        DarnError::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_FAILURE,
    }
}

/// `darn run`: loads the config, runs it and reports to stdout/stderr.
pub fn run(config_path: &Path, out_override: Option<&Path>) -> i32 {
    let config = match ExperimentConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let base_dir = config_path.parent().unwrap_or(Path::new("."));
    let out_dir = out_override.map(Path::to_path_buf).unwrap_or_else(|| config.output_dir.clone());
    match run_experiment(&config, base_dir, &out_dir) {
        Ok(out) => {
            println!(
                "{} = {:.4}; alpha_ema = {:?}; wrote {}",
                out.summary.metric,
                out.summary.final_eval_metric,
                out.summary
                    .final_alpha_ema
                    .iter()
                    .map(|a| (a * 1e4).round() / 1e4)
                    .collect::<Vec<_>>(),
                out.dir.display()
            );
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
