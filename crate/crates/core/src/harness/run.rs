use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::stream::TaskStream;
use crate::batch::{ClassId, FeatureBatch};
use crate::classify::ensemble::DEFAULT_ENSEMBLE_SIZE;
use crate::classify::{
    IncrementalClassifier, KldaEnsembleLearner, KldaLearner, LdaLearner, NcmLearner, Ridge,
    DEFAULT_RELATIVE_RIDGE,
};
use crate::error::{KldaError, Result};
use crate::rff::{RffConfig, DEFAULT_SIGMA, DEFAULT_TRANSFORM_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "NCM")]
    Ncm,
    #[serde(rename = "LDA")]
    Lda,
    #[serde(rename = "KLDA")]
    Klda,
    #[serde(rename = "KLDA-E")]
    KldaEnsemble,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ncm => "NCM",
            Method::Lda => "LDA",
            Method::Klda => "KLDA",
            Method::KldaEnsemble => "KLDA-E",
        }
    }

    pub fn uses_rff(self) -> bool {
        matches!(self, Method::Klda | Method::KldaEnsemble)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = KldaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ncm" => Ok(Method::Ncm),
            "lda" => Ok(Method::Lda),
            "klda" => Ok(Method::Klda),
            "klda-e" | "klda_e" => Ok(Method::KldaEnsemble),
            other => Err(KldaError::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Method plus every hyperparameter a run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodConfig {
    pub method: Method,
    pub transform_dim: usize,
    pub sigma: f64,
    /// Ridge relative to `trace(Sigma) / D`.
    pub ridge: f64,
    pub ensemble_size: usize,
    /// Projector seed; ensemble member `i` uses `seed + i`.
    pub seed: u64,
    /// L2-normalize raw features before the random feature map.
    pub normalize_input: bool,
}

impl MethodConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            transform_dim: DEFAULT_TRANSFORM_DIM,
            sigma: DEFAULT_SIGMA,
            ridge: DEFAULT_RELATIVE_RIDGE,
            ensemble_size: if method == Method::KldaEnsemble {
                DEFAULT_ENSEMBLE_SIZE
            } else {
                1
            },
            seed: 0,
            normalize_input: false,
        }
    }

    pub fn with_rff(mut self, transform_dim: usize, sigma: f64) -> Self {
        self.transform_dim = transform_dim;
        self.sigma = sigma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_ensemble_size(mut self, size: usize) -> Self {
        self.ensemble_size = size;
        self
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn rff_config(&self, input_dim: usize) -> RffConfig {
        RffConfig::new(input_dim, self.transform_dim, self.sigma, self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.ridge.is_finite() || self.ridge < 0.0 {
            return Err(KldaError::Config(format!(
                "ridge must be non-negative, got {}",
                self.ridge
            )));
        }
        if self.ensemble_size == 0 {
            return Err(KldaError::Config("ensemble size must be at least 1".into()));
        }
        if self.ensemble_size > 1 && self.method != Method::KldaEnsemble {
            return Err(KldaError::Config(format!(
                "ensemble size {} only applies to KLDA-E, not {}",
                self.ensemble_size, self.method
            )));
        }
        if self.method.uses_rff() {
            self.rff_config(1).validate()?;
        }
        Ok(())
    }

    pub fn build_learner(&self, input_dim: usize) -> Result<Box<dyn IncrementalClassifier>> {
        self.validate()?;
        let ridge = Ridge::Relative(self.ridge);
        Ok(match self.method {
            Method::Ncm => Box::new(NcmLearner::new()),
            Method::Lda => Box::new(LdaLearner::new(input_dim, ridge)?),
            Method::Klda => Box::new(KldaLearner::new(
                self.rff_config(input_dim),
                ridge,
                self.normalize_input,
            )?),
            Method::KldaEnsemble => Box::new(KldaEnsembleLearner::new(
                self.rff_config(input_dim),
                self.ensemble_size,
                ridge,
                self.normalize_input,
            )?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub shuffle: u64,
    pub projector: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    #[serde(rename = "D")]
    pub transform_dim: Option<usize>,
    pub sigma: Option<f64>,
    pub lambda: Option<f64>,
    #[serde(rename = "E")]
    pub ensemble_size: Option<usize>,
    pub tasks: usize,
    pub normalize_input: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WallTime {
    pub train: f64,
    pub eval: f64,
    pub total: f64,
}

/// Outcome of one class-incremental run.
///
/// `trace[t]` is the accuracy on test rows of classes seen after task `t`;
/// `final_accuracy` equals the last entry of a complete trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub dataset: String,
    pub seeds: Seeds,
    pub hyperparameters: Hyperparameters,
    pub trace: Vec<f64>,
    pub final_accuracy: Option<f64>,
    pub wall_time_ms: WallTime,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Final predictions over the full test set, in test order.
    #[serde(skip)]
    pub predictions: Vec<ClassId>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn accuracy(predicted: &[ClassId], truth: &[ClassId]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

fn hyperparameters(config: &MethodConfig, tasks: usize) -> Hyperparameters {
    let rff = config.method.uses_rff();
    Hyperparameters {
        transform_dim: rff.then_some(config.transform_dim),
        sigma: rff.then_some(config.sigma),
        lambda: (config.method != Method::Ncm).then_some(config.ridge),
        ensemble_size: (config.method == Method::KldaEnsemble).then_some(config.ensemble_size),
        tasks,
        normalize_input: config.normalize_input,
    }
}

/// Replays the stream task by task and evaluates after each one.
///
/// Configuration problems are returned as errors. A failure while learning or
/// predicting mid-stream yields a report with `complete == false`, the trace
/// so far and the error message.
pub fn run_cil(stream: &TaskStream, config: &MethodConfig) -> Result<RunReport> {
    stream.validate()?;
    let mut learner = config.build_learner(stream.input_dim())?;
    let mut report = RunReport {
        method: config.method,
        dataset: stream.dataset.clone(),
        seeds: Seeds {
            shuffle: stream.shuffle_seed,
            projector: config.seed,
        },
        hyperparameters: hyperparameters(config, stream.num_tasks()),
        trace: Vec::with_capacity(stream.num_tasks()),
        final_accuracy: None,
        wall_time_ms: WallTime::default(),
        complete: false,
        error: None,
        predictions: Vec::new(),
    };
    let started = Instant::now();
    let mut seen = std::collections::BTreeSet::new();
    let mut last_predictions = Vec::new();
    let outcome = (|| -> Result<()> {
        for task in &stream.tasks {
            let t0 = Instant::now();
            for (class_id, batch) in &task.classes {
                learner.learn_class(*class_id, batch)?;
                seen.insert(*class_id);
            }
            report.wall_time_ms.train += ms(t0);

            let t1 = Instant::now();
            let subset: FeatureBatch = stream.test_set.filter_labels(|l| seen.contains(&l));
            let predicted = if subset.is_empty() {
                Vec::new()
            } else {
                learner.predict(&subset)?
            };
            report.trace.push(accuracy(&predicted, subset.labels()));
            last_predictions = predicted;
            report.wall_time_ms.eval += ms(t1);
        }
        Ok(())
    })();
    report.wall_time_ms.total = ms(started);
    match outcome {
        Ok(()) => {
            report.final_accuracy = report.trace.last().copied();
            report.complete = true;
            report.predictions = last_predictions;
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    Ok(report)
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Mean and population standard deviation of final accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub dataset: String,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} final accuracy {:.2} ± {:.2} ({} runs)",
            self.method,
            self.dataset,
            100.0 * self.mean,
            100.0 * self.std,
            self.runs
        )
    }
}

pub fn average_runs(reports: &[RunReport]) -> Result<RunSummary> {
    let Some(first) = reports.first() else {
        return Err(KldaError::Aggregation("no reports".into()));
    };
    let mut accs = Vec::with_capacity(reports.len());
    for r in reports {
        if r.method != first.method || r.dataset != first.dataset {
            return Err(KldaError::Aggregation(format!(
                "mixed reports: {} on {} vs {} on {}",
                first.method, first.dataset, r.method, r.dataset
            )));
        }
        match r.final_accuracy {
            Some(a) if r.complete => accs.push(a),
            _ => {
                return Err(KldaError::Aggregation(format!(
                    "incomplete run: {}",
                    r.error.as_deref().unwrap_or("no final accuracy")
                )))
            }
        }
    }
    let n = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / n;
    let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    Ok(RunSummary {
        method: first.method,
        dataset: first.dataset.clone(),
        runs: accs.len(),
        mean,
        std: var.sqrt(),
    })
}
