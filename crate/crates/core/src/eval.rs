//! Regression metrics, 3-class attention zoning, and the fixed-split /
//! 7-fold lesson-level cross-validation protocols.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fuse::FusedSample;
use crate::model::{self, Architecture, Fusion, Model, ModelError, ModelSpec, TrainConfig, TrainLog};
use crate::smoothing::{SmoothError, Smoother};

/// Values above this are high attention.
pub const ZONE_HI: f64 = 0.5;
/// Values below this are low attention.
pub const ZONE_LO: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    Low,
    Medium,
    High,
}

impl Zone {
    pub fn index(self) -> usize {
        match self {
            Zone::Low => 0,
            Zone::Medium => 1,
            Zone::High => 2,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: pred {pred} vs truth {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("empty series")]
    EmptySeries,
    #[error("expected exactly 7 lessons, found {found}")]
    MissingLesson { found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Smooth(#[from] SmoothError),
}

/// Regression metrics. `r2` is undefined (None) when the truth is
/// constant; `pcc` additionally requires a non-constant prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub r2: Option<f64>,
    pub pcc: Option<f64>,
}

pub fn regression_metrics(pred: &[f64], truth: &[f64]) -> Result<Metrics, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    if pred.is_empty() {
        return Err(EvalError::EmptySeries);
    }
    let n = pred.len() as f64;
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let mae = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;

    let mean_t = truth.iter().sum::<f64>() / n;
    let mean_p = pred.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean_t) * (t - mean_t)).sum();
    let var_p: f64 = pred.iter().map(|p| (p - mean_p) * (p - mean_p)).sum();
    let r2 = (ss_tot > 0.0).then(|| {
        let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (t - p) * (t - p)).sum();
        1.0 - ss_res / ss_tot
    });
    let pcc = (ss_tot > 0.0 && var_p > 0.0).then(|| {
        let cov: f64 = pred
            .iter()
            .zip(truth)
            .map(|(p, t)| (p - mean_p) * (t - mean_t))
            .sum();
        cov / (var_p.sqrt() * ss_tot.sqrt())
    });
    Ok(Metrics { mse, mae, r2, pcc })
}

/// Discretize into attention zones: value > hi is high, value < lo is low,
/// anything else (boundaries included) is medium.
pub fn discretize3(values: &[f64], hi: f64, lo: f64) -> Vec<Zone> {
    values
        .iter()
        .map(|&v| {
            if v > hi {
                Zone::High
            } else if v < lo {
                Zone::Low
            } else {
                Zone::Medium
            }
        })
        .collect()
}

/// Exact-match zone accuracy plus the 3x3 confusion matrix
/// (rows = truth, cols = prediction, low/medium/high order).
pub fn classification_accuracy(
    pred: &[f64],
    truth: &[f64],
    hi: f64,
    lo: f64,
) -> Result<(f64, [[u64; 3]; 3]), EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    let mut confusion = [[0u64; 3]; 3];
    for (p, t) in discretize3(pred, hi, lo).iter().zip(discretize3(truth, hi, lo)) {
        confusion[t.index()][p.index()] += 1;
    }
    let total: u64 = confusion.iter().flatten().sum();
    let hits: u64 = (0..3).map(|i| confusion[i][i]).sum();
    let acc = if total == 0 { 1.0 } else { hits as f64 / total as f64 };
    Ok((acc, confusion))
}

/// Cross-validation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvMode {
    /// First five lessons train, sixth validates, seventh tests.
    Fixed,
    /// Each lesson tests once; validation is the cyclic predecessor.
    Sevenfold,
}

impl CvMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fixed" => Some(CvMode::Fixed),
            "sevenfold" => Some(CvMode::Sevenfold),
            _ => None,
        }
    }
}

/// One fold's lesson assignment (indices into the sorted lesson list).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub test: usize,
    pub val: usize,
    pub train: Vec<usize>,
}

/// Build the fold assignments over exactly seven lessons.
pub fn fold_plan(lesson_count: usize, mode: CvMode) -> Result<Vec<FoldPlan>, EvalError> {
    if lesson_count != 7 {
        return Err(EvalError::MissingLesson { found: lesson_count });
    }
    Ok(match mode {
        CvMode::Fixed => vec![FoldPlan { test: 6, val: 5, train: (0..5).collect() }],
        CvMode::Sevenfold => (0..7)
            .map(|k| FoldPlan {
                test: k,
                val: (k + 6) % 7,
                train: (0..7).filter(|&i| i != k && i != (k + 6) % 7).collect(),
            })
            .collect(),
    })
}

/// Per-zone metrics of one evaluated prediction series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBlock {
    pub mse: f64,
    pub mae: f64,
    pub r2: Option<f64>,
    pub pcc: Option<f64>,
    pub acc3: f64,
    pub confusion: [[u64; 3]; 3],
}

fn metrics_block(pred: &[f64], truth: &[f64], hi: f64, lo: f64) -> Result<MetricsBlock, EvalError> {
    let m = regression_metrics(pred, truth)?;
    let (acc3, confusion) = classification_accuracy(pred, truth, hi, lo)?;
    Ok(MetricsBlock { mse: m.mse, mae: m.mae, r2: m.r2, pcc: m.pcc, acc3, confusion })
}

/// One fold's evaluation, keyed by its held-out lesson.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub test_lesson: String,
    pub val_lesson: String,
    pub raw: MetricsBlock,
    /// Metrics after post-hoc smoothing of the predicted sequence.
    pub smoothed: Option<MetricsBlock>,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

/// Full evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: CvMode,
    pub smoother: Smoother,
    /// Unweighted mean over folds (confusion matrices summed; acc3 from
    /// the summed matrix, which equals the unweighted mean for equal-size
    /// folds).
    pub aggregate_raw: MetricsBlock,
    pub aggregate_smoothed: Option<MetricsBlock>,
    pub per_fold: Vec<FoldReport>,
    /// SHA-256 over the evaluated dataset (lesson ids, segments, labels,
    /// channel planes).
    pub input_hash: String,
    /// Resolved configuration at run time, attached by the caller.
    pub config_echo: serde_json::Value,
}

/// Everything a fold run produces beyond its report row.
pub struct FoldArtifacts {
    pub test_lesson: String,
    pub model: Model<f32>,
    pub log: TrainLog,
    /// (segment_index, prediction, truth), in segment order.
    pub predictions: Vec<(usize, f64, f64)>,
}

pub struct CvOutput {
    pub report: EvalReport,
    pub folds: Vec<FoldArtifacts>,
}

fn aggregate(blocks: &[&MetricsBlock]) -> MetricsBlock {
    let n = blocks.len() as f64;
    let mean = |f: &dyn Fn(&MetricsBlock) -> f64| blocks.iter().map(|b| f(b)).sum::<f64>() / n;
    let mean_opt = |f: &dyn Fn(&MetricsBlock) -> Option<f64>| {
        let defined: Vec<f64> = blocks.iter().filter_map(|b| f(b)).collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    };
    let mut confusion = [[0u64; 3]; 3];
    for b in blocks {
        for i in 0..3 {
            for j in 0..3 {
                confusion[i][j] += b.confusion[i][j];
            }
        }
    }
    let total: u64 = confusion.iter().flatten().sum();
    let hits: u64 = (0..3).map(|i| confusion[i][i]).sum();
    MetricsBlock {
        mse: mean(&|b| b.mse),
        mae: mean(&|b| b.mae),
        r2: mean_opt(&|b| b.r2),
        pcc: mean_opt(&|b| b.pcc),
        acc3: if total == 0 { 1.0 } else { hits as f64 / total as f64 },
        confusion,
    }
}

/// Content hash of the dataset fed to an evaluation.
pub fn dataset_hash(lessons: &[(String, Vec<FusedSample>)]) -> String {
    let mut hasher = Sha256::new();
    for (lesson, samples) in lessons {
        hasher.update(lesson.as_bytes());
        for s in samples {
            hasher.update((s.segment_index as u64).to_le_bytes());
            hasher.update(s.label.to_le_bytes());
            for ch in &s.channels {
                hasher.update(ch);
            }
        }
    }
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Run the chosen protocol: train one model per fold and evaluate it on
/// the held-out lesson, raw and (optionally) smoothed.
///
/// Lessons are sorted by id before fold assignment; each lesson's samples
/// are evaluated in segment order so temporal smoothing is well-defined.
pub fn cross_validate(
    lessons: &[(String, Vec<FusedSample>)],
    architecture: Architecture,
    fusion: Fusion,
    cfg: &TrainConfig,
    mode: CvMode,
    smoother: Smoother,
) -> Result<CvOutput, EvalError> {
    let mut sorted: Vec<&(String, Vec<FusedSample>)> = lessons.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let plan = fold_plan(sorted.len(), mode)?;

    let (in_h, in_w) = sorted
        .first()
        .and_then(|(_, samples)| samples.first())
        .map(|s| (s.h, s.w))
        .ok_or(EvalError::EmptySeries)?;
    let mut spec = ModelSpec::standard(architecture, fusion);
    spec.in_h = in_h;
    spec.in_w = in_w;

    let mut folds = Vec::new();
    let mut fold_reports = Vec::new();
    for fold in &plan {
        let train_set: Vec<FusedSample> = fold
            .train
            .iter()
            .flat_map(|&i| sorted[i].1.iter().cloned())
            .collect();
        let val_set = sorted[fold.val].1.clone();
        let (model, log) = model::train(&spec, &train_set, &val_set, cfg)?;

        let mut test_set = sorted[fold.test].1.clone();
        test_set.sort_by_key(|s| s.segment_index);
        let preds = model::predict_samples(&model, &test_set)?;
        let truth: Vec<f64> = test_set.iter().map(|s| s.label).collect();

        let raw = metrics_block(&preds, &truth, ZONE_HI, ZONE_LO)?;
        let smoothed = match smoother {
            Smoother::None => None,
            s => {
                let sm = s.apply(&preds)?;
                Some(metrics_block(&sm, &truth, ZONE_HI, ZONE_LO)?)
            }
        };

        fold_reports.push(FoldReport {
            test_lesson: sorted[fold.test].0.clone(),
            val_lesson: sorted[fold.val].0.clone(),
            raw,
            smoothed,
            epochs_run: log.rows.len(),
            best_epoch: log.best_epoch,
        });
        folds.push(FoldArtifacts {
            test_lesson: sorted[fold.test].0.clone(),
            model,
            log,
            predictions: test_set
                .iter()
                .zip(&preds)
                .map(|(s, &p)| (s.segment_index, p, s.label))
                .collect(),
        });
    }

    let aggregate_raw = aggregate(&fold_reports.iter().map(|f| &f.raw).collect::<Vec<_>>());
    let smoothed_blocks: Vec<&MetricsBlock> =
        fold_reports.iter().filter_map(|f| f.smoothed.as_ref()).collect();
    let aggregate_smoothed =
        (!smoothed_blocks.is_empty()).then(|| aggregate(&smoothed_blocks));

    let report = EvalReport {
        mode,
        smoother,
        aggregate_raw,
        aggregate_smoothed,
        per_fold: fold_reports,
        input_hash: dataset_hash(lessons),
        config_echo: serde_json::Value::Null,
    };
    Ok(CvOutput { report, folds })
}
