//! Regression networks over fused samples: miniature plain and residual
//! CNN backbones, feature-level and model-level fusion, manual
//! backpropagation, Adam, and early-stopped training.
//!
//! Training runs in single precision; the same code paths instantiate in
//! double precision for gradient checking. All randomness (weight init,
//! epoch shuffling) derives from the config seed, batches accumulate
//! per-sample gradients in a fixed order, and sample order is canonicalized
//! before shuffling, so training is bit-reproducible and invariant to the
//! order samples are handed in.

mod checkpoint;
mod net;
mod ops;
mod scalar;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use net::{Architecture, Fusion, ModelError, ModelSpec};
pub use scalar::Scalar;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fuse::FusedSample;
use net::{Acts, DActs, Layout};

/// Gradient accumulation streams per batch. Fixed (not core-count derived)
/// so results do not depend on the machine's parallelism.
const GRAD_STREAMS: usize = 4;

/// Training protocol parameters. Loss is always mean squared error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Optional shortcut for overfit checks: stop once the epoch train MSE
    /// falls below this value.
    pub train_mse_stop: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            batch_size: 16,
            max_epochs: 200,
            patience: 25,
            seed: 42,
            train_mse_stop: None,
        }
    }
}

/// A spec plus its flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Scalar> {
    pub spec: ModelSpec,
    pub params: Vec<T>,
}

impl<T: Scalar> Model<T> {
    /// He-uniform initialization from the seed.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        let params = net::init_params(&spec, seed);
        Ok(Model { spec, params })
    }

    pub fn predict_one(&self, input: &[T]) -> Result<T, ModelError> {
        if input.len() != self.spec.input_len() {
            return Err(ModelError::ShapeMismatch {
                got: input.len(),
                want: self.spec.input_len(),
            });
        }
        let layout = Layout::new(&self.spec);
        let mut acts = Acts::new(&self.spec);
        Ok(net::forward_sample(&self.spec, &layout, &self.params, input, &mut acts))
    }

    /// Predictions for many inputs, computed in fixed parallel streams;
    /// output order matches input order.
    pub fn predict_many(&self, inputs: &[Vec<T>]) -> Result<Vec<T>, ModelError> {
        for input in inputs {
            if input.len() != self.spec.input_len() {
                return Err(ModelError::ShapeMismatch {
                    got: input.len(),
                    want: self.spec.input_len(),
                });
            }
        }
        let layout = Layout::new(&self.spec);
        let n = inputs.len();
        let chunks: Vec<(usize, usize)> = stream_ranges(n);
        let out: Vec<Vec<T>> = chunks
            .par_iter()
            .map(|&(lo, hi)| {
                let mut acts = Acts::new(&self.spec);
                (lo..hi)
                    .map(|i| {
                        net::forward_sample(&self.spec, &layout, &self.params, &inputs[i], &mut acts)
                    })
                    .collect()
            })
            .collect();
        Ok(out.into_iter().flatten().collect())
    }

    /// Mean squared error of predictions against labels.
    pub fn evaluate_mse(&self, inputs: &[Vec<T>], labels: &[T]) -> Result<f64, ModelError> {
        let preds = self.predict_many(inputs)?;
        Ok(preds
            .iter()
            .zip(labels)
            .map(|(&p, &y)| {
                let e = p.to_f64() - y.to_f64();
                e * e
            })
            .sum::<f64>()
            / labels.len().max(1) as f64)
    }
}

fn stream_ranges(n: usize) -> Vec<(usize, usize)> {
    (0..GRAD_STREAMS)
        .map(|c| (c * n / GRAD_STREAMS, (c + 1) * n / GRAD_STREAMS))
        .filter(|(lo, hi)| hi > lo)
        .collect()
}

/// One batched forward/backward pass. Returns the batch MSE and the
/// gradient vector (summed over streams in fixed order, so the result is
/// independent of scheduling).
pub(crate) fn batch_grad<T: Scalar>(
    spec: &ModelSpec,
    layout: &Layout,
    params: &[T],
    inputs: &[Vec<T>],
    labels: &[T],
) -> (f64, Vec<T>) {
    let n = inputs.len();
    let inv_n = T::from_f64(1.0 / n as f64);
    let two = T::from_f64(2.0);
    let partials: Vec<(Vec<T>, f64)> = stream_ranges(n)
        .par_iter()
        .map(|&(lo, hi)| {
            let mut grads = vec![T::ZERO; layout.total];
            let mut acts = Acts::new(spec);
            let mut scratch = DActs::new(spec);
            let mut loss_sum = 0.0f64;
            for i in lo..hi {
                let pred = net::forward_sample(spec, layout, params, &inputs[i], &mut acts);
                let err = pred - labels[i];
                loss_sum += err.to_f64() * err.to_f64();
                let dpred = two * err * inv_n;
                net::backward_sample(spec, layout, params, &inputs[i], &acts, dpred, &mut grads, &mut scratch);
            }
            (grads, loss_sum)
        })
        .collect();

    let mut grads = vec![T::ZERO; layout.total];
    let mut loss_sum = 0.0;
    for (g, l) in partials {
        for (acc, v) in grads.iter_mut().zip(&g) {
            *acc += *v;
        }
        loss_sum += l;
    }
    (loss_sum / n as f64, grads)
}

/// Forward-only batch loss (used by the finite-difference oracle).
pub fn batch_loss<T: Scalar>(model: &Model<T>, inputs: &[Vec<T>], labels: &[T]) -> f64 {
    model.evaluate_mse(inputs, labels).expect("shapes checked by caller")
}

/// Analytic gradients of the batch MSE for every parameter.
pub fn loss_gradients<T: Scalar>(model: &Model<T>, inputs: &[Vec<T>], labels: &[T]) -> Vec<T> {
    let layout = Layout::new(&model.spec);
    batch_grad(&model.spec, &layout, &model.params, inputs, labels).1
}

struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: u32,
    lr: f32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f32 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr: lr as f32 }
    }

    fn step(&mut self, params: &mut [f32], grads: &[f32]) {
        self.t += 1;
        let b1 = Self::BETA1 as f32;
        let b2 = Self::BETA2 as f32;
        let c1 = (1.0 - Self::BETA1.powi(self.t as i32)) as f32;
        let c2 = (1.0 - Self::BETA2.powi(self.t as i32)) as f32;
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub rows: Vec<EpochRow>,
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,val_mse\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.epoch, r.train_mse, r.val_mse));
        }
        out
    }
}

fn sample_inputs(samples: &[&FusedSample]) -> Vec<Vec<f32>> {
    samples.par_iter().map(|s| s.to_input()).collect()
}

/// Train a model: Adam on MSE, epoch-level shuffling derived from the seed,
/// early stopping on validation loss with the configured patience, best-val
/// weights returned.
pub fn train(
    spec: &ModelSpec,
    train_set: &[FusedSample],
    val_set: &[FusedSample],
    cfg: &TrainConfig,
) -> Result<(Model<f32>, TrainLog), ModelError> {
    spec.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(ModelError::EmptySplit);
    }
    for s in train_set.iter().chain(val_set) {
        if s.h != spec.in_h || s.w != spec.in_w {
            return Err(ModelError::ShapeMismatch {
                got: 3 * s.h * s.w,
                want: spec.input_len(),
            });
        }
    }

    // Canonical order first: the epoch shuffle is seed-derived, so the
    // final weights cannot depend on the order samples arrived in.
    let mut order: Vec<&FusedSample> = train_set.iter().collect();
    order.sort_by(|a, b| {
        (&a.lesson_id, a.segment_index).cmp(&(&b.lesson_id, b.segment_index))
    });
    let mut val_sorted: Vec<&FusedSample> = val_set.iter().collect();
    val_sorted.sort_by(|a, b| {
        (&a.lesson_id, a.segment_index).cmp(&(&b.lesson_id, b.segment_index))
    });
    let val_inputs = sample_inputs(&val_sorted);
    let val_labels: Vec<f32> = val_sorted.iter().map(|s| s.label as f32).collect();

    let mut model = Model::<f32>::init(spec.clone(), cfg.seed)?;
    let layout = Layout::new(spec);
    let mut adam = Adam::new(layout.total, cfg.learning_rate);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);

    let mut log = TrainLog::default();
    let mut best_val = f64::INFINITY;
    let mut best_params = model.params.clone();
    let mut stale = 0usize;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_weighted = 0.0f64;
        for (batch_idx, batch) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let inputs = sample_inputs(batch);
            let labels: Vec<f32> = batch.iter().map(|s| s.label as f32).collect();
            let (mse, grads) = batch_grad(spec, &layout, &model.params, &inputs, &labels);
            if !mse.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: batch_idx });
            }
            adam.step(&mut model.params, &grads);
            loss_weighted += mse * batch.len() as f64;
        }
        let train_mse = loss_weighted / order.len() as f64;
        let val_mse = model.evaluate_mse(&val_inputs, &val_labels)?;
        log.rows.push(EpochRow { epoch, train_mse, val_mse });

        if val_mse < best_val {
            best_val = val_mse;
            best_params.copy_from_slice(&model.params);
            log.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
        if cfg.train_mse_stop.is_some_and(|t| train_mse < t) {
            break;
        }
    }

    model.params = best_params;
    Ok((model, log))
}

/// Predictions (as f64) for a set of fused samples, in input order.
pub fn predict_samples(model: &Model<f32>, samples: &[FusedSample]) -> Result<Vec<f64>, ModelError> {
    let refs: Vec<&FusedSample> = samples.iter().collect();
    let inputs = sample_inputs(&refs);
    Ok(model.predict_many(&inputs)?.into_iter().map(|p| p as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::Rng;

    fn combos() -> Vec<(Architecture, Fusion)> {
        vec![
            (Architecture::MiniPlain, Fusion::FeatureLevel),
            (Architecture::MiniPlain, Fusion::ModelLevel),
            (Architecture::MiniResidual, Fusion::FeatureLevel),
            (Architecture::MiniResidual, Fusion::ModelLevel),
        ]
    }

    fn random_inputs<T: Scalar>(spec: &ModelSpec, n: usize, seed: u64) -> (Vec<Vec<T>>, Vec<T>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = (0..n)
            .map(|_| {
                (0..spec.input_len())
                    .map(|_| T::from_f64(rng.gen_range(0.0..1.0)))
                    .collect()
            })
            .collect();
        let labels = (0..n).map(|_| T::from_f64(rng.gen_range(0.1..0.9))).collect();
        (inputs, labels)
    }

    #[test]
    fn param_count_matches_layout() {
        for (arch, fusion) in combos() {
            let spec = ModelSpec::standard(arch, fusion);
            let model = Model::<f32>::init(spec.clone(), 42).unwrap();
            assert_eq!(model.params.len(), spec.param_count());
            assert!(spec.conv_param_count() < spec.param_count());
        }
    }

    #[test]
    fn model_level_has_roughly_triple_conv_params() {
        let feature = ModelSpec::standard(Architecture::MiniPlain, Fusion::FeatureLevel);
        let model = ModelSpec::standard(Architecture::MiniPlain, Fusion::ModelLevel);
        let ratio = model.conv_param_count() as f64 / feature.conv_param_count() as f64;
        assert!((ratio - 3.0).abs() < 0.05, "ratio {ratio}");
        assert!(model.param_count() > feature.param_count());
    }

    #[test]
    fn residual_and_plain_have_identical_param_counts() {
        let plain = ModelSpec::standard(Architecture::MiniPlain, Fusion::FeatureLevel);
        let residual = ModelSpec::standard(Architecture::MiniResidual, Fusion::FeatureLevel);
        assert_eq!(plain.param_count(), residual.param_count());
    }

    #[test]
    fn predictions_lie_in_open_unit_interval() {
        let spec = ModelSpec::tiny(Architecture::MiniResidual, Fusion::FeatureLevel);
        let model = Model::<f32>::init(spec.clone(), 7).unwrap();
        let (inputs, _) = random_inputs::<f32>(&spec, 8, 3);
        for p in model.predict_many(&inputs).unwrap() {
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = ModelSpec::tiny(Architecture::MiniPlain, Fusion::ModelLevel);
        let a = Model::<f32>::init(spec.clone(), 42).unwrap();
        let b = Model::<f32>::init(spec.clone(), 42).unwrap();
        assert_eq!(a.params, b.params);
        let (inputs, _) = random_inputs::<f32>(&spec, 4, 9);
        assert_eq!(a.predict_many(&inputs).unwrap(), b.predict_many(&inputs).unwrap());
    }

    #[test]
    fn zero_weight_head_predicts_sigmoid_bias() {
        let spec = ModelSpec::tiny(Architecture::MiniPlain, Fusion::FeatureLevel);
        let mut model = Model::<f64>::init(spec.clone(), 42).unwrap();
        let n = model.params.len();
        // Zero the head weights, set the bias to 0.3.
        for i in n - 1 - spec.dense_width..n - 1 {
            model.params[i] = 0.0;
        }
        model.params[n - 1] = 0.3;
        let (inputs, _) = random_inputs::<f64>(&spec, 3, 5);
        let expect = 1.0 / (1.0 + (-0.3f64).exp());
        for p in model.predict_many(&inputs).unwrap() {
            assert!((p - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences_every_param() {
        let eps = 1e-5;
        for (arch, fusion) in combos() {
            let spec = ModelSpec::tiny(arch, fusion);
            let mut model = Model::<f64>::init(spec.clone(), 42).unwrap();
            let (inputs, labels) = random_inputs::<f64>(&spec, 2, 11);
            let analytic = loss_gradients(&model, &inputs, &labels);
            for i in 0..model.params.len() {
                let orig = model.params[i];
                model.params[i] = orig + eps;
                let up = batch_loss(&model, &inputs, &labels);
                model.params[i] = orig - eps;
                let down = batch_loss(&model, &inputs, &labels);
                model.params[i] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let denom = analytic[i].abs().max(numeric.abs());
                if denom > 1e-10 {
                    let rel = (analytic[i] - numeric).abs() / denom;
                    assert!(
                        rel < 1e-4,
                        "{arch:?}/{fusion:?} param {i}: analytic {} numeric {numeric} rel {rel}",
                        analytic[i]
                    );
                }
            }
        }
    }

    #[test]
    fn zero_learning_rate_leaves_weights_unchanged() {
        let spec = ModelSpec::tiny(Architecture::MiniPlain, Fusion::FeatureLevel);
        let samples = fixtures::tiny_samples(1, spec.in_h, spec.in_w);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 4,
            max_epochs: 3,
            patience: 10,
            ..TrainConfig::default()
        };
        let (model, _) = train(&spec, &samples, &samples, &cfg).unwrap();
        let fresh = Model::<f32>::init(spec, cfg.seed).unwrap();
        assert_eq!(model.params, fresh.params);
    }

    #[test]
    fn gradient_is_zero_when_prediction_equals_label() {
        let spec = ModelSpec::tiny(Architecture::MiniPlain, Fusion::FeatureLevel);
        let model = Model::<f64>::init(spec.clone(), 42).unwrap();
        let (inputs, _) = random_inputs::<f64>(&spec, 1, 2);
        let pred = model.predict_one(&inputs[0]).unwrap();
        let grads = loss_gradients(&model, &inputs, &[pred]);
        for g in grads {
            assert_eq!(g, 0.0);
        }
    }

    #[test]
    fn training_memorizes_tiny_set() {
        // Overfit sanity at test scale; the acceptance suite runs the
        // full-size version.
        let spec = ModelSpec::tiny(Architecture::MiniPlain, Fusion::FeatureLevel);
        let samples = fixtures::tiny_samples(5, spec.in_h, spec.in_w);
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 10,
            max_epochs: 300,
            patience: 300,
            train_mse_stop: Some(0.005),
            ..TrainConfig::default()
        };
        let (_, log) = train(&spec, &samples, &samples, &cfg).unwrap();
        let final_mse = log.rows.last().unwrap().train_mse;
        assert!(final_mse < 0.01, "final train MSE {final_mse}");
    }

    #[test]
    fn early_stopping_returns_best_epoch_weights() {
        // lr = 0 makes every epoch identical, so the first epoch is best
        // and training stops after `patience` stale epochs.
        let spec = ModelSpec::tiny(Architecture::MiniPlain, Fusion::FeatureLevel);
        let samples = fixtures::tiny_samples(5, spec.in_h, spec.in_w);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 4,
            max_epochs: 50,
            patience: 3,
            ..TrainConfig::default()
        };
        let (_, log) = train(&spec, &samples, &samples, &cfg).unwrap();
        assert_eq!(log.best_epoch, 1);
        assert_eq!(log.rows.len(), 4, "epoch 1 best + 3 stale epochs");
    }

    #[test]
    fn training_is_input_order_invariant_and_reproducible() {
        let spec = ModelSpec::tiny(Architecture::MiniResidual, Fusion::FeatureLevel);
        let samples = fixtures::tiny_samples(5, spec.in_h, spec.in_w);
        let mut reversed = samples.clone();
        reversed.reverse();
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            batch_size: 4,
            max_epochs: 3,
            patience: 10,
            ..TrainConfig::default()
        };
        let (m1, log1) = train(&spec, &samples, &samples, &cfg).unwrap();
        let (m2, log2) = train(&spec, &reversed, &samples, &cfg).unwrap();
        assert_eq!(m1.params, m2.params, "input order must not matter");
        assert_eq!(log1, log2);
        let (m3, _) = train(&spec, &samples, &samples, &cfg).unwrap();
        assert_eq!(m1.params, m3.params, "reruns must be bit-identical");
    }

    #[test]
    fn empty_split_is_an_error() {
        let spec = ModelSpec::tiny(Architecture::MiniPlain, Fusion::FeatureLevel);
        let samples = fixtures::tiny_samples(5, spec.in_h, spec.in_w);
        assert_eq!(
            train(&spec, &[], &samples, &TrainConfig::default()).unwrap_err(),
            ModelError::EmptySplit
        );
    }

    #[test]
    fn train_log_csv_shape() {
        let log = TrainLog {
            rows: vec![EpochRow { epoch: 1, train_mse: 0.5, val_mse: 0.25 }],
            best_epoch: 1,
        };
        assert_eq!(log.to_csv(), "epoch,train_mse,val_mse\n1,0.5,0.25\n");
    }
}
