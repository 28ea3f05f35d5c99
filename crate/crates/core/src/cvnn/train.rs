//! Backbone training loop: mini-batch Adam with per-epoch validation
//! and best-checkpoint retention.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::rfdata::Spectrogram;
use crate::seed::mix_seed;

use super::adam::AdamConfig;
use super::head::softmax_rows;
use super::model::{input_from_spectrograms, CvnnModel};
use super::CvnnError;

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop once validation accuracy reaches this level.
    pub early_stop_val_acc: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            epochs: 12,
            batch_size: 64,
            seed: 0,
            early_stop_val_acc: None,
        }
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

/// Result of a training run. The model passed to [`train_backbone`] ends
/// up at the epoch with the best validation accuracy.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

/// Batched inference returning argmax labels.
pub fn predict_labels(
    model: &CvnnModel,
    samples: &[Spectrogram],
    batch_size: usize,
) -> Result<Vec<usize>, CvnnError> {
    let n = model.cfg.num_classes;
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Spectrogram> = chunk.iter().collect();
        let x = input_from_spectrograms(&refs)?;
        let logits = model.infer_logits(&x)?;
        for row in logits.chunks(n) {
            out.push(crate::forest::argmax_f64(row));
        }
    }
    Ok(out)
}

fn accuracy(pred: &[usize], samples: &[Spectrogram]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(samples).filter(|(p, s)| **p == s.label).count();
    hits as f64 / samples.len() as f64
}

/// Trains the backbone on the train split, validating each epoch and
/// restoring the best-validation-accuracy checkpoint at the end.
/// Deterministic in `config.seed`. Fails fast with diagnostics if the
/// loss leaves the finite range.
pub fn train_backbone(
    model: &mut CvnnModel,
    train: &[Spectrogram],
    val: &[Spectrogram],
    config: &TrainConfig,
) -> Result<TrainOutcome, CvnnError> {
    config.adam.validate()?;
    if config.epochs == 0 {
        return Ok(TrainOutcome { metrics: Vec::new(), best_epoch: 0, best_val_accuracy: 0.0 });
    }
    if train.is_empty() {
        return Err(CvnnError::BadConfig("empty training split".into()));
    }
    let n_classes = model.cfg.num_classes;
    if train.iter().chain(val).any(|s| s.label >= n_classes) {
        return Err(CvnnError::BadConfig("label out of range for model".into()));
    }
    let batch = config.batch_size.max(1);

    let mut best: Option<(CvnnModel, usize, f64)> = None;
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, epoch as u64));
        for k in (1..order.len()).rev() {
            let j = rng.random_range(0..=k);
            order.swap(k, j);
        }

        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for chunk in order.chunks(batch) {
            let refs: Vec<&Spectrogram> = chunk.iter().map(|&i| &train[i]).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train[i].label).collect();
            let x = input_from_spectrograms(&refs)?;
            model.zero_grads();
            let cache = model.forward_train(x)?;
            let loss = model.backward(&cache, &labels)?;
            if !loss.is_finite() {
                return Err(CvnnError::Diverged { epoch, loss });
            }
            let probs = softmax_rows(&cache.logits, n_classes);
            for (row, &y) in probs.chunks(n_classes).zip(&labels) {
                if crate::forest::argmax_f64(row) == y {
                    hits += 1;
                }
            }
            loss_sum += loss * labels.len() as f64;
            model.adam_step(&config.adam)?;
        }
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() {
            return Err(CvnnError::Diverged { epoch, loss: train_loss });
        }
        let train_accuracy = hits as f64 / train.len() as f64;
        let val_accuracy = if val.is_empty() {
            train_accuracy
        } else {
            accuracy(&predict_labels(model, val, batch)?, val)
        };
        metrics.push(EpochMetrics { epoch, train_loss, train_accuracy, val_accuracy });

        if best.as_ref().map(|(_, _, b)| val_accuracy > *b).unwrap_or(true) {
            best = Some((model.clone(), epoch, val_accuracy));
        }
        if let Some(stop) = config.early_stop_val_acc {
            if val_accuracy >= stop {
                break;
            }
        }
    }

    let (best_model, best_epoch, best_val_accuracy) = best.expect("epochs >= 1");
    *model = best_model;
    Ok(TrainOutcome { metrics, best_epoch, best_val_accuracy })
}

#[cfg(test)]
mod tests {
    use super::super::model::ModelConfig;
    use super::*;

    /// Two linearly separable synthetic "spectrogram" classes.
    fn toy_samples(n_per: usize, seed: u64) -> Vec<Spectrogram> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, t) = (16, 16);
        let mut out = Vec::new();
        for label in 0..2usize {
            for _ in 0..n_per {
                let mut data = vec![0.0; 2 * f * t];
                for (k, v) in data.iter_mut().enumerate() {
                    let base: f64 = if label == 0 {
                        if k % 2 == 0 {
                            0.6
                        } else {
                            -0.6
                        }
                    } else if k % 3 == 0 {
                        -0.5
                    } else {
                        0.5
                    };
                    *v = (base + rng.random_range(-0.1..0.1)).clamp(-1.0, 1.0);
                }
                out.push(Spectrogram { data, freq_bins: f, hops: t, label });
            }
        }
        out
    }

    fn tiny_model(seed: u64) -> CvnnModel {
        CvnnModel::init(ModelConfig {
            num_classes: 2,
            input_hw: (16, 16),
            width_scale: 16,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn separable_toy_reaches_high_train_accuracy() {
        let train = toy_samples(12, 3);
        let val = toy_samples(4, 4);
        let mut model = tiny_model(1);
        let cfg = TrainConfig {
            adam: AdamConfig { learning_rate: 4e-3, ..Default::default() },
            epochs: 50,
            batch_size: 8,
            seed: 5,
            early_stop_val_acc: Some(1.0),
        };
        let outcome = train_backbone(&mut model, &train, &val, &cfg).unwrap();
        // Final model accuracy on the training data.
        let pred = predict_labels(&model, &train, 8).unwrap();
        let acc = accuracy(&pred, &train);
        assert!(acc >= 0.99, "train accuracy {acc} after {} epochs", outcome.metrics.len());
        // Loss decreased over the run.
        let last = outcome.metrics.last().unwrap();
        let first = &outcome.metrics[0];
        assert!(last.train_loss < first.train_loss || outcome.metrics.len() == 1);
    }

    #[test]
    fn zero_epochs_returns_untouched_model() {
        let mut model = tiny_model(2);
        let snapshot = model.clone();
        let outcome =
            train_backbone(&mut model, &toy_samples(4, 1), &[], &TrainConfig {
                epochs: 0,
                ..Default::default()
            })
            .unwrap();
        assert!(outcome.metrics.is_empty());
        assert_eq!(model, snapshot);
    }

    #[test]
    fn fixed_seed_reproduces_metrics() {
        let train = toy_samples(8, 7);
        let val = toy_samples(3, 8);
        let cfg = TrainConfig { epochs: 3, batch_size: 4, seed: 11, ..Default::default() };
        let run = || {
            let mut model = tiny_model(9);
            train_backbone(&mut model, &train, &val, &cfg).unwrap().metrics
        };
        assert_eq!(run(), run());
    }
}
