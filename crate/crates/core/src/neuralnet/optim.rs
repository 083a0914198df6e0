use num_traits::Float;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{checked_gradient, Network};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, momentum: 0.9, batch_size: 32, epochs: 10, seed: 0, weight_decay: 1e-4 }
    }
}

impl TrainConfig {
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            errs.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            errs.push(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be positive".into());
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            errs.push(format!("weight_decay must be nonnegative, got {}", self.weight_decay));
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::ValidationErrors(errs))
        }
    }
}

/// `v <- momentum * v + g; w <- w - lr * (v + decay * w)`, elementwise.
pub fn sgd_update<T: Float>(weights: &mut [T], velocity: &mut [T], grads: &[T], lr: T, momentum: T, decay: T) {
    for ((w, v), &g) in weights.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        *v = momentum * *v + g;
        *w = *w - lr * (*v + decay * *w);
    }
}

/// One momentum SGD step on `net` in place.
pub fn sgd_step(net: &mut Network, grads: &[f32], cfg: &TrainConfig) -> Result<()> {
    if grads.len() != net.param_count() {
        return Err(Error::ShapeMismatch(format!(
            "gradient has {} entries, network has {} parameters",
            grads.len(),
            net.param_count()
        )));
    }
    let (w, v) = net.params_and_velocity_mut();
    sgd_update(w, v, grads, cfg.learning_rate as f32, cfg.momentum as f32, cfg.weight_decay as f32);
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// Mean cross-entropy over the epoch's samples.
    pub loss: f64,
    /// Fraction of samples classified correctly before each batch's update.
    pub accuracy: f64,
}

/// A channels-first patch with its class index.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPatch {
    pub data: Vec<f32>,
    pub label: usize,
}

/// Trains for `cfg.epochs` epochs. Epoch `e` shuffles with a seed derived from
/// `cfg.seed` and the network's running epoch count, so resuming from a checkpoint
/// replays exactly what an uninterrupted run would have done.
pub fn train(mut net: Network, data: &[LabeledPatch], cfg: &TrainConfig) -> Result<(Network, Vec<EpochStats>)> {
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Ok((net, Vec::new()));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        let epoch = net.epochs_trained();
        order.sort_unstable();
        order.shuffle(&mut seed::rng(cfg.seed, &[seed::hash_str("shuffle"), epoch]));
        let (mut loss_sum, mut correct) = (0.0, 0);
        for batch_idx in order.chunks(cfg.batch_size) {
            let patches: Vec<&[f32]> = batch_idx.iter().map(|&i| data[i].data.as_slice()).collect();
            let labels: Vec<usize> = batch_idx.iter().map(|&i| data[i].label).collect();
            let g = checked_gradient(&net, &patches, &labels)?;
            loss_sum += g.loss * batch_idx.len() as f64;
            correct += g.correct;
            sgd_step(&mut net, &g.grads, cfg)?;
        }
        if !net.is_finite() {
            return Err(Error::NonFinite(format!("non-finite weights after epoch {}", epoch + 1)));
        }
        net.set_epochs_trained(epoch + 1);
        history.push(EpochStats { loss: loss_sum / data.len() as f64, accuracy: correct as f64 / data.len() as f64 });
    }
    Ok((net, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::arch::{ArchSpec, LayerSpec, Shape};
    use crate::neuralnet::network::{build_network, forward};
    use rand::Rng;

    #[test]
    fn zero_grad_zero_decay_is_bit_exact_noop() {
        let mut net = build_network(&ArchSpec::desk_scale(1, 3), 2).unwrap();
        let before = net.params().to_vec();
        let zeros = vec![0.0; net.param_count()];
        sgd_step(&mut net, &zeros, &TrainConfig { weight_decay: 0.0, ..TrainConfig::default() }).unwrap();
        assert_eq!(net.params(), &before[..]);
    }

    #[test]
    fn scalar_arithmetic() {
        let (mut w, mut v) = ([1.0f32], [0.0f32]);
        sgd_update(&mut w, &mut v, &[0.25], 1.0, 0.0, 0.0);
        assert_eq!(w[0], 0.75);
    }

    #[test]
    fn momentum_matches_hand_unrolled_recurrence() {
        let (lr, mu, wd) = (0.1f64, 0.9, 0.01);
        let (g1, g2) = (0.3f64, -0.7);
        let (mut w, mut v) = ([2.0f64], [0.0f64]);
        sgd_update(&mut w, &mut v, &[g1], lr, mu, wd);
        sgd_update(&mut w, &mut v, &[g2], lr, mu, wd);
        let v1 = g1;
        let w1 = 2.0 - lr * (v1 + wd * 2.0);
        let v2 = mu * v1 + g2;
        let w2 = w1 - lr * (v2 + wd * w1);
        assert!((w[0] - w2).abs() < 1e-12);
        assert!((v[0] - v2).abs() < 1e-12);
    }

    #[test]
    fn gradient_length_is_checked() {
        let mut net = build_network(&ArchSpec::desk_scale(1, 3), 2).unwrap();
        assert!(matches!(sgd_step(&mut net, &[0.0], &TrainConfig::default()), Err(Error::ShapeMismatch(_))));
    }

    fn toy_arch() -> ArchSpec {
        ArchSpec {
            input: Shape::new(1, 6, 6),
            layers: vec![
                LayerSpec::conv(4, 3, 1),
                LayerSpec::Relu,
                LayerSpec::Maxpool { window: 2, stride: 2 },
                LayerSpec::fc(8),
                LayerSpec::Relu,
                LayerSpec::fc(2),
                LayerSpec::SoftmaxOutput,
            ],
            num_classes: 2,
        }
    }

    /// Class 1 patches are brighter on the left half, class 0 on the right, with a margin.
    fn separable_toy(n: usize) -> Vec<LabeledPatch> {
        let mut rng = seed::rng(17, &[]);
        (0..n)
            .map(|i| {
                let label = i % 2;
                let shift: f32 = rng.random_range(0.5..1.0);
                let data = (0..36)
                    .map(|p| {
                        let left = (p % 6) < 3;
                        let base = if left == (label == 1) { shift } else { -shift };
                        base + rng.random_range(-0.3..0.3)
                    })
                    .collect();
                LabeledPatch { data, label }
            })
            .collect()
    }

    #[test]
    fn epochs_zero_returns_input() {
        let net = build_network(&toy_arch(), 1).unwrap();
        let (out, hist) = train(net.clone(), &separable_toy(10), &TrainConfig { epochs: 0, ..TrainConfig::default() }).unwrap();
        assert_eq!(out, net);
        assert!(hist.is_empty());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let net = build_network(&toy_arch(), 1).unwrap();
        assert!(matches!(train(net, &[], &TrainConfig::default()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let data = separable_toy(200);
        let cfg = TrainConfig { epochs: 50, batch_size: 16, seed: 3, ..TrainConfig::default() };
        let (net, hist) = train(build_network(&toy_arch(), 1).unwrap(), &data, &cfg).unwrap();
        assert_eq!(hist.len(), 50);
        let patches: Vec<&[f32]> = data.iter().map(|d| d.data.as_slice()).collect();
        let correct = forward(&net, &patches)
            .unwrap()
            .iter()
            .zip(&data)
            .filter(|(row, d)| super::super::network::argmax(row) == d.label)
            .count();
        assert_eq!(correct, 200);
        assert_eq!(hist.last().unwrap().accuracy, 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable_toy(40);
        let cfg = TrainConfig { epochs: 3, batch_size: 7, seed: 5, ..TrainConfig::default() };
        let a = train(build_network(&toy_arch(), 2).unwrap(), &data, &cfg).unwrap();
        let b = train(build_network(&toy_arch(), 2).unwrap(), &data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_run_equals_uninterrupted_run() {
        let data = separable_toy(30);
        let cfg = TrainConfig { epochs: 4, batch_size: 8, seed: 9, ..TrainConfig::default() };
        let (whole, hist) = train(build_network(&toy_arch(), 2).unwrap(), &data, &cfg).unwrap();
        let half = TrainConfig { epochs: 2, ..cfg.clone() };
        let (mid, h1) = train(build_network(&toy_arch(), 2).unwrap(), &data, &half).unwrap();
        let (end, h2) = train(mid, &data, &half).unwrap();
        assert_eq!(end, whole);
        assert_eq!([h1, h2].concat(), hist);
    }

    #[test]
    fn divergence_is_reported() {
        let data = separable_toy(20);
        let cfg = TrainConfig { epochs: 5, learning_rate: 1e30, momentum: 0.0, ..TrainConfig::default() };
        let r = train(build_network(&toy_arch(), 2).unwrap(), &data, &cfg);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn config_errors_are_aggregated() {
        let cfg = TrainConfig { learning_rate: 0.0, momentum: 1.0, batch_size: 0, ..TrainConfig::default() };
        assert_eq!(cfg.validation_errors().len(), 3);
    }
}
