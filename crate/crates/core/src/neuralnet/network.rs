use std::sync::atomic::{AtomicUsize, Ordering};

use num_traits::Float;
use rand_distr::{Distribution, Normal};

use super::arch::{ArchSpec, LayerPlan};
use super::layers::{backward_sample, forward_sample, softmax};
use crate::error::{Error, Result};
use crate::seed;

/// Samples per work unit. Gradients are summed inside a chunk, then chunks are
/// summed in index order, so results never depend on the thread count.
const CHUNK: usize = 8;

static THREADS: AtomicUsize = AtomicUsize::new(1);

/// Sets the worker count used for batched forward and gradient passes.
pub fn set_threads(n: usize) {
    THREADS.store(n.max(1), Ordering::Relaxed);
}

pub fn threads() -> usize {
    THREADS.load(Ordering::Relaxed)
}

/// Runs `f` over `0..n` on up to [`threads`] workers and returns results in index order.
pub(crate) fn par_map<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync) -> Vec<R> {
    let workers = threads().min(n);
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let mut slots: Vec<Option<R>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                s.spawn(move || (w..n).step_by(workers).map(|i| (i, f(i))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every index computed")).collect()
}

/// A convolutional classifier with flat single-precision parameter storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    arch: ArchSpec,
    plans: Vec<LayerPlan>,
    params: Vec<f32>,
    /// Momentum buffer, same layout as `params`.
    velocity: Vec<f32>,
    rng_seed: u64,
    epochs_trained: u64,
}

/// Seeded He initialization: weights ~ N(0, 2 / fan_in), biases zero.
pub fn build_network(arch: &ArchSpec, seed: u64) -> Result<Network> {
    let plans = arch.plan()?;
    let total: usize = plans.iter().map(LayerPlan::param_count).sum();
    let mut params = vec![0.0f32; total];
    for (i, plan) in plans.iter().enumerate() {
        if plan.weight_count == 0 {
            continue;
        }
        let fan_in = plan.weight_count / plan.bias_count;
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        let mut rng = seed::rng(seed, &[seed::hash_str("init"), i as u64]);
        for w in &mut params[plan.offset..plan.offset + plan.weight_count] {
            *w = normal.sample(&mut rng) as f32;
        }
    }
    Network::from_parts(arch.clone(), params, None, seed, 0)
}

impl Network {
    pub(crate) fn from_parts(
        arch: ArchSpec,
        params: Vec<f32>,
        velocity: Option<Vec<f32>>,
        rng_seed: u64,
        epochs_trained: u64,
    ) -> Result<Self> {
        let plans = arch.plan()?;
        let total: usize = plans.iter().map(LayerPlan::param_count).sum();
        if params.len() != total {
            return Err(Error::ShapeMismatch(format!("expected {total} parameters, got {}", params.len())));
        }
        let velocity = velocity.unwrap_or_else(|| vec![0.0; total]);
        if velocity.len() != total {
            return Err(Error::ShapeMismatch(format!("expected {total} velocity entries, got {}", velocity.len())));
        }
        Ok(Self { arch, plans, params, velocity, rng_seed, epochs_trained })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn plans(&self) -> &[LayerPlan] {
        &self.plans
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Total epochs this network has been trained for, across resumed runs.
    pub fn epochs_trained(&self) -> u64 {
        self.epochs_trained
    }

    pub(crate) fn set_epochs_trained(&mut self, n: u64) {
        self.epochs_trained = n;
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub fn input_len(&self) -> usize {
        self.arch.input.len()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// All parameters, layer by layer; within a layer weights precede biases.
    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn velocity(&self) -> &[f32] {
        &self.velocity
    }

    pub(crate) fn params_and_velocity_mut(&mut self) -> (&mut [f32], &mut [f32]) {
        (&mut self.params, &mut self.velocity)
    }

    /// Weights and biases of layer `i` (empty for parameter-free layers).
    pub fn layer_params(&self, i: usize) -> (&[f32], &[f32]) {
        let p = &self.plans[i];
        let w = &self.params[p.offset..p.offset + p.weight_count];
        let b = &self.params[p.offset + p.weight_count..p.offset + p.param_count()];
        (w, b)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().chain(&self.velocity).all(|v| v.is_finite())
    }

    fn check_input(&self, patch: &[f32]) -> Result<()> {
        if patch.len() != self.input_len() {
            return Err(Error::ShapeMismatch(format!(
                "patch has {} values, network expects {:?} = {}",
                patch.len(),
                self.arch.input,
                self.input_len()
            )));
        }
        Ok(())
    }

    fn check_labels(&self, labels: &[usize]) -> Result<()> {
        let classes = self.num_classes();
        match labels.iter().find(|&&l| l >= classes) {
            Some(&label) => Err(Error::LabelOutOfRange { label, classes }),
            None => Ok(()),
        }
    }

    /// Class probabilities for one channels-first patch.
    pub fn predict(&self, patch: &[f32]) -> Result<Vec<f32>> {
        self.check_input(patch)?;
        let trace = forward_sample(&self.plans, &self.params, patch.to_vec());
        Ok(softmax(trace.activations.last().unwrap()))
    }

    /// Every layer's output for one patch, starting with the input itself.
    pub fn activations(&self, patch: &[f32]) -> Result<Vec<Vec<f32>>> {
        self.check_input(patch)?;
        Ok(forward_sample(&self.plans, &self.params, patch.to_vec()).activations)
    }
}

/// Probability rows for a batch of patches.
pub fn forward<P: AsRef<[f32]> + Sync>(net: &Network, batch: &[P]) -> Result<Vec<Vec<f32>>> {
    for p in batch {
        net.check_input(p.as_ref())?;
    }
    Ok(par_map(batch.len(), |i| {
        softmax(forward_sample(&net.plans, &net.params, batch[i].as_ref().to_vec()).activations.last().unwrap())
    }))
}

/// Result of a gradient pass over one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchGradient<T> {
    /// Mean cross-entropy.
    pub loss: f64,
    /// Same layout as [`Network::params`].
    pub grads: Vec<T>,
    /// Samples whose argmax matched the label.
    pub correct: usize,
}

fn to_t<T: Float>(v: &[f32]) -> Vec<T> {
    v.iter().map(|&x| T::from(x).unwrap()).collect()
}

/// Mean softmax cross-entropy and its gradient, generic over the compute precision.
pub(crate) fn batch_gradient<T: Float + Send + Sync, P: AsRef<[f32]> + Sync>(
    plans: &[LayerPlan],
    params: &[T],
    batch: &[P],
    labels: &[usize],
) -> BatchGradient<T> {
    let scale = T::one() / T::from(batch.len()).unwrap();
    let chunks = batch.len().div_ceil(CHUNK);
    let partial = par_map(chunks, |c| {
        let mut grads = vec![T::zero(); params.len()];
        let mut loss = 0.0f64;
        let mut correct = 0;
        for i in c * CHUNK..((c + 1) * CHUNK).min(batch.len()) {
            let trace = forward_sample(plans, params, to_t(batch[i].as_ref()));
            let logits = trace.activations.last().unwrap();
            let probs = softmax(logits);
            let label = labels[i];
            // log-sum-exp form stays finite even when the label's probability underflows
            let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let lse = max + logits.iter().fold(T::zero(), |a, &v| a + (v - max).exp()).ln();
            loss += (lse - logits[label]).to_f64().unwrap();
            if argmax(&probs) == label {
                correct += 1;
            }
            let dlogits: Vec<T> = probs
                .iter()
                .enumerate()
                .map(|(k, &p)| (if k == label { p - T::one() } else { p }) * scale)
                .collect();
            backward_sample(plans, params, &trace, dlogits, &mut grads);
        }
        (loss, grads, correct)
    });
    let mut total = BatchGradient { loss: 0.0, grads: vec![T::zero(); params.len()], correct: 0 };
    for (loss, grads, correct) in partial {
        total.loss += loss;
        total.correct += correct;
        for (t, g) in total.grads.iter_mut().zip(grads) {
            *t = *t + g;
        }
    }
    total.loss /= batch.len() as f64;
    total
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy of `batch` against `labels`, and the gradient for every parameter.
pub fn loss_and_grad<P: AsRef<[f32]> + Sync>(net: &Network, batch: &[P], labels: &[usize]) -> Result<(f64, Vec<f32>)> {
    let g = checked_gradient(net, batch, labels)?;
    Ok((g.loss, g.grads))
}

pub(crate) fn checked_gradient<P: AsRef<[f32]> + Sync>(
    net: &Network,
    batch: &[P],
    labels: &[usize],
) -> Result<BatchGradient<f32>> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if batch.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} patches but {} labels", batch.len(), labels.len())));
    }
    for p in batch {
        net.check_input(p.as_ref())?;
    }
    net.check_labels(labels)?;
    Ok(batch_gradient(&net.plans, &net.params, batch, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::arch::{LayerSpec, Shape};
    use rand::Rng;

    pub(crate) fn tiny_arch(classes: usize) -> ArchSpec {
        ArchSpec {
            input: Shape::new(2, 8, 8),
            layers: vec![
                LayerSpec::conv(3, 3, 1),
                LayerSpec::Relu,
                LayerSpec::Maxpool { window: 2, stride: 2 },
                LayerSpec::conv(4, 3, 0),
                LayerSpec::Relu,
                LayerSpec::fc(classes),
                LayerSpec::SoftmaxOutput,
            ],
            num_classes: classes,
        }
    }

    fn random_patches(n: usize, len: usize, seed: u64) -> Vec<Vec<f32>> {
        let mut rng = seed::rng(seed, &[]);
        (0..n).map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn same_seed_same_weights() {
        let arch = tiny_arch(3);
        assert_eq!(build_network(&arch, 7).unwrap().params(), build_network(&arch, 7).unwrap().params());
        assert_ne!(build_network(&arch, 7).unwrap().params(), build_network(&arch, 8).unwrap().params());
    }

    #[test]
    fn he_scale_matches_fan_in() {
        let arch = ArchSpec::desk_scale(3, 4);
        let net = build_network(&arch, 1).unwrap();
        // conv2: fan_in = 16 * 3 * 3
        let (w, b) = net.layer_params(2);
        let var = w.iter().map(|&x| (x as f64).powi(2)).sum::<f64>() / w.len() as f64;
        assert!((var - 2.0 / 144.0).abs() < 0.1 * 2.0 / 144.0, "{var}");
        assert!(b.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_final_layer_gives_uniform_rows() {
        let mut net = build_network(&tiny_arch(5), 3).unwrap();
        let last = net.plans().iter().rposition(|p| p.param_count() > 0).unwrap();
        let p = net.plans()[last].clone();
        net.params_mut()[p.offset..p.offset + p.param_count()].fill(0.0);
        for row in forward(&net, &random_patches(3, 128, 1)).unwrap() {
            for v in row {
                assert!((v - 0.2).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn rows_are_distributions() {
        let net = build_network(&tiny_arch(4), 3).unwrap();
        for row in forward(&net, &random_patches(10, 128, 2)).unwrap() {
            assert!(row.iter().all(|&p| p >= 0.0));
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn batch_independence() {
        let net = build_network(&tiny_arch(3), 5).unwrap();
        let patches = random_patches(4, 128, 9);
        let batched = forward(&net, &patches).unwrap();
        let single = forward(&net, &patches[2..3]).unwrap();
        for (a, b) in batched[2].iter().zip(&single[0]) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn wrong_patch_length_is_shape_mismatch() {
        let net = build_network(&tiny_arch(3), 5).unwrap();
        assert!(matches!(forward(&net, &[vec![0.0; 127]]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn label_out_of_range() {
        let net = build_network(&tiny_arch(3), 5).unwrap();
        let r = loss_and_grad(&net, &random_patches(1, 128, 0), &[3]);
        assert!(matches!(r, Err(Error::LabelOutOfRange { label: 3, classes: 3 })));
    }

    #[test]
    fn uniform_prediction_costs_ln_k() {
        let mut net = build_network(&tiny_arch(6), 3).unwrap();
        let last = net.plans().len() - 2;
        let p = net.plans()[last].clone();
        net.params_mut()[p.offset..p.offset + p.param_count()].fill(0.0);
        let (loss, _) = loss_and_grad(&net, &random_patches(5, 128, 4), &[0, 1, 2, 3, 5]).unwrap();
        assert!((loss - 6f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn confident_correct_prediction_costs_nothing() {
        let mut net = build_network(&tiny_arch(2), 3).unwrap();
        let p = net.plans()[net.plans().len() - 2].clone();
        let bias = p.offset + p.weight_count;
        net.params_mut()[p.offset..bias].fill(0.0);
        net.params_mut()[bias] = 20.0;
        let patches = random_patches(2, 128, 4);
        assert!(forward(&net, &patches).unwrap()[0][0] > 0.9999);
        let (loss, _) = loss_and_grad(&net, &patches, &[0, 0]).unwrap();
        assert!((0.0..1e-4).contains(&loss), "{loss}");
    }

    #[test]
    fn logit_gradient_is_probs_minus_one_hot_over_batch() {
        // the final bias gradient equals the logit gradient summed over the batch
        let net = build_network(&tiny_arch(3), 11).unwrap();
        let patches = random_patches(4, 128, 6);
        let labels = [0, 2, 1, 2];
        let probs = forward(&net, &patches).unwrap();
        let (_, grads) = loss_and_grad(&net, &patches, &labels).unwrap();
        let p = &net.plans()[net.plans().len() - 2];
        for k in 0..3 {
            let expected: f32 = probs
                .iter()
                .zip(&labels)
                .map(|(row, &l)| (row[k] - if l == k { 1.0 } else { 0.0 }) / 4.0)
                .sum();
            assert!((grads[p.offset + p.weight_count + k] - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn thread_count_does_not_change_gradients() {
        let net = build_network(&tiny_arch(3), 2).unwrap();
        let patches = random_patches(37, 128, 8);
        let labels: Vec<usize> = (0..37).map(|i| i % 3).collect();
        let one = loss_and_grad(&net, &patches, &labels).unwrap();
        set_threads(3);
        let three = loss_and_grad(&net, &patches, &labels).unwrap();
        set_threads(1);
        assert_eq!(one, three);
    }

    #[test]
    fn conv_is_translation_consistent() {
        // stride-1 unpadded conv on a zero-bordered input: shifting the input shifts the map
        let arch = ArchSpec {
            input: Shape::new(1, 12, 12),
            layers: vec![LayerSpec::conv(2, 3, 0), LayerSpec::fc(2), LayerSpec::SoftmaxOutput],
            num_classes: 2,
        };
        let net = build_network(&arch, 4).unwrap();
        let mut rng = seed::rng(1, &[]);
        let mut a = vec![0.0f32; 144];
        for y in 2..8 {
            for x in 2..8 {
                a[y * 12 + x] = rng.random_range(-1.0..1.0);
            }
        }
        let mut b = vec![0.0f32; 144];
        for y in 0..11 {
            for x in 0..11 {
                b[(y + 1) * 12 + x + 1] = a[y * 12 + x];
            }
        }
        let fa = &net.activations(&a).unwrap()[1];
        let fb = &net.activations(&b).unwrap()[1];
        for c in 0..2 {
            for y in 0..9 {
                for x in 0..9 {
                    assert_eq!(fa[c * 100 + y * 10 + x], fb[c * 100 + (y + 1) * 10 + x + 1]);
                }
            }
        }
    }

    #[test]
    fn full_scale_output_length() {
        let net = build_network(&ArchSpec::full_scale(3, 21), 0).unwrap();
        let patch = vec![0.1f32; 3 * 157 * 157];
        let row = net.predict(&patch).unwrap();
        assert_eq!(row.len(), 21);
        assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
    }
}
