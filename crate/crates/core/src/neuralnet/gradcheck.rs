//! Central-difference verification of the analytic gradients, in double precision.

use rand::Rng;

use super::arch::{ArchSpec, LayerPlan, LayerSpec, Shape};
use super::network::{batch_gradient, build_network, Network};
use crate::error::{Error, Result};
use crate::seed;

pub const MAX_GRADCHECK_PARAMS: usize = 50_000;

/// Denominator floor for [`compare_gradients`]. Central differences at step 1e-5 carry
/// up to about 1e-10 of round-off, which would swamp the relative error of gradients
/// smaller than this.
pub const GRADIENT_FLOOR: f64 = 1e-5;

/// `max_i |a_i - n_i| / max(|a_i|, |n_i|, GRADIENT_FLOOR)`.
pub fn compare_gradients(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(GRADIENT_FLOOR))
        .fold(0.0, f64::max)
}

fn checked_inputs<P: AsRef<[f32]> + Sync>(net: &Network, batch: &[P], labels: &[usize]) -> Result<Vec<f64>> {
    if net.param_count() > MAX_GRADCHECK_PARAMS {
        return Err(Error::TooManyParameters(net.param_count()));
    }
    // validates shapes and labels
    super::network::checked_gradient(net, batch, labels)?;
    Ok(net.params().iter().map(|&w| w as f64).collect())
}

/// Analytic gradient computed in f64 from the network's parameters.
pub fn analytic_gradient<P: AsRef<[f32]> + Sync>(net: &Network, batch: &[P], labels: &[usize]) -> Result<Vec<f64>> {
    let params = checked_inputs(net, batch, labels)?;
    Ok(batch_gradient(net.plans(), &params, batch, labels).grads)
}

/// Central differences `(L(w + h) - L(w - h)) / 2h` for every parameter.
pub fn numeric_gradient<P: AsRef<[f32]> + Sync>(
    net: &Network,
    batch: &[P],
    labels: &[usize],
    step: f64,
) -> Result<Vec<f64>> {
    let mut params = checked_inputs(net, batch, labels)?;
    let plans: &[LayerPlan] = net.plans();
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + step;
        let plus = batch_gradient(plans, &params, batch, labels).loss;
        params[i] = orig - step;
        let minus = batch_gradient(plans, &params, batch, labels).loss;
        params[i] = orig;
        out.push((plus - minus) / (2.0 * step));
    }
    Ok(out)
}

/// Largest relative disagreement between analytic and numeric gradients.
pub fn grad_check<P: AsRef<[f32]> + Sync>(net: &Network, batch: &[P], labels: &[usize], step: f64) -> Result<f64> {
    let analytic = analytic_gradient(net, batch, labels)?;
    let numeric = numeric_gradient(net, batch, labels, step)?;
    Ok(compare_gradients(&analytic, &numeric))
}

/// A random small network with a batch to check it on.
#[derive(Clone, Debug)]
pub struct GradCheckCase {
    pub net: Network,
    pub batch: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
}

/// Smallest distance, over the batch, from any ReLU input to zero and from any
/// max-pool winner to its runner-up. Central differences are only meaningful when
/// this is well above the step.
pub fn kink_margin<P: AsRef<[f32]>>(net: &Network, batch: &[P]) -> Result<f64> {
    let mut margin = f64::INFINITY;
    for sample in batch {
        let acts = net.activations(sample.as_ref())?;
        for (plan, input) in net.plans().iter().zip(&acts) {
            match plan.spec {
                LayerSpec::Relu => {
                    margin = input.iter().fold(margin, |m, &x| m.min(x.abs() as f64));
                }
                LayerSpec::Maxpool { window, stride } => {
                    let (i, o) = (plan.input, plan.output);
                    for c in 0..o.channels {
                        for oy in 0..o.height {
                            for ox in 0..o.width {
                                let (mut best, mut second) = (f32::NEG_INFINITY, f32::NEG_INFINITY);
                                for dy in 0..window {
                                    for dx in 0..window {
                                        let (y, x) = (oy * stride + dy, ox * stride + dx);
                                        if y >= i.height || x >= i.width {
                                            continue;
                                        }
                                        let v = input[(c * i.height + y) * i.width + x];
                                        if v > best {
                                            (best, second) = (v, best);
                                        } else if v > second {
                                            second = v;
                                        }
                                    }
                                }
                                if second.is_finite() {
                                    margin = margin.min((best - second) as f64);
                                }
                            }
                        }
                    }
                }
                _ => {}
            }
        }
    }
    Ok(margin)
}

/// Cases closer than this to a kink are redrawn.
pub const MIN_KINK_MARGIN: f64 = 1e-2;

/// Conv, ReLU, max-pool, fully connected and softmax layers with random sizes,
/// strides and padding, plus a random batch. Cases with a ReLU input or max-pool
/// tie within [`MIN_KINK_MARGIN`] are redrawn from the same stream.
pub fn random_check_case(seed: u64) -> Result<GradCheckCase> {
    let mut rng = seed::rng(seed, &[seed::hash_str("gradcheck-case")]);
    loop {
        let case = draw_check_case(&mut rng)?;
        if kink_margin(&case.net, &case.batch)? >= MIN_KINK_MARGIN {
            return Ok(case);
        }
    }
}

fn draw_check_case(rng: &mut impl Rng) -> Result<GradCheckCase> {
    let channels = rng.random_range(1..=2);
    let side = rng.random_range(6..=9);
    let classes = rng.random_range(2..=4);
    let arch = ArchSpec {
        input: Shape::new(channels, side, side),
        layers: vec![
            LayerSpec::Conv { out_channels: rng.random_range(1..=3), kernel: 3, stride: rng.random_range(1..=2), padding: rng.random_range(0..=1) },
            LayerSpec::Relu,
            LayerSpec::Maxpool { window: 2, stride: rng.random_range(1..=2) },
            LayerSpec::fc(rng.random_range(3..=6)),
            LayerSpec::Relu,
            LayerSpec::fc(classes),
            LayerSpec::SoftmaxOutput,
        ],
        num_classes: classes,
    };
    let mut net = build_network(&arch, rng.random())?;
    // zero biases would put units exactly on ReLU kinks
    for w in net.params_mut().iter_mut().filter(|w| **w == 0.0) {
        *w = rng.random_range(-0.5..0.5);
    }
    let n = rng.random_range(1..=3);
    let batch = (0..n).map(|_| (0..arch.input.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Ok(GradCheckCase { net, batch, labels })
}
