//! Per-sample forward and backward kernels over flat channels-first buffers.

use num_traits::Float;

use super::arch::{LayerPlan, LayerSpec, Shape};

/// Activations retained from a forward pass for backpropagation.
pub(crate) struct Trace<T> {
    /// `inputs[i]` is the input of layer `i`; the last element is the network output.
    pub activations: Vec<Vec<T>>,
    /// Argmax input index per pooled output, for each maxpool layer (empty otherwise).
    pub argmax: Vec<Vec<usize>>,
}

/// Dot product with eight fixed lanes, so it vectorizes while the summation order stays fixed.
#[inline]
fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            lanes[k] = lanes[k] + x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail = tail + x * y;
    }
    let pairs = [lanes[0] + lanes[4], lanes[1] + lanes[5], lanes[2] + lanes[6], lanes[3] + lanes[7]];
    (pairs[0] + pairs[2]) + (pairs[1] + pairs[3]) + tail
}

/// `out[j] += dot(x, row j)` for consecutive rows of `m`, four rows per pass.
fn dot_rows<T: Float>(x: &[T], m: &[T], stride: usize, out: &mut [T]) {
    let n = x.len();
    let body = n - n % 8;
    let mut j = 0;
    while j + 4 <= out.len() {
        let rows: [&[T]; 4] = std::array::from_fn(|r| &m[(j + r) * stride..][..n]);
        let mut lanes = [[T::zero(); 8]; 4];
        for base in (0..body).step_by(8) {
            let xs = &x[base..base + 8];
            for r in 0..4 {
                let row = &rows[r][base..base + 8];
                for k in 0..8 {
                    lanes[r][k] = lanes[r][k] + xs[k] * row[k];
                }
            }
        }
        for r in 0..4 {
            let l = lanes[r];
            let mut acc = ((l[0] + l[4]) + (l[2] + l[6])) + ((l[1] + l[5]) + (l[3] + l[7]));
            for i in body..n {
                acc = acc + x[i] * rows[r][i];
            }
            out[j + r] = out[j + r] + acc;
        }
        j += 4;
    }
    while j < out.len() {
        out[j] = out[j] + dot(x, &m[j * stride..][..n]);
        j += 1;
    }
}

/// Output column range whose taps stay inside the input for kernel offset `k`.
#[inline]
fn valid_range(k: usize, pad: usize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    // need 0 <= o*stride + k - pad < in_len
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let hi = if in_len + pad > k { (in_len + pad - k - 1) / stride + 1 } else { 0 };
    (lo.min(out_len), hi.min(out_len))
}

/// Unfolds the input into a `(in_channels·k·k) × (out_h·out_w)` matrix, zeros where padded.
fn im2col<T: Float>(is: Shape, os: Shape, kernel: usize, stride: usize, pad: usize, input: &[T]) -> Vec<T> {
    let hw = os.height * os.width;
    let mut cols = vec![T::zero(); is.channels * kernel * kernel * hw];
    for ic in 0..is.channels {
        let in_plane = &input[ic * is.height * is.width..(ic + 1) * is.height * is.width];
        for ky in 0..kernel {
            let (oy0, oy1) = valid_range(ky, pad, stride, is.height, os.height);
            for kx in 0..kernel {
                let (ox0, ox1) = valid_range(kx, pad, stride, is.width, os.width);
                let row = &mut cols[((ic * kernel + ky) * kernel + kx) * hw..][..hw];
                for oy in oy0..oy1 {
                    let iy = oy * stride + ky - pad;
                    let in_row = &in_plane[iy * is.width..(iy + 1) * is.width];
                    let dst = &mut row[oy * os.width..(oy + 1) * os.width];
                    if stride == 1 {
                        let ix0 = ox0 + kx - pad;
                        dst[ox0..ox1].copy_from_slice(&in_row[ix0..ix0 + (ox1 - ox0)]);
                    } else {
                        for ox in ox0..ox1 {
                            dst[ox] = in_row[ox * stride + kx - pad];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adds an unfolded gradient matrix back onto the input positions it was read from.
fn col2im<T: Float>(is: Shape, os: Shape, kernel: usize, stride: usize, pad: usize, cols: &[T], dinput: &mut [T]) {
    let hw = os.height * os.width;
    for ic in 0..is.channels {
        let in_plane = &mut dinput[ic * is.height * is.width..(ic + 1) * is.height * is.width];
        for ky in 0..kernel {
            let (oy0, oy1) = valid_range(ky, pad, stride, is.height, os.height);
            for kx in 0..kernel {
                let (ox0, ox1) = valid_range(kx, pad, stride, is.width, os.width);
                let row = &cols[((ic * kernel + ky) * kernel + kx) * hw..][..hw];
                for oy in oy0..oy1 {
                    let iy = oy * stride + ky - pad;
                    let src = &row[oy * os.width..(oy + 1) * os.width];
                    let in_row = &mut in_plane[iy * is.width..(iy + 1) * is.width];
                    for ox in ox0..ox1 {
                        let ix = ox * stride + kx - pad;
                        in_row[ix] = in_row[ix] + src[ox];
                    }
                }
            }
        }
    }
}

/// `y += Σ_j a[j]·x[j]` over row-major rows of length `y.len()` starting at `x`,
/// four rows per pass so `y` is loaded and stored once per four multiply-adds.
fn axpy_rows<T: Float>(a: &[T], x: &[T], stride: usize, y: &mut [T]) {
    let n = y.len();
    let mut quads = a.chunks_exact(4);
    let mut j = 0;
    for w in quads.by_ref() {
        let (x0, x1, x2, x3) = (
            &x[j * stride..][..n],
            &x[(j + 1) * stride..][..n],
            &x[(j + 2) * stride..][..n],
            &x[(j + 3) * stride..][..n],
        );
        for i in 0..n {
            y[i] = y[i] + ((w[0] * x0[i] + w[1] * x1[i]) + (w[2] * x2[i] + w[3] * x3[i]));
        }
        j += 4;
    }
    for &w in quads.remainder() {
        for (yi, &xi) in y.iter_mut().zip(&x[j * stride..][..n]) {
            *yi = *yi + w * xi;
        }
        j += 1;
    }
}

fn conv_forward<T: Float>(
    params: &[T],
    plan: &LayerPlan,
    kernel: usize,
    stride: usize,
    pad: usize,
    input: &[T],
    out: &mut [T],
) {
    let (is, os) = (plan.input, plan.output);
    let weights = &params[plan.offset..plan.offset + plan.weight_count];
    let bias = &params[plan.offset + plan.weight_count..plan.offset + plan.param_count()];
    let hw = os.height * os.width;
    let taps = is.channels * kernel * kernel;
    let cols = im2col(is, os, kernel, stride, pad, input);
    for oc in 0..os.channels {
        let out_plane = &mut out[oc * hw..(oc + 1) * hw];
        out_plane.fill(bias[oc]);
        axpy_rows(&weights[oc * taps..(oc + 1) * taps], &cols, hw, out_plane);
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Float>(
    params: &[T],
    plan: &LayerPlan,
    kernel: usize,
    stride: usize,
    pad: usize,
    input: &[T],
    dout: &[T],
    grads: &mut [T],
    dinput: Option<&mut [T]>,
) {
    let (is, os) = (plan.input, plan.output);
    let weights = &params[plan.offset..plan.offset + plan.weight_count];
    let (gw, gb) = grads[plan.offset..plan.offset + plan.param_count()].split_at_mut(plan.weight_count);
    let hw = os.height * os.width;
    let taps = is.channels * kernel * kernel;
    let cols = im2col(is, os, kernel, stride, pad, input);
    for oc in 0..os.channels {
        let d_plane = &dout[oc * hw..(oc + 1) * hw];
        gb[oc] = gb[oc] + d_plane.iter().fold(T::zero(), |a, &b| a + b);
        dot_rows(d_plane, &cols, hw, &mut gw[oc * taps..(oc + 1) * taps]);
    }
    if let Some(di) = dinput {
        let mut dcols = vec![T::zero(); taps * hw];
        let mut column = vec![T::zero(); os.channels];
        for t in 0..taps {
            for (oc, c) in column.iter_mut().enumerate() {
                *c = weights[oc * taps + t];
            }
            axpy_rows(&column, dout, hw, &mut dcols[t * hw..(t + 1) * hw]);
        }
        col2im(is, os, kernel, stride, pad, &dcols, di);
    }
}

fn maxpool_forward<T: Float>(is: Shape, os: Shape, window: usize, stride: usize, input: &[T], out: &mut [T], argmax: &mut Vec<usize>) {
    argmax.clear();
    for c in 0..os.channels {
        for oy in 0..os.height {
            for ox in 0..os.width {
                let mut best = c * is.height * is.width + oy * stride * is.width + ox * stride;
                for wy in 0..window {
                    for wx in 0..window {
                        let idx = c * is.height * is.width + (oy * stride + wy) * is.width + ox * stride + wx;
                        // strict comparison: ties keep the first index in scan order
                        if input[idx] > input[best] {
                            best = idx;
                        }
                    }
                }
                out[(c * os.height + oy) * os.width + ox] = input[best];
                argmax.push(best);
            }
        }
    }
}

fn fc_forward<T: Float>(params: &[T], plan: &LayerPlan, input: &[T], out: &mut [T]) {
    let n_in = plan.input.len();
    let weights = &params[plan.offset..plan.offset + plan.weight_count];
    let bias = &params[plan.offset + plan.weight_count..plan.offset + plan.param_count()];
    for (o, (row, &b)) in out.iter_mut().zip(weights.chunks_exact(n_in).zip(bias)) {
        *o = b + dot(row, input);
    }
}

fn fc_backward<T: Float>(params: &[T], plan: &LayerPlan, input: &[T], dout: &[T], grads: &mut [T], dinput: Option<&mut [T]>) {
    let n_in = plan.input.len();
    let weights = &params[plan.offset..plan.offset + plan.weight_count];
    let (gw, gb) = grads[plan.offset..plan.offset + plan.param_count()].split_at_mut(plan.weight_count);
    for (o, &d) in dout.iter().enumerate() {
        gb[o] = gb[o] + d;
        if d == T::zero() {
            continue;
        }
        for (g, &x) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
            *g = *g + d * x;
        }
    }
    if let Some(di) = dinput {
        for (o, &d) in dout.iter().enumerate() {
            if d == T::zero() {
                continue;
            }
            for (g, &w) in di.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                *g = *g + w * d;
            }
        }
    }
}

/// Numerically stable softmax.
pub(crate) fn softmax<T: Float>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// Runs one sample through every layer except the softmax, returning logits and the trace.
pub(crate) fn forward_sample<T: Float>(plans: &[LayerPlan], params: &[T], input: Vec<T>) -> Trace<T> {
    let mut activations = Vec::with_capacity(plans.len() + 1);
    let mut argmax = Vec::with_capacity(plans.len());
    activations.push(input);
    for plan in plans {
        let input = activations.last().unwrap();
        let mut out = vec![T::zero(); plan.output.len()];
        let mut idx = Vec::new();
        match plan.spec {
            LayerSpec::Conv { kernel, stride, padding, .. } => {
                conv_forward(params, plan, kernel, stride, padding, input, &mut out)
            }
            LayerSpec::Maxpool { window, stride } => {
                maxpool_forward(plan.input, plan.output, window, stride, input, &mut out, &mut idx)
            }
            LayerSpec::Relu => {
                for (o, &x) in out.iter_mut().zip(input) {
                    *o = if x > T::zero() { x } else { T::zero() };
                }
            }
            LayerSpec::FullyConnected { .. } => fc_forward(params, plan, input, &mut out),
            // logits pass through; the loss applies softmax
            LayerSpec::SoftmaxOutput => out.copy_from_slice(input),
        }
        activations.push(out);
        argmax.push(idx);
    }
    Trace { activations, argmax }
}

/// Accumulates parameter gradients for one sample given d(loss)/d(logits).
pub(crate) fn backward_sample<T: Float>(plans: &[LayerPlan], params: &[T], trace: &Trace<T>, dlogits: Vec<T>, grads: &mut [T]) {
    let mut delta = dlogits;
    for (i, plan) in plans.iter().enumerate().rev() {
        let input = &trace.activations[i];
        // the first layer's input gradient is never needed
        let need_input_grad = i > 0;
        let mut dinput = if need_input_grad { vec![T::zero(); plan.input.len()] } else { Vec::new() };
        match plan.spec {
            LayerSpec::Conv { kernel, stride, padding, .. } => conv_backward(
                params,
                plan,
                kernel,
                stride,
                padding,
                input,
                &delta,
                grads,
                need_input_grad.then_some(dinput.as_mut_slice()),
            ),
            LayerSpec::Maxpool { .. } => {
                if need_input_grad {
                    for (&src, &d) in trace.argmax[i].iter().zip(&delta) {
                        dinput[src] = dinput[src] + d;
                    }
                }
            }
            LayerSpec::Relu => {
                if need_input_grad {
                    for ((g, &x), &d) in dinput.iter_mut().zip(input).zip(&delta) {
                        *g = if x > T::zero() { d } else { T::zero() };
                    }
                }
            }
            LayerSpec::FullyConnected { .. } => {
                fc_backward(params, plan, input, &delta, grads, need_input_grad.then_some(dinput.as_mut_slice()))
            }
            LayerSpec::SoftmaxOutput => {
                if need_input_grad {
                    dinput.copy_from_slice(&delta);
                }
            }
        }
        delta = dinput;
    }
}
