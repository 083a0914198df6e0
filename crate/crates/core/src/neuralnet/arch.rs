use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channels-first activation shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv { out_channels: usize, kernel: usize, stride: usize, padding: usize },
    Maxpool { window: usize, stride: usize },
    Relu,
    FullyConnected {
        width: usize,
        /// Expected flattened input length; checked at build time when given.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        inputs: Option<usize>,
    },
    SoftmaxOutput,
}

impl LayerSpec {
    pub fn fc(width: usize) -> Self {
        LayerSpec::FullyConnected { width, inputs: None }
    }

    pub fn conv(out_channels: usize, kernel: usize, padding: usize) -> Self {
        LayerSpec::Conv { out_channels, kernel, stride: 1, padding }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
}

/// A layer with resolved shapes and its slice of the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerPlan {
    pub spec: LayerSpec,
    pub input: Shape,
    pub output: Shape,
    /// Offset of the weights in the flat parameter vector; biases follow them.
    pub offset: usize,
    pub weight_count: usize,
    pub bias_count: usize,
}

impl LayerPlan {
    pub fn param_count(&self) -> usize {
        self.weight_count + self.bias_count
    }
}

impl ArchSpec {
    /// Five conv layers, 3-stride pools after conv2 and conv5, two 1000-wide FC layers,
    /// on 157×157 patches.
    pub fn full_scale(channels: usize, num_classes: usize) -> Self {
        use LayerSpec::*;
        Self {
            input: Shape::new(channels, 157, 157),
            layers: vec![
                LayerSpec::conv(32, 5, 2), Relu,
                LayerSpec::conv(64, 3, 1), Relu,
                Maxpool { window: 3, stride: 3 },
                LayerSpec::conv(96, 3, 1), Relu,
                LayerSpec::conv(96, 3, 1), Relu,
                LayerSpec::conv(64, 3, 1), Relu,
                Maxpool { window: 3, stride: 3 },
                LayerSpec::fc(1000), Relu,
                LayerSpec::fc(1000), Relu,
                LayerSpec::fc(num_classes),
                SoftmaxOutput,
            ],
            num_classes,
        }
    }

    /// The same topology on 32×32 patches with CPU-sized widths.
    pub fn desk_scale(channels: usize, num_classes: usize) -> Self {
        use LayerSpec::*;
        Self {
            input: Shape::new(channels, 32, 32),
            layers: vec![
                LayerSpec::conv(16, 3, 1), Relu,
                LayerSpec::conv(32, 3, 1), Relu,
                Maxpool { window: 3, stride: 3 },
                LayerSpec::conv(32, 3, 1), Relu,
                LayerSpec::conv(32, 3, 1), Relu,
                LayerSpec::conv(32, 3, 1), Relu,
                Maxpool { window: 3, stride: 3 },
                LayerSpec::fc(128), Relu,
                LayerSpec::fc(128), Relu,
                LayerSpec::fc(num_classes),
                SoftmaxOutput,
            ],
            num_classes,
        }
    }

    /// Resolves every layer's shapes and parameter slice.
    pub fn plan(&self) -> Result<Vec<LayerPlan>> {
        let mismatch = |i: usize, msg: String| Error::ShapeMismatch(format!("layer {i}: {msg}"));
        if self.input.is_empty() {
            return Err(Error::ShapeMismatch("empty input shape".into()));
        }
        if self.num_classes == 0 {
            return Err(Error::ShapeMismatch("num_classes must be positive".into()));
        }
        let mut shape = self.input;
        let mut offset = 0;
        let mut plans = Vec::with_capacity(self.layers.len());
        for (i, spec) in self.layers.iter().enumerate() {
            let (output, weight_count, bias_count) = match *spec {
                LayerSpec::Conv { out_channels, kernel, stride, padding } => {
                    if out_channels == 0 || kernel == 0 || stride == 0 {
                        return Err(mismatch(i, "conv dimensions must be positive".into()));
                    }
                    if shape.height + 2 * padding < kernel || shape.width + 2 * padding < kernel {
                        return Err(mismatch(i, format!("kernel {kernel} larger than padded input {shape:?}")));
                    }
                    let out = Shape::new(
                        out_channels,
                        (shape.height + 2 * padding - kernel) / stride + 1,
                        (shape.width + 2 * padding - kernel) / stride + 1,
                    );
                    (out, out_channels * shape.channels * kernel * kernel, out_channels)
                }
                LayerSpec::Maxpool { window, stride } => {
                    if window == 0 || stride == 0 {
                        return Err(mismatch(i, "pool dimensions must be positive".into()));
                    }
                    if shape.height < window || shape.width < window {
                        return Err(mismatch(i, format!("pool window {window} larger than input {shape:?}")));
                    }
                    let out = Shape::new(
                        shape.channels,
                        (shape.height - window) / stride + 1,
                        (shape.width - window) / stride + 1,
                    );
                    (out, 0, 0)
                }
                LayerSpec::Relu => (shape, 0, 0),
                LayerSpec::FullyConnected { width, inputs } => {
                    if width == 0 {
                        return Err(mismatch(i, "fully connected width must be positive".into()));
                    }
                    if let Some(expected) = inputs.filter(|&n| n != shape.len()) {
                        return Err(mismatch(
                            i,
                            format!("fully connected expects {expected} inputs, previous layer emits {}", shape.len()),
                        ));
                    }
                    (Shape::new(width, 1, 1), width * shape.len(), width)
                }
                LayerSpec::SoftmaxOutput => {
                    if i + 1 != self.layers.len() {
                        return Err(mismatch(i, "softmax output must be the last layer".into()));
                    }
                    (shape, 0, 0)
                }
            };
            plans.push(LayerPlan { spec: spec.clone(), input: shape, output, offset, weight_count, bias_count });
            offset += weight_count + bias_count;
            shape = output;
        }
        match self.layers.last() {
            Some(LayerSpec::SoftmaxOutput) => {}
            _ => return Err(Error::ShapeMismatch("architecture must end with softmax_output".into())),
        }
        if shape.len() != self.num_classes {
            return Err(Error::ShapeMismatch(format!(
                "final layer emits {} values, expected {} classes",
                shape.len(),
                self.num_classes
            )));
        }
        Ok(plans)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.plan()?.iter().map(LayerPlan::param_count).sum())
    }
}
