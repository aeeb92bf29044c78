//! A small differentiable 1D CNN classifier.
//!
//! The layer vocabulary is fixed (`Conv1d`, `Relu`, `MaxPool`,
//! `GlobalAveragePool`, `Dense`) and backpropagation is written out per
//! layer, which keeps gradients exact with respect to both the parameters
//! (for training) and the input signal (for attacks).
//!
//! Conventions that make gradients deterministic and checkable against
//! finite differences: the ReLU subgradient at 0 is 0, and max-pool ties
//! route the gradient to the earliest index.

mod weights;

pub use weights::{FORMAT_VERSION, MAGIC};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, RhythmClass, Signal};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Dense row-major tensor of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::Config(format!(
                "tensor shape {shape:?} needs {count} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let count = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; count],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// One layer of the fixed vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv1d {
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
    },
    Relu,
    MaxPool {
        width: usize,
    },
    GlobalAveragePool,
    Dense {
        out_features: usize,
    },
}

/// Architecture description. Shapes are chain-checked up front so forward
/// passes cannot fail on geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<Layer>,
    pub input_length: usize,
    pub n_classes: usize,
    /// Fixed multiplier applied to the raw signal before the first layer.
    /// Raw single-lead amplitudes are around a hundred; this brings them to
    /// order one so training behaves with plain SGD.
    pub input_scale: f64,
}

/// Activation shape while walking the layer chain.
#[derive(Debug, Clone, Copy, PartialEq)]
enum ShapeState {
    Map { channels: usize, len: usize },
    Flat(usize),
}

impl ShapeState {
    fn flat_len(self) -> usize {
        match self {
            ShapeState::Map { channels, len } => channels * len,
            ShapeState::Flat(n) => n,
        }
    }
}

impl ModelSpec {
    /// Stack of strided conv+relu blocks followed by global average
    /// pooling and a dense classification head.
    pub fn conv_stack(
        input_length: usize,
        channels: &[usize],
        kernel_size: usize,
        stride: usize,
    ) -> Self {
        let mut layers = Vec::new();
        for &out_channels in channels {
            layers.push(Layer::Conv1d {
                out_channels,
                kernel_size,
                stride,
            });
            layers.push(Layer::Relu);
        }
        layers.push(Layer::GlobalAveragePool);
        layers.push(Layer::Dense { out_features: 4 });
        ModelSpec {
            layers,
            input_length,
            n_classes: 4,
            input_scale: 0.02,
        }
    }

    /// Default architecture: four conv blocks with kernel 7 and stride 2.
    /// Needs an input window of at least 187 samples.
    pub fn default_cnn(input_length: usize) -> Self {
        ModelSpec::conv_stack(input_length, &[8, 16, 32, 32], 7, 2)
    }

    pub fn validate(&self) -> Result<()> {
        self.state_chain().map(|_| ())
    }

    /// Shape of the activation entering each layer, plus the final output.
    fn state_chain(&self) -> Result<Vec<ShapeState>> {
        if self.n_classes != 4 {
            return Err(Error::Config(format!(
                "n_classes must be 4, got {}",
                self.n_classes
            )));
        }
        if self.input_length == 0 {
            return Err(Error::Config("input_length must be positive".into()));
        }
        if self.input_scale <= 0.0 || !self.input_scale.is_finite() {
            return Err(Error::Config(format!(
                "input_scale must be positive and finite, got {}",
                self.input_scale
            )));
        }
        let mut states = vec![ShapeState::Map {
            channels: 1,
            len: self.input_length,
        }];
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = *states.last().expect("non-empty");
            let next = match *layer {
                Layer::Conv1d {
                    out_channels,
                    kernel_size,
                    stride,
                } => {
                    let ShapeState::Map { len, .. } = cur else {
                        return Err(Error::Config(format!(
                            "layer {i}: conv1d needs a channel map input"
                        )));
                    };
                    if out_channels == 0 || kernel_size == 0 || stride == 0 {
                        return Err(Error::Config(format!(
                            "layer {i}: conv1d arguments must be positive"
                        )));
                    }
                    if len < kernel_size {
                        return Err(Error::Config(format!(
                            "layer {i}: input length {len} shorter than kernel {kernel_size}"
                        )));
                    }
                    ShapeState::Map {
                        channels: out_channels,
                        len: (len - kernel_size) / stride + 1,
                    }
                }
                Layer::Relu => cur,
                Layer::MaxPool { width } => {
                    let ShapeState::Map { channels, len } = cur else {
                        return Err(Error::Config(format!(
                            "layer {i}: max-pool needs a channel map input"
                        )));
                    };
                    if width == 0 || len < width {
                        return Err(Error::Config(format!(
                            "layer {i}: max-pool width {width} does not fit length {len}"
                        )));
                    }
                    ShapeState::Map {
                        channels,
                        len: len / width,
                    }
                }
                Layer::GlobalAveragePool => {
                    let ShapeState::Map { channels, .. } = cur else {
                        return Err(Error::Config(format!(
                            "layer {i}: global average pool needs a channel map input"
                        )));
                    };
                    ShapeState::Flat(channels)
                }
                Layer::Dense { out_features } => {
                    if out_features == 0 {
                        return Err(Error::Config(format!(
                            "layer {i}: dense out_features must be positive"
                        )));
                    }
                    ShapeState::Flat(out_features)
                }
            };
            states.push(next);
        }
        match states.last() {
            Some(ShapeState::Flat(n)) if *n == self.n_classes => Ok(states),
            other => Err(Error::Config(format!(
                "model must end in {} logits, got {other:?}",
                self.n_classes
            ))),
        }
    }
}

/// Weight and bias of one parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// All parameters, indexed by layer position (None for stateless layers).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<Option<LayerParams>>,
}

impl ModelParams {
    /// Seeded uniform initialization in +-sqrt(6 / (fan_in + fan_out)),
    /// zero biases.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let states = spec.state_chain()?;
        let mut rng = Rng::derive(seed, "param-init");
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            let entry = match *layer {
                Layer::Conv1d {
                    out_channels,
                    kernel_size,
                    ..
                } => {
                    let ShapeState::Map { channels: c_in, .. } = states[i] else {
                        unreachable!("validated");
                    };
                    let fan_in = c_in * kernel_size;
                    let fan_out = out_channels * kernel_size;
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let weight = Tensor {
                        shape: vec![out_channels, c_in, kernel_size],
                        data: (0..out_channels * c_in * kernel_size)
                            .map(|_| rng.uniform(-bound, bound))
                            .collect(),
                    };
                    Some(LayerParams {
                        weight,
                        bias: Tensor::zeros(vec![out_channels]),
                    })
                }
                Layer::Dense { out_features } => {
                    let n_in = states[i].flat_len();
                    let bound = (6.0 / (n_in + out_features) as f64).sqrt();
                    let weight = Tensor {
                        shape: vec![out_features, n_in],
                        data: (0..out_features * n_in)
                            .map(|_| rng.uniform(-bound, bound))
                            .collect(),
                    };
                    Some(LayerParams {
                        weight,
                        bias: Tensor::zeros(vec![out_features]),
                    })
                }
                Layer::Relu | Layer::MaxPool { .. } | Layer::GlobalAveragePool => None,
            };
            layers.push(entry);
        }
        Ok(ModelParams { layers })
    }

    /// Zero parameters with the same shapes (used for gradients).
    pub fn zeros_like(spec: &ModelSpec) -> Result<Self> {
        let mut params = ModelParams::init(spec, 0)?;
        for entry in params.layers.iter_mut().flatten() {
            entry.weight.data.iter_mut().for_each(|v| *v = 0.0);
            entry.bias.data.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(params)
    }

    fn check_against(&self, spec: &ModelSpec) -> Result<()> {
        let states = spec.state_chain()?;
        if self.layers.len() != spec.layers.len() {
            return Err(Error::Config(format!(
                "params cover {} layers, spec has {}",
                self.layers.len(),
                spec.layers.len()
            )));
        }
        for (i, (layer, entry)) in spec.layers.iter().zip(&self.layers).enumerate() {
            let expected: Option<(Vec<usize>, Vec<usize>)> = match *layer {
                Layer::Conv1d {
                    out_channels,
                    kernel_size,
                    ..
                } => {
                    let ShapeState::Map { channels: c_in, .. } = states[i] else {
                        unreachable!("validated");
                    };
                    Some((vec![out_channels, c_in, kernel_size], vec![out_channels]))
                }
                Layer::Dense { out_features } => {
                    Some((vec![out_features, states[i].flat_len()], vec![out_features]))
                }
                _ => None,
            };
            match (expected, entry) {
                (None, None) => {}
                (Some((w, b)), Some(p)) => {
                    if p.weight.shape() != w.as_slice() || p.bias.shape() != b.as_slice() {
                        return Err(Error::Config(format!(
                            "layer {i}: parameter shapes {:?}/{:?} do not match spec {w:?}/{b:?}",
                            p.weight.shape(),
                            p.bias.shape()
                        )));
                    }
                    if !p.weight.is_finite() || !p.bias.is_finite() {
                        return Err(Error::Config(format!(
                            "layer {i}: non-finite parameter value"
                        )));
                    }
                }
                (None, Some(_)) => {
                    return Err(Error::Config(format!(
                        "layer {i}: unexpected parameters for a stateless layer"
                    )))
                }
                (Some(_), None) => {
                    return Err(Error::Config(format!("layer {i}: missing parameters")))
                }
            }
        }
        Ok(())
    }
}

/// Per-layer activations cached by one forward pass. `activation(0)` is the
/// scaled model input; `activation(i + 1)` is the output of layer `i`.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    activations: Vec<Tensor>,
}

impl ForwardTrace {
    pub fn activation(&self, i: usize) -> &Tensor {
        &self.activations[i]
    }

    pub fn logits(&self) -> &Tensor {
        self.activations.last().expect("non-empty trace")
    }

    pub fn layer_count(&self) -> usize {
        self.activations.len() - 1
    }
}

/// Class decision with its softmax probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: RhythmClass,
    pub confidence: f64,
}

/// Softmax probabilities (shift-invariant, sums to 1).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of `softmax(logits)` against the true class.
pub fn cross_entropy(logits: &[f64], y: RhythmClass) -> Result<f64> {
    if logits.len() != 4 {
        return Err(Error::Config(format!(
            "expected 4 logits, got {}",
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    Ok(max + sum.ln() - logits[y.index()])
}

/// Gradient of [`cross_entropy`] with respect to the logits:
/// `softmax(logits) - onehot(y)`.
pub fn cross_entropy_grad(logits: &[f64], y: RhythmClass) -> Result<Vec<f64>> {
    if logits.len() != 4 {
        return Err(Error::Config(format!(
            "expected 4 logits, got {}",
            logits.len()
        )));
    }
    let mut g = softmax(logits);
    g[y.index()] -= 1.0;
    Ok(g)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// A spec paired with matching parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: ModelParams,
}

impl Model {
    pub fn new(spec: ModelSpec, params: ModelParams) -> Result<Self> {
        params.check_against(&spec)?;
        Ok(Model { spec, params })
    }

    /// Fresh model with seeded initialization.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        let params = ModelParams::init(&spec, seed)?;
        Ok(Model { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    /// Pad with zeros / truncate at the tail to the model window. Raw units.
    pub fn prepare_input(&self, samples: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.input_length];
        let n = samples.len().min(self.spec.input_length);
        out[..n].copy_from_slice(&samples[..n]);
        out
    }

    pub fn forward(&self, x: &Signal) -> Result<(Tensor, ForwardTrace)> {
        self.forward_prepared(&self.prepare_input(x.samples()))
    }

    /// Forward pass on an already-prepared window of raw samples.
    pub fn forward_prepared(&self, prepared: &[f64]) -> Result<(Tensor, ForwardTrace)> {
        if prepared.len() != self.spec.input_length {
            return Err(Error::Config(format!(
                "prepared input has {} samples, model window is {}",
                prepared.len(),
                self.spec.input_length
            )));
        }
        let scaled: Vec<f64> = prepared.iter().map(|v| v * self.spec.input_scale).collect();
        let mut activations = vec![Tensor {
            shape: vec![1, self.spec.input_length],
            data: scaled,
        }];
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let input = activations.last().expect("non-empty");
            let output = self.layer_forward(i, layer, input)?;
            activations.push(output);
        }
        let logits = activations.last().expect("non-empty").clone();
        Ok((logits, ForwardTrace { activations }))
    }

    fn layer_forward(&self, index: usize, layer: &Layer, input: &Tensor) -> Result<Tensor> {
        match *layer {
            Layer::Conv1d {
                out_channels,
                kernel_size,
                stride,
            } => {
                let (c_in, len) = map_shape(input, index)?;
                let p = self.params.layers[index]
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("layer {index}: missing parameters")))?;
                let l_out = (len - kernel_size) / stride + 1;
                let mut out = vec![0.0; out_channels * l_out];
                let w = p.weight.data();
                let b = p.bias.data();
                for o in 0..out_channels {
                    let w_row = &w[o * c_in * kernel_size..(o + 1) * c_in * kernel_size];
                    for t in 0..l_out {
                        let base = t * stride;
                        let mut acc = b[o];
                        for ci in 0..c_in {
                            let xs = &input.data()[ci * len + base..ci * len + base + kernel_size];
                            let ws = &w_row[ci * kernel_size..(ci + 1) * kernel_size];
                            acc += dot(ws, xs);
                        }
                        out[o * l_out + t] = acc;
                    }
                }
                Ok(Tensor {
                    shape: vec![out_channels, l_out],
                    data: out,
                })
            }
            Layer::Relu => Ok(Tensor {
                shape: input.shape.clone(),
                data: input.data.iter().map(|v| v.max(0.0)).collect(),
            }),
            Layer::MaxPool { width } => {
                let (channels, len) = map_shape(input, index)?;
                let l_out = len / width;
                let mut out = vec![0.0; channels * l_out];
                for c in 0..channels {
                    for t in 0..l_out {
                        let window = &input.data()[c * len + t * width..c * len + (t + 1) * width];
                        out[c * l_out + t] =
                            window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    }
                }
                Ok(Tensor {
                    shape: vec![channels, l_out],
                    data: out,
                })
            }
            Layer::GlobalAveragePool => {
                let (channels, len) = map_shape(input, index)?;
                let mut out = vec![0.0; channels];
                for (c, dst) in out.iter_mut().enumerate() {
                    *dst = input.data()[c * len..(c + 1) * len].iter().sum::<f64>() / len as f64;
                }
                Ok(Tensor {
                    shape: vec![channels],
                    data: out,
                })
            }
            Layer::Dense { out_features } => {
                let p = self.params.layers[index]
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("layer {index}: missing parameters")))?;
                let n_in = input.len();
                if p.weight.shape() != [out_features, n_in] {
                    return Err(Error::Config(format!(
                        "layer {index}: dense weight shape {:?} does not fit input of {n_in}",
                        p.weight.shape()
                    )));
                }
                let mut out = vec![0.0; out_features];
                for (o, dst) in out.iter_mut().enumerate() {
                    *dst = p.bias.data()[o]
                        + dot(&p.weight.data()[o * n_in..(o + 1) * n_in], input.data());
                }
                Ok(Tensor {
                    shape: vec![out_features],
                    data: out,
                })
            }
        }
    }

    /// Reverse pass. `d_logits` is the loss gradient at the logits; returns
    /// the gradient with respect to the raw input window and all parameters.
    fn backward(&self, trace: &ForwardTrace, d_logits: &[f64]) -> Result<(Vec<f64>, ModelParams)> {
        if trace.activations.len() != self.spec.layers.len() + 1 {
            return Err(Error::Config("trace does not match model depth".into()));
        }
        let mut grads = ModelParams::zeros_like(&self.spec)?;
        let mut d_out = d_logits.to_vec();
        for (index, layer) in self.spec.layers.iter().enumerate().rev() {
            let input = &trace.activations[index];
            let output = &trace.activations[index + 1];
            d_out = self.layer_backward(index, layer, input, output, &d_out, &mut grads)?;
        }
        // chain through the fixed input scaling
        for v in &mut d_out {
            *v *= self.spec.input_scale;
        }
        Ok((d_out, grads))
    }

    fn layer_backward(
        &self,
        index: usize,
        layer: &Layer,
        input: &Tensor,
        output: &Tensor,
        d_out: &[f64],
        grads: &mut ModelParams,
    ) -> Result<Vec<f64>> {
        match *layer {
            Layer::Conv1d {
                out_channels,
                kernel_size,
                stride,
            } => {
                let (c_in, len) = map_shape(input, index)?;
                let l_out = output.shape()[1];
                let p = self.params.layers[index]
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("layer {index}: missing parameters")))?;
                let g = grads.layers[index].as_mut().expect("same shapes");
                let w = p.weight.data();
                let mut d_in = vec![0.0; c_in * len];
                for o in 0..out_channels {
                    let w_row = &w[o * c_in * kernel_size..(o + 1) * c_in * kernel_size];
                    let gw_row =
                        &mut g.weight.data[o * c_in * kernel_size..(o + 1) * c_in * kernel_size];
                    for t in 0..l_out {
                        let d = d_out[o * l_out + t];
                        if d == 0.0 {
                            continue;
                        }
                        let base = t * stride;
                        g.bias.data[o] += d;
                        for ci in 0..c_in {
                            let xs = &input.data()[ci * len + base..ci * len + base + kernel_size];
                            let ws = &w_row[ci * kernel_size..(ci + 1) * kernel_size];
                            let gws = &mut gw_row[ci * kernel_size..(ci + 1) * kernel_size];
                            let dis = &mut d_in[ci * len + base..ci * len + base + kernel_size];
                            for j in 0..kernel_size {
                                gws[j] += d * xs[j];
                                dis[j] += d * ws[j];
                            }
                        }
                    }
                }
                Ok(d_in)
            }
            Layer::Relu => Ok(input
                .data()
                .iter()
                .zip(d_out)
                .map(|(x, d)| if *x > 0.0 { *d } else { 0.0 })
                .collect()),
            Layer::MaxPool { width } => {
                let (channels, len) = map_shape(input, index)?;
                let l_out = output.shape()[1];
                let mut d_in = vec![0.0; channels * len];
                for c in 0..channels {
                    for t in 0..l_out {
                        let window = &input.data()[c * len + t * width..c * len + (t + 1) * width];
                        let local = argmax(window); // earliest max wins ties
                        d_in[c * len + t * width + local] += d_out[c * l_out + t];
                    }
                }
                Ok(d_in)
            }
            Layer::GlobalAveragePool => {
                let (channels, len) = map_shape(input, index)?;
                let mut d_in = vec![0.0; channels * len];
                for c in 0..channels {
                    let share = d_out[c] / len as f64;
                    for v in &mut d_in[c * len..(c + 1) * len] {
                        *v = share;
                    }
                }
                Ok(d_in)
            }
            Layer::Dense { out_features } => {
                let n_in = input.len();
                let p = self.params.layers[index]
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("layer {index}: missing parameters")))?;
                let g = grads.layers[index].as_mut().expect("same shapes");
                let mut d_in = vec![0.0; n_in];
                debug_assert_eq!(d_out.len(), out_features);
                for (o, &d) in d_out.iter().enumerate() {
                    g.bias.data[o] += d;
                    let ws = &p.weight.data()[o * n_in..(o + 1) * n_in];
                    let gws = &mut g.weight.data[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        gws[i] += d * input.data()[i];
                        d_in[i] += d * ws[i];
                    }
                }
                Ok(d_in)
            }
        }
    }

    /// Loss of the model on one prepared window.
    pub fn loss_prepared(&self, prepared: &[f64], y: RhythmClass) -> Result<f64> {
        let (logits, _) = self.forward_prepared(prepared)?;
        cross_entropy(logits.data(), y)
    }

    /// Gradient of the loss with respect to the raw input window.
    pub fn grad_input(&self, x: &Signal, y: RhythmClass) -> Result<Tensor> {
        let (_, grad) = self.grad_input_prepared(&self.prepare_input(x.samples()), y)?;
        Ok(Tensor {
            shape: vec![1, self.spec.input_length],
            data: grad,
        })
    }

    /// Loss and raw-input gradient on a prepared window.
    pub fn grad_input_prepared(&self, prepared: &[f64], y: RhythmClass) -> Result<(f64, Vec<f64>)> {
        let (logits, trace) = self.forward_prepared(prepared)?;
        let loss = cross_entropy(logits.data(), y)?;
        let d_logits = cross_entropy_grad(logits.data(), y)?;
        let (d_input, _) = self.backward(&trace, &d_logits)?;
        Ok((loss, d_input))
    }

    /// Loss and parameter gradients on one example.
    pub fn grad_params(&self, x: &Signal, y: RhythmClass) -> Result<(f64, ModelParams)> {
        self.grad_params_prepared(&self.prepare_input(x.samples()), y)
    }

    pub fn grad_params_prepared(
        &self,
        prepared: &[f64],
        y: RhythmClass,
    ) -> Result<(f64, ModelParams)> {
        let (logits, trace) = self.forward_prepared(prepared)?;
        let loss = cross_entropy(logits.data(), y)?;
        let d_logits = cross_entropy_grad(logits.data(), y)?;
        let (_, grads) = self.backward(&trace, &d_logits)?;
        Ok((loss, grads))
    }

    /// Mean loss and mean parameter gradients over a batch.
    pub fn batch_gradients(&self, batch: &[(&[f64], RhythmClass)]) -> Result<(f64, ModelParams)> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let mut total = ModelParams::zeros_like(&self.spec)?;
        let mut loss_sum = 0.0;
        for (prepared, y) in batch {
            let (loss, grads) = self.grad_params_prepared(prepared, *y)?;
            loss_sum += loss;
            add_scaled(&mut total, &grads, 1.0);
        }
        let inv = 1.0 / batch.len() as f64;
        scale_params(&mut total, inv);
        Ok((loss_sum * inv, total))
    }

    pub fn predict(&self, x: &Signal) -> Result<Prediction> {
        self.predict_prepared(&self.prepare_input(x.samples()))
    }

    /// Argmax of softmax; ties break toward the lowest class index.
    pub fn predict_prepared(&self, prepared: &[f64]) -> Result<Prediction> {
        let (logits, _) = self.forward_prepared(prepared)?;
        let probs = softmax(logits.data());
        let best = argmax(&probs);
        Ok(Prediction {
            class: RhythmClass::from_index(best).expect("4 logits"),
            confidence: probs[best],
        })
    }

    /// Fingerprint of ReLU signs and max-pool argmax choices along one
    /// forward pass. Finite-difference checks use this to skip coordinates
    /// that sit next to a kink.
    pub fn activation_pattern(&self, prepared: &[f64]) -> Result<Vec<u32>> {
        let (_, trace) = self.forward_prepared(prepared)?;
        let mut pattern = Vec::new();
        for (index, layer) in self.spec.layers.iter().enumerate() {
            let input = &trace.activations[index];
            match *layer {
                Layer::Relu => {
                    for v in input.data() {
                        pattern.push(u32::from(*v > 0.0));
                    }
                }
                Layer::MaxPool { width } => {
                    let (channels, len) = map_shape(input, index)?;
                    for c in 0..channels {
                        for t in 0..len / width {
                            let window =
                                &input.data()[c * len + t * width..c * len + (t + 1) * width];
                            pattern.push(argmax(window) as u32);
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(pattern)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        weights::save(path, self)
    }

    pub fn load(path: &std::path::Path) -> Result<Model> {
        weights::load(path)
    }
}

fn map_shape(t: &Tensor, index: usize) -> Result<(usize, usize)> {
    match t.shape() {
        [c, l] => Ok((*c, *l)),
        other => Err(Error::Config(format!(
            "layer {index}: expected a [channels, len] input, got {other:?}"
        ))),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_scaled(dst: &mut ModelParams, src: &ModelParams, factor: f64) {
    for (d, s) in dst.layers.iter_mut().zip(&src.layers) {
        if let (Some(d), Some(s)) = (d.as_mut(), s.as_ref()) {
            for (dv, sv) in d.weight.data.iter_mut().zip(&s.weight.data) {
                *dv += factor * sv;
            }
            for (dv, sv) in d.bias.data.iter_mut().zip(&s.bias.data) {
                *dv += factor * sv;
            }
        }
    }
}

fn scale_params(p: &mut ModelParams, factor: f64) {
    for entry in p.layers.iter_mut().flatten() {
        entry.weight.data.iter_mut().for_each(|v| *v *= factor);
        entry.bias.data.iter_mut().for_each(|v| *v *= factor);
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.06,
            seed: 0,
        }
    }
}

/// Plain SGD over shuffled mini-batches. Deterministic under the seed.
pub fn train(spec: ModelSpec, data: &Dataset, cfg: &TrainConfig) -> Result<Model> {
    if data.is_empty() {
        return Err(Error::InvalidInput(
            "cannot train on an empty dataset".into(),
        ));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidInput("batch_size must be positive".into()));
    }
    let mut model = Model::init(spec, cfg.seed)?;
    let prepared: Vec<(Vec<f64>, RhythmClass)> = data
        .examples()
        .iter()
        .map(|ex| (model.prepare_input(ex.signal.samples()), ex.label))
        .collect();
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = Rng::derive(cfg.seed, &format!("epoch/{epoch}"));
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], RhythmClass)> = chunk
                .iter()
                .map(|&i| (prepared[i].0.as_slice(), prepared[i].1))
                .collect();
            let (loss, grads) = model.batch_gradients(&batch)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("non-finite batch loss {loss}"),
                });
            }
            add_scaled(&mut model.params, &grads, -cfg.learning_rate);
        }
    }
    Ok(model)
}

/// Fraction of `data` the model labels correctly.
pub fn accuracy(model: &Model, data: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    for ex in data.examples() {
        if model.predict(&ex.signal)?.class == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
