use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::{col2im, conv_forward, conv_input_grad_cols, conv_param_grads, im2col, ConvSpec};
use super::Tensor;
use crate::error::{Error, Result};

pub const STANDARD_DROPOUT_RATE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv(ConvSpec),
    Dropout { rate: f64 },
}

impl LayerSpec {
    pub fn conv(kernel: usize, in_channels: usize, out_channels: usize) -> Self {
        LayerSpec::Conv(ConvSpec::square(kernel, in_channels, out_channels))
    }

    pub fn dropout(rate: f64) -> Self {
        LayerSpec::Dropout { rate }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// tanh(conv(x) + b); weights laid out `[(ky·kw + kx)·C_in + ci][co]`.
    Conv {
        spec: ConvSpec,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    /// Inverted dropout, identity in eval mode.
    Dropout { rate: f64 },
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv { spec, .. } => LayerSpec::Conv(*spec),
            Layer::Dropout { rate } => LayerSpec::Dropout { rate: *rate },
        }
    }
}

/// Parameter gradients, ordered like [`Model::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            tensors: model.params().iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.tensors
            .iter_mut()
            .flat_map(|t| t.iter_mut())
            .for_each(|x| *x *= factor);
    }

    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors.iter().flat_map(|t| t.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<Layer>,
}

struct ForwardCache {
    /// `activations[i]` is the input of layer `i`; the last entry is the output.
    activations: Vec<Vec<f64>>,
    /// Per-layer dropout multipliers (0 or `1/(1-rate)`), train mode only.
    masks: Vec<Option<Vec<f64>>>,
}

impl Model {
    /// Two-channel stripe input to one-channel configuration map:
    /// 2→4→16→32→drop→128→64→8→drop→4→1 with kernels 3,3,3,5,5,3,3,3.
    pub fn standard_architecture() -> Vec<LayerSpec> {
        vec![
            LayerSpec::conv(3, 2, 4),
            LayerSpec::conv(3, 4, 16),
            LayerSpec::conv(3, 16, 32),
            LayerSpec::dropout(STANDARD_DROPOUT_RATE),
            LayerSpec::conv(5, 32, 128),
            LayerSpec::conv(5, 128, 64),
            LayerSpec::conv(3, 64, 8),
            LayerSpec::dropout(STANDARD_DROPOUT_RATE),
            LayerSpec::conv(3, 8, 4),
            LayerSpec::conv(3, 4, 1),
        ]
    }

    pub fn standard(seed: u64) -> Self {
        Self::from_specs(&Self::standard_architecture(), seed).expect("standard architecture is valid")
    }

    /// Glorot-uniform weights and zero biases.
    pub fn from_specs(specs: &[LayerSpec], seed: u64) -> Result<Self> {
        validate_specs(specs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .iter()
            .map(|s| match *s {
                LayerSpec::Conv(spec) => {
                    let fan_in = spec.patch_len() as f64;
                    let fan_out = (spec.kernel_h * spec.kernel_w * spec.out_channels) as f64;
                    let limit = (6.0 / (fan_in + fan_out)).sqrt();
                    let weight = (0..spec.weight_len())
                        .map(|_| rng.gen_range(-limit..limit))
                        .collect();
                    Layer::Conv {
                        spec,
                        weight,
                        bias: vec![0.0; spec.out_channels],
                    }
                }
                LayerSpec::Dropout { rate } => Layer::Dropout { rate },
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(specs: &[LayerSpec]) -> Result<Self> {
        let mut model = Self::from_specs(specs, 0)?;
        for p in model.params_mut() {
            p.iter_mut().for_each(|x| *x = 0.0);
        }
        Ok(model)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(Layer::spec).collect();
        validate_specs(&specs)?;
        for layer in &layers {
            if let Layer::Conv { spec, weight, bias } = layer {
                if weight.len() != spec.weight_len() || bias.len() != spec.out_channels {
                    return Err(Error::dims(
                        &[spec.weight_len(), spec.out_channels],
                        &[weight.len(), bias.len()],
                    ));
                }
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn input_channels(&self) -> usize {
        self.convs().next().map(|s| s.in_channels).unwrap_or(0)
    }

    fn convs(&self) -> impl Iterator<Item = &ConvSpec> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Conv { spec, .. } => Some(spec),
            Layer::Dropout { .. } => None,
        })
    }

    pub fn max_kernel(&self) -> usize {
        self.convs()
            .map(|s| s.kernel_h.max(s.kernel_w))
            .max()
            .unwrap_or(1)
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Weight and bias of every conv layer, in layer order.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Layer::Conv { weight, bias, .. } = layer {
                out.push(weight.as_slice());
                out.push(bias.as_slice());
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if let Layer::Conv { weight, bias, .. } = layer {
                out.push(weight.as_mut_slice());
                out.push(bias.as_mut_slice());
            }
        }
        out
    }

    fn check_input(&self, input: &Tensor) -> Result<(usize, usize)> {
        let shape = input.shape();
        if shape.len() != 3 || shape[2] != self.input_channels() {
            return Err(Error::dims(&[0, 0, self.input_channels()], shape));
        }
        let (h, w) = (shape[0], shape[1]);
        let k = self.max_kernel();
        if h < k || w < k {
            return Err(Error::invalid(format!(
                "input {h}x{w} is smaller than the largest kernel {k}"
            )));
        }
        Ok((h, w))
    }

    fn forward_cached(&self, input: &Tensor, mode: Mode, seed: u64) -> Result<(ForwardCache, usize, usize)> {
        let mut scratch = Scratch::take();
        let result = self.forward_with(input, mode, seed, &mut scratch.cols);
        scratch.give_back();
        result
    }

    fn forward_with(
        &self,
        input: &Tensor,
        mode: Mode,
        seed: u64,
        cols: &mut Vec<f64>,
    ) -> Result<(ForwardCache, usize, usize)> {
        let (h, w) = self.check_input(input)?;
        let pixels = h * w;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut masks = Vec::with_capacity(self.layers.len());
        activations.push(input.data().to_vec());
        for layer in &self.layers {
            let x = activations.last().expect("input pushed");
            match layer {
                Layer::Conv { spec, weight, bias } => {
                    im2col(x, h, w, spec, cols);
                    let mut out = Vec::new();
                    conv_forward(cols, pixels, spec, weight, bias, &mut out);
                    out.iter_mut().for_each(|v| *v = v.tanh());
                    activations.push(out);
                    masks.push(None);
                }
                Layer::Dropout { rate } => match mode {
                    Mode::Eval => {
                        let out = x.clone();
                        activations.push(out);
                        masks.push(None);
                    }
                    Mode::Train => {
                        let keep_scale = 1.0 / (1.0 - rate);
                        let mask: Vec<f64> = (0..x.len())
                            .map(|_| if rng.gen::<f64>() < *rate { 0.0 } else { keep_scale })
                            .collect();
                        let out = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
                        activations.push(out);
                        masks.push(Some(mask));
                    }
                },
            }
        }
        Ok((ForwardCache { activations, masks }, h, w))
    }

    /// `H × W` output map. `seed` drives the dropout masks in train mode.
    pub fn forward(&self, input: &Tensor, mode: Mode, seed: u64) -> Result<Tensor> {
        let (mut cache, h, w) = self.forward_cached(input, mode, seed)?;
        let out = cache.activations.pop().expect("non-empty");
        if out.len() != h * w {
            return Err(Error::dims(&[h * w], &[out.len()]));
        }
        Tensor::new(vec![h, w], out)
    }

    /// MSE against `target` and its gradient with respect to every
    /// parameter. The same `seed` reproduces the forward pass's masks.
    pub fn loss_and_gradients(
        &self,
        input: &Tensor,
        target: &Tensor,
        mode: Mode,
        seed: u64,
    ) -> Result<(f64, Gradients)> {
        let (cache, h, w) = self.forward_cached(input, mode, seed)?;
        let pixels = h * w;
        let out = cache.activations.last().expect("non-empty");
        if target.len() != out.len() || target.shape()[..2] != [h, w] {
            return Err(Error::dims(&[h, w], target.shape()));
        }
        let numel = out.len() as f64;
        let loss = out
            .iter()
            .zip(target.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / numel;
        let mut grad: Vec<f64> = out
            .iter()
            .zip(target.data())
            .map(|(p, t)| 2.0 * (p - t) / numel)
            .collect();

        let mut grads = Gradients::zeros_like(self);
        // Parameter slots are assigned in layer order, two per conv.
        let mut slot = grads.tensors.len();
        let mut scratch = Scratch::take();
        let Scratch { cols, dcols } = &mut scratch;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            match layer {
                Layer::Conv { spec, weight, .. } => {
                    let y = &cache.activations[i + 1];
                    for (g, a) in grad.iter_mut().zip(y) {
                        *g *= 1.0 - a * a;
                    }
                    slot -= 2;
                    im2col(&cache.activations[i], h, w, spec, cols);
                    let (gw, gb) = grads.tensors.split_at_mut(slot + 1);
                    conv_param_grads(cols, pixels, spec, &grad, &mut gw[slot], &mut gb[0]);
                    if i > 0 {
                        conv_input_grad_cols(&grad, pixels, spec, weight, dcols);
                        let mut grad_in = vec![0.0; pixels * spec.in_channels];
                        col2im(dcols, h, w, spec, &mut grad_in);
                        grad = grad_in;
                    }
                }
                Layer::Dropout { .. } => {
                    if let Some(mask) = &cache.masks[i] {
                        for (g, m) in grad.iter_mut().zip(mask) {
                            *g *= m;
                        }
                    }
                }
            }
        }
        scratch.give_back();
        Ok((loss, grads))
    }

    pub fn backward(&self, input: &Tensor, target: &Tensor, mode: Mode, seed: u64) -> Result<Gradients> {
        Ok(self.loss_and_gradients(input, target, mode, seed)?.1)
    }
}

/// Per-thread patch matrices, kept between calls so the large buffers are
/// not returned to the allocator and faulted in again for every sample.
#[derive(Default)]
struct Scratch {
    cols: Vec<f64>,
    dcols: Vec<f64>,
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::default());
}

impl Scratch {
    fn take() -> Self {
        SCRATCH.with(|s| std::mem::take(&mut *s.borrow_mut()))
    }

    fn give_back(self) {
        SCRATCH.with(|s| *s.borrow_mut() = self);
    }
}

fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    let mut channels: Option<usize> = None;
    for s in specs {
        match *s {
            LayerSpec::Conv(spec) => {
                if spec.kernel_h == 0 || spec.kernel_w == 0 || spec.in_channels == 0 || spec.out_channels == 0
                {
                    return Err(Error::invalid(format!("degenerate conv layer {spec:?}")));
                }
                if spec.kernel_h % 2 == 0 || spec.kernel_w % 2 == 0 {
                    return Err(Error::invalid("same padding needs odd kernel sizes"));
                }
                if let Some(c) = channels {
                    if c != spec.in_channels {
                        return Err(Error::invalid(format!(
                            "layer expects {} input channels, previous layer produces {c}",
                            spec.in_channels
                        )));
                    }
                }
                channels = Some(spec.out_channels);
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
                }
            }
        }
    }
    match channels {
        None => Err(Error::invalid("model needs at least one conv layer")),
        Some(1) => Ok(()),
        Some(c) => Err(Error::invalid(format!(
            "final layer must have 1 channel, has {c}"
        ))),
    }
}

/// Mean of squared elementwise differences.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::dims(target.shape(), pred.shape()));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}
