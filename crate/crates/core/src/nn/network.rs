use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layer::{Cache, Conv2d, Dense, Layer};
use crate::error::{Error, Result};
use crate::image::ImageRgb;
use crate::tensor::Tensor;

/// Pre-softmax network outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Logits(Vec<f64>);

impl Logits {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest logit; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Softmax probabilities, computed stably.
    pub fn softmax(&self) -> Vec<f64> {
        let m = self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self.0.iter().map(|&v| (v - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }
}

/// Sequential CNN classifier taking a `[3, H, W]` image.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_shape: [usize; 3],
    layers: Vec<Layer>,
    labels: Vec<String>,
}

/// Activations recorded by a forward pass, enough to backpropagate.
#[derive(Debug)]
pub struct ForwardPass<'a> {
    net: &'a Network,
    inputs: Vec<Tensor>,
    caches: Vec<Cache>,
    logits: Logits,
}

impl Network {
    /// Validates that the layer stack chains from `input_shape` to a vector
    /// with one entry per label.
    pub fn new(input_shape: [usize; 3], layers: Vec<Layer>, labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("network needs at least one class".into()));
        }
        if input_shape[0] != 3 || input_shape[1] == 0 || input_shape[2] == 0 {
            return Err(Error::Shape(format!("unsupported input shape {input_shape:?}")));
        }
        let mut shape = input_shape.to_vec();
        for (i, layer) in layers.iter().enumerate() {
            shape = layer.output_shape(&shape).ok_or_else(|| {
                Error::Shape(format!("layer {i} cannot take input {shape:?}"))
            })?;
        }
        if shape != [labels.len()] {
            return Err(Error::Shape(format!(
                "network ends in {shape:?}, expected [{}]",
                labels.len()
            )));
        }
        let net = Self {
            input_shape,
            layers,
            labels,
        };
        if !net.params_finite() {
            return Err(Error::Numerical("non-finite network parameter".into()));
        }
        Ok(net)
    }

    /// Two conv(3×3, pad 1) + ReLU + 2×2 max-pool blocks with the given
    /// channel widths, then one dense layer. He-initialized from `seed`.
    pub fn conv_net(
        width: usize,
        height: usize,
        channels: [usize; 2],
        labels: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        let n = labels.len();
        let flat = channels[1] * (height / 4) * (width / 4);
        let mut layers = vec![
            Layer::Conv2d(Conv2d::zeroed(3, channels[0], 3, 1, 1)),
            Layer::Relu,
            Layer::MaxPool2d { window: 2 },
            Layer::Conv2d(Conv2d::zeroed(channels[0], channels[1], 3, 1, 1)),
            Layer::Relu,
            Layer::MaxPool2d { window: 2 },
            Layer::Flatten,
            Layer::Dense(Dense::zeroed(flat, n)),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut layers {
            let fan_in = match layer {
                Layer::Conv2d(c) => c.in_channels * c.kernel * c.kernel,
                Layer::Dense(d) => d.inputs,
                _ => continue,
            };
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let mut params = layer.params_mut();
            params[0].iter_mut().for_each(|w| *w = normal.sample(&mut rng));
        }
        Self::new([3, height, width], layers, labels)
    }

    /// The default architecture: 16 and 32 channel blocks.
    pub fn desk_scale(width: usize, height: usize, labels: Vec<String>, seed: u64) -> Result<Self> {
        Self::conv_net(width, height, [16, 32], labels, seed)
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub(crate) fn param_blocks(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub(crate) fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub(crate) fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.param_blocks().iter().map(|b| vec![0.0; b.len()]).collect()
    }

    pub fn params_finite(&self) -> bool {
        self.param_blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Converts an interleaved image into the network's `[3, H, W]` input.
    pub fn image_tensor(&self, x: &ImageRgb) -> Result<Tensor> {
        let [_, h, w] = self.input_shape;
        if x.width() != w || x.height() != h {
            return Err(Error::Shape(format!(
                "network expects {w}x{h} images, got {}x{}",
                x.width(),
                x.height()
            )));
        }
        Ok(hwc_to_chw(x))
    }

    pub fn forward_pass(&self, x: &ImageRgb) -> Result<ForwardPass<'_>> {
        self.forward_tensor(self.image_tensor(x)?)
    }

    pub(crate) fn forward_tensor(&self, x: Tensor) -> Result<ForwardPass<'_>> {
        if x.shape() != self.input_shape {
            return Err(Error::Shape(format!(
                "expected input {:?}, got {:?}",
                self.input_shape,
                x.shape()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut act = x;
        for layer in &self.layers {
            let (out, cache) = layer.forward(&act)?;
            inputs.push(act);
            caches.push(cache);
            act = out;
        }
        Ok(ForwardPass {
            net: self,
            inputs,
            caches,
            logits: Logits(act.into_data()),
        })
    }

    pub fn forward(&self, x: &ImageRgb) -> Result<Logits> {
        Ok(self.forward_pass(x)?.logits)
    }

    /// Gradient of `eᵀ·logits` with respect to the input pixels.
    pub fn backward_to_input(&self, x: &ImageRgb, e: &[f64]) -> Result<ImageRgb> {
        self.forward_pass(x)?.backward_to_input(e)
    }
}

impl ForwardPass<'_> {
    pub fn logits(&self) -> &Logits {
        &self.logits
    }

    pub fn into_logits(self) -> Logits {
        self.logits
    }

    fn check_error_len(&self, e: &[f64]) -> Result<()> {
        if e.len() != self.net.num_classes() {
            return Err(Error::Shape(format!(
                "output error has {} entries, network has {} classes",
                e.len(),
                self.net.num_classes()
            )));
        }
        Ok(())
    }

    /// Backpropagates the output-layer error `e` down to the pixels.
    pub fn backward_to_input(&self, e: &[f64]) -> Result<ImageRgb> {
        self.check_error_len(e)?;
        let mut grad = e.to_vec();
        for ((layer, x), cache) in self.net.layers.iter().zip(&self.inputs).zip(&self.caches).rev() {
            grad = layer.backward(x, cache, &grad, None, true);
        }
        let [_, h, w] = self.net.input_shape;
        Ok(chw_to_hwc(&grad, w, h))
    }

    /// Accumulates parameter gradients of `eᵀ·logits` into `grads`.
    pub(crate) fn accumulate_param_grads(&self, e: &[f64], grads: &mut [Vec<f64>]) -> Result<()> {
        self.check_error_len(e)?;
        let mut offsets = Vec::with_capacity(self.net.layers.len());
        let mut off = 0;
        for layer in &self.net.layers {
            offsets.push(off);
            off += layer.params().len();
        }
        let mut grad = e.to_vec();
        for (i, layer) in self.net.layers.iter().enumerate().rev() {
            let n = layer.params().len();
            let slot = (n > 0).then(|| &mut grads[offsets[i]..offsets[i] + n]);
            grad = layer.backward(&self.inputs[i], &self.caches[i], &grad, slot, i > 0);
        }
        Ok(())
    }
}

fn hwc_to_chw(x: &ImageRgb) -> Tensor {
    let (w, h) = (x.width(), x.height());
    let mut data = vec![0.0; 3 * w * h];
    for (p, rgb) in x.data().chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * w * h + p] = rgb[c];
        }
    }
    Tensor::from_parts(vec![3, h, w], data)
}

fn chw_to_hwc(g: &[f64], w: usize, h: usize) -> ImageRgb {
    let mut data = vec![0.0; 3 * w * h];
    for (p, rgb) in data.chunks_exact_mut(3).enumerate() {
        for c in 0..3 {
            rgb[c] = g[c * w * h + p];
        }
    }
    ImageRgb::new(w, h, data).expect("dimensions carried from a valid image")
}
