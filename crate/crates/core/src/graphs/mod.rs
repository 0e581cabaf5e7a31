//! Network topologies and whole-network forward/backward execution.
//!
//! A network is an ordered list of layers. Every layer reads the previous
//! layer's output (the network input for layer 0); a concat layer
//! additionally reads the output of an earlier `skip_source` layer and
//! appends it after the main-path channels.

mod checkpoint;

pub use checkpoint::{load_network, read_network, save_network, write_network, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::INPUT_CHANNELS;
use crate::element::Element;
use crate::error::{Error, Result};
use crate::layers::{
    batchnorm_backward, batchnorm_forward, batchnorm_inference, bilinear_upsample_backward,
    bilinear_upsample_forward, concat_backward, concat_channels, conv_backward, conv_forward,
    maxpool_backward, maxpool_forward, relu_backward, relu_forward, BatchNormGrads,
    BatchNormParams, ConvParams, Mode, KERNEL,
};
use crate::tensor::{Shape, Tensor};

/// Number of flow channels every network predicts.
pub const OUTPUT_CHANNELS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// 5x5 convolution, batch normalization, ReLU.
    ConvBlock,
    /// 2x2 max pooling with stride 2.
    MaxPool,
    /// Bilinear 2x upsampling.
    BilinearUp,
    /// Channel concatenation with the output of `skip_source`.
    Concat,
    /// Bare 5x5 convolution.
    Predict,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::ConvBlock => "conv_block",
            LayerKind::MaxPool => "maxpool",
            LayerKind::BilinearUp => "bilinear_up",
            LayerKind::Concat => "concat",
            LayerKind::Predict => "predict",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            LayerKind::ConvBlock,
            LayerKind::MaxPool,
            LayerKind::BilinearUp,
            LayerKind::Concat,
            LayerKind::Predict,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

/// One layer of a graph. `c_out` is the layer's output channel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub c_out: usize,
    pub skip_source: Option<usize>,
}

/// Trainable state of one layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams<T = f32> {
    None,
    Conv(ConvParams<T>),
    ConvBlock {
        conv: ConvParams<T>,
        bn: BatchNormParams<T>,
    },
}

/// Gradients with the same layout as [`LayerParams`].
#[derive(Debug, Clone)]
pub enum LayerGradients<T = f32> {
    None,
    Conv(ConvParams<T>),
    ConvBlock {
        conv: ConvParams<T>,
        bn: BatchNormGrads<T>,
    },
}

/// Appends layers while tracking channel counts, so custom graphs can be
/// written without computing concat widths by hand.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    in_channels: usize,
    layers: Vec<LayerSpec>,
}

impl GraphBuilder {
    pub fn new(in_channels: usize) -> Self {
        GraphBuilder {
            in_channels,
            layers: Vec::new(),
        }
    }

    fn channels(&self) -> usize {
        self.layers.last().map_or(self.in_channels, |l| l.c_out)
    }

    fn push(&mut self, kind: LayerKind, c_out: usize, skip_source: Option<usize>) -> usize {
        self.layers.push(LayerSpec {
            kind,
            c_out,
            skip_source,
        });
        self.layers.len() - 1
    }

    /// Each method returns the index of the layer it appended.
    pub fn conv_block(&mut self, c_out: usize) -> usize {
        self.push(LayerKind::ConvBlock, c_out, None)
    }

    pub fn maxpool(&mut self) -> usize {
        let c = self.channels();
        self.push(LayerKind::MaxPool, c, None)
    }

    pub fn upsample(&mut self) -> usize {
        let c = self.channels();
        self.push(LayerKind::BilinearUp, c, None)
    }

    /// Panics if `source` is not an earlier layer.
    pub fn concat(&mut self, source: usize) -> usize {
        let c = self.channels() + self.layers[source].c_out;
        self.push(LayerKind::Concat, c, Some(source))
    }

    pub fn predict(&mut self) -> usize {
        self.push(LayerKind::Predict, OUTPUT_CHANNELS, None)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn build<T: Element>(self, name: impl Into<String>, seed: u64) -> Result<Network<T>> {
        Network::from_specs(name, self.in_channels, self.layers, seed)
    }
}

/// Sizes reported for a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterReport {
    /// Output channels summed over every convolution.
    pub filters: usize,
    /// Every trainable scalar: conv weights and biases, BN scale and shift.
    pub parameters: usize,
    /// Conv weights plus biases only.
    pub conv_parameters: usize,
    /// `25 * sum(c_in)`: one 5x5 window per convolution input channel.
    pub window_parameters: usize,
}

impl fmt::Display for ParameterReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "filters {}, trainable parameters {} (conv {}), 5x5 windows x input channels {}",
            self.filters, self.parameters, self.conv_parameters, self.window_parameters
        )
    }
}

/// A network: layer list plus per-layer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f32> {
    name: String,
    in_channels: usize,
    layers: Vec<LayerSpec>,
    params: Vec<LayerParams<T>>,
}

/// What backward needs from one layer's forward pass.
#[derive(Debug, Clone)]
enum LayerCache<T> {
    ConvBlock {
        input: Tensor<T>,
        conv_out: Tensor<T>,
        bn_out: Tensor<T>,
    },
    MaxPool {
        input_shape: Shape,
        indices: Vec<usize>,
    },
    BilinearUp {
        input_shape: Shape,
    },
    Concat {
        main_channels: usize,
    },
    Predict {
        input: Tensor<T>,
    },
}

/// Activations recorded by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ActivationCache<T = f32> {
    mode: Mode,
    layers: Vec<LayerSpec>,
    input_shape: Shape,
    entries: Vec<LayerCache<T>>,
}

impl<T> ActivationCache<T> {
    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// Output of [`Network::backward`].
#[derive(Debug, Clone)]
pub struct NetworkGradients<T = f32> {
    pub layers: Vec<LayerGradients<T>>,
    pub input: Tensor<T>,
}

impl<T: Element> NetworkGradients<T> {
    /// Gradient buffers in the order of [`Network::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for g in &self.layers {
            match g {
                LayerGradients::None => {}
                LayerGradients::Conv(c) => {
                    out.push(c.weights.data());
                    out.push(&c.bias[..]);
                }
                LayerGradients::ConvBlock { conv, bn } => {
                    out.push(conv.weights.data());
                    out.push(&conv.bias[..]);
                    out.push(&bn.gamma[..]);
                    out.push(&bn.beta[..]);
                }
            }
        }
        out
    }
}

fn config_err(msg: String) -> Error {
    Error::Config(msg)
}

impl<T: Element> Network<T> {
    /// Validates the layer list and initialises parameters from `seed`.
    pub fn from_specs(
        name: impl Into<String>,
        in_channels: usize,
        layers: Vec<LayerSpec>,
        seed: u64,
    ) -> Result<Self> {
        validate_specs(in_channels, &layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(layers.len());
        let mut c = in_channels;
        for l in &layers {
            params.push(match l.kind {
                LayerKind::ConvBlock => LayerParams::ConvBlock {
                    conv: ConvParams::init(c, l.c_out, &mut rng)?,
                    bn: BatchNormParams::new(l.c_out),
                },
                LayerKind::Predict => LayerParams::Conv(ConvParams::init(c, l.c_out, &mut rng)?),
                _ => LayerParams::None,
            });
            c = l.c_out;
        }
        Ok(Network {
            name: name.into(),
            in_channels,
            layers,
            params,
        })
    }

    /// Replaces the parameters wholesale; used by checkpoint loading.
    pub fn with_params(mut self, params: Vec<LayerParams<T>>) -> Result<Self> {
        if params.len() != self.params.len()
            || params.iter().zip(&self.params).any(|(a, b)| !same_layout(a, b))
        {
            return Err(Error::State(format!(
                "parameters do not fit the {} layer list",
                self.name
            )));
        }
        self.params = params;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[LayerParams<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams<T>] {
        &mut self.params
    }

    /// Spatial sizes must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << self.count(LayerKind::MaxPool)
    }

    fn count(&self, kind: LayerKind) -> usize {
        self.layers.iter().filter(|l| l.kind == kind).count()
    }

    /// Channel count entering each layer.
    pub fn input_channels_per_layer(&self) -> Vec<usize> {
        std::iter::once(self.in_channels)
            .chain(self.layers.iter().map(|l| l.c_out))
            .take(self.layers.len())
            .collect()
    }

    pub fn parameter_report(&self) -> ParameterReport {
        let mut r = ParameterReport {
            filters: 0,
            parameters: 0,
            conv_parameters: 0,
            window_parameters: 0,
        };
        for (l, c_in) in self.layers.iter().zip(self.input_channels_per_layer()) {
            if matches!(l.kind, LayerKind::ConvBlock | LayerKind::Predict) {
                let conv = KERNEL * KERNEL * c_in * l.c_out + l.c_out;
                r.filters += l.c_out;
                r.conv_parameters += conv;
                r.parameters += conv;
                r.window_parameters += KERNEL * KERNEL * c_in;
                if l.kind == LayerKind::ConvBlock {
                    r.parameters += 2 * l.c_out;
                }
            }
        }
        r
    }

    /// Mutable trainable buffers: per layer weights, bias, then BN scale
    /// and shift. Running statistics are not included.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for p in &mut self.params {
            match p {
                LayerParams::None => {}
                LayerParams::Conv(c) => {
                    out.push(c.weights.data_mut());
                    out.push(&mut c.bias[..]);
                }
                LayerParams::ConvBlock { conv, bn } => {
                    out.push(conv.weights.data_mut());
                    out.push(&mut conv.bias[..]);
                    out.push(&mut bn.gamma[..]);
                    out.push(&mut bn.beta[..]);
                }
            }
        }
        out
    }

    /// Lengths of the buffers returned by [`Self::param_slices_mut`].
    pub fn param_lengths(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for p in &self.params {
            match p {
                LayerParams::None => {}
                LayerParams::Conv(c) => out.extend([c.weights.len(), c.bias.len()]),
                LayerParams::ConvBlock { conv, bn } => {
                    out.extend([conv.weights.len(), conv.bias.len(), bn.gamma.len(), bn.beta.len()])
                }
            }
        }
        out
    }

    /// The same network in another element type.
    pub fn cast<U: Element>(&self) -> Network<U> {
        Network {
            name: self.name.clone(),
            in_channels: self.in_channels,
            layers: self.layers.clone(),
            params: self
                .params
                .iter()
                .map(|p| match p {
                    LayerParams::None => LayerParams::None,
                    LayerParams::Conv(c) => LayerParams::Conv(c.cast()),
                    LayerParams::ConvBlock { conv, bn } => LayerParams::ConvBlock {
                        conv: conv.cast(),
                        bn: bn.cast(),
                    },
                })
                .collect(),
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        let [n, h, w, c] = input.shape();
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "{} expects {} input channels, got {c}",
                self.name, self.in_channels
            )));
        }
        if n == 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!(
                "{} cannot run on empty input {:?}",
                self.name,
                input.shape()
            )));
        }
        // fail before any computation on sizes the pooling chain cannot take
        self.layer_output_shapes(input.shape())?;
        Ok(())
    }

    fn describe(&self, i: usize) -> String {
        format!("{} layer {i} ({})", self.name, self.layers[i].kind.name())
    }

    /// Output shape of every layer for a given input shape, without
    /// running anything. Fails like [`Self::forward`] on bad sizes.
    pub fn layer_output_shapes(&self, input: Shape) -> Result<Vec<Shape>> {
        let [n, mut h, mut w, c] = input;
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "{} expects {} input channels, got {c}",
                self.name, self.in_channels
            )));
        }
        let mut shapes: Vec<Shape> = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            match l.kind {
                LayerKind::MaxPool => {
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(Error::Shape(format!(
                            "{} needs even spatial size, got {h}x{w} (input sides must be multiples of {})",
                            self.describe(i),
                            self.size_multiple()
                        )));
                    }
                    h /= 2;
                    w /= 2;
                }
                LayerKind::BilinearUp => {
                    h *= 2;
                    w *= 2;
                }
                LayerKind::Concat => {
                    let j = l.skip_source.expect("validated concat");
                    if shapes[j][1] != h || shapes[j][2] != w {
                        return Err(Error::Shape(format!(
                            "{} joins {h}x{w} with {}x{} from layer {j}",
                            self.describe(i),
                            shapes[j][1],
                            shapes[j][2]
                        )));
                    }
                }
                _ => {}
            }
            shapes.push([n, h, w, l.c_out]);
        }
        Ok(shapes)
    }

    /// Runs the network. Train mode uses batch statistics, updates the
    /// running statistics and records a cache for [`Self::backward`];
    /// inference mode returns an empty cache.
    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, ActivationCache<T>)> {
        self.check_input(input)?;
        let mut outputs: Vec<Option<Tensor<T>>> = vec![None; self.layers.len()];
        let is_source = self.skip_sources();
        let mut entries = Vec::new();
        let mut x = input.clone();
        for i in 0..self.layers.len() {
            let (out, entry) = self.run_layer(i, x, &outputs, mode)?;
            if mode == Mode::Train {
                entries.push(entry);
            }
            if is_source[i] {
                outputs[i] = Some(out.clone());
            }
            x = out;
        }
        let cache = ActivationCache {
            mode,
            layers: self.layers.clone(),
            input_shape: input.shape(),
            entries,
        };
        Ok((x, cache))
    }

    /// Inference-mode forward pass that leaves the network untouched.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut outputs: Vec<Option<Tensor<T>>> = vec![None; self.layers.len()];
        let is_source = self.skip_sources();
        let mut x = input.clone();
        for i in 0..self.layers.len() {
            let spec = self.layers[i];
            let out = match (&self.params[i], spec.kind) {
                (LayerParams::ConvBlock { conv, bn }, _) => {
                    relu_forward(&batchnorm_inference(&conv_forward(&x, conv)?, bn)?)
                }
                (LayerParams::Conv(conv), _) => conv_forward(&x, conv)?,
                (_, LayerKind::MaxPool) => {
                    self.check_even(i, &x)?;
                    maxpool_forward(&x)?.0
                }
                (_, LayerKind::BilinearUp) => bilinear_upsample_forward(&x)?,
                (_, LayerKind::Concat) => self.concat(i, &x, &outputs)?,
                _ => unreachable!("parameters validated at construction"),
            };
            if is_source[i] {
                outputs[i] = Some(out.clone());
            }
            x = out;
        }
        Ok(x)
    }

    fn skip_sources(&self) -> Vec<bool> {
        let mut s = vec![false; self.layers.len()];
        for l in &self.layers {
            if let Some(j) = l.skip_source {
                s[j] = true;
            }
        }
        s
    }

    fn check_even(&self, i: usize, x: &Tensor<T>) -> Result<()> {
        if x.h() % 2 != 0 || x.w() % 2 != 0 {
            return Err(Error::Shape(format!(
                "{} needs even spatial size, got {}x{} (input sides must be multiples of {})",
                self.describe(i),
                x.h(),
                x.w(),
                self.size_multiple()
            )));
        }
        Ok(())
    }

    fn concat(&self, i: usize, x: &Tensor<T>, outputs: &[Option<Tensor<T>>]) -> Result<Tensor<T>> {
        let j = self.layers[i].skip_source.expect("validated concat");
        let skip = outputs[j].as_ref().expect("skip source output retained");
        if skip.h() != x.h() || skip.w() != x.w() {
            return Err(Error::Shape(format!(
                "{} joins {}x{} with {}x{} from layer {j}",
                self.describe(i),
                x.h(),
                x.w(),
                skip.h(),
                skip.w()
            )));
        }
        concat_channels(x, skip)
    }

    fn run_layer(
        &mut self,
        i: usize,
        x: Tensor<T>,
        outputs: &[Option<Tensor<T>>],
        mode: Mode,
    ) -> Result<(Tensor<T>, LayerCache<T>)> {
        let kind = self.layers[i].kind;
        Ok(match kind {
            LayerKind::ConvBlock => {
                let LayerParams::ConvBlock { conv, bn } = &mut self.params[i] else {
                    unreachable!("parameters validated at construction")
                };
                let conv_out = conv_forward(&x, conv)?;
                let bn_out = batchnorm_forward(&conv_out, bn, mode)?;
                let out = relu_forward(&bn_out);
                (
                    out,
                    LayerCache::ConvBlock {
                        input: x,
                        conv_out,
                        bn_out,
                    },
                )
            }
            LayerKind::Predict => {
                let LayerParams::Conv(conv) = &self.params[i] else {
                    unreachable!("parameters validated at construction")
                };
                (conv_forward(&x, conv)?, LayerCache::Predict { input: x })
            }
            LayerKind::MaxPool => {
                self.check_even(i, &x)?;
                let (out, indices) = maxpool_forward(&x)?;
                (
                    out,
                    LayerCache::MaxPool {
                        input_shape: x.shape(),
                        indices,
                    },
                )
            }
            LayerKind::BilinearUp => (
                bilinear_upsample_forward(&x)?,
                LayerCache::BilinearUp {
                    input_shape: x.shape(),
                },
            ),
            LayerKind::Concat => (
                self.concat(i, &x, outputs)?,
                LayerCache::Concat {
                    main_channels: x.c(),
                },
            ),
        })
    }

    /// Gradients of a scalar loss given its gradient with respect to the
    /// network output. Skip-path gradients are added to the gradient of
    /// their source layer's output.
    pub fn backward(&self, cache: ActivationCache<T>, grad_output: &Tensor<T>) -> Result<NetworkGradients<T>> {
        if cache.mode != Mode::Train {
            return Err(Error::State(
                "backward needs a cache recorded in train mode".into(),
            ));
        }
        if cache.layers != self.layers || cache.entries.len() != self.layers.len() {
            return Err(Error::State(format!(
                "activation cache was recorded by a different network than {}",
                self.name
            )));
        }
        let n = self.layers.len();
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; n];
        let mut pending_input: Option<Tensor<T>> = None;
        let mut layer_grads: Vec<LayerGradients<T>> = Vec::with_capacity(n);
        let mut g = grad_output.clone();
        for (i, entry) in cache.entries.into_iter().enumerate().rev() {
            if i + 1 < n {
                g = grads[i].take().ok_or_else(|| {
                    Error::State(format!("no gradient reached {}", self.describe(i)))
                })?;
            }
            let (g_in, lg) = match (entry, &self.params[i]) {
                (
                    LayerCache::ConvBlock {
                        input,
                        conv_out,
                        bn_out,
                    },
                    LayerParams::ConvBlock { conv, bn },
                ) => {
                    let g_bn = relu_backward(&bn_out, &g)?;
                    drop(bn_out);
                    let b = batchnorm_backward(&conv_out, bn, &g_bn)?;
                    drop(conv_out);
                    let c = conv_backward(&input, conv, &b.grad_input)?;
                    (
                        c.grad_input,
                        LayerGradients::ConvBlock {
                            conv: c.grad_params,
                            bn: b.grad_params,
                        },
                    )
                }
                (LayerCache::Predict { input }, LayerParams::Conv(conv)) => {
                    let c = conv_backward(&input, conv, &g)?;
                    (c.grad_input, LayerGradients::Conv(c.grad_params))
                }
                (LayerCache::MaxPool { input_shape, indices }, _) => (
                    maxpool_backward(&indices, &g, input_shape)?,
                    LayerGradients::None,
                ),
                (LayerCache::BilinearUp { input_shape }, _) => (
                    bilinear_upsample_backward(&g, input_shape)?,
                    LayerGradients::None,
                ),
                (LayerCache::Concat { main_channels }, _) => {
                    let (main, skip) = concat_backward(&g, main_channels)?;
                    let j = self.layers[i].skip_source.expect("validated concat");
                    accumulate(&mut grads[j], skip)?;
                    (main, LayerGradients::None)
                }
                _ => {
                    return Err(Error::State(format!(
                        "activation cache does not match {}",
                        self.describe(i)
                    )))
                }
            };
            layer_grads.push(lg);
            if i == 0 {
                pending_input = Some(g_in);
            } else {
                accumulate(&mut grads[i - 1], g_in)?;
            }
        }
        layer_grads.reverse();
        let input = pending_input.unwrap_or(Tensor::zeros(cache.input_shape)?);
        Ok(NetworkGradients {
            layers: layer_grads,
            input,
        })
    }
}

fn accumulate<T: Element>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) -> Result<()> {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn same_layout<T: Element>(a: &LayerParams<T>, b: &LayerParams<T>) -> bool {
    match (a, b) {
        (LayerParams::None, LayerParams::None) => true,
        (LayerParams::Conv(x), LayerParams::Conv(y)) => {
            x.weights.shape() == y.weights.shape() && x.bias.len() == y.bias.len()
        }
        (LayerParams::ConvBlock { conv: c1, bn: b1 }, LayerParams::ConvBlock { conv: c2, bn: b2 }) => {
            c1.weights.shape() == c2.weights.shape()
                && c1.bias.len() == c2.bias.len()
                && b1.channels() == b2.channels()
                && b1.running_mean.len() == b2.running_mean.len()
                && b1.running_var.len() == b2.running_var.len()
                && b1.beta.len() == b2.beta.len()
        }
        _ => false,
    }
}

fn validate_specs(in_channels: usize, layers: &[LayerSpec]) -> Result<()> {
    if in_channels == 0 {
        return Err(config_err("a network needs at least one input channel".into()));
    }
    let last = layers
        .last()
        .ok_or_else(|| config_err("a network needs at least one layer".into()))?;
    if last.kind != LayerKind::Predict || last.c_out != OUTPUT_CHANNELS {
        return Err(config_err(format!(
            "the last layer must be a {OUTPUT_CHANNELS}-channel prediction convolution"
        )));
    }
    // net resolution change, in powers of two, after each layer
    let mut level = 0i64;
    let mut levels = Vec::with_capacity(layers.len());
    let mut c = in_channels;
    for (i, l) in layers.iter().enumerate() {
        let expected = match l.kind {
            LayerKind::ConvBlock | LayerKind::Predict => {
                if l.c_out == 0 {
                    return Err(config_err(format!("layer {i}: convolution with no filters")));
                }
                l.c_out
            }
            LayerKind::MaxPool => {
                level -= 1;
                c
            }
            LayerKind::BilinearUp => {
                level += 1;
                c
            }
            LayerKind::Concat => {
                let j = l
                    .skip_source
                    .filter(|&j| j < i)
                    .ok_or_else(|| config_err(format!("layer {i}: concat needs an earlier skip source")))?;
                if levels[j] != level {
                    return Err(config_err(format!(
                        "layer {i}: concat source {j} is at a different resolution"
                    )));
                }
                c + layers[j].c_out
            }
        };
        if l.kind != LayerKind::Concat && l.skip_source.is_some() {
            return Err(config_err(format!("layer {i}: only concat layers take a skip source")));
        }
        if l.c_out != expected {
            return Err(config_err(format!(
                "layer {i} ({}): declared {} output channels, computed {expected}",
                l.kind.name(),
                l.c_out
            )));
        }
        if level > 0 {
            return Err(config_err(format!("layer {i}: upsampled above input resolution")));
        }
        levels.push(level);
        c = expected;
    }
    if level != 0 {
        return Err(config_err("the output is not at input resolution".into()));
    }
    Ok(())
}

/// PlainNet block widths.
pub const PLAINNET_CHANNELS: [usize; 6] = [64, 128, 256, 256, 128, 64];
/// FinalNet encoder widths; the bottleneck repeats the last one.
pub const FINALNET_ENCODER: [usize; 4] = [32, 64, 128, 256];

pub fn plainnet_specs() -> Vec<LayerSpec> {
    let mut b = GraphBuilder::new(INPUT_CHANNELS);
    for c in PLAINNET_CHANNELS {
        b.conv_block(c);
    }
    b.predict();
    b.layers
}

pub fn finalnet_specs() -> Vec<LayerSpec> {
    let mut b = GraphBuilder::new(INPUT_CHANNELS);
    let mut skips = Vec::new();
    for c in FINALNET_ENCODER {
        skips.push(b.conv_block(c));
        b.maxpool();
    }
    b.conv_block(FINALNET_ENCODER[3]);
    for &s in skips.iter().rev() {
        b.upsample();
        let joined = b.concat(s);
        b.conv_block(b.layers[joined].c_out.div_ceil(3));
    }
    b.predict();
    b.layers
}

/// Six full-resolution conv blocks and a prediction convolution.
pub fn build_plainnet<T: Element>(seed: u64) -> Network<T> {
    Network::from_specs("PlainNet", INPUT_CHANNELS, plainnet_specs(), seed)
        .expect("fixed topology is valid")
}

/// Four conv+pool encoder stages, a bottleneck block at 1/16 resolution,
/// four upsample+concat+conv decoder stages and a prediction convolution.
pub fn build_finalnet<T: Element>(seed: u64) -> Network<T> {
    Network::from_specs("FinalNet", INPUT_CHANNELS, finalnet_specs(), seed)
        .expect("fixed topology is valid")
}

/// Builds a named architecture: `plainnet` or `finalnet` (any case).
pub fn build_named<T: Element>(name: &str, seed: u64) -> Result<Network<T>> {
    match name.to_ascii_lowercase().as_str() {
        "plainnet" => Ok(build_plainnet(seed)),
        "finalnet" => Ok(build_finalnet(seed)),
        other => Err(Error::Config(format!(
            "unknown network {other:?} (expected plainnet or finalnet)"
        ))),
    }
}

/// A single prediction convolution that copies the guide-flow input
/// channels to the output. Useful as a baseline and for pipeline tests.
pub fn guide_passthrough<T: Element>() -> Network<T> {
    let mut b = GraphBuilder::new(INPUT_CHANNELS);
    b.predict();
    let mut net: Network<T> = b.build("GuidePassthrough", 0).expect("valid graph");
    let LayerParams::Conv(conv) = &mut net.params[0] else {
        unreachable!()
    };
    let centre = KERNEL / 2;
    conv.weights.data_mut().fill(T::zero());
    for o in 0..OUTPUT_CHANNELS {
        conv.weights
            .set([centre, centre, INPUT_CHANNELS - 2 + o, o], T::one())
            .expect("in bounds");
    }
    net
}

#[cfg(test)]
mod tests;
