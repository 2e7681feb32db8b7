//! Dense feed-forward networks with ReLU hidden layers and a linear output,
//! exact reverse-mode gradients, Glorot-uniform initialization and Adam.
//!
//! Batches are rows: an input of shape `(batch, in)` maps to `(batch, out)`.
//! Weights are stored `(in, out)` so a layer is `x · W + b`.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::Relu => 1,
            Activation::Linear => 0,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Linear),
            1 => Ok(Activation::Relu),
            other => Err(Error::Checkpoint(format!(
                "unknown activation code {other}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `(fan_in, fan_out)`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }
}

/// Glorot-uniform matrix: entries uniform on `±√(6 / (fan_in + fan_out))`.
pub fn xavier_uniform(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Array2<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..=bound))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Activations saved by [`Mlp::forward_cached`]; entry 0 is the input,
/// entry `l + 1` the output of layer `l`.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations
            .last()
            .expect("cache holds at least the input")
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].nrows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Parameter gradients, one entry per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, c: f64) {
        for g in &mut self.layers {
            g.weights *= c;
            g.bias *= c;
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(g.bias.iter()).copied())
            .collect()
    }
}

impl Mlp {
    /// ReLU hidden layers and a linear output, Glorot-uniform weights and
    /// zero biases. `sizes` lists every layer width including input and output.
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        Self::build(sizes, |i, o| xavier_uniform(i, o, rng))
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::build(sizes, |i, o| Array2::zeros((i, o)))
    }

    fn build(
        sizes: &[usize],
        mut weights: impl FnMut(usize, usize) -> Array2<f64>,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| Dense {
                weights: weights(w[0], w[1]),
                bias: Array1::zeros(w[1]),
                activation: if l == last {
                    Activation::Linear
                } else {
                    Activation::Relu
                },
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::Shape(format!(
                    "layer {l} outputs {} but layer {} expects {}",
                    pair[0].fan_out(),
                    l + 1,
                    pair[1].fan_in()
                )));
            }
        }
        for (l, d) in layers.iter().enumerate() {
            if d.bias.len() != d.fan_out() {
                return Err(Error::Shape(format!("layer {l} bias length mismatch")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::fan_out))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, input: &ArrayView2<f64>) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                input.ncols()
            )));
        }
        Ok(())
    }

    fn apply(layer: &Dense, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&layer.weights);
        z += &layer.bias;
        if layer.activation == Activation::Relu {
            z.mapv_inplace(|v| v.max(0.0));
        }
        z
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&input)?;
        let mut x = Self::apply(&self.layers[0], &input);
        for layer in &self.layers[1..] {
            x = Self::apply(layer, &x.view());
        }
        Ok(x)
    }

    pub fn forward_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_cached(&self, input: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_owned());
        for layer in &self.layers {
            let next = Self::apply(layer, &activations.last().expect("non-empty").view());
            activations.push(next);
        }
        Ok(ForwardCache { activations })
    }

    fn check_cache(&self, cache: &ForwardCache, upstream: &ArrayView2<f64>) -> Result<()> {
        if cache.activations.len() != self.layers.len() + 1
            || cache.activations[0].ncols() != self.input_dim()
        {
            return Err(Error::Shape(
                "forward cache does not belong to this network".into(),
            ));
        }
        if upstream.dim() != cache.output().dim() {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.dim(),
                cache.output().dim()
            )));
        }
        Ok(())
    }

    /// Reverse pass for `upstream = ∂L/∂output`. Returns parameter gradients
    /// summed over the batch and `∂L/∂input`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        self.check_cache(cache, &upstream)?;
        let mut grads = Vec::with_capacity(self.layers.len());
        let delta = self.reverse(cache, upstream, |a_prev, delta| {
            grads.push(LayerGrad {
                weights: a_prev.t().dot(delta),
                bias: delta.sum_axis(Axis(0)),
            });
        });
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }

    /// `∂L/∂input` only, skipping parameter gradients.
    pub fn input_gradient(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        self.check_cache(cache, &upstream)?;
        Ok(self.reverse(cache, upstream, |_, _| {}))
    }

    fn reverse(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<f64>,
        mut on_layer: impl FnMut(&Array2<f64>, &Array2<f64>),
    ) -> Array2<f64> {
        let mut delta = upstream.to_owned();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let out = &cache.activations[l + 1];
            if layer.activation == Activation::Relu {
                // ReLU' is 1 exactly where the unit fired.
                Zip::from(&mut delta).and(out).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let a_prev = &cache.activations[l];
            on_layer(a_prev, &delta);
            delta = delta.dot(&layer.weights.t());
        }
        delta
    }

    /// Multiply the output layer's weights and bias by `c`.
    pub fn scale_output(&mut self, c: f64) {
        let last = self.layers.last_mut().expect("non-empty");
        last.weights *= c;
        last.bias *= c;
    }

    /// `self ← τ·online + (1 - τ)·self`, layer by layer.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        if self.sizes() != online.sizes() {
            return Err(Error::Shape(
                "soft update between different architectures".into(),
            ));
        }
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            Zip::from(&mut t.weights)
                .and(&o.weights)
                .for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
            Zip::from(&mut t.bias)
                .and(&o.bias)
                .for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        let mut it = params.iter();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    const MAGIC: &'static [u8; 8] = b"SBEMLP01";

    /// Binary checkpoint: magic, layer count, then per layer
    /// `fan_in, fan_out, activation` followed by row-major weights and the
    /// bias, all little-endian. Values round-trip bit-exactly.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for l in &self.layers {
            w.write_all(&(l.fan_in() as u32).to_le_bytes())?;
            w.write_all(&(l.fan_out() as u32).to_le_bytes())?;
            w.write_all(&[l.activation.code()])?;
            for v in l.weights.iter().chain(l.bias.iter()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let n_layers = read_u32(&mut r)? as usize;
        if n_layers == 0 || n_layers > 64 {
            return Err(Error::Checkpoint(format!(
                "implausible layer count {n_layers}"
            )));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let fan_in = read_u32(&mut r)? as usize;
            let fan_out = read_u32(&mut r)? as usize;
            let mut code = [0u8; 1];
            r.read_exact(&mut code)?;
            let activation = Activation::from_code(code[0])?;
            let weights = read_f64s(&mut r, fan_in * fan_out)?;
            let bias = read_f64s(&mut r, fan_out)?;
            layers.push(Dense {
                weights: Array2::from_shape_vec((fan_in, fan_out), weights)
                    .map_err(|e| Error::Checkpoint(e.to_string()))?,
                bias: Array1::from(bias),
                activation,
            });
        }
        Self::from_layers(layers)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

/// Adam with bias correction. Moments mirror the network's parameter shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn second_moments(&self) -> &Gradients {
        &self.v
    }

    /// One descent step along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers.len() {
            return Err(Error::Shape("gradient layer count mismatch".into()));
        }
        for (l, (g, p)) in grads.layers.iter().zip(&net.layers).enumerate() {
            if g.weights.dim() != p.weights.dim() || g.bias.dim() != p.bias.dim() {
                return Err(Error::Shape(format!(
                    "gradient shape mismatch in layer {l}"
                )));
            }
            if !(g.weights.iter().all(|v| v.is_finite()) && g.bias.iter().all(|v| v.is_finite())) {
                return Err(Error::NonFiniteGradient { layer: l });
            }
        }
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let lr = self.lr;
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            Zip::from(&mut layer.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}
