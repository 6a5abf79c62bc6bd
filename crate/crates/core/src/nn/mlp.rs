use serde::{Deserialize, Serialize};

use super::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative given the pre-activation. The ReLU subgradient at 0 is 0.
    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Dense feed-forward network with ReLU hidden layers and a linear output.
///
/// Layer `l` maps `layer_dims[l]` inputs to `layer_dims[l + 1]` outputs. Its
/// weight matrix has logical shape `(out × in)` and is stored column-major:
/// entry `(o, i)` lives at `i * out + o`, so a sparse input only touches the
/// columns of its nonzero entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    hidden_activation: Activation,
    output_activation: Activation,
}

/// Per-layer inputs and pre-activations recorded by [`Mlp::forward`].
///
/// A cache can be reused across calls with [`Mlp::forward_into`] to avoid
/// reallocating its buffers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForwardCache {
    /// `inputs[l]` is the vector fed into layer `l`.
    pub inputs: Vec<Vec<f64>>,
    /// `pre[l]` is layer `l`'s affine output before its activation.
    pub pre: Vec<Vec<f64>>,
    /// Network output.
    pub output: Vec<f64>,
}

/// Gradients with the same shapes as an [`Mlp`]'s parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::invalid(format!(
            "layer_dims needs at least 2 entries, got {}",
            layer_dims.len()
        )));
    }
    if let Some(pos) = layer_dims.iter().position(|&d| d == 0) {
        return Err(Error::invalid(format!("layer_dims[{pos}] is zero")));
    }
    Ok(())
}

/// Glorot-uniform bound for a layer.
pub fn init_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(layer_dims: &[usize], rng: &mut Rng) -> Result<Self> {
        validate_dims(layer_dims)?;
        let n_layers = layer_dims.len() - 1;
        let mut net = Mlp {
            layer_dims: layer_dims.to_vec(),
            weights: (0..n_layers)
                .map(|l| vec![0.0; layer_dims[l] * layer_dims[l + 1]])
                .collect(),
            biases: (0..n_layers).map(|l| vec![0.0; layer_dims[l + 1]]).collect(),
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
        };
        for l in 0..n_layers {
            net.reinit_layer(l, rng);
        }
        Ok(net)
    }

    /// Builds a network from row-major `(out × in)` weight matrices.
    pub fn from_row_major(
        layer_dims: &[usize],
        weights: &[Vec<f64>],
        biases: &[Vec<f64>],
    ) -> Result<Self> {
        validate_dims(layer_dims)?;
        let n_layers = layer_dims.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::shape(format!(
                "expected {n_layers} weight and bias blocks"
            )));
        }
        let mut stored = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
            if weights[l].len() != fan_in * fan_out || biases[l].len() != fan_out {
                return Err(Error::shape(format!("layer {l} has wrong parameter count")));
            }
            let mut col = vec![0.0; fan_in * fan_out];
            for o in 0..fan_out {
                for i in 0..fan_in {
                    col[i * fan_out + o] = weights[l][o * fan_in + i];
                }
            }
            stored.push(col);
        }
        let net = Mlp {
            layer_dims: layer_dims.to_vec(),
            weights: stored,
            biases: biases.to_vec(),
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
        };
        if !net.all_finite() {
            return Err(Error::NonFinite("parameters"));
        }
        Ok(net)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated at construction")
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Weight connecting input `i` to output `o` of layer `l`.
    pub fn weight(&self, l: usize, o: usize, i: usize) -> f64 {
        self.weights[l][i * self.layer_dims[l + 1] + o]
    }

    pub fn set_weight(&mut self, l: usize, o: usize, i: usize, value: f64) {
        let out = self.layer_dims[l + 1];
        self.weights[l][i * out + o] = value;
    }

    pub fn bias(&self, l: usize, o: usize) -> f64 {
        self.biases[l][o]
    }

    pub fn set_bias(&mut self, l: usize, o: usize, value: f64) {
        self.biases[l][o] = value;
    }

    /// Raw parameter blocks of layer `l` (column-major weights, biases).
    pub fn layer_params(&self, l: usize) -> (&[f64], &[f64]) {
        (&self.weights[l], &self.biases[l])
    }

    pub(crate) fn layer_params_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights[l], &mut self.biases[l])
    }

    pub fn all_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|block| block.iter().all(|x| x.is_finite()))
    }

    /// Re-draws layer `l` exactly as [`Mlp::new`] does.
    pub fn reinit_layer(&mut self, l: usize, rng: &mut Rng) {
        let bound = init_bound(self.layer_dims[l], self.layer_dims[l + 1]);
        for w in self.weights[l].iter_mut() {
            *w = rng.uniform_range(-bound, bound);
        }
        self.biases[l].iter_mut().for_each(|b| *b = 0.0);
    }

    fn activation_for(&self, l: usize) -> Activation {
        if l + 1 == self.n_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has length {}, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        if !input.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        Ok(())
    }

    /// `out = b + W x`, skipping zero inputs.
    #[inline]
    fn affine(&self, l: usize, x: &[f64], out: &mut Vec<f64>) {
        let fan_out = self.layer_dims[l + 1];
        out.clear();
        out.extend_from_slice(&self.biases[l]);
        let out = &mut out[..fan_out];
        for (col, &xi) in self.weights[l].chunks_exact(fan_out).zip(x) {
            if xi != 0.0 {
                axpy(xi, col, out);
            }
        }
    }

    /// Forward pass recording what [`Mlp::backward`] needs.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let mut cache = ForwardCache::default();
        self.forward_into(input, &mut cache)?;
        Ok((cache.output.clone(), cache))
    }

    /// Forward pass into a reusable cache; the result is `cache.output`.
    pub fn forward_into(&self, input: &[f64], cache: &mut ForwardCache) -> Result<()> {
        self.check_input(input)?;
        let n = self.n_layers();
        cache.inputs.resize_with(n, Vec::new);
        cache.pre.resize_with(n, Vec::new);
        cache.inputs[0].clear();
        cache.inputs[0].extend_from_slice(input);
        for l in 0..n {
            let (head, tail) = cache.inputs.split_at_mut(l + 1);
            let x = &head[l];
            let z = &mut cache.pre[l];
            self.affine(l, x, z);
            let act = self.activation_for(l);
            let y = if l + 1 < n { &mut tail[0] } else { &mut cache.output };
            y.clear();
            y.extend(z.iter().map(|&v| act.apply(v)));
        }
        Ok(())
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let mut z = Vec::new();
        for l in 0..self.n_layers() {
            self.affine(l, &x, &mut z);
            let act = self.activation_for(l);
            x.clear();
            x.extend(z.iter().map(|&v| act.apply(v)));
        }
        Ok(x)
    }

    /// Gradients of a loss whose derivative w.r.t. the network output is
    /// `output_grad`.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<GradientSet> {
        let mut grads = GradientSet::zeros_like(self);
        self.backward_into(cache, output_grad, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Mlp::backward`] but accumulates into `grads`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        grads: &mut GradientSet,
    ) -> Result<()> {
        let n = self.n_layers();
        if cache.inputs.len() != n || cache.pre.len() != n {
            return Err(Error::shape("cache does not match network depth"));
        }
        for l in 0..n {
            if cache.inputs[l].len() != self.layer_dims[l]
                || cache.pre[l].len() != self.layer_dims[l + 1]
            {
                return Err(Error::shape(format!("cache layer {l} has wrong width")));
            }
        }
        if output_grad.len() != self.output_dim() {
            return Err(Error::shape(format!(
                "output gradient has length {}, network outputs {}",
                output_grad.len(),
                self.output_dim()
            )));
        }
        if !grads.matches(self) {
            return Err(Error::shape("gradient accumulator does not match network"));
        }

        let mut delta: Vec<f64> = {
            let act = self.activation_for(n - 1);
            output_grad
                .iter()
                .zip(&cache.pre[n - 1])
                .map(|(&g, &z)| g * act.derivative(z))
                .collect()
        };
        let mut prev = Vec::with_capacity(delta.len());
        for l in (0..n).rev() {
            let fan_out = self.layer_dims[l + 1];
            let x = &cache.inputs[l];
            for (gb, &d) in grads.biases[l].iter_mut().zip(&delta) {
                *gb += d;
            }
            for (col, &xi) in grads.weights[l].chunks_exact_mut(fan_out).zip(x) {
                if xi != 0.0 {
                    axpy(xi, &delta, col);
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.weights[l];
            let act = self.activation_for(l - 1);
            prev.clear();
            prev.extend(w.chunks_exact(fan_out).zip(&cache.pre[l - 1]).map(|(col, &z)| {
                let dz = act.derivative(z);
                if dz == 0.0 {
                    0.0
                } else {
                    dot(col, &delta) * dz
                }
            }));
            std::mem::swap(&mut delta, &mut prev);
        }
        Ok(())
    }

    /// `self ← tau · source + (1 − tau) · self`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) -> Result<()> {
        if source.layer_dims != self.layer_dims {
            return Err(Error::shape("soft update between different architectures"));
        }
        let blocks = self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .zip(source.weights.iter().chain(source.biases.iter()));
        for (dst, src) in blocks {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = tau * s + (1.0 - tau) * *d;
            }
        }
        Ok(())
    }
}

/// `y += a · x`.
#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    let n = y.len().min(x.len());
    let (x, y) = (&x[..n], &mut y[..n]);
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl GradientSet {
    pub fn zeros_like(net: &Mlp) -> Self {
        GradientSet {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn matches(&self, net: &Mlp) -> bool {
        self.weights.len() == net.weights.len()
            && self.biases.len() == net.biases.len()
            && self
                .weights
                .iter()
                .zip(&net.weights)
                .all(|(a, b)| a.len() == b.len())
            && self
                .biases
                .iter()
                .zip(&net.biases)
                .all(|(a, b)| a.len() == b.len())
    }

    /// Gradient of the weight connecting input `i` to output `o` of layer `l`.
    pub fn weight(&self, net: &Mlp, l: usize, o: usize, i: usize) -> f64 {
        self.weights[l][i * net.layer_dims[l + 1] + o]
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            block.iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn fill_zero(&mut self) {
        for block in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            block.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|block| block.iter().all(|g| g.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .flat_map(|block| block.iter())
            .fold(0.0, |m, g| m.max(g.abs()))
    }
}
