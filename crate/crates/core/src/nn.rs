//! Dense feed-forward network with ELU hidden activations and a linear
//! output layer, plus batched reverse-mode gradients.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weights: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim] }
    }

    /// LeCun-uniform weights scaled by `gain`, zero bias.
    pub fn init(in_dim: usize, out_dim: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let limit = gain * (3.0 / in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim).map(|_| rng.random_range(-limit..limit)).collect();
        Self { in_dim, out_dim, weights, bias: vec![0.0; out_dim] }
    }

    fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.in_dim..(o + 1) * self.in_dim]
    }
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
fn elu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        z.exp()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-layer pre-activations of a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// Linear outputs of the final layer, row-major `batch x out_dim`.
    pub fn output(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&self.input)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]`; hidden layers get He-like gain, the
    /// output layer `out_gain`.
    pub fn new(sizes: &[usize], out_gain: f64, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let gain = if i + 1 == n { out_gain } else { std::f64::consts::SQRT_2 };
                Dense::init(sizes[i], sizes[i + 1], gain, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        let layers = self.layers.iter().map(|l| Dense::zeros(l.in_dim, l.out_dim)).collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.out_dim));
        s
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Shape(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    i,
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::Shape(format!("layer {i} buffer sizes disagree with its shape")));
            }
            if !l.weights.iter().chain(&l.bias).all(|v| v.is_finite()) {
                return Err(Error::numeric(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut next: Vec<f64> = (0..layer.out_dim).map(|o| layer.bias[o] + dot(layer.row(o), &cur)).collect();
            if li != last {
                next.iter_mut().for_each(|v| *v = elu(*v));
            }
            cur = next;
        }
        cur
    }

    /// Batched forward pass over row-major `batch x input_dim` inputs.
    pub fn forward_batch(&self, input: &[f64], batch: usize) -> ForwardCache {
        assert_eq!(input.len(), batch * self.input_dim(), "input buffer does not match batch shape");
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let src: &[f64] = if li == 0 { input } else { &post[li - 1] };
            let mut z = vec![0.0; batch * layer.out_dim];
            for n in 0..batch {
                let x = &src[n * layer.in_dim..(n + 1) * layer.in_dim];
                let out = &mut z[n * layer.out_dim..(n + 1) * layer.out_dim];
                for (o, slot) in out.iter_mut().enumerate() {
                    *slot = layer.bias[o] + dot(layer.row(o), x);
                }
            }
            let a = if li == last { Vec::new() } else { z.iter().map(|&v| elu(v)).collect() };
            pre.push(z);
            post.push(a);
        }
        ForwardCache { batch, input: input.to_vec(), pre, post }
    }

    /// Accumulates parameter gradients into `grads` given `d loss / d output`
    /// (row-major `batch x output_dim`).
    pub fn backward_batch(&self, cache: &ForwardCache, grad_out: &[f64], grads: &mut Mlp) {
        let batch = cache.batch;
        assert_eq!(grad_out.len(), batch * self.output_dim());
        let mut g = grad_out.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let gl = &mut grads.layers[li];
            let src: &[f64] = if li == 0 { &cache.input } else { &cache.post[li - 1] };
            let mut g_prev = if li > 0 { vec![0.0; batch * layer.in_dim] } else { Vec::new() };
            for n in 0..batch {
                let x = &src[n * layer.in_dim..(n + 1) * layer.in_dim];
                let gn = &g[n * layer.out_dim..(n + 1) * layer.out_dim];
                for (o, &go) in gn.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    gl.bias[o] += go;
                    axpy(go, x, &mut gl.weights[o * layer.in_dim..(o + 1) * layer.in_dim]);
                    if li > 0 {
                        axpy(go, layer.row(o), &mut g_prev[n * layer.in_dim..(n + 1) * layer.in_dim]);
                    }
                }
            }
            if li > 0 {
                let z_prev = &cache.pre[li - 1];
                for (gp, &z) in g_prev.iter_mut().zip(z_prev) {
                    *gp *= elu_grad(z);
                }
                g = g_prev;
            }
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }
}
