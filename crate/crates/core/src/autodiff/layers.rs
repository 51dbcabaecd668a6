use rand::Rng;
use rand_distr::StandardNormal;

use super::graph::{Graph, GraphError, Result, Var};
use super::params::{ParamId, ParamStore};
use super::Tensor;

fn uniform_fan_in<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Tensor {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::from_vec(rows, cols, data)
}

/// Fully connected layer `y = x W^T + b`; weight stored `out x in`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    /// Weights and bias uniform in `±sqrt(1 / in)`.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let weight = store.add(format!("{name}.w"), uniform_fan_in(output, input, input, rng));
        let bias = store.add(format!("{name}.b"), uniform_fan_in(1, output, input, rng));
        Self {
            weight,
            bias,
            input,
            output,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        g.linear(x, w, Some(b))
    }

    /// Sets weight and bias to zero (used for output heads in tests and for
    /// a neutral starting point).
    pub fn zero(&self, store: &mut ParamStore) {
        store.get_mut(self.weight).data_mut().fill(0.0);
        store.get_mut(self.bias).data_mut().fill(0.0);
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}

/// Gated recurrent unit; gate blocks stacked (update, reset, candidate).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GruCell {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let w = store.add(format!("{name}.w"), uniform_fan_in(3 * hidden, input, input, rng));
        let u = store.add(format!("{name}.u"), uniform_fan_in(3 * hidden, hidden, hidden, rng));
        let b = store.add(format!("{name}.b"), uniform_fan_in(1, 3 * hidden, hidden, rng));
        Self {
            w,
            u,
            b,
            input,
            hidden,
        }
    }

    pub fn step(&self, g: &mut Graph<'_>, x: Var, h: Var) -> Result<Var> {
        let w = g.param(self.w);
        let u = g.param(self.u);
        let b = g.param(self.b);
        g.gru(x, h, w, u, b)
    }

    pub fn params(&self) -> [ParamId; 3] {
        [self.w, self.u, self.b]
    }
}

/// Reparameterised Gaussian sample `z = mu + sigma * eps` with `eps`
/// supplied by the caller; gradients reach `mu` and `sigma` only.
pub fn reparam_with_noise(g: &mut Graph<'_>, mu: Var, sigma: Var, eps: Tensor) -> Result<Var> {
    if let Some(&bad) = g.value(sigma).data().iter().find(|&&s| s <= 0.0) {
        return Err(GraphError::NonPositiveSigma(bad));
    }
    let eps = g.constant(eps)?;
    let spread = g.mul(sigma, eps)?;
    g.add(mu, spread)
}

/// [`reparam_with_noise`] with `eps ~ N(0, I)` drawn from `rng`.
pub fn reparam_sample<R: Rng + ?Sized>(g: &mut Graph<'_>, mu: Var, sigma: Var, rng: &mut R) -> Result<Var> {
    let (r, c) = g.shape(mu);
    let eps = Tensor::from_vec(r, c, (0..r * c).map(|_| rng.sample(StandardNormal)).collect());
    reparam_with_noise(g, mu, sigma, eps)
}

/// Numerically stable softmax over a plain slice.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    super::graph::softmax_in_place(&mut out);
    out
}
