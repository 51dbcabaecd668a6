//! Multi-agent task embeddings.
//!
//! Recurrent encoders turn trajectories into diagonal Gaussians over a
//! latent task vector; a shared decoder reconstructs next joint
//! observations and rewards from samples. Three paradigms decide whose
//! trajectory each encoder reads and how the latents are combined:
//!
//! * `ind`: one encoder per agent on its own `(o, a, r)` stream.
//! * `cen`: one encoder on the joint stream, shared by all agents.
//! * `mix`: per-agent encoders whose Gaussians form a mixture weighted by a
//!   softmax over the joint observation.

mod nets;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, GraphError, Var};

pub use nets::{encoder_inputs, Decoder, Encoder, EncoderOut, MateBatchStep, MateConfig, MateNets, MixingNet};

#[derive(Debug, thiserror::Error)]
pub enum MateError {
    #[error("beta must be non-negative, got {0}")]
    NegativeBeta(f64),
    #[error("standard deviation must be strictly positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("paradigm {paradigm} expects {expected} embeddings, got {got}")]
    Scope { paradigm: Paradigm, expected: usize, got: usize },
    #[error("mixture weights must be non-negative and sum to 1 (sum {0})")]
    BadWeights(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub type Result<T> = std::result::Result<T, MateError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    /// No task embeddings; policies see a zero conditioning vector.
    #[default]
    None,
    Ind,
    Cen,
    Mix,
}

impl Paradigm {
    pub fn uses_mate(self) -> bool {
        self != Paradigm::None
    }

    /// Number of encoders for a team of `n_agents`.
    pub fn n_encoders(self, n_agents: usize) -> usize {
        match self {
            Paradigm::None => 0,
            Paradigm::Cen => 1,
            Paradigm::Ind | Paradigm::Mix => n_agents,
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Paradigm::None => "none",
            Paradigm::Ind => "ind",
            Paradigm::Cen => "cen",
            Paradigm::Mix => "mix",
        })
    }
}

impl FromStr for Paradigm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Paradigm::None),
            "ind" => Ok(Paradigm::Ind),
            "cen" => Ok(Paradigm::Cen),
            "mix" => Ok(Paradigm::Mix),
            other => Err(format!("unknown paradigm `{other}` (expected none, ind, cen or mix)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbeddingSource {
    Agent(usize),
    Centralised,
}

/// Diagonal Gaussian `N(mu, diag(sigma^2))` over the task latent.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskEmbedding {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub source: EmbeddingSource,
}

impl TaskEmbedding {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>, source: EmbeddingSource) -> Result<Self> {
        assert_eq!(mu.len(), sigma.len(), "mu and sigma dimensions differ");
        if let Some(&s) = sigma.iter().find(|&&s| !(s > 0.0)) {
            return Err(MateError::NonPositiveSigma(s));
        }
        Ok(Self { mu, sigma, source })
    }

    /// The standard normal prior.
    pub fn prior(dim: usize, source: EmbeddingSource) -> Self {
        Self {
            mu: vec![0.0; dim],
            sigma: vec![1.0; dim],
            source,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `(mu, sigma)` concatenated; what a policy is conditioned on.
    pub fn conditioning(&self) -> Vec<f64> {
        let mut v = self.mu.clone();
        v.extend_from_slice(&self.sigma);
        v
    }

    pub fn kl(&self) -> f64 {
        kl_terms(&self.mu, &self.sigma)
    }
}

/// Components and weights of the mixed paradigm's joint embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureEmbedding {
    pub components: Vec<TaskEmbedding>,
    pub weights: Vec<f64>,
}

impl MixtureEmbedding {
    pub fn new(components: Vec<TaskEmbedding>, weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if components.len() != weights.len() || weights.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(MateError::BadWeights(sum));
        }
        Ok(Self { components, weights })
    }
}

fn kl_terms(mu: &[f64], sigma: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(sigma)
        .map(|(m, s)| 1.0 + (s * s).ln() - m * m - s * s)
        .sum::<f64>()
}

/// `KL(N(mu, diag sigma^2) || N(0, I))` in closed form.
pub fn kl_std_normal(emb: &TaskEmbedding) -> Result<f64> {
    if let Some(&s) = emb.sigma.iter().find(|&&s| !(s > 0.0)) {
        return Err(MateError::NonPositiveSigma(s));
    }
    Ok(kl_terms(&emb.mu, &emb.sigma))
}

/// Row-wise KL on the tape from `mu` and `log sigma` (`B x d` each);
/// returns `B x 1`.
pub fn kl_std_normal_rows(g: &mut Graph<'_>, mu: Var, log_sigma: Var) -> Result<Var> {
    // -1/2 (1 + 2 log s - mu^2 - s^2) = 1/2 (mu^2 + s^2 - 1) - log s
    let mu2 = g.square(mu)?;
    let two_ls = g.scale(log_sigma, 2.0)?;
    let s2 = g.exp(two_ls)?;
    let quad = g.add(mu2, s2)?;
    let quad = g.offset(quad, -1.0)?;
    let half = g.scale(quad, 0.5)?;
    let per_dim = g.sub(half, log_sigma)?;
    Ok(g.row_sum(per_dim)?)
}

/// Summed squared error per row (`B x 1`).
pub fn reconstruction_error(g: &mut Graph<'_>, pred: Var, target: Var) -> Result<Var> {
    let diff = g.sub(pred, target)?;
    let sq = g.square(diff)?;
    Ok(g.row_sum(sq)?)
}

/// Batch mean of `mean_k recon[k] + beta * kl`.
///
/// `recon` holds one `B x 1` reconstruction error per decoded sample (one
/// per agent in the independent paradigm, a single one otherwise).
pub fn mate_loss(g: &mut Graph<'_>, recon: &[Var], kl: Var, beta: f64) -> Result<Var> {
    if beta < 0.0 {
        return Err(MateError::NegativeBeta(beta));
    }
    let mut total = recon[0];
    for &r in &recon[1..] {
        total = g.add(total, r)?;
    }
    let total = g.scale(total, 1.0 / recon.len() as f64)?;
    let reg = g.scale(kl, beta)?;
    let per_row = g.add(total, reg)?;
    Ok(g.mean(per_row)?)
}

/// Draws a component from the weights, then a reparameterised sample from
/// it. Returns `(z, component)`.
pub fn mixture_sample<R: Rng + ?Sized>(mix: &MixtureEmbedding, rng: &mut R) -> (Vec<f64>, usize) {
    let k = sample_categorical(&mix.weights, rng);
    let c = &mix.components[k];
    let z = c
        .mu
        .iter()
        .zip(&c.sigma)
        .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (z, k)
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Per-agent conditioning vectors `(mu, sigma)` of length `2d`.
///
/// `embeddings` holds one entry per encoder: none for the baseline (zero
/// vectors of length `2 * dim`), one for the centralised paradigm (shared by
/// everybody) and one per agent otherwise. Values are plain numbers, so
/// nothing downstream can push gradients into the encoders.
pub fn embedding_for_policy(paradigm: Paradigm, embeddings: &[TaskEmbedding], n_agents: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    let expected = paradigm.n_encoders(n_agents);
    if embeddings.len() != expected {
        return Err(MateError::Scope {
            paradigm,
            expected,
            got: embeddings.len(),
        });
    }
    Ok(match paradigm {
        Paradigm::None => vec![vec![0.0; 2 * dim]; n_agents],
        Paradigm::Cen => vec![embeddings[0].conditioning(); n_agents],
        Paradigm::Ind | Paradigm::Mix => embeddings.iter().map(TaskEmbedding::conditioning).collect(),
    })
}

/// Recurrent encoder state per env slot (`B x H` per encoder).
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStates {
    pub hidden: Vec<crate::autodiff::Tensor>,
}

impl EncoderStates {
    pub fn zeros(n_encoders: usize, n_slots: usize, hidden: usize) -> Self {
        Self {
            hidden: vec![crate::autodiff::Tensor::zeros(n_slots, hidden); n_encoders],
        }
    }
}

/// Zeros every encoder's hidden row for `slot`.
pub fn reset_encoder_states(states: &mut EncoderStates, slot: usize) {
    for h in &mut states.hidden {
        let cols = h.cols();
        h.data_mut()[slot * cols..(slot + 1) * cols].fill(0.0);
    }
}
