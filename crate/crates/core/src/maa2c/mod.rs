//! Multi-agent synchronous advantage actor-critic.
//!
//! Every agent owns a recurrent policy over its local observation (plus a
//! task-embedding conditioning vector), a critic over the joint
//! observation, a soft-updated target critic and its own Adam optimiser.

mod learner;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Dense, Graph, GraphError, GruCell, ParamId, ParamStore, Result, Var};

pub use learner::{EpisodeRecord, IterationStats, Learner, LearnerError, StepTrace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct A2cConfig {
    pub lr: f64,
    pub adam_eps: f64,
    pub gamma: f64,
    pub n_steps: usize,
    pub n_envs: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub tau: f64,
    pub policy_hidden: usize,
    pub critic_hidden: usize,
    /// Global gradient-norm bound per agent; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
    /// Appends every agent's conditioning vector to the critic input.
    pub critic_embeddings: bool,
}

impl Default for A2cConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            adam_eps: 1e-3,
            gamma: 0.99,
            n_steps: 5,
            n_envs: 10,
            entropy_coef: 0.01,
            value_coef: 0.5,
            tau: 0.01,
            policy_hidden: 128,
            critic_hidden: 128,
            max_grad_norm: None,
            critic_embeddings: false,
        }
    }
}

/// FC - ReLU - GRU - FC over `(o^i, conditioning)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyNet {
    pub fc: Dense,
    pub gru: GruCell,
    pub head: Dense,
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, n_actions: usize, rng: &mut R) -> Self {
        Self {
            fc: Dense::new(store, &format!("{name}.fc"), input, hidden, rng),
            gru: GruCell::new(store, &format!("{name}.gru"), hidden, hidden, rng),
            head: Dense::new(store, &format!("{name}.head"), hidden, n_actions, rng),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.gru.hidden
    }

    /// Returns `(log-probabilities, new hidden)`.
    pub fn forward(&self, g: &mut Graph<'_>, obs: Var, cond: Var, h: Var) -> Result<(Var, Var)> {
        let x = g.concat(&[obs, cond])?;
        let a = self.fc.forward(g, x)?;
        let a = g.relu(a)?;
        let h = self.gru.step(g, a, h)?;
        let logits = self.head.forward(g, h)?;
        Ok((g.log_softmax(logits)?, h))
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.fc.params().to_vec();
        p.extend(self.gru.params());
        p.extend(self.head.params());
        p
    }
}

/// FC - ReLU - FC state-value head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CriticNet {
    pub fc: Dense,
    pub out: Dense,
}

impl CriticNet {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            fc: Dense::new(store, &format!("{name}.fc"), input, hidden, rng),
            out: Dense::new(store, &format!("{name}.out"), hidden, 1, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let h = self.fc.forward(g, x)?;
        let h = g.relu(h)?;
        self.out.forward(g, h)
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.fc.params().to_vec();
        p.extend(self.out.params());
        p
    }

    /// Registers a second critic under `name` holding a copy of this one.
    pub fn duplicate(&self, store: &mut ParamStore, name: &str) -> Self {
        let copy = |store: &mut ParamStore, id: ParamId, suffix: &str| {
            let value = store.get(id).clone();
            store.add(format!("{name}.{suffix}"), value)
        };
        Self {
            fc: Dense {
                weight: copy(store, self.fc.weight, "fc.w"),
                bias: copy(store, self.fc.bias, "fc.b"),
                ..self.fc.clone()
            },
            out: Dense {
                weight: copy(store, self.out.weight, "out.w"),
                bias: copy(store, self.out.bias, "out.b"),
                ..self.out.clone()
            },
        }
    }
}

/// Bootstrapped `n`-step returns of one env slot and agent:
/// `G_t = sum_k gamma^k r_{t+k} + gamma^(T-t) V(o_T)`, where the sum stops
/// at (and includes) the first done flag, in which case nothing is
/// bootstrapped.
pub fn nstep_returns(rewards: &[f64], dones: &[bool], bootstrap: f64, gamma: f64) -> std::result::Result<Vec<f64>, LearnerError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(LearnerError::Config(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    let mut out = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for t in (0..rewards.len()).rev() {
        if dones[t] {
            acc = 0.0;
        }
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    Ok(out)
}

/// Scalar losses of one agent over a rollout, all on the tape.
#[derive(Clone, Copy, Debug)]
pub struct A2cLosses {
    pub policy: Var,
    pub value: Var,
    pub entropy: Var,
    pub total: Var,
}

/// Policy-gradient, value and entropy terms for one agent.
///
/// `log_probs[t]` is `B x |A|`, `values[t]` is `B x 1`; `actions[t][k]` and
/// `returns[t][k]` index slot `k`. Advantages use the critic's values as
/// constants.
pub fn a2c_losses(
    g: &mut Graph<'_>,
    log_probs: &[Var],
    actions: &[Vec<usize>],
    values: &[Var],
    returns: &[Vec<f64>],
    entropy_coef: f64,
    value_coef: f64,
) -> Result<A2cLosses> {
    let steps = log_probs.len();
    if steps == 0 || actions.len() != steps || values.len() != steps || returns.len() != steps {
        return Err(GraphError::Shape {
            op: "a2c_losses",
            detail: format!("{steps} log-prob steps, {} action steps, {} value steps", actions.len(), values.len()),
        });
    }
    let rows = g.shape(log_probs[0]).0;
    let count = (rows * steps) as f64;
    let mut pg = None;
    let mut ent = None;
    let mut vl = None;
    let add = |g: &mut Graph<'_>, acc: Option<Var>, x: Var| -> Result<Var> {
        match acc {
            None => Ok(x),
            Some(a) => g.add(a, x),
        }
    };
    for t in 0..steps {
        let lp = log_probs[t];
        let p = g.exp(lp)?;
        let plp = g.mul(p, lp)?;
        let e = g.sum(plp)?;
        ent = Some(add(g, ent, e)?);

        let v = g.value(values[t]).clone();
        let adv: Vec<f64> = (0..rows).map(|k| returns[t][k] - v.get(k, 0)).collect();
        let adv = g.constant(crate::autodiff::Tensor::from_vec(rows, 1, adv))?;
        let lpa = g.pick(lp, &actions[t])?;
        let weighted = g.mul(lpa, adv)?;
        let s = g.sum(weighted)?;
        pg = Some(add(g, pg, s)?);

        let target = g.constant(crate::autodiff::Tensor::from_vec(rows, 1, returns[t].clone()))?;
        let diff = g.sub(target, values[t])?;
        let sq = g.square(diff)?;
        let s = g.sum(sq)?;
        vl = Some(add(g, vl, s)?);
    }
    // sum p log p is minus the entropy.
    let neg_entropy = g.scale(ent.expect("steps > 0"), 1.0 / count)?;
    let entropy = g.scale(neg_entropy, -1.0)?;
    let pg = g.scale(pg.expect("steps > 0"), -1.0 / count)?;
    let ent_term = g.scale(neg_entropy, entropy_coef)?;
    let policy = g.add(pg, ent_term)?;
    let value = g.scale(vl.expect("steps > 0"), 1.0 / count)?;
    let weighted_value = g.scale(value, value_coef)?;
    let total = g.add(policy, weighted_value)?;
    Ok(A2cLosses {
        policy,
        value,
        entropy,
        total,
    })
}

/// `target <- (1 - tau) target + tau source`, elementwise.
pub fn soft_update(store: &mut ParamStore, target: &[ParamId], source: &[ParamId], tau: f64) {
    assert_eq!(target.len(), source.len(), "target and source parameter lists differ");
    for (&t, &s) in target.iter().zip(source) {
        let src = store.get(s).clone();
        let dst = store.get_mut(t);
        assert_eq!(dst.shape(), src.shape(), "soft update shape mismatch");
        for (d, v) in dst.data_mut().iter_mut().zip(src.data()) {
            *d = (1.0 - tau) * *d + tau * v;
        }
    }
}

/// Entropy of a probability vector (natural log).
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}
