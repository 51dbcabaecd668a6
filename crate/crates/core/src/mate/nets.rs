use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{kl_std_normal_rows, mate_loss, reconstruction_error, EmbeddingSource, MateError, Paradigm, Result, TaskEmbedding};
use crate::autodiff::{reparam_with_noise, Dense, Graph, GruCell, ParamId, ParamStore, Tensor, Var};
use crate::posg::JointObservation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MateConfig {
    /// Latent size `d`; encoders emit `2d` numbers.
    pub embedding_dim: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    pub beta: f64,
    pub lr: f64,
    pub adam_eps: f64,
    pub max_grad_norm: f64,
    /// Lets reconstruction gradients reach the mixing weights through a
    /// straight-through factor on the chosen component.
    pub mix_straight_through: bool,
}

impl Default for MateConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 3,
            encoder_hidden: 64,
            decoder_hidden: 64,
            beta: 0.1,
            lr: 1e-4,
            adam_eps: 1e-3,
            max_grad_norm: 0.5,
            mix_straight_through: false,
        }
    }
}

fn one_hot_into(out: &mut Vec<f64>, k: usize, n: usize) {
    let start = out.len();
    out.resize(start + n, 0.0);
    out[start + k] = 1.0;
}

/// Encoder inputs for one timestep over `B` env slots: one `B x in` tensor
/// per encoder. Per-agent rows are `(o^i, onehot a^i, r^i)`; the
/// centralised row concatenates all observations, then all actions, then
/// all rewards.
pub fn encoder_inputs(paradigm: Paradigm, obs: &[JointObservation], actions: &[Vec<usize>], rewards: &[Vec<f64>], n_actions: usize) -> Vec<Tensor> {
    let b = obs.len();
    let n = obs.first().map_or(0, JointObservation::n_agents);
    match paradigm {
        Paradigm::None => Vec::new(),
        Paradigm::Cen => {
            let mut data = Vec::new();
            for k in 0..b {
                data.extend(obs[k].flatten());
                for &a in &actions[k] {
                    one_hot_into(&mut data, a, n_actions);
                }
                data.extend_from_slice(&rewards[k]);
            }
            let cols = data.len() / b.max(1);
            vec![Tensor::from_vec(b, cols, data)]
        }
        Paradigm::Ind | Paradigm::Mix => (0..n)
            .map(|i| {
                let mut data = Vec::new();
                for k in 0..b {
                    data.extend_from_slice(obs[k].agent(i));
                    one_hot_into(&mut data, actions[k][i], n_actions);
                    data.push(rewards[k][i]);
                }
                let cols = data.len() / b.max(1);
                Tensor::from_vec(b, cols, data)
            })
            .collect(),
    }
}

/// FC - ReLU - GRU - FC emitting `(mu, log sigma)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoder {
    pub fc: Dense,
    pub gru: GruCell,
    pub head: Dense,
    pub dim: usize,
}

/// Encoder outputs on the tape.
#[derive(Clone, Copy, Debug)]
pub struct EncoderOut {
    pub mu: Var,
    pub log_sigma: Var,
    pub hidden: Var,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            fc: Dense::new(store, &format!("{name}.fc"), input, hidden, rng),
            gru: GruCell::new(store, &format!("{name}.gru"), hidden, hidden, rng),
            head: Dense::new(store, &format!("{name}.head"), hidden, 2 * dim, rng),
            dim,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.gru.hidden
    }

    pub fn step(&self, g: &mut Graph<'_>, x: Var, h: Var) -> Result<EncoderOut> {
        let a = self.fc.forward(g, x)?;
        let a = g.relu(a)?;
        let hidden = self.gru.step(g, a, h)?;
        let out = self.head.forward(g, hidden)?;
        Ok(EncoderOut {
            mu: g.slice_cols(out, 0, self.dim)?,
            log_sigma: g.slice_cols(out, self.dim, self.dim)?,
            hidden,
        })
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.fc.params().to_vec();
        p.extend(self.gru.params());
        p.extend(self.head.params());
        p
    }
}

/// FC - ReLU - FC from `(z, joint obs, joint one-hot actions)` to the
/// predicted next joint observation followed by the joint reward.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decoder {
    pub fc: Dense,
    pub out: Dense,
}

impl Decoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        Self {
            fc: Dense::new(store, &format!("{name}.fc"), input, hidden, rng),
            out: Dense::new(store, &format!("{name}.out"), hidden, output, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, z: Var, joint_obs: Var, joint_actions: Var) -> Result<Var> {
        let x = g.concat(&[z, joint_obs, joint_actions])?;
        let h = self.fc.forward(g, x)?;
        let h = g.relu(h)?;
        Ok(self.out.forward(g, h)?)
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.fc.params().to_vec();
        p.extend(self.out.params());
        p
    }
}

/// Single linear layer with softmax output over agents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixingNet {
    pub layer: Dense,
}

impl MixingNet {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, joint_obs: usize, n_agents: usize, rng: &mut R) -> Self {
        Self {
            layer: Dense::new(store, name, joint_obs, n_agents, rng),
        }
    }

    pub fn weights(&self, g: &mut Graph<'_>, joint_obs: Var) -> Result<Var> {
        let logits = self.layer.forward(g, joint_obs)?;
        Ok(g.softmax(logits)?)
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layer.params().to_vec()
    }
}

/// Decoder inputs and targets of one timestep over `B` env slots.
#[derive(Clone, Debug, PartialEq)]
pub struct MateBatchStep {
    /// `B x sum |o|`
    pub joint_obs: Tensor,
    /// `B x N|A|`
    pub joint_actions: Tensor,
    /// `B x (sum |o| + N)`: next joint observation, then rewards.
    pub target: Tensor,
}

impl MateBatchStep {
    pub fn new(obs: &[JointObservation], actions: &[Vec<usize>], next_obs: &[JointObservation], rewards: &[Vec<f64>], n_actions: usize) -> Self {
        let b = obs.len();
        let mut o = Vec::new();
        let mut a = Vec::new();
        let mut t = Vec::new();
        for k in 0..b {
            o.extend(obs[k].flatten());
            for &x in &actions[k] {
                one_hot_into(&mut a, x, n_actions);
            }
            t.extend(next_obs[k].flatten());
            t.extend_from_slice(&rewards[k]);
        }
        let cols = |v: &Vec<f64>| v.len() / b.max(1);
        Self {
            joint_obs: Tensor::from_vec(b, cols(&o), o.clone()),
            joint_actions: Tensor::from_vec(b, cols(&a), a.clone()),
            target: Tensor::from_vec(b, cols(&t), t.clone()),
        }
    }
}

/// All networks of one paradigm.
#[derive(Clone, Debug, PartialEq)]
pub struct MateNets {
    pub paradigm: Paradigm,
    pub config: MateConfig,
    pub n_agents: usize,
    pub obs_size: usize,
    pub n_actions: usize,
    pub encoders: Vec<Encoder>,
    pub decoder: Decoder,
    pub mixing: Option<MixingNet>,
}

impl MateNets {
    /// Parameters are registered under the `mate.` prefix.
    ///
    /// Panics for [`Paradigm::None`].
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        paradigm: Paradigm,
        n_agents: usize,
        obs_size: usize,
        n_actions: usize,
        config: MateConfig,
        rng: &mut R,
    ) -> Self {
        assert!(paradigm.uses_mate(), "paradigm none has no task-embedding networks");
        let d = config.embedding_dim;
        let per_agent = obs_size + n_actions + 1;
        let enc_in = if paradigm == Paradigm::Cen { n_agents * per_agent } else { per_agent };
        let encoders = (0..paradigm.n_encoders(n_agents))
            .map(|i| {
                let name = if paradigm == Paradigm::Cen { "mate.encoder".to_string() } else { format!("mate.encoder{i}") };
                Encoder::new(store, &name, enc_in, config.encoder_hidden, d, rng)
            })
            .collect();
        let joint_obs = n_agents * obs_size;
        let decoder = Decoder::new(
            store,
            "mate.decoder",
            d + joint_obs + n_agents * n_actions,
            config.decoder_hidden,
            joint_obs + n_agents,
            rng,
        );
        let mixing = (paradigm == Paradigm::Mix).then(|| MixingNet::new(store, "mate.mixing", joint_obs, n_agents, rng));
        Self {
            paradigm,
            config,
            n_agents,
            obs_size,
            n_actions,
            encoders,
            decoder,
            mixing,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.config.encoder_hidden
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p: Vec<ParamId> = self.encoders.iter().flat_map(Encoder::params).collect();
        p.extend(self.decoder.params());
        if let Some(m) = &self.mixing {
            p.extend(m.params());
        }
        p
    }

    /// Advances every encoder by one timestep.
    pub fn encode(&self, g: &mut Graph<'_>, inputs: &[Var], hidden: &[Var]) -> Result<Vec<EncoderOut>> {
        if inputs.len() != self.encoders.len() || hidden.len() != self.encoders.len() {
            return Err(MateError::Scope {
                paradigm: self.paradigm,
                expected: self.encoders.len(),
                got: inputs.len().min(hidden.len()),
            });
        }
        self.encoders
            .iter()
            .zip(inputs.iter().zip(hidden))
            .map(|(e, (&x, &h))| e.step(g, x, h))
            .collect()
    }

    /// Embeddings of env slot `row` read off the tape.
    pub fn embeddings_at(&self, g: &Graph<'_>, outs: &[EncoderOut], row: usize) -> Vec<TaskEmbedding> {
        outs.iter()
            .enumerate()
            .map(|(i, o)| {
                let source = if self.paradigm == Paradigm::Cen { EmbeddingSource::Centralised } else { EmbeddingSource::Agent(i) };
                TaskEmbedding {
                    mu: g.value(o.mu).row(row).to_vec(),
                    sigma: g.value(o.log_sigma).row(row).iter().map(|s| s.exp()).collect(),
                    source,
                }
            })
            .collect()
    }

    /// Mixture weights (`B x N`) for the mixed paradigm.
    pub fn mix_weights(&self, g: &mut Graph<'_>, joint_obs: Var) -> Result<Option<Var>> {
        match &self.mixing {
            Some(m) => Ok(Some(m.weights(g, joint_obs)?)),
            None => Ok(None),
        }
    }

    /// Loss of one timestep, averaged over its `B` rows.
    ///
    /// * ind: every agent's sample is decoded against the joint targets and
    ///   the reconstruction errors are averaged; the KL is averaged over
    ///   agents.
    /// * cen: one sample, one KL.
    /// * mix: a component is drawn per row from the mixture weights and its
    ///   sample decoded; the KL term is the weighted sum of component KLs.
    pub fn step_loss<R: Rng + ?Sized>(&self, g: &mut Graph<'_>, outs: &[EncoderOut], step: &MateBatchStep, rng: &mut R) -> Result<Var> {
        let b = step.joint_obs.rows();
        let d = self.config.embedding_dim;
        let obs = g.constant(step.joint_obs.clone())?;
        let acts = g.constant(step.joint_actions.clone())?;
        let target = g.constant(step.target.clone())?;
        let mut samples = Vec::with_capacity(outs.len());
        let mut kls = Vec::with_capacity(outs.len());
        for o in outs {
            let sigma = g.exp(o.log_sigma)?;
            let eps = Tensor::from_vec(b, d, (0..b * d).map(|_| rng.sample(StandardNormal)).collect());
            samples.push(reparam_with_noise(g, o.mu, sigma, eps)?);
            kls.push(kl_std_normal_rows(g, o.mu, o.log_sigma)?);
        }
        match self.paradigm {
            Paradigm::None => unreachable!("no task-embedding loss without encoders"),
            Paradigm::Cen => {
                let pred = self.decoder.forward(g, samples[0], obs, acts)?;
                let rec = reconstruction_error(g, pred, target)?;
                mate_loss(g, &[rec], kls[0], self.config.beta)
            }
            Paradigm::Ind => {
                let mut recs = Vec::with_capacity(samples.len());
                for &z in &samples {
                    let pred = self.decoder.forward(g, z, obs, acts)?;
                    recs.push(reconstruction_error(g, pred, target)?);
                }
                let mut kl = kls[0];
                for &k in &kls[1..] {
                    kl = g.add(kl, k)?;
                }
                let kl = g.scale(kl, 1.0 / kls.len() as f64)?;
                mate_loss(g, &recs, kl, self.config.beta)
            }
            Paradigm::Mix => {
                let w = self.mix_weights(g, obs)?.expect("mixed paradigm has a mixing net");
                let wv = g.value(w).clone();
                let chosen: Vec<usize> = (0..b).map(|r| super::sample_categorical(wv.row(r), rng)).collect();
                let mut z = None;
                for (i, &zi) in samples.iter().enumerate() {
                    let mask = Tensor::from_vec(b, 1, chosen.iter().map(|&k| if k == i { 1.0 } else { 0.0 }).collect());
                    let mask = g.constant(mask)?;
                    let part = g.scale_rows(zi, mask)?;
                    z = Some(match z {
                        None => part,
                        Some(acc) => g.add(acc, part)?,
                    });
                }
                let mut z = z.expect("at least one component");
                if self.config.mix_straight_through {
                    let wk = g.pick(w, &chosen)?;
                    let inv = Tensor::from_vec(b, 1, (0..b).map(|r| 1.0 / wv.get(r, chosen[r])).collect());
                    let inv = g.constant(inv)?;
                    let factor = g.mul(wk, inv)?;
                    z = g.scale_rows(z, factor)?;
                }
                let pred = self.decoder.forward(g, z, obs, acts)?;
                let rec = reconstruction_error(g, pred, target)?;
                let mut kl = None;
                for (i, &k) in kls.iter().enumerate() {
                    let wi = g.slice_cols(w, i, 1)?;
                    let term = g.mul(wi, k)?;
                    kl = Some(match kl {
                        None => term,
                        Some(acc) => g.add(acc, term)?,
                    });
                }
                mate_loss(g, &[rec], kl.expect("at least one component"), self.config.beta)
            }
        }
    }
}
