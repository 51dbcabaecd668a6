use super::{a2c_losses, nstep_returns, soft_update, A2cConfig, CriticNet, PolicyNet};
use crate::autodiff::{Adam, AdamConfig, Graph, GraphError, ParamId, ParamStore, Tensor, Var};
use crate::envs::LayoutRegistry;
use crate::mate::{
    embedding_for_policy, encoder_inputs, sample_categorical, EmbeddingSource, EncoderStates, MateBatchStep, MateConfig, MateError, MateNets,
    Paradigm, TaskEmbedding,
};
use crate::posg::{EnvError, JointObservation, TaskSet, VecEnv};
use crate::rng::{self, streams, StreamRng};

#[derive(Debug, thiserror::Error)]
pub enum LearnerError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Mate(#[from] MateError),
    #[error("{0}")]
    Config(String),
    #[error("no environments attached to the learner")]
    NoEnv,
}

type Result<T> = std::result::Result<T, LearnerError>;

/// Networks owned by one agent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentNets {
    pub policy: PolicyNet,
    pub critic: CriticNet,
    pub target: CriticNet,
}

/// One finished training episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    /// Env timesteps consumed when the episode ended.
    pub timestep: u64,
    pub task_index: usize,
    /// Sum of all agents' undiscounted returns.
    pub team_return: f64,
    pub len: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationStats {
    /// Means over agents.
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Absent without MATE or while the MATE networks are frozen.
    pub mate_loss: Option<f64>,
    pub episodes: Vec<EpisodeRecord>,
}

/// Embeddings observed at one timestep of an evaluation rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    pub episode: usize,
    pub task_index: usize,
    pub t: usize,
    /// One per encoder, after encoding the transition of step `t`.
    pub embeddings: Vec<TaskEmbedding>,
    pub weights: Option<Vec<f64>>,
}

struct Rollout {
    env: VecEnv,
    obs: Vec<JointObservation>,
    policy_h: Vec<Tensor>,
    enc: EncoderStates,
    /// Slot x agent conditioning vectors for the next action.
    cond: Vec<Vec<Vec<f64>>>,
}

/// Policies, critics, optional MATE networks, their optimisers and the
/// rollout state of the attached environments.
pub struct Learner {
    pub paradigm: Paradigm,
    pub a2c: A2cConfig,
    pub mate_config: MateConfig,
    pub n_agents: usize,
    pub obs_size: usize,
    pub n_actions: usize,
    pub store: ParamStore,
    pub agents: Vec<AgentNets>,
    pub mate: Option<MateNets>,
    pub optimizers: Vec<Adam>,
    pub mate_optimizer: Option<Adam>,
    /// Fine-tuning: MATE parameters receive no updates.
    pub freeze_mate: bool,
    pub action_rng: StreamRng,
    pub noise_rng: StreamRng,
    pub timesteps: u64,
    pub iterations: u64,
    rollout: Option<Rollout>,
}

fn initial_cond(paradigm: Paradigm, dim: usize) -> Vec<f64> {
    if paradigm.uses_mate() {
        TaskEmbedding::prior(dim, EmbeddingSource::Centralised).conditioning()
    } else {
        vec![0.0; 2 * dim]
    }
}

fn rows_tensor(rows: impl Iterator<Item = Vec<f64>>, n_rows: usize) -> Tensor {
    let data: Vec<f64> = rows.flatten().collect();
    let cols = data.len() / n_rows.max(1);
    Tensor::from_vec(n_rows, cols, data)
}

fn keep_mask(dones: &[bool]) -> Tensor {
    Tensor::from_vec(dones.len(), 1, dones.iter().map(|&d| if d { 0.0 } else { 1.0 }).collect())
}

impl Learner {
    pub fn new(paradigm: Paradigm, n_agents: usize, obs_size: usize, n_actions: usize, a2c: A2cConfig, mate_config: MateConfig, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&a2c.gamma) {
            return Err(LearnerError::Config(format!("gamma must lie in [0, 1), got {}", a2c.gamma)));
        }
        if a2c.n_steps == 0 || a2c.n_envs == 0 {
            return Err(LearnerError::Config("n_steps and n_envs must be positive".into()));
        }
        if mate_config.embedding_dim == 0 {
            return Err(LearnerError::Config("embedding_dim must be positive".into()));
        }
        if mate_config.beta < 0.0 {
            return Err(MateError::NegativeBeta(mate_config.beta).into());
        }
        let mut init = rng::stream(seed, streams::NETWORK_INIT);
        let mut store = ParamStore::new();
        let d = mate_config.embedding_dim;
        let joint = n_agents * obs_size;
        let critic_in = joint + if a2c.critic_embeddings { n_agents * 2 * d } else { 0 };
        let mut agents = Vec::with_capacity(n_agents);
        for i in 0..n_agents {
            let policy = PolicyNet::new(&mut store, &format!("agent{i}.policy"), obs_size + 2 * d, a2c.policy_hidden, n_actions, &mut init);
            let critic = CriticNet::new(&mut store, &format!("agent{i}.critic"), critic_in, a2c.critic_hidden, &mut init);
            let target = critic.duplicate(&mut store, &format!("agent{i}.target"));
            agents.push(AgentNets { policy, critic, target });
        }
        let mate = paradigm
            .uses_mate()
            .then(|| MateNets::new(&mut store, paradigm, n_agents, obs_size, n_actions, mate_config.clone(), &mut init));
        let optimizers = agents
            .iter()
            .map(|a| {
                let mut ids = a.policy.params();
                ids.extend(a.critic.params());
                Adam::new(AdamConfig::new(a2c.lr, a2c.adam_eps), &store, ids)
            })
            .collect();
        let mate_optimizer = mate
            .as_ref()
            .map(|m| Adam::new(AdamConfig::new(mate_config.lr, mate_config.adam_eps), &store, m.params()));
        Ok(Self {
            paradigm,
            a2c,
            mate_config,
            n_agents,
            obs_size,
            n_actions,
            store,
            agents,
            mate,
            optimizers,
            mate_optimizer,
            freeze_mate: false,
            action_rng: rng::stream(seed, streams::ACTIONS),
            noise_rng: rng::stream(seed, streams::EMBEDDING_NOISE),
            timesteps: 0,
            iterations: 0,
            rollout: None,
        })
    }

    /// Ids of every MATE parameter (empty without MATE).
    pub fn mate_params(&self) -> Vec<ParamId> {
        self.mate.as_ref().map(MateNets::params).unwrap_or_default()
    }

    /// Ids of policies, critics and target critics.
    pub fn marl_params(&self) -> Vec<ParamId> {
        self.agents
            .iter()
            .flat_map(|a| a.policy.params().into_iter().chain(a.critic.params()).chain(a.target.params()))
            .collect()
    }

    fn check_shapes(&self, tasks: &TaskSet) -> Result<()> {
        if tasks.n_agents() != self.n_agents || tasks.obs_size() != self.obs_size || tasks.n_actions() != self.n_actions {
            return Err(LearnerError::Config(format!(
                "task set has {} agents, obs size {}, {} actions; networks expect {}, {}, {}",
                tasks.n_agents(),
                tasks.obs_size(),
                tasks.n_actions(),
                self.n_agents,
                self.obs_size,
                self.n_actions
            )));
        }
        Ok(())
    }

    /// Starts fresh environments; all recurrent state is reset.
    pub fn attach(&mut self, tasks: TaskSet, layouts: LayoutRegistry, seed: u64) -> Result<()> {
        self.check_shapes(&tasks)?;
        let b = self.a2c.n_envs;
        let (env, obs) = VecEnv::new(tasks, layouts, b, seed)?;
        let n_enc = self.paradigm.n_encoders(self.n_agents);
        self.rollout = Some(Rollout {
            env,
            obs,
            policy_h: vec![Tensor::zeros(b, self.a2c.policy_hidden); self.n_agents],
            enc: EncoderStates::zeros(n_enc, b, self.mate_config.encoder_hidden),
            cond: vec![vec![initial_cond(self.paradigm, self.mate_config.embedding_dim); self.n_agents]; b],
        });
        Ok(())
    }

    fn critic_input(&self, obs: &[JointObservation], cond: &[Vec<Vec<f64>>]) -> Tensor {
        let b = obs.len();
        rows_tensor(
            (0..b).map(|k| {
                let mut row = obs[k].flatten();
                if self.a2c.critic_embeddings {
                    row.extend(cond[k].concat());
                }
                row
            }),
            b,
        )
    }

    /// Collects `n_envs x n_steps` transitions and applies one update to
    /// every agent and (unless frozen) to the MATE networks.
    pub fn train_iteration(&mut self) -> Result<IterationStats> {
        let mut ro = self.rollout.take().ok_or(LearnerError::NoEnv)?;
        let out = self.iterate(&mut ro);
        self.rollout = Some(ro);
        out
    }

    fn iterate(&mut self, ro: &mut Rollout) -> Result<IterationStats> {
        let n = self.n_agents;
        let b = ro.env.len();
        let steps = self.a2c.n_steps;
        let d = self.mate_config.embedding_dim;
        let train_mate = self.mate.is_some() && !self.freeze_mate;
        let mut stats = IterationStats::default();

        let (grads, mate_grads) = {
            let store = &self.store;
            let mut g = Graph::new(store);
            let target_ids: Vec<ParamId> = self.agents.iter().flat_map(|a| a.target.params()).collect();
            g.freeze(target_ids);
            let mut gm = Graph::new(store);
            if !train_mate {
                gm.freeze(self.mate_params());
            }

            let mut h: Vec<Var> = ro.policy_h.iter().map(|t| g.constant(t.clone())).collect::<std::result::Result<_, _>>()?;
            let mut eh: Vec<Var> = ro.enc.hidden.iter().map(|t| gm.constant(t.clone())).collect::<std::result::Result<_, _>>()?;
            let mut log_probs: Vec<Vec<Var>> = vec![Vec::with_capacity(steps); n];
            let mut values: Vec<Vec<Var>> = vec![Vec::with_capacity(steps); n];
            let mut actions: Vec<Vec<Vec<usize>>> = vec![Vec::with_capacity(steps); n];
            let mut rewards: Vec<Vec<Vec<f64>>> = Vec::with_capacity(steps);
            let mut dones: Vec<Vec<bool>> = Vec::with_capacity(steps);
            let mut mate_terms = Vec::with_capacity(steps);

            for _ in 0..steps {
                let critic_x = g.constant(self.critic_input(&ro.obs, &ro.cond))?;
                let mut joint: Vec<Vec<usize>> = vec![Vec::with_capacity(n); b];
                for (i, agent) in self.agents.iter().enumerate() {
                    let o = g.constant(rows_tensor(ro.obs.iter().map(|jo| jo.agent(i).to_vec()), b))?;
                    let c = g.constant(rows_tensor(ro.cond.iter().map(|c| c[i].clone()), b))?;
                    let (lp, h_new) = agent.policy.forward(&mut g, o, c, h[i])?;
                    let lpv = g.value(lp);
                    let mut acts = Vec::with_capacity(b);
                    for (k, slot) in joint.iter_mut().enumerate() {
                        let probs: Vec<f64> = lpv.row(k).iter().map(|x| x.exp()).collect();
                        let a = sample_categorical(&probs, &mut self.action_rng);
                        slot.push(a);
                        acts.push(a);
                    }
                    actions[i].push(acts);
                    log_probs[i].push(lp);
                    values[i].push(agent.critic.forward(&mut g, critic_x)?);
                    h[i] = h_new;
                }

                let results = ro.env.step(&joint)?;
                self.timesteps += b as u64;
                let step_rewards: Vec<Vec<f64>> = results.iter().map(|s| s.result.rewards.clone()).collect();
                let step_dones: Vec<bool> = results.iter().map(|s| s.result.done).collect();
                let next_obs: Vec<JointObservation> = results.iter().map(|s| s.result.joint_obs.clone()).collect();
                for s in &results {
                    if let (Some(ret), Some(len)) = (&s.episode_return, s.episode_len) {
                        stats.episodes.push(EpisodeRecord {
                            timestep: self.timesteps,
                            task_index: s.task_index,
                            team_return: ret.iter().sum(),
                            len,
                        });
                    }
                }
                let any_done = step_dones.iter().any(|&x| x);

                if let Some(mate) = &self.mate {
                    let inputs = encoder_inputs(self.paradigm, &ro.obs, &joint, &step_rewards, self.n_actions);
                    let inputs: Vec<Var> = inputs.into_iter().map(|x| gm.constant(x)).collect::<std::result::Result<_, _>>()?;
                    let outs = mate.encode(&mut gm, &inputs, &eh)?;
                    if train_mate {
                        let real_next: Vec<JointObservation> = results
                            .iter()
                            .map(|s| s.terminal_obs.clone().unwrap_or_else(|| s.result.joint_obs.clone()))
                            .collect();
                        let batch = MateBatchStep::new(&ro.obs, &joint, &real_next, &step_rewards, self.n_actions);
                        mate_terms.push(mate.step_loss(&mut gm, &outs, &batch, &mut self.noise_rng)?);
                    }
                    for (k, done) in step_dones.iter().enumerate() {
                        ro.cond[k] = if *done {
                            vec![initial_cond(self.paradigm, d); n]
                        } else {
                            embedding_for_policy(self.paradigm, &mate.embeddings_at(&gm, &outs, k), n, d)?
                        };
                    }
                    eh = outs.iter().map(|o| o.hidden).collect();
                    if any_done {
                        let mask = gm.constant(keep_mask(&step_dones))?;
                        for x in &mut eh {
                            *x = gm.scale_rows(*x, mask)?;
                        }
                    }
                }
                if any_done {
                    let mask = g.constant(keep_mask(&step_dones))?;
                    for x in &mut h {
                        *x = g.scale_rows(*x, mask)?;
                    }
                }
                rewards.push(step_rewards);
                dones.push(step_dones);
                ro.obs = next_obs;
            }

            // Bootstrap from the target critics at the post-batch observation.
            let critic_x = g.constant(self.critic_input(&ro.obs, &ro.cond))?;
            let mut total = None;
            for (i, agent) in self.agents.iter().enumerate() {
                let boot = agent.target.forward(&mut g, critic_x)?;
                let boot = g.value(boot).clone();
                let mut returns = vec![vec![0.0; b]; steps];
                for k in 0..b {
                    let r: Vec<f64> = rewards.iter().map(|step| step[k][i]).collect();
                    let dn: Vec<bool> = dones.iter().map(|step| step[k]).collect();
                    for (t, v) in nstep_returns(&r, &dn, boot.get(k, 0), self.a2c.gamma)?.into_iter().enumerate() {
                        returns[t][k] = v;
                    }
                }
                let l = a2c_losses(&mut g, &log_probs[i], &actions[i], &values[i], &returns, self.a2c.entropy_coef, self.a2c.value_coef)?;
                stats.policy_loss += g.value(l.policy).item() / n as f64;
                stats.value_loss += g.value(l.value).item() / n as f64;
                stats.entropy += g.value(l.entropy).item() / n as f64;
                total = Some(match total {
                    None => l.total,
                    Some(acc) => g.add(acc, l.total)?,
                });
            }
            let grads = g.backward(total.expect("at least one agent"))?;

            let mate_grads = if mate_terms.is_empty() {
                None
            } else {
                let mut acc = mate_terms[0];
                for &x in &mate_terms[1..] {
                    acc = gm.add(acc, x)?;
                }
                let loss = gm.scale(acc, 1.0 / mate_terms.len() as f64)?;
                stats.mate_loss = Some(gm.value(loss).item());
                Some(gm.backward(loss)?)
            };

            for (slot, &x) in ro.policy_h.iter_mut().zip(&h) {
                *slot = g.value(x).clone();
            }
            for (slot, &x) in ro.enc.hidden.iter_mut().zip(&eh) {
                *slot = gm.value(x).clone();
            }
            (grads, mate_grads)
        };

        let mut grads = grads;
        for opt in &mut self.optimizers {
            if let Some(max) = self.a2c.max_grad_norm {
                let ids = opt.params().to_vec();
                grads.clip_norm(&ids, max);
            }
            opt.update(&mut self.store, &grads);
        }
        if let (Some(mut mg), Some(opt)) = (mate_grads, self.mate_optimizer.as_mut()) {
            let ids = opt.params().to_vec();
            mg.clip_norm(&ids, self.mate_config.max_grad_norm);
            opt.update(&mut self.store, &mg);
        }
        for a in &self.agents {
            soft_update(&mut self.store, &a.target.params(), &a.critic.params(), self.a2c.tau);
        }
        self.iterations += 1;
        Ok(stats)
    }

    /// Rolls the current policies out on `tasks` for `episodes` episodes
    /// (one env slot, sampled actions, no learning) and records every
    /// timestep's embeddings.
    pub fn trace_embeddings(&self, tasks: TaskSet, layouts: LayoutRegistry, episodes: usize, seed: u64) -> Result<Vec<StepTrace>> {
        let mate = self.mate.as_ref().ok_or_else(|| LearnerError::Config("paradigm none has no task embeddings to export".into()))?;
        self.check_shapes(&tasks)?;
        let n = self.n_agents;
        let d = self.mate_config.embedding_dim;
        let (mut env, mut obs) = VecEnv::new(tasks, layouts, 1, seed)?;
        let mut act_rng = rng::stream(seed, streams::EVALUATION);
        let mut policy_h = vec![Tensor::zeros(1, self.a2c.policy_hidden); n];
        let mut enc = EncoderStates::zeros(mate.encoders.len(), 1, self.mate_config.encoder_hidden);
        let mut cond = vec![initial_cond(self.paradigm, d); n];
        let mut rows = Vec::new();
        let mut episode = 0;
        let mut t = 0;
        let mut task_index = env.task_indices()[0];
        while episode < episodes {
            let mut g = Graph::new(&self.store);
            let mut joint = Vec::with_capacity(n);
            for (i, agent) in self.agents.iter().enumerate() {
                let o = g.constant(Tensor::row_vector(obs[0].agent(i).to_vec()))?;
                let c = g.constant(Tensor::row_vector(cond[i].clone()))?;
                let h = g.constant(policy_h[i].clone())?;
                let (lp, h_new) = agent.policy.forward(&mut g, o, c, h)?;
                let probs: Vec<f64> = g.value(lp).row(0).iter().map(|x| x.exp()).collect();
                joint.push(sample_categorical(&probs, &mut act_rng));
                policy_h[i] = g.value(h_new).clone();
            }
            let step = env.step(std::slice::from_ref(&joint))?.remove(0);
            let rewards = vec![step.result.rewards.clone()];
            let inputs = encoder_inputs(self.paradigm, &obs, std::slice::from_ref(&joint), &rewards, self.n_actions);
            let inputs: Vec<Var> = inputs.into_iter().map(|x| g.constant(x)).collect::<std::result::Result<_, _>>()?;
            let hidden: Vec<Var> = enc.hidden.iter().map(|x| g.constant(x.clone())).collect::<std::result::Result<_, _>>()?;
            let outs = mate.encode(&mut g, &inputs, &hidden)?;
            let embeddings = mate.embeddings_at(&g, &outs, 0);
            let weights = match &mate.mixing {
                Some(m) => {
                    let jo = g.constant(Tensor::row_vector(obs[0].flatten()))?;
                    let w = m.weights(&mut g, jo)?;
                    Some(g.value(w).row(0).to_vec())
                }
                None => None,
            };
            for (slot, o) in enc.hidden.iter_mut().zip(&outs) {
                *slot = g.value(o.hidden).clone();
            }
            cond = embedding_for_policy(self.paradigm, &embeddings, n, d)?;
            rows.push(StepTrace {
                episode,
                task_index,
                t,
                embeddings,
                weights,
            });
            t += 1;
            obs = vec![step.result.joint_obs];
            if step.result.done {
                episode += 1;
                t = 0;
                task_index = env.task_indices()[0];
                policy_h.iter_mut().for_each(|h| *h = Tensor::zeros(1, self.a2c.policy_hidden));
                crate::mate::reset_encoder_states(&mut enc, 0);
                cond = vec![initial_cond(self.paradigm, d); n];
            }
        }
        Ok(rows)
    }

    /// Plays `episodes` episodes on `tasks` with sampled actions, without
    /// learning.
    pub fn evaluate(&self, tasks: TaskSet, layouts: LayoutRegistry, episodes: usize, seed: u64) -> Result<Vec<EpisodeRecord>> {
        self.check_shapes(&tasks)?;
        let n = self.n_agents;
        let d = self.mate_config.embedding_dim;
        let b = self.a2c.n_envs.min(episodes.max(1));
        let (mut env, mut obs) = VecEnv::new(tasks, layouts, b, seed)?;
        let mut act_rng = rng::stream(seed, streams::EVALUATION);
        let mut policy_h = vec![Tensor::zeros(b, self.a2c.policy_hidden); n];
        let n_enc = self.paradigm.n_encoders(n);
        let mut enc = EncoderStates::zeros(n_enc, b, self.mate_config.encoder_hidden);
        let mut cond = vec![vec![initial_cond(self.paradigm, d); n]; b];
        let mut out = Vec::new();
        let mut steps = 0u64;
        while out.len() < episodes {
            let mut g = Graph::new(&self.store);
            let mut joint: Vec<Vec<usize>> = vec![Vec::with_capacity(n); b];
            for (i, agent) in self.agents.iter().enumerate() {
                let o = g.constant(rows_tensor(obs.iter().map(|jo| jo.agent(i).to_vec()), b))?;
                let c = g.constant(rows_tensor(cond.iter().map(|c| c[i].clone()), b))?;
                let h = g.constant(policy_h[i].clone())?;
                let (lp, h_new) = agent.policy.forward(&mut g, o, c, h)?;
                let lpv = g.value(lp);
                for (k, slot) in joint.iter_mut().enumerate() {
                    let probs: Vec<f64> = lpv.row(k).iter().map(|x| x.exp()).collect();
                    slot.push(sample_categorical(&probs, &mut act_rng));
                }
                policy_h[i] = g.value(h_new).clone();
            }
            let results = env.step(&joint)?;
            steps += b as u64;
            let rewards: Vec<Vec<f64>> = results.iter().map(|s| s.result.rewards.clone()).collect();
            if let Some(mate) = &self.mate {
                let inputs = encoder_inputs(self.paradigm, &obs, &joint, &rewards, self.n_actions);
                let inputs: Vec<Var> = inputs.into_iter().map(|x| g.constant(x)).collect::<std::result::Result<_, _>>()?;
                let hidden: Vec<Var> = enc.hidden.iter().map(|x| g.constant(x.clone())).collect::<std::result::Result<_, _>>()?;
                let outs = mate.encode(&mut g, &inputs, &hidden)?;
                for k in 0..b {
                    cond[k] = embedding_for_policy(self.paradigm, &mate.embeddings_at(&g, &outs, k), n, d)?;
                }
                for (slot, o) in enc.hidden.iter_mut().zip(&outs) {
                    *slot = g.value(o.hidden).clone();
                }
            }
            for (k, s) in results.iter().enumerate() {
                if let (Some(ret), Some(len)) = (&s.episode_return, s.episode_len) {
                    if out.len() < episodes {
                        out.push(EpisodeRecord {
                            timestep: steps,
                            task_index: s.task_index,
                            team_return: ret.iter().sum(),
                            len,
                        });
                    }
                    for h in &mut policy_h {
                        let cols = h.cols();
                        h.data_mut()[k * cols..(k + 1) * cols].fill(0.0);
                    }
                    crate::mate::reset_encoder_states(&mut enc, k);
                    cond[k] = vec![initial_cond(self.paradigm, d); n];
                }
            }
            obs = results.into_iter().map(|s| s.result.joint_obs).collect();
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posg::{EnvKind, TaskSpec};

    fn beacon_set(goals: &[(f64, f64)], limit: f64) -> TaskSet {
        let tasks = goals
            .iter()
            .map(|&(r, c)| {
                TaskSpec::new(EnvKind::Beacon, "3x3", 2)
                    .with_param("goal_row", r)
                    .with_param("goal_col", c)
                    .with_param("episode_limit", limit)
            })
            .collect();
        TaskSet::new(tasks, &LayoutRegistry::builtin()).unwrap()
    }

    fn small_a2c() -> A2cConfig {
        A2cConfig {
            policy_hidden: 16,
            critic_hidden: 16,
            ..A2cConfig::default()
        }
    }

    fn small_mate() -> MateConfig {
        MateConfig {
            encoder_hidden: 8,
            decoder_hidden: 8,
            ..MateConfig::default()
        }
    }

    fn learner(paradigm: Paradigm, seed: u64) -> Learner {
        let set = beacon_set(&[(0.0, 0.0), (2.0, 2.0)], 4.0);
        let mut l = Learner::new(paradigm, 2, set.obs_size(), set.n_actions(), small_a2c(), small_mate(), seed).unwrap();
        l.attach(set, LayoutRegistry::builtin(), seed).unwrap();
        l
    }

    fn snapshot(store: &ParamStore, ids: &[ParamId]) -> Vec<Vec<u64>> {
        ids.iter().map(|&id| store.get(id).data().iter().map(|x| x.to_bits()).collect()).collect()
    }

    #[test]
    fn baseline_has_same_policy_size_and_no_mate_loss() {
        let mut none = learner(Paradigm::None, 1);
        let ind = learner(Paradigm::Ind, 1);
        let count = |l: &Learner| l.agents[0].policy.params().iter().map(|&id| l.store.get(id).len()).sum::<usize>();
        assert_eq!(count(&none), count(&ind));
        let s = none.train_iteration().unwrap();
        assert!(s.mate_loss.is_none());
        assert_eq!(none.timesteps, 50);
        assert!(none.store.ids_with_prefix("mate.").next().is_none());
    }

    #[test]
    fn marl_updates_leave_mate_untouched_when_frozen() {
        for paradigm in [Paradigm::Ind, Paradigm::Cen, Paradigm::Mix] {
            let mut l = learner(paradigm, 2);
            l.freeze_mate = true;
            let mate = l.mate_params();
            let marl = l.marl_params();
            let before = snapshot(&l.store, &mate);
            let marl_before = snapshot(&l.store, &marl);
            for _ in 0..3 {
                let s = l.train_iteration().unwrap();
                assert!(s.mate_loss.is_none());
            }
            assert_eq!(snapshot(&l.store, &mate), before, "{paradigm}");
            // Every MARL tensor moved; every other tensor is a MATE tensor.
            let after = snapshot(&l.store, &marl);
            assert!(marl_before.iter().zip(&after).all(|(a, b)| a != b), "{paradigm}");
            assert_eq!(mate.len() + marl.len(), l.store.len());
        }
    }

    #[test]
    fn mate_trains_when_not_frozen() {
        let mut l = learner(Paradigm::Mix, 3);
        let mate = l.mate_params();
        let before = snapshot(&l.store, &mate);
        let s = l.train_iteration().unwrap();
        assert!(s.mate_loss.unwrap().is_finite());
        assert_ne!(snapshot(&l.store, &mate), before);
    }

    #[test]
    fn identical_seeds_give_identical_training() {
        let run = || {
            let mut l = learner(Paradigm::Ind, 4);
            let mut log = Vec::new();
            for _ in 0..4 {
                let s = l.train_iteration().unwrap();
                log.push((s.policy_loss.to_bits(), s.value_loss.to_bits(), s.mate_loss.map(f64::to_bits), s.episodes));
            }
            log
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn smoke_training_beats_random_policy() {
        // One-step episodes on a 3x1 strip with the goal at the east end.
        let set = TaskSet::new(
            vec![TaskSpec::new(EnvKind::Beacon, "3x1", 1)
                .with_param("goal_col", 2.0)
                .with_param("episode_limit", 1.0)],
            &LayoutRegistry::builtin(),
        )
        .unwrap();
        let cfg = A2cConfig {
            lr: 5e-3,
            ..small_a2c()
        };
        let mut l = Learner::new(Paradigm::None, 1, set.obs_size(), set.n_actions(), cfg, small_mate(), 5).unwrap();
        l.attach(set.clone(), LayoutRegistry::builtin(), 5).unwrap();
        let mean = |l: &Learner| {
            let eps = l.evaluate(set.clone(), LayoutRegistry::builtin(), 400, 99).unwrap();
            eps.iter().map(|e| e.team_return).sum::<f64>() / eps.len() as f64
        };
        let random = mean(&l);
        for _ in 0..50 {
            l.train_iteration().unwrap();
        }
        let trained = mean(&l);
        assert!(trained > random, "random {random}, trained {trained}");
    }

    #[test]
    fn traces_have_one_row_per_timestep_per_episode() {
        let l = learner(Paradigm::Mix, 6);
        let rows = l.trace_embeddings(beacon_set(&[(0.0, 0.0), (2.0, 2.0)], 4.0), LayoutRegistry::builtin(), 3, 7).unwrap();
        assert_eq!(rows.len(), 12);
        for r in &rows {
            assert_eq!(r.embeddings.len(), 2);
            let w = r.weights.as_ref().unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(learner(Paradigm::None, 6).trace_embeddings(beacon_set(&[(0.0, 0.0)], 4.0), LayoutRegistry::builtin(), 1, 7).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut l = learner(Paradigm::None, 8);
        let other = TaskSet::new(vec![TaskSpec::new(EnvKind::Lbf, "6x6", 2)], &LayoutRegistry::builtin()).unwrap();
        assert!(l.attach(other, LayoutRegistry::builtin(), 1).is_err());
    }
}
