use super::{env_reset, sample_task, EnvError, EnvState, JointObservation, StepResult, TaskSet};
use crate::envs::LayoutRegistry;
use crate::rng::{self, streams};

/// Outcome of one slot in a [`VecEnv::step`] call.
#[derive(Clone, Debug)]
pub struct SlotStep {
    /// When `done`, `joint_obs` already holds the first observation of the
    /// next episode.
    pub result: StepResult,
    /// The real final observation when the slot was auto-reset.
    pub terminal_obs: Option<JointObservation>,
    /// Index (into the task set) of the task this transition came from.
    pub task_index: usize,
    /// Per-agent undiscounted returns of the episode that just ended.
    pub episode_return: Option<Vec<f64>>,
    /// Length of the episode that just ended.
    pub episode_len: Option<usize>,
}

/// `K` synchronously stepped environments with automatic reset and
/// per-episode task resampling.
///
/// Slot `k` owns the random stream `ENV_BASE + k` of the master seed, used
/// both to pick its tasks and for in-episode randomness, so results do not
/// depend on stepping order.
pub struct VecEnv {
    tasks: TaskSet,
    layouts: LayoutRegistry,
    slots: Vec<Option<EnvState>>,
    task_index: Vec<usize>,
    returns: Vec<Vec<f64>>,
}

impl VecEnv {
    pub fn new(tasks: TaskSet, layouts: LayoutRegistry, n_envs: usize, seed: u64) -> Result<(Self, Vec<JointObservation>), EnvError> {
        if n_envs == 0 {
            return Err(EnvError::InvalidTask("at least one environment slot is required".into()));
        }
        let n = tasks.n_agents();
        let mut env = Self {
            slots: Vec::with_capacity(n_envs),
            task_index: vec![0; n_envs],
            returns: vec![vec![0.0; n]; n_envs],
            tasks,
            layouts,
        };
        let mut obs = Vec::with_capacity(n_envs);
        for k in 0..n_envs {
            let mut r = rng::stream(seed, streams::ENV_BASE + k as u64);
            let idx = sample_task(&env.tasks, &mut r);
            let (state, o) = env_reset(&env.tasks.tasks()[idx], &env.layouts, r)
                .map_err(|e| EnvError::Slot { index: k, source: Box::new(e) })?;
            env.task_index[k] = idx;
            env.slots.push(Some(state));
            obs.push(o);
        }
        Ok((env, obs))
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn task_set(&self) -> &TaskSet {
        &self.tasks
    }

    /// Current task index per slot.
    pub fn task_indices(&self) -> &[usize] {
        &self.task_index
    }

    pub fn slot(&self, k: usize) -> &EnvState {
        self.slots[k].as_ref().expect("slot present between calls")
    }

    pub fn observations(&self) -> Vec<JointObservation> {
        self.slots.iter().map(|s| s.as_ref().expect("slot").observe()).collect()
    }

    /// Steps every slot with its joint action (`joint_actions[k]` has one
    /// entry per agent).
    pub fn step(&mut self, joint_actions: &[Vec<usize>]) -> Result<Vec<SlotStep>, EnvError> {
        if joint_actions.len() != self.slots.len() {
            return Err(EnvError::WrongActionCount {
                expected: self.slots.len(),
                got: joint_actions.len(),
            });
        }
        let mut out = Vec::with_capacity(self.slots.len());
        for (k, actions) in joint_actions.iter().enumerate() {
            let wrap = |e| EnvError::Slot { index: k, source: Box::new(e) };
            let state = self.slots[k].as_mut().expect("slot present between calls");
            let mut result = state.step(actions).map_err(wrap)?;
            for (acc, r) in self.returns[k].iter_mut().zip(&result.rewards) {
                *acc += r;
            }
            let task_index = self.task_index[k];
            let mut step = SlotStep {
                result: StepResult {
                    joint_obs: JointObservation::new(Vec::new()),
                    rewards: Vec::new(),
                    done: false,
                    info: Default::default(),
                },
                terminal_obs: None,
                task_index,
                episode_return: None,
                episode_len: None,
            };
            if result.done {
                let finished = self.slots[k].take().expect("slot");
                let len = finished.timestep();
                let mut r = finished.into_rng();
                let idx = sample_task(&self.tasks, &mut r);
                let (state, obs) = env_reset(&self.tasks.tasks()[idx], &self.layouts, r).map_err(wrap)?;
                self.slots[k] = Some(state);
                self.task_index[k] = idx;
                step.terminal_obs = Some(std::mem::replace(&mut result.joint_obs, obs));
                step.episode_len = Some(len);
                let n = self.returns[k].len();
                step.episode_return = Some(std::mem::replace(&mut self.returns[k], vec![0.0; n]));
            }
            step.result = result;
            out.push(step);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posg::{EnvKind, TaskSpec};

    fn lbf_set() -> TaskSet {
        let reg = LayoutRegistry::builtin();
        TaskSet::new(
            vec![
                TaskSpec::new(EnvKind::Lbf, "6x6", 2).with_param("episode_limit", 7.0),
                TaskSpec::new(EnvKind::Lbf, "8x8", 2).with_param("episode_limit", 7.0),
            ],
            &reg,
        )
        .unwrap()
    }

    #[test]
    fn single_slot_matches_plain_stepping() {
        let reg = LayoutRegistry::builtin();
        let (mut venv, obs) = VecEnv::new(lbf_set(), reg.clone(), 1, 11).unwrap();
        let mut r = rng::stream(11, streams::ENV_BASE);
        let idx = sample_task(&lbf_set(), &mut r);
        let (mut state, obs0) = env_reset(&lbf_set().tasks()[idx], &reg, r).unwrap();
        assert_eq!(obs[0], obs0);
        for t in 0..6 {
            let a = vec![t % 6, (t + 2) % 6];
            let v = venv.step(&[a.clone()]).unwrap();
            let p = state.step(&a).unwrap();
            assert_eq!(v[0].result, p);
            if p.done {
                break;
            }
        }
    }

    #[test]
    fn terminal_slot_is_reset_and_flagged() {
        let (mut venv, _) = VecEnv::new(lbf_set(), LayoutRegistry::builtin(), 10, 3).unwrap();
        let mut saw_done = false;
        for step in 0..7 {
            let out = venv.step(&vec![vec![0, 0]; 10]).unwrap();
            assert_eq!(out.len(), 10);
            for (k, s) in out.iter().enumerate() {
                if s.result.done {
                    saw_done = true;
                    assert_eq!(step, 6);
                    let term = s.terminal_obs.as_ref().unwrap();
                    assert_eq!(s.result.joint_obs, venv.slot(k).observe());
                    assert_eq!(term.n_agents(), 2);
                    assert_eq!(venv.slot(k).timestep(), 0);
                    assert_eq!(s.episode_len, Some(7));
                } else {
                    assert!(s.terminal_obs.is_none());
                }
            }
        }
        assert!(saw_done);
    }

    #[test]
    fn identical_seeds_give_identical_streams() {
        let run = || {
            let (mut venv, mut log) = VecEnv::new(lbf_set(), LayoutRegistry::builtin(), 4, 21).unwrap();
            let mut rewards = Vec::new();
            for t in 0..30 {
                let acts: Vec<Vec<usize>> = (0..4).map(|k| vec![(t + k) % 6, (t * k + 1) % 6]).collect();
                for s in venv.step(&acts).unwrap() {
                    rewards.extend(s.result.rewards.iter().map(|r| r.to_bits()));
                    log.push(s.result.joint_obs);
                }
            }
            (log, rewards)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn errors_carry_slot_index() {
        let (mut venv, _) = VecEnv::new(lbf_set(), LayoutRegistry::builtin(), 3, 0).unwrap();
        let err = venv.step(&[vec![0, 0], vec![0, 9], vec![0, 0]]).unwrap_err();
        assert!(matches!(err, EnvError::Slot { index: 1, .. }));
    }
}
