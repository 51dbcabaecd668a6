//! Versioned binary checkpoints.
//!
//! Layout: the 8-byte magic `MATECKPT`, a little-endian `u32` format
//! version, a `u64` header length, a JSON header, then every tensor listed
//! in the header as raw little-endian `f64`s in header order. Parameters
//! come first (store order), followed by the Adam moments of each
//! optimiser. `manifest.txt` next to the binary lists names and shapes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::autodiff::Tensor;
use crate::maa2c::Learner;
use crate::mate::Paradigm;
use crate::rng::RngState;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"MATECKPT";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Entry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub name: String,
    pub step: u64,
    #[serde(skip)]
    pub first: Vec<Tensor>,
    #[serde(skip)]
    pub second: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: RunConfig,
    paradigm: Paradigm,
    n_agents: usize,
    obs_size: usize,
    n_actions: usize,
    timesteps: u64,
    iterations: u64,
    rng: BTreeMap<String, RngState>,
    params: Vec<Entry>,
    optimizers: Vec<OptimizerState>,
}

/// Everything needed to rebuild a [`Learner`] bit for bit (apart from the
/// attached environments).
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub paradigm: Paradigm,
    pub n_agents: usize,
    pub obs_size: usize,
    pub n_actions: usize,
    pub timesteps: u64,
    pub iterations: u64,
    pub rng: BTreeMap<String, RngState>,
    pub params: Vec<(String, Tensor)>,
    pub optimizers: Vec<OptimizerState>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn capture(learner: &Learner, config: &RunConfig) -> Self {
        let params = learner.store.ids().map(|id| (learner.store.name(id).to_string(), learner.store.get(id).clone())).collect();
        let optimizers: Vec<OptimizerState> = learner
            .optimizers
            .iter()
            .enumerate()
            .map(|(i, o)| (format!("agent{i}"), o))
            .chain(learner.mate_optimizer.iter().map(|o| ("mate".to_string(), o)))
            .map(|(name, o)| {
                let (m, v) = o.moments();
                OptimizerState {
                    name,
                    step: o.steps(),
                    first: m.to_vec(),
                    second: v.to_vec(),
                }
            })
            .collect();
        let rng = BTreeMap::from([
            ("actions".to_string(), RngState::capture(&learner.action_rng)),
            ("embedding_noise".to_string(), RngState::capture(&learner.noise_rng)),
        ]);
        Self {
            config: config.clone(),
            paradigm: learner.paradigm,
            n_agents: learner.n_agents,
            obs_size: learner.obs_size,
            n_actions: learner.n_actions,
            timesteps: learner.timesteps,
            iterations: learner.iterations,
            rng,
            params,
            optimizers,
        }
    }

    /// Rebuilds the learner (without environments).
    pub fn restore(&self) -> Result<Learner> {
        let mut learner = Learner::new(
            self.paradigm,
            self.n_agents,
            self.obs_size,
            self.n_actions,
            self.config.a2c.clone(),
            self.config.mate.clone(),
            self.config.seed,
        )?;
        if learner.store.len() != self.params.len() {
            return Err(bad(format!("checkpoint has {} tensors, networks have {}", self.params.len(), learner.store.len())));
        }
        for (name, value) in &self.params {
            let id = learner.store.id_of(name).ok_or_else(|| bad(format!("unknown parameter `{name}`")))?;
            let slot = learner.store.get_mut(id);
            if slot.shape() != value.shape() {
                return Err(bad(format!("parameter `{name}` is {:?}, networks expect {:?}", value.shape(), slot.shape())));
            }
            *slot = value.clone();
        }
        let expected = learner.optimizers.len() + usize::from(learner.mate_optimizer.is_some());
        if self.optimizers.len() != expected {
            return Err(bad(format!("checkpoint has {} optimisers, expected {expected}", self.optimizers.len())));
        }
        let opts = learner.optimizers.iter_mut().chain(learner.mate_optimizer.as_mut());
        for (opt, state) in opts.zip(&self.optimizers) {
            if state.first.len() != opt.params().len() || state.second.len() != opt.params().len() {
                return Err(bad(format!("optimiser `{}` has the wrong number of moments", state.name)));
            }
            opt.restore(state.step, state.first.clone(), state.second.clone());
        }
        let rng = |key: &str| self.rng.get(key).map(RngState::restore).ok_or_else(|| bad(format!("missing random stream `{key}`")));
        learner.action_rng = rng("actions")?;
        learner.noise_rng = rng("embedding_noise")?;
        learner.timesteps = self.timesteps;
        learner.iterations = self.iterations;
        Ok(learner)
    }

    /// Data section order: parameters, then per optimiser all first
    /// moments followed by all second moments.
    fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        let moments = self.optimizers.iter().flat_map(|o| o.first.iter().chain(&o.second));
        self.params.iter().map(|(_, t)| t).chain(moments)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut opt_meta = self.optimizers.clone();
        for o in &mut opt_meta {
            o.first.clear();
            o.second.clear();
        }
        let header = Header {
            version: FORMAT_VERSION,
            config: self.config.clone(),
            paradigm: self.paradigm,
            n_agents: self.n_agents,
            obs_size: self.obs_size,
            n_actions: self.n_actions,
            timesteps: self.timesteps,
            iterations: self.iterations,
            rng: self.rng.clone(),
            params: self.params.iter().map(|(n, t)| Entry { name: n.clone(), rows: t.rows(), cols: t.cols() }).collect(),
            optimizers: opt_meta,
        };
        let json = serde_json::to_vec(&header).expect("checkpoint header serialises");
        let mut out = Vec::with_capacity(json.len() + 8 * self.tensors().map(Tensor::len).sum::<usize>() + 20);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.tensors() {
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("file too short"))?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word).map_err(|_| bad("file too short"))?;
        let version = u32::from_le_bytes(word);
        if version != FORMAT_VERSION {
            return Err(bad(format!("format version {version} is not supported (expected {FORMAT_VERSION})")));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(|_| bad("file too short"))?;
        let len = u64::from_le_bytes(len) as usize;
        if r.len() < len {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&r[..len]).map_err(|e| bad(format!("header: {e}")))?;
        r = &r[len..];
        let mut take = |rows: usize, cols: usize, what: &str| -> Result<Tensor> {
            let n = rows * cols;
            if r.len() < 8 * n {
                return Err(bad(format!("truncated data for `{what}`")));
            }
            let data = r[..8 * n].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
            r = &r[8 * n..];
            Ok(Tensor::from_vec(rows, cols, data))
        };
        let mut params = Vec::with_capacity(header.params.len());
        for e in &header.params {
            params.push((e.name.clone(), take(e.rows, e.cols, &e.name)?));
        }
        // Moments mirror the shapes of the parameters their optimiser owns,
        // which are recovered by rebuilding the networks.
        let probe = Learner::new(
            header.paradigm,
            header.n_agents,
            header.obs_size,
            header.n_actions,
            header.config.a2c.clone(),
            header.config.mate.clone(),
            header.config.seed,
        )?;
        let groups: Vec<Vec<(usize, usize)>> = probe
            .optimizers
            .iter()
            .chain(probe.mate_optimizer.as_ref())
            .map(|o| o.params().iter().map(|&id| probe.store.get(id).shape()).collect())
            .collect();
        if groups.len() != header.optimizers.len() {
            return Err(bad("optimiser count does not match the networks"));
        }
        let mut optimizers = header.optimizers.clone();
        for (o, shapes) in optimizers.iter_mut().zip(&groups) {
            o.first = shapes.iter().map(|&(rr, cc)| take(rr, cc, &o.name)).collect::<Result<_>>()?;
            o.second = shapes.iter().map(|&(rr, cc)| take(rr, cc, &o.name)).collect::<Result<_>>()?;
        }
        if !r.is_empty() {
            return Err(bad(format!("{} trailing bytes", r.len())));
        }
        Ok(Self {
            config: header.config,
            paradigm: header.paradigm,
            n_agents: header.n_agents,
            obs_size: header.obs_size,
            n_actions: header.n_actions,
            timesteps: header.timesteps,
            iterations: header.iterations,
            rng: header.rng,
            params,
            optimizers,
        })
    }

    /// Plain-text listing of the format version, run shape and every
    /// parameter's name and shape.
    pub fn manifest(&self) -> String {
        let mut s = format!(
            "format {FORMAT_VERSION}\nparadigm {}\nagents {}\nobs {}\nactions {}\ntimesteps {}\niterations {}\n",
            self.paradigm, self.n_agents, self.obs_size, self.n_actions, self.timesteps, self.iterations
        );
        for (name, t) in &self.params {
            s.push_str(&format!("{name} {}x{}\n", t.rows(), t.cols()));
        }
        s
    }

    /// Writes `path` and `manifest.txt` in the same directory.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))?;
        let manifest = path.with_file_name(MANIFEST_NAME);
        std::fs::write(&manifest, self.manifest()).map_err(|e| Error::io(&manifest, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;
    use crate::maa2c::A2cConfig;
    use crate::mate::MateConfig;
    use crate::posg::{EnvKind, TaskSet, TaskSpec};

    fn config(paradigm: Paradigm) -> RunConfig {
        RunConfig {
            paradigm,
            seed: 9,
            a2c: A2cConfig {
                policy_hidden: 12,
                critic_hidden: 10,
                ..A2cConfig::default()
            },
            mate: MateConfig {
                encoder_hidden: 6,
                decoder_hidden: 7,
                ..MateConfig::default()
            },
            ..RunConfig::default()
        }
    }

    fn trained(paradigm: Paradigm) -> (Learner, RunConfig) {
        let cfg = config(paradigm);
        let reg = crate::envs::LayoutRegistry::builtin();
        let set = TaskSet::new(vec![TaskSpec::new(EnvKind::Lbf, "5x5", 2)], &reg).unwrap();
        let mut l = Learner::new(paradigm, 2, set.obs_size(), set.n_actions(), cfg.a2c.clone(), cfg.mate.clone(), cfg.seed).unwrap();
        l.attach(set, reg, 1).unwrap();
        for _ in 0..3 {
            l.train_iteration().unwrap();
        }
        (l, cfg)
    }

    fn policy_output(l: &Learner) -> Vec<u64> {
        let mut g = Graph::new(&l.store);
        let o = g.constant(Tensor::filled(2, l.obs_size, 0.5)).unwrap();
        let c = g.constant(Tensor::filled(2, 6, 0.25)).unwrap();
        let h = g.constant(Tensor::filled(2, l.a2c.policy_hidden, -0.1)).unwrap();
        let mut bits = Vec::new();
        for a in &l.agents {
            let (lp, h2) = a.policy.forward(&mut g, o, c, h).unwrap();
            bits.extend(g.value(lp).data().iter().chain(g.value(h2).data()).map(|x| x.to_bits()));
        }
        bits
    }

    #[test]
    fn round_trip_is_bit_identical() {
        for paradigm in [Paradigm::None, Paradigm::Ind, Paradigm::Mix] {
            let (l, cfg) = trained(paradigm);
            let ck = Checkpoint::capture(&l, &cfg);
            let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
            assert_eq!(back, ck);
            let restored = back.restore().unwrap();
            assert_eq!(policy_output(&restored), policy_output(&l));
            let values = |l: &Learner| l.store.ids().map(|id| (l.store.name(id).to_string(), l.store.get(id).clone())).collect::<Vec<_>>();
            assert_eq!(values(&restored), values(&l));
            assert_eq!(restored.optimizers, l.optimizers);
            assert_eq!(restored.mate_optimizer, l.mate_optimizer);
            assert_eq!(restored.action_rng, l.action_rng);
            assert_eq!(restored.timesteps, 150);
        }
    }

    #[test]
    fn baseline_checkpoint_has_no_encoder() {
        let (l, cfg) = trained(Paradigm::None);
        let ck = Checkpoint::capture(&l, &cfg);
        assert!(ck.params.iter().all(|(n, _)| !n.starts_with("mate.")));
        assert!(!ck.manifest().contains("mate."));
        let (l, cfg) = trained(Paradigm::Cen);
        assert!(Checkpoint::capture(&l, &cfg).manifest().contains("mate.encoder.gru.w 18x6"));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let (l, cfg) = trained(Paradigm::Ind);
        let bytes = Checkpoint::capture(&l, &cfg).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(b"NOTACKPT").is_err());
        let mut v = bytes.clone();
        v[8] = 99;
        assert!(Checkpoint::from_bytes(&v).is_err());
        let mut v = bytes;
        v.push(0);
        assert!(Checkpoint::from_bytes(&v).is_err());
    }

    #[test]
    fn save_writes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let (l, cfg) = trained(Paradigm::Mix);
        let path = dir.path().join("checkpoint.bin");
        let ck = Checkpoint::capture(&l, &cfg);
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
        let manifest = std::fs::read_to_string(dir.path().join(MANIFEST_NAME)).unwrap();
        assert!(manifest.starts_with("format 1\nparadigm mix\n"));
        assert!(manifest.contains("mate.mixing.w 2x"));
    }
}
