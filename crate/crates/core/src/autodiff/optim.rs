use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamId, ParamStore};
use super::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub eps: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, eps: f64) -> Self {
        Self {
            lr,
            eps,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

/// Adam over a fixed group of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    params: Vec<ParamId>,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore, params: Vec<ParamId>) -> Self {
        let first: Vec<Tensor> = params
            .iter()
            .map(|&id| {
                let (r, c) = store.get(id).shape();
                Tensor::zeros(r, c)
            })
            .collect();
        Self {
            config,
            second: first.clone(),
            first,
            params,
            step: 0,
        }
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Moment tensors in parameter order, for checkpointing.
    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.first, &self.second)
    }

    pub fn restore(&mut self, step: u64, first: Vec<Tensor>, second: Vec<Tensor>) {
        assert_eq!(first.len(), self.params.len());
        assert_eq!(second.len(), self.params.len());
        self.step = step;
        self.first = first;
        self.second = second;
    }

    /// One bias-corrected step; parameters without a gradient are treated
    /// as having a zero gradient.
    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let AdamConfig { lr, eps, beta1, beta2 } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (k, &id) in self.params.iter().enumerate() {
            let g = grads.get(id);
            let m = self.first[k].data_mut();
            let v = self.second[k].data_mut();
            let p = store.get_mut(id).data_mut();
            for i in 0..p.len() {
                let gi = g.map_or(0.0, |g| g.data()[i]);
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
