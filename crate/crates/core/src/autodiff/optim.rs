use serde::{Deserialize, Serialize};

use super::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { kind: OptimizerKind::Adam, lr: 0.01, weight_decay: 0.0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Applies accumulated gradients. Weight decay is decoupled from the
/// gradient for both kinds.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Optimizer { config, m: Vec::new(), v: Vec::new(), t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Updates every parameter, then zeroes gradients.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.step_filtered(store, |_| true)
    }

    /// Updates parameters for which `trainable` holds; gradients of all
    /// parameters are zeroed afterwards.
    pub fn step_filtered(&mut self, store: &mut ParamStore, trainable: impl Fn(ParamId) -> bool) {
        let c = self.config;
        self.t += 1;
        let n = store.len();
        while self.m.len() < n {
            let len = store.get(ParamId(self.m.len())).value.len();
            self.m.push(vec![0.0; len]);
            self.v.push(vec![0.0; len]);
        }
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for i in 0..n {
            let id = ParamId(i);
            if !trainable(id) {
                continue;
            }
            let p = store.get_mut(id);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let grad = p.grad.data().to_vec();
            for (j, w) in p.value.data_mut().iter_mut().enumerate() {
                let g = grad[j];
                if c.weight_decay != 0.0 {
                    *w -= c.lr * c.weight_decay * *w;
                }
                match c.kind {
                    OptimizerKind::Sgd => *w -= c.lr * g,
                    OptimizerKind::Adam => {
                        m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
                        v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
                        let mh = m[j] / bc1;
                        let vh = v[j] / bc2;
                        *w -= c.lr * mh / (vh.sqrt() + c.eps);
                    }
                }
            }
        }
        store.zero_grad();
    }
}
