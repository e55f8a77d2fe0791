use serde::{Deserialize, Serialize};

use super::{Gradients, NumError, ParamId, ParamStore, Tensor2D};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction over a fixed subset of a [`ParamStore`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    ids: Vec<usize>,
    m: Vec<Tensor2D>,
    v: Vec<Tensor2D>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, ids: &[ParamId], config: AdamConfig) -> Self {
        let zeros = || {
            ids.iter()
                .map(|&id| {
                    let (r, c) = store.get(id).shape();
                    Tensor2D::zeros(r, c)
                })
                .collect::<Vec<_>>()
        };
        Self {
            config,
            ids: ids.iter().map(|id| id.0).collect(),
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.ids.iter().map(|&i| ParamId(i)).collect()
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) -> Result<(), NumError> {
        for (k, &i) in self.ids.iter().enumerate() {
            let (p, g) = (store.get(ParamId(i)), grads.get(ParamId(i)));
            if p.shape() != g.shape() || p.shape() != self.m[k].shape() {
                return Err(NumError::Shape(format!(
                    "adam: parameter {:?}, gradient {:?}, state {:?}",
                    p.shape(),
                    g.shape(),
                    self.m[k].shape()
                )));
            }
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (k, &i) in self.ids.iter().enumerate() {
            let g = grads.get(ParamId(i)).data();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            let p = store.get_mut(ParamId(i)).data_mut();
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p[j] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}
