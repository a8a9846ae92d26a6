//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::mat::Scalar;
use crate::params::{Grads, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.98, eps: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Adam { config, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn step<F: Scalar>(&mut self, params: &mut ParamStore<F>, grads: &Grads<F>) {
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let (b1, b2) = (c.beta1 as f32, c.beta2 as f32);
        let mut off = 0;
        for (id, g) in grads.mats.iter().enumerate() {
            let p = params.mat_mut(id);
            for (i, (w, &gv)) in p.data.iter_mut().zip(&g.data).enumerate() {
                let gv = gv.f64() as f32;
                let (m, v) = (&mut self.m[off + i], &mut self.v[off + i]);
                *m = b1 * *m + (1.0 - b1) * gv;
                *v = b2 * *v + (1.0 - b2) * gv * gv;
                let mh = *m as f64 / bc1;
                let vh = *v as f64 / bc2;
                *w = *w - F::of(c.lr * mh / (vh.sqrt() + c.eps));
            }
            off += g.len();
        }
    }
}
