use super::{Gradients, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling applied before each step.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
        }
    }
}

pub struct Adam {
    config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(_, _, t)| Tensor::zeros(t.rows(), t.cols()))
                .collect::<Vec<_>>()
        };
        Adam {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Clips `grads` to the configured global norm and applies one update.
    /// Returns the norm before clipping.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> f64 {
        let c = self.config;
        self.step += 1;
        let norm = grads.norm();
        let clip = if norm > c.clip_norm { c.clip_norm / norm } else { 1.0 };
        let bias1 = 1.0 - c.beta1.powi(self.step as i32);
        let bias2 = 1.0 - c.beta2.powi(self.step as i32);
        for id in 0..params.len() {
            let Some(g) = grads.get(id) else {
                // Untouched parameters still decay their moments.
                self.m[id].scale_assign(c.beta1);
                self.v[id].scale_assign(c.beta2);
                let (m, v) = (&self.m[id], &self.v[id]);
                let p = params.get_mut(id);
                for ((x, mi), vi) in p.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
                    *x -= c.lr * (mi / bias1) / ((vi / bias2).sqrt() + c.eps);
                }
                continue;
            };
            let (m, v) = (&mut self.m[id], &mut self.v[id]);
            let p = params.get_mut(id);
            for (((x, gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let gc = gi * clip;
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * gc;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * gc * gc;
                *x -= c.lr * (*mi / bias1) / ((*vi / bias2).sqrt() + c.eps);
            }
        }
        norm
    }
}
