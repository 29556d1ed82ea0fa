//! AdamW with decoupled weight decay.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::model::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moments per tensor plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (m, v) = shapes
            .into_iter()
            .map(|s| (Array2::zeros(s), Array2::zeros(s)))
            .unzip();
        Self { config, step: 0, m, v }
    }

    pub fn for_store(config: AdamWConfig, store: &ParamStore) -> Self {
        Self::new(config, store.iter().map(|(_, p)| p.value.dim()))
    }

    /// One update over `(value, grad)` pairs in the order given at construction.
    pub fn update<'a>(&mut self, tensors: impl IntoIterator<Item = (&'a mut Array2<f64>, &'a Array2<f64>)>) {
        self.step += 1;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(self.step as i32);
        let bias2 = 1.0 - c.beta2.powi(self.step as i32);
        for ((value, grad), (m, v)) in tensors.into_iter().zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            assert_eq!(value.dim(), m.dim(), "optimizer state shape mismatch");
            Zip::from(value).and(grad).and(m).and(v).for_each(|w, &g, m, v| {
                *w -= c.lr * c.weight_decay * *w;
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *w -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            });
        }
    }

    pub fn step_store(&mut self, store: &mut ParamStore) {
        self.update(store.iter_mut().map(|(_, p)| (&mut p.value, &p.grad)));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, [(1, 2)]);
        let mut w = array![[1.0, -1.0]];
        let g = array![[3.0, -0.5]];
        opt.update([(&mut w, &g)]);
        assert!((w[[0, 0]] - 0.9).abs() < 1e-7);
        assert!((w[[0, 1]] + 0.9).abs() < 1e-7);
    }

    #[test]
    fn decay_shrinks_weights_without_gradient() {
        let cfg = AdamWConfig {
            lr: 0.5,
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, [(1, 1)]);
        let mut w = array![[2.0]];
        let g = array![[0.0]];
        opt.update([(&mut w, &g)]);
        assert!((w[[0, 0]] - 1.9).abs() < 1e-12);
    }
}
