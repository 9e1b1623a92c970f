use std::collections::HashMap;

use crate::params::{ParamId, ParamStore};
use crate::{Float, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-2 }
    }
}

/// Adam with decoupled weight decay. Decay is applied to every trainable
/// tensor, as a multiplicative shrink before the moment update.
#[derive(Clone, Debug)]
pub struct AdamW<F> {
    pub config: AdamWConfig,
    step: u64,
    first: HashMap<ParamId, Tensor<F>>,
    second: HashMap<ParamId, Tensor<F>>,
}

impl<F: Float> AdamW<F> {
    pub fn new(config: AdamWConfig) -> Self {
        Self { config, step: 0, first: HashMap::new(), second: HashMap::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore<F>, grads: &HashMap<ParamId, Tensor<F>>, lr: f64) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
        let (one_b1, one_b2) = (F::of(1.0 - c.beta1), F::of(1.0 - c.beta2));
        let shrink = F::of(1.0 - lr * c.weight_decay);
        let step_size = F::of(lr / bc1);
        let inv_sqrt_bc2 = F::of(1.0 / bc2.sqrt());
        let eps = F::of(c.eps);
        let mut ids: Vec<&ParamId> = grads.keys().collect();
        ids.sort();
        for &id in ids {
            if !store.is_trainable(id) {
                continue;
            }
            let g = &grads[&id];
            let m = self.first.entry(id).or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.second.entry(id).or_insert_with(|| Tensor::zeros(g.shape()));
            let p = store.get_mut(id);
            for (((p, &g), m), v) in
                p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut())
            {
                *p *= shrink;
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                *p -= step_size * *m / ((*v).sqrt() * inv_sqrt_bc2 + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut s = ParamStore::<f64>::new();
        let id = s.trainable("w", Tensor::from_vec(&[2], vec![1.0, -1.0]));
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.0, ..Default::default() });
        let grads = HashMap::from([(id, Tensor::from_vec(&[2], vec![0.3, -4.0]))]);
        opt.step(&mut s, &grads, 0.01);
        let w = s.get(id).data();
        assert!((w[0] - 0.99).abs() < 1e-6);
        assert!((w[1] + 0.99).abs() < 1e-6);
    }

    #[test]
    fn decay_shrinks_without_gradient_signal() {
        let mut s = ParamStore::<f64>::new();
        let id = s.trainable("w", Tensor::from_vec(&[1], vec![2.0]));
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.1, ..Default::default() });
        let grads = HashMap::from([(id, Tensor::zeros(&[1]))]);
        opt.step(&mut s, &grads, 0.5);
        assert!((s.get(id).data()[0] - 2.0 * 0.95).abs() < 1e-12);
    }
}
