//! Adaptive-moment stochastic gradient (Adam) over flat parameter buffers.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    /// `sizes[i]` is the length of the i-th tensor passed to [`Adam::step`].
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    /// One descent step on every tensor.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), self.m.len(), "tensor count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        self.t = self.t.saturating_add(1);
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        if lr == 0.0 {
            return;
        }
        let bc1 = 1.0 - beta1.powi(self.t);
        let bc2 = 1.0 - beta2.powi(self.t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            assert_eq!(p.len(), g.len());
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut adam = Adam::new(AdamConfig::with_lr(0.1), &[2]);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut [&mut p], &[&[3.0, -0.5]]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut adam = Adam::new(AdamConfig::with_lr(0.05), &[1]);
        let mut p = vec![4.0];
        for _ in 0..2000 {
            let g = vec![2.0 * (p[0] - 1.5)];
            adam.step(&mut [&mut p], &[&g]);
        }
        assert!((p[0] - 1.5).abs() < 1e-2);
    }
}
