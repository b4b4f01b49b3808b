//! Adam with decoupled weight decay and per-epoch learning-rate decay.

use serde::{Deserialize, Serialize};

use super::{DenseNetwork, GradientSet, LayerParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay applied to weights (not biases), scaled by the current lr.
    pub weight_decay: f64,
    /// Multiplier applied to lr at every epoch boundary.
    pub lr_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
            lr_decay: 0.91,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    /// Current learning rate (decayed).
    pub lr: f64,
    pub step: u64,
    pub first_moment: Vec<LayerParams>,
    pub second_moment: Vec<LayerParams>,
}

impl OptimizerState {
    pub fn new(net: &DenseNetwork, config: AdamConfig) -> Self {
        Self {
            lr: config.lr,
            config,
            step: 0,
            first_moment: net.zero_layers(),
            second_moment: net.zero_layers(),
        }
    }

    /// One bias-corrected Adam update of `net`.
    pub fn step(&mut self, net: &mut DenseNetwork, grads: &GradientSet) -> Result<()> {
        if grads.layers.len() != net.layers.len()
            || grads.layers.iter().zip(&net.layers).any(|(g, p)| {
                g.weights.len() != p.weights.len() || g.biases.len() != p.biases.len()
            })
        {
            return Err(Error::shape("gradients do not match the network"));
        }
        if grads
            .layers
            .iter()
            .any(|g| g.weights.iter().chain(&g.biases).any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("gradients".into()));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        let lr = self.lr;
        for (k, layer) in net.layers_mut().iter_mut().enumerate() {
            let g = &grads.layers[k];
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64, decay: f64| {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p -= lr * (m_hat / (v_hat.sqrt() + c.eps) + decay * *p);
            };
            for i in 0..layer.weights.len() {
                update(&mut layer.weights[i], g.weights[i], &mut m.weights[i], &mut v.weights[i], c.weight_decay);
            }
            for i in 0..layer.biases.len() {
                update(&mut layer.biases[i], g.biases[i], &mut m.biases[i], &mut v.biases[i], 0.0);
            }
        }
        Ok(())
    }

    pub fn end_epoch(&mut self) {
        self.lr *= self.config.lr_decay;
    }
}
