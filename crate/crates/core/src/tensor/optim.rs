use serde::{Deserialize, Serialize};

use super::{shape_err, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            learning_rate: 5e-5,
            decay: 0.99,
            epsilon: 1e-8,
        }
    }
}

/// RMSprop over an ordered list of parameters. Accumulators are created on
/// the first step and must keep matching shapes afterwards.
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub config: RmsPropConfig,
    acc: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(config: RmsPropConfig) -> Self {
        RmsProp {
            config,
            acc: Vec::new(),
        }
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.acc
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<(), TensorError> {
        if params.len() != grads.len() {
            return Err(shape_err(
                "rmsprop",
                format!("{} params but {} gradients", params.len(), grads.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(shape_err(
                    "rmsprop",
                    format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
                ));
            }
        }
        if self.acc.is_empty() {
            self.acc = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        } else if self.acc.len() != params.len()
            || self
                .acc
                .iter()
                .zip(params.iter())
                .any(|(a, p)| a.len() != p.numel())
        {
            return Err(shape_err("rmsprop", "parameter list changed between steps"));
        }
        let RmsPropConfig {
            learning_rate: lr,
            decay,
            epsilon,
        } = self.config;
        for ((p, g), acc) in params.iter_mut().zip(grads).zip(&mut self.acc) {
            for ((w, &d), a) in p.data_mut().iter_mut().zip(g.data()).zip(acc.iter_mut()) {
                *a = decay * *a + (1.0 - decay) * d * d;
                *w -= lr * d / (a.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Clamps every entry into `[-c, c]`.
pub fn clip_weights(params: &mut [Tensor], c: f64) -> Result<(), TensorError> {
    if c <= 0.0 || c.is_nan() {
        return Err(TensorError::NonPositiveClip(c));
    }
    for p in params {
        for w in p.data_mut() {
            *w = w.clamp(-c, c);
        }
    }
    Ok(())
}
