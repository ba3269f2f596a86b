use serde::{Deserialize, Serialize};

use super::{EngineError, Gradients, ParamSet, Tensor};
use crate::scalar::Scalar;

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled L2 weight-decay coefficient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Moment estimates for every tensor of one [`ParamSet`].
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    pub config: AdamConfig,
    m: Vec<Tensor<S>>,
    v: Vec<Tensor<S>>,
    t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(config: AdamConfig, params: &ParamSet<S>) -> Self {
        let zeros: Vec<_> = params
            .iter()
            .map(|(_, _, p)| Tensor::zeros(p.shape().to_vec()))
            .collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One Adam update with bias correction and decoupled weight decay:
    ///
    /// `w ← w − α (m̂ / (√v̂ + ε) + λ w)`
    ///
    /// Parameters absent from `grads` did not take part in the loss and are
    /// left untouched, moments included.
    pub fn step(&mut self, params: &mut ParamSet<S>, grads: &Gradients<S>) -> Result<(), EngineError> {
        if params.len() != self.m.len() {
            return Err(EngineError::OptimizerMismatch {
                expected: self.m.len(),
                found: params.len(),
            });
        }
        for (id, g) in grads.iter() {
            if id.0 >= params.len() || g.shape() != params.get(id).shape() {
                return Err(EngineError::GradShape {
                    param: params.name(id).to_string(),
                });
            }
            if g.data().iter().any(|x| !x.is_finite()) {
                return Err(EngineError::NonFiniteGradient {
                    param: params.name(id).to_string(),
                });
            }
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (S::of(c.beta1), S::of(c.beta2));
        let bc1 = S::one() - S::of(c.beta1.powi(self.t as i32));
        let bc2 = S::one() - S::of(c.beta2.powi(self.t as i32));
        let (lr, eps, wd) = (S::of(c.lr), S::of(c.eps), S::of(c.weight_decay));
        for (id, g) in grads.iter() {
            let m = self.m[id.0].data_mut();
            let v = self.v[id.0].data_mut();
            let w = params.get_mut(id).data_mut();
            for i in 0..w.len() {
                let gi = g.data()[i];
                m[i] = b1 * m[i] + (S::one() - b1) * gi;
                v[i] = b2 * v[i] + (S::one() - b2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * w[i]);
            }
        }
        Ok(())
    }
}

/// Clamps every entry of every parameter into `[-c, c]`.
pub fn clip_params<S: Scalar>(params: &mut ParamSet<S>, c: f64) -> Result<(), EngineError> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(EngineError::InvalidClip(c));
    }
    let c = S::of(c);
    for id in params.ids().collect::<Vec<_>>() {
        for x in params.get_mut(id).data_mut() {
            *x = x.max(-c).min(c);
        }
    }
    Ok(())
}
