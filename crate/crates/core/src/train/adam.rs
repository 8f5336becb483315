use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::train::backward::Gradients;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "invalid Adam hyperparameters {self:?}"
            )))
        }
    }
}

/// First/second moment estimates shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: ModelParams,
    pub v: ModelParams,
    pub hyper: AdamConfig,
}

impl AdamState {
    pub fn new(params: &ModelParams, hyper: AdamConfig) -> Self {
        Self {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
            hyper,
        }
    }
}

fn congruent(a: &ModelParams, b: &ModelParams) -> bool {
    let (ba, bb) = (a.buffers(), b.buffers());
    ba.len() == bb.len() && ba.iter().zip(&bb).all(|(x, y)| x.2.len() == y.2.len())
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if !congruent(params, grads) || !congruent(params, &state.m) || !congruent(params, &state.v) {
        return Err(Error::invalid(
            "adam_step: parameter, gradient and moment shapes differ",
        ));
    }
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.hyper;
    let t = state.step as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);

    let grad_bufs = grads.buffers();
    for (((theta, m), v), (_, _, g)) in params
        .buffers_mut()
        .into_iter()
        .zip(state.m.buffers_mut())
        .zip(state.v.buffers_mut())
        .zip(grad_bufs)
    {
        for k in 0..theta.len() {
            m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
            v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
            let m_hat = m[k] / bias1;
            let v_hat = v[k] / bias2;
            theta[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
