//! Backpropagation through time over one cached unroll.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::model::{LstmLayerParams, LstmStepCache, Mlp, ModelParams, StateCache};
use crate::tensor::{self, Activation};
use crate::train::loss::{check_labels, PROB_FLOOR};

/// `∂L/∂θ`, shaped exactly like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(ModelParams);

impl Gradients {
    pub fn zeros_for(params: &ModelParams) -> Self {
        Self(params.zeros_like())
    }

    pub fn into_inner(self) -> ModelParams {
        self.0
    }

    pub fn global_norm(&self) -> f64 {
        self.0.sum_squares().sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for buf in self.0.buffers_mut() {
                buf.iter_mut().for_each(|g| *g *= scale);
            }
        }
        norm
    }
}

impl Deref for Gradients {
    type Target = ModelParams;
    fn deref(&self) -> &ModelParams {
        &self.0
    }
}

impl DerefMut for Gradients {
    fn deref_mut(&mut self) -> &mut ModelParams {
        &mut self.0
    }
}

/// Returns `(dh_prev, dc_prev, dx)` and accumulates weight gradients.
fn lstm_step_backward(
    layer: &LstmLayerParams,
    cache: &LstmStepCache,
    dh: &[f64],
    dc_next: &[f64],
    grad: &mut LstmLayerParams,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let hsz = layer.hidden();
    let mut dz = vec![0.0; 4 * hsz];
    let mut dc_prev = vec![0.0; hsz];
    for k in 0..hsz {
        let dc = dc_next[k]
            + dh[k] * cache.o[k] * Activation::Tanh.derivative_from_output(cache.tanh_c[k]);
        let d_o = dh[k] * cache.tanh_c[k];
        let d_i = dc * cache.g[k];
        let d_f = dc * cache.c_prev[k];
        let d_g = dc * cache.i[k];
        dz[k] = d_i * Activation::Sigmoid.derivative_from_output(cache.i[k]);
        dz[hsz + k] = d_f * Activation::Sigmoid.derivative_from_output(cache.f[k]);
        dz[2 * hsz + k] = d_o * Activation::Sigmoid.derivative_from_output(cache.o[k]);
        dz[3 * hsz + k] = d_g * Activation::Tanh.derivative_from_output(cache.g[k]);
        dc_prev[k] = dc * cache.f[k];
    }
    let mut joined = Vec::with_capacity(hsz + cache.input.len());
    joined.extend_from_slice(&cache.h_prev);
    joined.extend_from_slice(&cache.input);
    let djoined = tensor::affine_backward(
        &layer.weight,
        &joined,
        &dz,
        &mut grad.weight,
        &mut grad.bias,
    )?;
    let dx = djoined[hsz..].to_vec();
    let mut dh_prev = djoined;
    dh_prev.truncate(hsz);
    Ok((dh_prev, dc_prev, dx))
}

fn mlp_backward(
    mlp: &Mlp,
    input: &[f64],
    hidden: &[f64],
    dout: &[f64],
    grad: &mut Mlp,
) -> Result<()> {
    let dhidden = tensor::affine_backward(&mlp.w2, hidden, dout, &mut grad.w2, &mut grad.b2)?;
    let dpre = tensor::elementwise_backward(Activation::Tanh, hidden, &dhidden);
    tensor::affine_backward(&mlp.w1, input, &dpre, &mut grad.w1, &mut grad.b1)?;
    Ok(())
}

/// `dL/dlogits` of the cross-entropy term alone: `l̂ − onehot`, zero when floored.
fn cross_entropy_logit_grad(probs: &[f64], label: usize, out: &mut [f64]) {
    if probs[label] > PROB_FLOOR {
        tensor::add_assign(out, probs);
        out[label] -= 1.0;
    }
}

/// Gradient of `CE + γ·Σθ²` for the unroll recorded in `cache`.
pub fn backward(
    cache: &StateCache,
    labels: &[usize],
    params: &ModelParams,
    gamma: f64,
) -> Result<Gradients> {
    let t_len = cache.len();
    if labels.len() != t_len {
        return Err(Error::shape(
            "backward",
            format!("{t_len} labels"),
            labels.len(),
        ));
    }
    let cfg = &params.config;
    check_labels(labels, cfg.regions())?;
    if cache.steps.iter().any(|s| s.len() != params.layers.len()) || cache.steps.len() + 1 != t_len
    {
        return Err(Error::invalid(
            "state cache does not match the model's layer count",
        ));
    }

    let mut grads = Gradients::zeros_for(params);
    let nl = params.layers.len();
    let hsz = cfg.hidden;
    let mut dh_next = vec![vec![0.0; hsz]; nl];
    let mut dc_next = vec![vec![0.0; hsz]; nl];
    // cotangent reaching probs[t] through the blend x_t
    let mut dprobs_from_blend: Option<Vec<f64>> = None;

    for t in (0..t_len - 1).rev() {
        let frame = t + 1;
        let probs = &cache.probs[frame];
        let mut dlogits = match dprobs_from_blend.take() {
            Some(dp) => tensor::softmax_backward(probs, &dp),
            None => vec![0.0; probs.len()],
        };
        cross_entropy_logit_grad(probs, labels[frame], &mut dlogits);

        let top = cache.steps[t][nl - 1].output();
        grads.attention.w_h.add_outer(&dlogits, &top);
        grads
            .attention
            .w_c
            .add_outer(&dlogits, &cache.region_means[frame]);
        let mut dinput = params.attention.w_h.matvec_t(&dlogits)?;

        for l in (0..nl).rev() {
            let step = &cache.steps[t][l];
            let mut dh = match &step.mask {
                Some(mask) => dinput.iter().zip(mask).map(|(d, m)| d * m).collect(),
                None => dinput,
            };
            tensor::add_assign(&mut dh, &dh_next[l]);
            let (dh_prev, dc_prev, dx) = lstm_step_backward(
                &params.layers[l],
                step,
                &dh,
                &dc_next[l],
                &mut grads.layers[l],
            )?;
            dh_next[l] = dh_prev;
            dc_next[l] = dc_prev;
            dinput = dx;
        }

        dprobs_from_blend = Some(cache.frames[t].regions().matvec(&dinput)?);
    }

    let probs = &cache.probs[0];
    let mut dlogits = match dprobs_from_blend {
        Some(dp) => tensor::softmax_backward(probs, &dp),
        None => vec![0.0; probs.len()],
    };
    cross_entropy_logit_grad(probs, labels[0], &mut dlogits);
    grads.attention.w_h.add_outer(&dlogits, &cache.h0);
    grads
        .attention
        .w_c
        .add_outer(&dlogits, &cache.region_means[0]);

    let mut dh0 = params.attention.w_h.matvec_t(&dlogits)?;
    let mut dc0 = vec![0.0; hsz];
    for l in 0..nl {
        tensor::add_assign(&mut dh0, &dh_next[l]);
        tensor::add_assign(&mut dc0, &dc_next[l]);
    }
    let init = &cache.init;
    mlp_backward(
        &params.init.h,
        &init.pooled,
        &init.h_hidden,
        &dh0,
        &mut grads.init.h,
    )?;
    mlp_backward(
        &params.init.c,
        &init.pooled,
        &init.c_hidden,
        &dc0,
        &mut grads.init.c,
    )?;

    if gamma != 0.0 {
        for (g, (_, _, theta)) in grads.buffers_mut().into_iter().zip(params.buffers()) {
            tensor::axpy(2.0 * gamma, theta, g);
        }
    }
    Ok(grads)
}
