//! Central-difference gradient oracle.
//!
//! Uses only `forward_sequence` + `loss`, never the backward pass.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{forward_sequence, FeatureCube, Mode, ModelParams};
use crate::train::backward::backward;
use crate::train::loss::loss;

fn total_loss(
    params: &ModelParams,
    frames: &[FeatureCube],
    labels: &[usize],
    gamma: f64,
) -> Result<f64> {
    let (maps, _) = forward_sequence(params, frames, Mode::Inference)?;
    Ok(loss(&maps, labels, params, gamma)?.total)
}

/// `(L(θ+ε·e) − L(θ−ε·e)) / 2ε` for the flat parameter coordinate `coordinate`.
pub fn finite_diff_grad(
    params: &ModelParams,
    frames: &[FeatureCube],
    labels: &[usize],
    gamma: f64,
    coordinate: usize,
    eps: f64,
) -> Result<f64> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::invalid(format!(
            "finite-difference step {eps} must be positive"
        )));
    }
    let theta = params
        .get_flat(coordinate)
        .ok_or_else(|| Error::invalid(format!("parameter coordinate {coordinate} out of range")))?;
    let mut probe = params.clone();
    probe.config.dropout_rate = 0.0;
    probe.set_flat(coordinate, theta + eps)?;
    let plus = total_loss(&probe, frames, labels, gamma)?;
    probe.set_flat(coordinate, theta - eps)?;
    let minus = total_loss(&probe, frames, labels, gamma)?;
    Ok((plus - minus) / (2.0 * eps))
}

/// `|a − n| / max(1, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateCheck {
    pub coordinate: usize,
    pub tensor: String,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checks: Vec<CoordinateCheck>,
    pub max_relative_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

fn tensor_of(params: &ModelParams, coordinate: usize) -> String {
    let mut rest = coordinate;
    for (name, (_, _, values)) in params.tensor_names().into_iter().zip(params.buffers()) {
        if rest < values.len() {
            return format!("{name}[{rest}]");
        }
        rest -= values.len();
    }
    String::from("?")
}

/// Compares backward against central differences on `count` random coordinates
/// (all of them when `count` exceeds the parameter count). Dropout is disabled.
pub fn check_gradients<R: Rng + ?Sized>(
    params: &ModelParams,
    frames: &[FeatureCube],
    labels: &[usize],
    gamma: f64,
    count: usize,
    eps: f64,
    rng: &mut R,
) -> Result<GradCheckReport> {
    let mut params = params.clone();
    params.config.dropout_rate = 0.0;
    let (_, cache) = forward_sequence(&params, frames, Mode::Inference)?;
    let grads = backward(&cache, labels, &params, gamma)?;

    let n = params.num_parameters();
    let mut coords = index::sample(rng, n, count.min(n)).into_vec();
    coords.sort_unstable();

    let mut checks = Vec::with_capacity(coords.len());
    for coordinate in coords {
        let analytic = grads.get_flat(coordinate).expect("coordinate within range");
        let numeric = finite_diff_grad(&params, frames, labels, gamma, coordinate, eps)?;
        checks.push(CoordinateCheck {
            coordinate,
            tensor: tensor_of(&params, coordinate),
            analytic,
            numeric,
            relative_error: relative_error(analytic, numeric),
        });
    }
    let max_relative_error = checks.iter().map(|c| c.relative_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        checks,
        max_relative_error,
    })
}
