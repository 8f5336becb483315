use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{dataset_shape, LabeledSequence};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, DEFAULT_SMOOTHING};
use crate::model::{forward_sequence, Mode, ModelParams, DEFAULT_DROPOUT};
use crate::train::adam::{adam_step, AdamConfig, AdamState};
use crate::train::backward::backward;
use crate::train::curve::{CurveRecord, TrainCurve};
use crate::train::loss::{breakdown, cross_entropy};

pub const DEFAULT_GAMMA: f64 = 0.01;
/// Frames per truncated-BPTT update.
pub const DEFAULT_BPTT_WINDOW: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub gamma: f64,
    pub max_iterations: usize,
    pub bptt_window: usize,
    pub dropout_rate: f64,
    pub adam: AdamConfig,
    /// Seeds window shuffling and dropout masks.
    pub rng_seed: u64,
    pub epochs: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Validation KL every this many iterations (and at the last one); 0 disables.
    pub val_every: usize,
    pub smoothing: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            max_iterations: 1000,
            bptt_window: DEFAULT_BPTT_WINDOW,
            dropout_rate: DEFAULT_DROPOUT,
            adam: AdamConfig::default(),
            rng_seed: 0,
            epochs: 1,
            clip_norm: Some(5.0),
            val_every: 0,
            smoothing: DEFAULT_SMOOTHING,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::invalid(format!(
                "gamma {} must be finite and >= 0",
                self.gamma
            )));
        }
        if self.max_iterations == 0 || self.bptt_window == 0 || self.epochs == 0 {
            return Err(Error::invalid(
                "max iterations, BPTT window and epochs must be >= 1",
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::invalid(format!("clip norm {c} must be positive")));
            }
        }
        self.adam.validate()
    }
}

/// Consecutive non-overlapping `(sequence, start, end)` windows; the tail window may be short.
fn windows(dataset: &[LabeledSequence], width: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (s, seq) in dataset.iter().enumerate() {
        for start in (0..seq.len()).step_by(width) {
            out.push((s, start, (start + width).min(seq.len())));
        }
    }
    out
}

pub fn train(
    dataset: &[LabeledSequence],
    model: ModelParams,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainCurve)> {
    train_with_validation(dataset, None, model, cfg)
}

/// Trains until `max_iterations` updates or `epochs` passes over the windows, whichever comes first.
pub fn train_with_validation(
    dataset: &[LabeledSequence],
    validation: Option<&[LabeledSequence]>,
    mut model: ModelParams,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainCurve)> {
    cfg.validate()?;
    model.validate()?;
    let (k, d) = dataset_shape(dataset)?;
    if (k, d) != (model.config.grid_side, model.config.depth) {
        return Err(Error::shape(
            "train",
            format!("K={} D={}", model.config.grid_side, model.config.depth),
            format!("dataset with K={k} D={d}"),
        ));
    }
    model.config.dropout_rate = cfg.dropout_rate;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut adam = AdamState::new(&model, cfg.adam);
    let mut curve = TrainCurve::default();
    let mut order = windows(dataset, cfg.bptt_window);
    let total = (order.len() * cfg.epochs).min(cfg.max_iterations);
    let val_opts = EvalOptions {
        epsilon: cfg.smoothing,
        window: Some(cfg.bptt_window),
    };

    let mut iteration = 0;
    'epochs: for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &(s, start, end) in &order {
            if iteration == cfg.max_iterations {
                break 'epochs;
            }
            iteration += 1;
            let seq = &dataset[s];
            let labels = &seq.labels()[start..end];
            let (_, cache) =
                forward_sequence(&model, &seq.frames()[start..end], Mode::Training(&mut rng))?;
            let losses = breakdown(cross_entropy(&cache.probs, labels), &model, cfg.gamma);
            let mut grads = backward(&cache, labels, &model, cfg.gamma)?;
            if let Some(c) = cfg.clip_norm {
                grads.clip_global_norm(c);
            }
            adam_step(&mut model, &grads, &mut adam)?;
            if !model.is_finite() {
                return Err(Error::invalid(format!(
                    "parameters became non-finite at iteration {iteration}"
                )));
            }

            let val_kl = match validation {
                Some(v)
                    if cfg.val_every > 0
                        && (iteration % cfg.val_every == 0 || iteration == total) =>
                {
                    Some(evaluate(&model, v, &val_opts)?.mean_kl)
                }
                _ => None,
            };
            curve.push(CurveRecord {
                iteration,
                loss: losses.total,
                ce: losses.cross_entropy,
                l2: losses.l2_penalty,
                frames: end - start,
                val_kl,
            })?;
        }
    }
    Ok((model, curve))
}
