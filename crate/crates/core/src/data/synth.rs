//! Moving-target sequences standing in for CNN features.
//!
//! A target cell random-walks over the grid. Its feature row carries
//! `signal_strength` on channel 0 and `signal_strength · code(cell)` on the
//! remaining channels, where `code` is a fixed unit vector per cell that only
//! depends on `(K, D)`. Every cell then gets i.i.d. Gaussian noise. The
//! per-cell code keeps the target's position visible in the frame's region
//! mean, and is shared by every dataset generated at the same `(K, D)` so
//! held-out data comes from the same distribution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::LabeledSequence;
use crate::error::{Error, Result};
use crate::model::FeatureCube;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    /// Label is the target cell.
    Target,
    /// Labels drawn uniformly and independently of the features.
    Independent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub grid_side: usize,
    pub depth: usize,
    pub num_sequences: usize,
    pub frames_per_sequence: usize,
    /// Max cells moved per frame along each axis.
    pub step_size: usize,
    pub signal_strength: f64,
    pub noise_sigma: f64,
    pub labels: LabelSource,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            grid_side: 7,
            depth: 16,
            num_sequences: 20,
            frames_per_sequence: 120,
            step_size: 1,
            signal_strength: 32.0,
            noise_sigma: 0.3,
            labels: LabelSource::Target,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_side == 0 || self.depth == 0 {
            return Err(Error::invalid("synthetic data needs K >= 1 and D >= 1"));
        }
        if self.signal_strength.is_nan() || self.signal_strength <= 0.0 {
            return Err(Error::invalid("signal strength must be positive"));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::invalid("noise sigma must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Fixed unit-norm code per cell on channels `1..D`.
pub fn position_codes(grid_side: usize, depth: usize) -> Vec<Vec<f64>> {
    let width = depth.saturating_sub(1);
    let mut rng = ChaCha8Rng::seed_from_u64(
        0x6a09_e667_f3bc_c908 ^ ((grid_side as u64) << 32) ^ depth as u64,
    );
    (0..grid_side * grid_side)
        .map(|_| {
            let mut v: Vec<f64> = (0..width)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
            v
        })
        .collect()
}

fn walk(pos: usize, step: usize, k: usize, rng: &mut ChaCha8Rng) -> usize {
    if step == 0 {
        return pos;
    }
    let s = step as i64;
    let clamp = |v: i64| v.clamp(0, k as i64 - 1) as usize;
    let (r, c) = ((pos / k) as i64, (pos % k) as i64);
    let nr = clamp(r + rng.random_range(-s..=s));
    let nc = clamp(c + rng.random_range(-s..=s));
    nr * k + nc
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<LabeledSequence>> {
    cfg.validate()?;
    let (k, d) = (cfg.grid_side, cfg.depth);
    let regions = k * k;
    let codes = position_codes(k, d);
    let noise = if cfg.noise_sigma > 0.0 {
        Some(Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut out = Vec::with_capacity(cfg.num_sequences);
    for s in 0..cfg.num_sequences {
        let mut target = rng.random_range(0..regions);
        let mut frames = Vec::with_capacity(cfg.frames_per_sequence);
        let mut labels = Vec::with_capacity(cfg.frames_per_sequence);
        for t in 0..cfg.frames_per_sequence {
            if t > 0 {
                target = walk(target, cfg.step_size, k, &mut rng);
            }
            let mut m = Matrix::zeros(regions, d);
            let row = m.row_mut(target);
            row[0] = cfg.signal_strength;
            for (dst, c) in row[1..].iter_mut().zip(&codes[target]) {
                *dst = cfg.signal_strength * c;
            }
            if let Some(n) = &noise {
                for v in m.as_mut_slice() {
                    *v += n.sample(&mut rng);
                }
            }
            frames.push(FeatureCube::new(k, m)?);
            labels.push(match cfg.labels {
                LabelSource::Target => target,
                LabelSource::Independent => rng.random_range(0..regions),
            });
        }
        out.push(LabeledSequence::new(
            format!("synth-{s:03}"),
            frames,
            labels,
        )?);
    }
    Ok(out)
}
