//! KL divergence and top-1 accuracy of predicted attention maps against
//! smoothed ground-truth fixations.

use std::io::Write;

use crate::data::LabeledSequence;
use crate::error::{Error, Result};
use crate::model::{predict, AttentionMap, ModelParams};

/// Default smoothing mass spread uniformly over the grid in ground-truth maps.
pub const DEFAULT_SMOOTHING: f64 = 0.01;
const Q_FLOOR: f64 = 1e-12;

/// `(1−ε)` on the labeled cell plus `ε/K²` everywhere.
pub fn groundtruth_map(label: usize, grid_side: usize, epsilon: f64) -> Result<AttentionMap> {
    let n = grid_side * grid_side;
    if label >= n {
        return Err(Error::LabelOutOfRange {
            frame: 0,
            label,
            regions: n,
        });
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::invalid(format!(
            "smoothing epsilon {epsilon} outside (0, 1]"
        )));
    }
    let mut probs = vec![epsilon / n as f64; n];
    probs[label] += 1.0 - epsilon;
    AttentionMap::new(probs)
}

/// `KL(p‖q) = Σ p_i ln(p_i / q_i)` in nats; `q` floored at 1e-12, `0·ln 0 = 0`.
pub fn kl_divergence(p: &AttentionMap, q: &AttentionMap) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape("kl_divergence", p.len(), q.len()));
    }
    let kl: f64 = p
        .probs()
        .iter()
        .zip(q.probs())
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi.max(Q_FLOOR)).ln())
        .sum();
    Ok(kl.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub epsilon: f64,
    /// Unroll length; each sequence is cut into consecutive chunks of this
    /// many frames. `None` unrolls whole sequences.
    pub window: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_SMOOTHING,
            window: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameEval {
    pub sequence: usize,
    pub frame: usize,
    pub kl: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mean_kl: f64,
    pub per_frame: Vec<FrameEval>,
    pub top1_accuracy: f64,
    pub uniform_baseline_kl: f64,
    pub frames_evaluated: usize,
    pub epsilon: f64,
}

/// Inference-mode maps for a whole sequence, unrolled chunk by chunk.
pub fn predict_sequence(
    model: &ModelParams,
    seq: &LabeledSequence,
    window: Option<usize>,
) -> Result<Vec<AttentionMap>> {
    let len = seq.len();
    let chunk = match window {
        Some(0) => return Err(Error::invalid("evaluation window must be >= 1")),
        Some(w) => w,
        None => len.max(1),
    };
    let mut maps = Vec::with_capacity(len);
    for start in (0..len).step_by(chunk) {
        let end = (start + chunk).min(len);
        maps.extend(predict(model, &seq.frames()[start..end])?);
    }
    Ok(maps)
}

/// Scores maps against labels; the building block of [`evaluate`].
pub fn score_maps(
    maps: &[AttentionMap],
    labels: &[usize],
    grid_side: usize,
    epsilon: f64,
) -> Result<Vec<(f64, bool)>> {
    if maps.len() != labels.len() {
        return Err(Error::shape(
            "score_maps",
            format!("{} labels", maps.len()),
            labels.len(),
        ));
    }
    maps.iter()
        .zip(labels)
        .enumerate()
        .map(|(frame, (m, &y))| {
            let truth = groundtruth_map(y, grid_side, epsilon).map_err(|e| match e {
                Error::LabelOutOfRange { label, regions, .. } => Error::LabelOutOfRange {
                    frame,
                    label,
                    regions,
                },
                other => other,
            })?;
            Ok((kl_divergence(&truth, m)?, m.argmax() == y))
        })
        .collect()
}

pub fn evaluate(
    model: &ModelParams,
    test: &[LabeledSequence],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let k = model.config.grid_side;
    let mut per_frame = Vec::new();
    let mut baseline_sum = 0.0;
    let uniform = AttentionMap::uniform(k * k);
    for (s, seq) in test.iter().enumerate() {
        if seq.is_empty() {
            continue;
        }
        let maps = predict_sequence(model, seq, opts.window)?;
        for (frame, (kl, correct)) in score_maps(&maps, seq.labels(), k, opts.epsilon)?
            .into_iter()
            .enumerate()
        {
            per_frame.push(FrameEval {
                sequence: s,
                frame,
                kl,
                correct,
            });
            let truth = groundtruth_map(seq.labels()[frame], k, opts.epsilon)?;
            baseline_sum += kl_divergence(&truth, &uniform)?;
        }
    }
    if per_frame.is_empty() {
        return Err(Error::invalid("evaluation set has no frames"));
    }
    let n = per_frame.len() as f64;
    Ok(EvalReport {
        mean_kl: per_frame.iter().map(|f| f.kl).sum::<f64>() / n,
        top1_accuracy: per_frame.iter().filter(|f| f.correct).count() as f64 / n,
        uniform_baseline_kl: baseline_sum / n,
        frames_evaluated: per_frame.len(),
        epsilon: opts.epsilon,
        per_frame,
    })
}

impl EvalReport {
    /// `key: value` lines.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "frames_evaluated: {}", self.frames_evaluated)?;
        writeln!(w, "mean_kl: {}", self.mean_kl)?;
        writeln!(w, "uniform_baseline_kl: {}", self.uniform_baseline_kl)?;
        writeln!(
            w,
            "kl_ratio_to_baseline: {}",
            self.mean_kl / self.uniform_baseline_kl
        )?;
        writeln!(w, "top1_accuracy: {}", self.top1_accuracy)?;
        writeln!(w, "epsilon: {}", self.epsilon)?;
        Ok(())
    }

    /// `frame,kl,correct` with frames numbered consecutively across sequences.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "frame,kl,correct")?;
        for (i, f) in self.per_frame.iter().enumerate() {
            writeln!(w, "{i},{:.16e},{}", f.kl, u8::from(f.correct))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_generate, SynthConfig};
    use crate::model::ModelConfig;
    use proptest::prelude::*;

    #[test]
    fn groundtruth_examples() {
        let m = groundtruth_map(3, 2, 1e-12).unwrap();
        assert!((m.probs()[3] - 1.0).abs() < 1e-11);

        let m = groundtruth_map(3, 2, 1.0).unwrap();
        assert_eq!(m.probs(), &[0.25; 4]);

        let m = groundtruth_map(24, 7, 0.01).unwrap();
        assert!((m.probs()[24] - 0.990204).abs() < 1e-6);
        assert!((m.probs()[0] - 0.000204).abs() < 1e-6);
        assert!((m.probs()[24] - (0.99 + 0.01 / 49.0)).abs() < 1e-15);

        assert!(groundtruth_map(49, 7, 0.01).is_err());
        assert!(groundtruth_map(0, 7, 0.0).is_err());
    }

    #[test]
    fn kl_examples() {
        let p = groundtruth_map(5, 3, 0.2).unwrap();
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);

        // 0.990204·ln(0.990204/(1/49)) + 48·0.000204·ln(0.000204/(1/49))
        let p = groundtruth_map(24, 7, 0.01).unwrap();
        let (hi, lo, u): (f64, f64, f64) = (0.99 + 0.01 / 49.0, 0.01 / 49.0, 1.0 / 49.0);
        let expected = hi * (hi / u).ln() + 48.0 * lo * (lo / u).ln();
        let got = kl_divergence(&p, &AttentionMap::uniform(49)).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 3.80).abs() < 0.01, "{got}");

        let p = AttentionMap::new(vec![0.5, 0.5]).unwrap();
        let q = AttentionMap::new(vec![0.25, 0.75]).unwrap();
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((kl_divergence(&p, &q).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.1438).abs() < 1e-4);

        assert!(kl_divergence(&p, &AttentionMap::uniform(3)).is_err());
    }

    #[test]
    fn kl_is_directional() {
        let p = AttentionMap::new(vec![0.9, 0.1]).unwrap();
        let q = AttentionMap::new(vec![0.5, 0.5]).unwrap();
        let forward = kl_divergence(&p, &q).unwrap();
        let reverse = kl_divergence(&q, &p).unwrap();
        assert!((forward - reverse).abs() > 1e-3);
        assert!((forward - (0.9 * 1.8f64.ln() + 0.1 * 0.2f64.ln())).abs() < 1e-15);
    }

    fn dataset(seed: u64) -> Vec<LabeledSequence> {
        synth_generate(&SynthConfig {
            grid_side: 3,
            depth: 4,
            num_sequences: 3,
            frames_per_sequence: 17,
            seed,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn perfect_predictor_scores_zero() {
        let seq = &dataset(1)[0];
        let maps: Vec<_> = seq
            .labels()
            .iter()
            .map(|&l| groundtruth_map(l, 3, 0.01).unwrap())
            .collect();
        let scores = score_maps(&maps, seq.labels(), 3, 0.01).unwrap();
        assert!(scores.iter().all(|&(kl, ok)| kl == 0.0 && ok));
    }

    #[test]
    fn zero_model_matches_uniform_baseline() {
        let model = ModelParams::zeros(ModelConfig::new(3, 4, 5, 2)).unwrap();
        let data = dataset(2);
        let report = evaluate(&model, &data, &EvalOptions::default()).unwrap();
        let uniform = AttentionMap::uniform(9);
        for f in &report.per_frame {
            let truth =
                groundtruth_map(data[f.sequence].labels()[f.frame], 3, DEFAULT_SMOOTHING).unwrap();
            assert_eq!(f.kl, kl_divergence(&truth, &uniform).unwrap());
        }
        assert_eq!(report.mean_kl, report.uniform_baseline_kl);

        // uniform argmax is region 0
        let zeros = data
            .iter()
            .flat_map(|s| s.labels())
            .filter(|&&l| l == 0)
            .count();
        assert_eq!(
            report.top1_accuracy,
            zeros as f64 / report.frames_evaluated as f64
        );
    }

    #[test]
    fn per_frame_scores_do_not_depend_on_grouping() {
        let model = ModelParams::init(
            ModelConfig::new(3, 4, 5, 1),
            &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(7),
        )
        .unwrap();
        let data = dataset(3);
        let opts = EvalOptions {
            window: Some(5),
            ..EvalOptions::default()
        };
        let together = evaluate(&model, &data, &opts).unwrap();
        let mut separate = Vec::new();
        for s in data.iter().rev() {
            separate.push(evaluate(&model, std::slice::from_ref(s), &opts).unwrap());
        }
        separate.reverse();
        let split_kls: Vec<f64> = separate
            .iter()
            .flat_map(|r| r.per_frame.iter().map(|f| f.kl))
            .collect();
        let joint_kls: Vec<f64> = together.per_frame.iter().map(|f| f.kl).collect();
        assert_eq!(split_kls, joint_kls);
        assert_eq!(evaluate(&model, &data, &opts).unwrap(), together);
    }

    #[test]
    fn report_files() {
        let model = ModelParams::zeros(ModelConfig::new(3, 4, 5, 1)).unwrap();
        let report = evaluate(&model, &dataset(4)[..1], &EvalOptions::default()).unwrap();
        let mut text = Vec::new();
        report.write_text(&mut text).unwrap();
        let text = String::from_utf8(text).unwrap();
        assert!(text.lines().all(|l| l.contains(": ")));
        assert!(text.contains("top1_accuracy: "));
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert_eq!(csv.lines().next(), Some("frame,kl,correct"));
        assert_eq!(csv.lines().count(), 18);

        assert!(evaluate(&model, &[], &EvalOptions::default()).is_err());
    }

    fn map_strategy() -> impl Strategy<Value = AttentionMap> {
        prop::collection::vec(0.001f64..1.0, 9).prop_map(|v| {
            let s: f64 = v.iter().sum();
            AttentionMap::new(v.into_iter().map(|x| x / s).collect()).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn kl_is_non_negative(p in map_strategy(), q in map_strategy()) {
            let kl = kl_divergence(&p, &q).unwrap();
            prop_assert!(kl >= 0.0);
            prop_assert!(kl_divergence(&p, &p).unwrap() < 1e-9);
            let close = p.probs().iter().zip(q.probs()).all(|(a, b)| (a - b).abs() < 1e-9);
            if !close {
                prop_assert!(kl > 0.0);
            }
        }
    }
}
