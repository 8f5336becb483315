use crate::error::{Error, Result};
use crate::model::{AttentionMap, ModelParams};

/// Probabilities are floored here before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub cross_entropy: f64,
    pub l2_penalty: f64,
    pub total: f64,
}

pub(crate) fn check_labels(labels: &[usize], regions: usize) -> Result<()> {
    for (frame, &label) in labels.iter().enumerate() {
        if label >= regions {
            return Err(Error::LabelOutOfRange {
                frame,
                label,
                regions,
            });
        }
    }
    Ok(())
}

/// `−Σ_t log l̂_t[label_t]` over raw probability rows.
pub(crate) fn cross_entropy(probs: &[Vec<f64>], labels: &[usize]) -> f64 {
    probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| -p[y].max(PROB_FLOOR).ln())
        .sum()
}

/// Cross-entropy of the maps against one-hot labels plus `γ·Σθ²`.
pub fn loss(
    maps: &[AttentionMap],
    labels: &[usize],
    params: &ModelParams,
    gamma: f64,
) -> Result<LossBreakdown> {
    if maps.len() != labels.len() {
        return Err(Error::shape(
            "loss",
            format!("{} labels", maps.len()),
            labels.len(),
        ));
    }
    let regions = maps.first().map_or(0, AttentionMap::len);
    if maps.iter().any(|m| m.len() != regions) {
        return Err(Error::invalid("attention maps of differing lengths"));
    }
    check_labels(labels, regions)?;
    let cross_entropy = maps
        .iter()
        .zip(labels)
        .map(|(m, &y)| -m.probs()[y].max(PROB_FLOOR).ln())
        .sum();
    Ok(breakdown(cross_entropy, params, gamma))
}

pub(crate) fn breakdown(cross_entropy: f64, params: &ModelParams, gamma: f64) -> LossBreakdown {
    let l2_penalty = gamma * params.sum_squares();
    LossBreakdown {
        cross_entropy,
        l2_penalty,
        total: cross_entropy + l2_penalty,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn single_weight(value: f64) -> ModelParams {
        // K=1, D=1, H=1 still has many tensors; zero all but one coordinate.
        let mut p = ModelParams::zeros(ModelConfig::new(1, 1, 1, 1)).unwrap();
        p.set_flat(0, value).unwrap();
        p
    }

    #[test]
    fn uniform_map_cross_entropy_is_log_regions() {
        let p = ModelParams::zeros(ModelConfig::new(7, 2, 2, 1)).unwrap();
        let l = loss(&[AttentionMap::uniform(49)], &[24], &p, 0.0).unwrap();
        assert!((l.cross_entropy - 49f64.ln()).abs() < 1e-12);
        assert!((l.cross_entropy - 3.8918).abs() < 1e-4);
        assert_eq!(l.l2_penalty, 0.0);
        assert_eq!(l.total, l.cross_entropy);
    }

    #[test]
    fn penalty_of_single_weight() {
        let p = single_weight(3.0);
        let l = loss(&[AttentionMap::uniform(1)], &[0], &p, 0.01).unwrap();
        assert!((l.l2_penalty - 0.09).abs() < 1e-15);
        assert!((l.total - (l.cross_entropy + 0.09)).abs() < 1e-15);
        assert_eq!(
            loss(&[AttentionMap::uniform(1)], &[0], &p, 0.0)
                .unwrap()
                .l2_penalty,
            0.0
        );
    }

    #[test]
    fn floors_confident_miss_and_rejects_bad_labels() {
        let p = single_weight(0.0);
        let map = AttentionMap::new(vec![1.0, 0.0]).unwrap();
        let l = loss(std::slice::from_ref(&map), &[1], &p, 0.0).unwrap();
        assert!((l.cross_entropy - (-PROB_FLOOR.ln())).abs() < 1e-9);
        assert!(matches!(
            loss(std::slice::from_ref(&map), &[2], &p, 0.0),
            Err(Error::LabelOutOfRange {
                frame: 0,
                label: 2,
                ..
            })
        ));
        assert!(loss(&[map], &[0, 1], &p, 0.0).is_err());
    }
}
