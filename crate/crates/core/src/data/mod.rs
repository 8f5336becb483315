//! Labeled frame sequences, fixation preprocessing, synthetic data and the
//! GZDS dataset container.

mod format;
pub mod preprocess;
pub mod synth;

pub use format::{
    decode_dataset, encode_dataset, load_dataset, save_dataset, DATASET_MAGIC, DATASET_VERSION,
};
pub use preprocess::{fill_missing, quantize, split, vote};
pub use synth::{synth_generate, LabelSource, SynthConfig};

use crate::error::{Error, Result};
use crate::model::FeatureCube;

/// Frames of one video paired with one grid-cell label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub name: String,
    frames: Vec<FeatureCube>,
    labels: Vec<usize>,
}

impl LabeledSequence {
    pub fn new(
        name: impl Into<String>,
        frames: Vec<FeatureCube>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if frames.len() != labels.len() {
            return Err(Error::shape(
                "LabeledSequence::new",
                format!("{} labels", frames.len()),
                labels.len(),
            ));
        }
        if let Some(first) = frames.first() {
            let (k, d) = (first.grid_side(), first.depth());
            for (t, f) in frames.iter().enumerate() {
                if f.grid_side() != k || f.depth() != d {
                    return Err(Error::shape(
                        "LabeledSequence::new",
                        format!("K={k} D={d}"),
                        format!("frame {t} with K={} D={}", f.grid_side(), f.depth()),
                    ));
                }
            }
            for (frame, &label) in labels.iter().enumerate() {
                if label >= k * k {
                    return Err(Error::LabelOutOfRange {
                        frame,
                        label,
                        regions: k * k,
                    });
                }
            }
        }
        Ok(Self {
            name: name.into(),
            frames,
            labels,
        })
    }

    pub fn frames(&self) -> &[FeatureCube] {
        &self.frames
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(K, D)` of the frames, `None` when empty.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.frames.first().map(|f| (f.grid_side(), f.depth()))
    }

    /// Sub-range `[start, end)` as its own sequence.
    pub fn slice(&self, start: usize, end: usize, name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            frames: self.frames[start..end].to_vec(),
            labels: self.labels[start..end].to_vec(),
        }
    }

    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(self.name.clone(), self.frames.clone(), labels)
    }
}

/// Common `(K, D)` of a non-empty dataset.
pub fn dataset_shape(seqs: &[LabeledSequence]) -> Result<(usize, usize)> {
    let mut shape = None;
    for s in seqs {
        if let Some(sh) = s.shape() {
            match shape {
                None => shape = Some(sh),
                Some(prev) if prev != sh => {
                    return Err(Error::shape(
                        "dataset",
                        format!("K={} D={}", prev.0, prev.1),
                        format!("sequence {:?} with K={} D={}", s.name, sh.0, sh.1),
                    ))
                }
                _ => {}
            }
        }
    }
    shape.ok_or_else(|| Error::invalid("dataset has no frames"))
}
