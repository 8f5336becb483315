//! GZDS dataset container.
//!
//! ```text
//! "GZDS"  version:u32  count:u32
//! per sequence:
//!   name_len:u32 name:utf8  T:u64  K:u32  D:u32
//!   labels: T × u32
//!   features: T·K²·D × f64, frame-major then region-major
//! ```
//! All integers and floats little-endian.

use std::fs;
use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::data::LabeledSequence;
use crate::error::Result;
use crate::model::FeatureCube;
use crate::tensor::Matrix;

pub const DATASET_MAGIC: &[u8; 4] = b"GZDS";
pub const DATASET_VERSION: u32 = 1;

pub fn encode_dataset(seqs: &[LabeledSequence]) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    w.u32(seqs.len() as u32);
    for s in seqs {
        let (k, d) = s.shape().unwrap_or((1, 1));
        w.str(&s.name);
        w.u64(s.len() as u64);
        w.u32(k as u32);
        w.u32(d as u32);
        for &l in s.labels() {
            w.u32(l as u32);
        }
        for f in s.frames() {
            w.f64s(f.regions().as_slice());
        }
    }
    w.finish()
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<LabeledSequence>> {
    let mut r = Reader::new(bytes, "dataset");
    r.expect_magic(DATASET_MAGIC)?;
    let at = r.offset();
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(r.error_at(
            at,
            format!("unsupported version {version}, expected {DATASET_VERSION}"),
        ));
    }
    let count = r.u32()? as usize;
    let mut seqs = Vec::with_capacity(count.min(1024));
    for s in 0..count {
        let name = r.str()?;
        let at = r.offset();
        let t_len = r.u64()?;
        let k = r.u32()? as usize;
        let d = r.u32()? as usize;
        if k == 0 || d == 0 {
            return Err(r.error_at(at, format!("sequence {s}: K={k} and D={d} must be >= 1")));
        }
        let t_len = usize::try_from(t_len).map_err(|_| r.error_at(at, "frame count overflows"))?;
        let regions = k * k;
        let labels_at = r.offset();
        let mut labels = Vec::with_capacity(t_len.min(bytes.len() / 4));
        for frame in 0..t_len {
            let label = r.u32()? as usize;
            if label >= regions {
                return Err(r.error_at(
                    labels_at + 4 * frame as u64,
                    format!(
                        "sequence {s} frame {frame}: label {label} out of range [0, {regions})"
                    ),
                ));
            }
            labels.push(label);
        }
        let per_frame = regions
            .checked_mul(d)
            .ok_or_else(|| r.error_at(at, "frame size overflows"))?;
        let mut frames = Vec::with_capacity(t_len);
        for frame in 0..t_len {
            let frame_at = r.offset();
            let values = r.f64s(per_frame)?;
            let cube = Matrix::from_vec(regions, d, values)
                .and_then(|m| FeatureCube::new(k, m))
                .map_err(|e| r.error_at(frame_at, format!("sequence {s} frame {frame}: {e}")))?;
            frames.push(cube);
        }
        seqs.push(
            LabeledSequence::new(name, frames, labels)
                .map_err(|e| r.error_at(at, e.to_string()))?,
        );
    }
    r.expect_end()?;
    Ok(seqs)
}

pub fn save_dataset(seqs: &[LabeledSequence], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_dataset(seqs))?;
    Ok(())
}

/// Reads and validates a whole file; nothing is returned on any failure.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<LabeledSequence>> {
    decode_dataset(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_generate, SynthConfig};
    use crate::error::Error;
    use proptest::prelude::*;

    fn sample() -> Vec<LabeledSequence> {
        synth_generate(&SynthConfig {
            grid_side: 3,
            depth: 2,
            num_sequences: 2,
            frames_per_sequence: 4,
            seed: 9,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn bit_equal(a: &[LabeledSequence], b: &[LabeledSequence]) -> bool {
        a.len() == b.len()
            && a.iter().zip(b).all(|(x, y)| {
                x.name == y.name
                    && x.labels() == y.labels()
                    && x.frames().iter().zip(y.frames()).all(|(f, g)| {
                        f.regions()
                            .as_slice()
                            .iter()
                            .zip(g.regions().as_slice())
                            .all(|(u, v)| u.to_bits() == v.to_bits())
                    })
            })
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let seqs = sample();
        let back = decode_dataset(&encode_dataset(&seqs)).unwrap();
        assert!(bit_equal(&seqs, &back));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.gzds");
        save_dataset(&seqs, &path).unwrap();
        assert!(bit_equal(&seqs, &load_dataset(&path).unwrap()));
    }

    #[test]
    fn label_out_of_range_names_frame() {
        let mut bytes = encode_dataset(&sample());
        // magic, version, count, name length, name, T, K, D
        let label_at = 4 + 4 + 4 + 4 + "synth-000".len() + 8 + 4 + 4;
        let frame = 2;
        bytes[label_at + 4 * frame..label_at + 4 * frame + 4].copy_from_slice(&9u32.to_le_bytes());
        match decode_dataset(&bytes) {
            Err(Error::Format { offset, reason, .. }) => {
                assert_eq!(offset as usize, label_at + 4 * frame);
                assert!(reason.contains("frame 2"), "{reason}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncation_bad_magic_and_version_are_rejected() {
        let bytes = encode_dataset(&sample());
        for cut in [0, 3, 10, 30, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(decode_dataset(&bytes[..cut]), Err(Error::Format { .. })),
                "cut {cut}"
            );
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_dataset(&bad),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            decode_dataset(&bad),
            Err(Error::Format { offset: 4, .. })
        ));
        let mut long = bytes;
        long.push(0);
        assert!(decode_dataset(&long).is_err());
    }

    #[test]
    fn non_finite_feature_rejected_with_offset() {
        let seqs = sample();
        let mut bytes = encode_dataset(&seqs);
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        match decode_dataset(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, n - 3 * 3 * 2 * 8),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn arbitrary_values_round_trip(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 8), label in 0usize..4) {
            let cube = FeatureCube::new(2, Matrix::from_vec(4, 2, values).unwrap()).unwrap();
            let seq = LabeledSequence::new("p", vec![cube], vec![label]).unwrap();
            let back = decode_dataset(&encode_dataset(std::slice::from_ref(&seq))).unwrap();
            prop_assert!(bit_equal(&[seq], &back));
        }
    }
}
