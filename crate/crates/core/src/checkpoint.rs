//! GZAT model checkpoint container.
//!
//! ```text
//! "GZAT"  version:u32
//! K:u32  D:u32  H:u32  layers:u32  dropout:f64
//! tensor_count:u32
//! per tensor: name_len:u32 name:utf8 rows:u64 cols:u64 values: rows·cols × f64
//! ```
//! Tensors appear in the model's canonical order; biases are `n×1`.

use std::fs;
use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::error::Result;
use crate::model::{ModelConfig, ModelParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GZAT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    let c = &params.config;
    w.u32(c.grid_side as u32);
    w.u32(c.depth as u32);
    w.u32(c.hidden as u32);
    w.u32(c.num_layers as u32);
    w.f64(c.dropout_rate);
    let names = params.tensor_names();
    let bufs = params.buffers();
    w.u32(bufs.len() as u32);
    for (name, (rows, cols, values)) in names.iter().zip(bufs) {
        w.str(name);
        w.u64(rows as u64);
        w.u64(cols as u64);
        w.f64s(values);
    }
    w.finish()
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader::new(bytes, "checkpoint");
    r.expect_magic(CHECKPOINT_MAGIC)?;
    let at = r.offset();
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(r.error_at(
            at,
            format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let config_at = r.offset();
    let config = ModelConfig {
        grid_side: r.u32()? as usize,
        depth: r.u32()? as usize,
        hidden: r.u32()? as usize,
        num_layers: r.u32()? as usize,
        dropout_rate: r.f64()?,
    };
    let mut params =
        ModelParams::zeros(config).map_err(|e| r.error_at(config_at, e.to_string()))?;
    let names = params.tensor_names();
    let shapes: Vec<(usize, usize)> = params.buffers().iter().map(|b| (b.0, b.1)).collect();

    let count_at = r.offset();
    let count = r.u32()? as usize;
    if count != names.len() {
        return Err(r.error_at(
            count_at,
            format!("{count} tensors, config implies {}", names.len()),
        ));
    }
    for (dst, (name, shape)) in params
        .buffers_mut()
        .into_iter()
        .zip(names.iter().zip(shapes))
    {
        let at = r.offset();
        let got = r.str()?;
        if &got != name {
            return Err(r.error_at(at, format!("expected tensor {name:?}, found {got:?}")));
        }
        let shape_at = r.offset();
        let rows = r.u64()?;
        let cols = r.u64()?;
        if (rows, cols) != (shape.0 as u64, shape.1 as u64) {
            return Err(r.error_at(
                shape_at,
                format!(
                    "{name}: shape {rows}x{cols}, expected {}x{}",
                    shape.0, shape.1
                ),
            ));
        }
        let values_at = r.offset();
        let values = r.f64s(dst.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(r.error_at(
                values_at + 8 * i as u64,
                format!("{name}: non-finite value"),
            ));
        }
        dst.copy_from_slice(&values);
    }
    r.expect_end()?;
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(params))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(layers: usize, seed: u64) -> ModelParams {
        ModelParams::init(
            ModelConfig::new(3, 4, 5, layers),
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap()
    }

    fn bits(p: &ModelParams) -> Vec<u64> {
        p.buffers()
            .iter()
            .flat_map(|b| b.2.iter().map(|v| v.to_bits()))
            .collect()
    }

    #[test]
    fn round_trip_through_file() {
        let p = model(2, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gzat");
        save_checkpoint(&p, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.config, p.config);
        assert_eq!(bits(&back), bits(&p));
        assert_eq!(encode_checkpoint(&back), encode_checkpoint(&p));
    }

    #[test]
    fn header_layout() {
        let bytes = encode_checkpoint(&model(1, 0));
        assert_eq!(&bytes[..4], b"GZAT");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 0.5);
    }

    #[test]
    fn corrupted_files_are_rejected_with_offsets() {
        let bytes = encode_checkpoint(&model(1, 2));
        for cut in [2, 8, 31, 40, bytes.len() - 3] {
            assert!(matches!(
                decode_checkpoint(&bytes[..cut]),
                Err(Error::Format { .. })
            ));
        }
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(
            decode_checkpoint(&bad),
            Err(Error::Format { offset: 0, .. })
        ));

        // first tensor name starts after the 36-byte header
        let mut bad = bytes.clone();
        bad[40] = b'X';
        assert!(matches!(
            decode_checkpoint(&bad),
            Err(Error::Format { offset: 36, .. })
        ));

        let mut bad = bytes.clone();
        bad[12..16].copy_from_slice(&7u32.to_le_bytes()); // D changes every shape
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format { .. })));

        let mut bad = bytes;
        let n = bad.len();
        bad[n - 8..].copy_from_slice(&f64::INFINITY.to_le_bytes());
        assert!(
            matches!(decode_checkpoint(&bad), Err(Error::Format { offset, .. }) if offset as usize == n - 8)
        );
    }

    proptest! {
        #[test]
        fn any_initialization_round_trips(seed in any::<u64>(), layers in 1usize..3) {
            let p = model(layers, seed);
            let back = decode_checkpoint(&encode_checkpoint(&p)).unwrap();
            prop_assert_eq!(bits(&back), bits(&p));
        }
    }
}
