//! Model checkpoint files.
//!
//! Little-endian layout: magic `FSIR`, version `u32`, depth `u32`,
//! width `u32`, omega `f64`, seed `u64`, then every layer's weight
//! (row-major) followed by its bias, all `f64`.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use thiserror::Error;

use super::{Layer, SirenConfig, SirenModel};

const MAGIC: &[u8; 4] = b"FSIR";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model file (bad magic bytes)")]
    NotModelFile,
    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model file truncated: need {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("model shape mismatch: file has depth {found_depth} width {found_width}, expected depth {expected_depth} width {expected_width}")]
    ShapeMismatch {
        expected_depth: usize,
        expected_width: usize,
        found_depth: usize,
        found_width: usize,
    },
    #[error("model file is corrupt: {0}")]
    Corrupt(String),
}

pub fn model_to_bytes(model: &SirenModel) -> Vec<u8> {
    let cfg = model.config();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * model.num_params());
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(VERSION).unwrap();
    out.write_u32::<LittleEndian>(cfg.depth() as u32).unwrap();
    out.write_u32::<LittleEndian>(cfg.width() as u32).unwrap();
    out.write_f64::<LittleEndian>(cfg.omega()).unwrap();
    out.write_u64::<LittleEndian>(model.seed()).unwrap();
    for p in model.flat_params() {
        out.write_f64::<LittleEndian>(p).unwrap();
    }
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<SirenModel, CheckpointError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::NotModelFile);
    }
    if bytes.len() < HEADER_LEN {
        return Err(CheckpointError::Truncated {
            needed: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let mut cur = Cursor::new(&bytes[4..]);
    let version = cur.read_u32::<LittleEndian>().unwrap();
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let depth = cur.read_u32::<LittleEndian>().unwrap() as usize;
    let width = cur.read_u32::<LittleEndian>().unwrap() as usize;
    let omega = cur.read_f64::<LittleEndian>().unwrap();
    let seed = cur.read_u64::<LittleEndian>().unwrap();
    let config = SirenConfig::new(depth, width, omega).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;

    let needed = HEADER_LEN + 8 * config.num_params();
    if bytes.len() < needed {
        return Err(CheckpointError::Truncated {
            needed,
            found: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(CheckpointError::Corrupt(format!(
            "{} trailing bytes after parameters",
            bytes.len() - needed
        )));
    }
    let mut read = |n: usize| -> Vec<f64> {
        (0..n).map(|_| cur.read_f64::<LittleEndian>().unwrap()).collect()
    };
    let layers = config
        .layer_shapes()
        .into_iter()
        .map(|(o, i)| Layer {
            weight: Array2::from_shape_vec((o, i), read(o * i)).unwrap(),
            bias: Array1::from_vec(read(o)),
        })
        .collect();
    debug_assert_eq!(cur.read(&mut [0u8; 1]).unwrap(), 0);
    let model = SirenModel::from_layers(config, seed, layers).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    if !model.all_finite() {
        return Err(CheckpointError::Corrupt("non-finite parameter".into()));
    }
    Ok(model)
}

pub fn save_model(model: &SirenModel, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    std::fs::write(path, model_to_bytes(model)).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SirenModel, CheckpointError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    model_from_bytes(&bytes)
}

/// Load and require a specific depth and width.
pub fn load_model_expecting(path: impl AsRef<Path>, expected: &SirenConfig) -> Result<SirenModel, CheckpointError> {
    let model = load_model(path)?;
    let found = model.config();
    if found.depth() != expected.depth() || found.width() != expected.width() {
        return Err(CheckpointError::ShapeMismatch {
            expected_depth: expected.depth(),
            expected_width: expected.width(),
            found_depth: found.depth(),
            found_width: found.width(),
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::siren::init_siren;

    fn model() -> SirenModel {
        init_siren(SirenConfig::new(3, 6, 30.0).unwrap(), 11)
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fsir");
        let m = model();
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.seed(), 11);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = model_to_bytes(&model());
        bytes[0] = b'X';
        assert!(matches!(model_from_bytes(&bytes), Err(CheckpointError::NotModelFile)));
        assert!(model_from_bytes(&bytes).unwrap_err().to_string().contains("not a model file"));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = model_to_bytes(&model());
        bytes[4] = 9;
        assert!(matches!(
            model_from_bytes(&bytes),
            Err(CheckpointError::VersionMismatch { found: 9, expected: 1 })
        ));
    }

    #[test]
    fn truncated() {
        let bytes = model_to_bytes(&model());
        assert!(matches!(
            model_from_bytes(&bytes[..bytes.len() - 3]),
            Err(CheckpointError::Truncated { .. })
        ));
        assert!(matches!(model_from_bytes(&bytes[..10]), Err(CheckpointError::Truncated { .. })));
    }

    #[test]
    fn shape_mismatch_names_both() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d6.fsir");
        save_model(&init_siren(SirenConfig::new(6, 4, 25.0).unwrap(), 0), &path).unwrap();
        let err = load_model_expecting(&path, &SirenConfig::new(9, 4, 25.0).unwrap()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("depth 6") && msg.contains("depth 9"), "{msg}");
    }

    #[test]
    fn header_layout() {
        let m = model();
        let bytes = model_to_bytes(&m);
        assert_eq!(&bytes[..4], b"FSIR");
        assert_eq!(bytes.len(), HEADER_LEN + 8 * m.num_params());
        assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), 30.0);
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 11);
    }
}
