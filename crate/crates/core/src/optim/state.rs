//! Optimizer state and its sidecar file.
//!
//! Little-endian layout: magic `FSTA`, version `u32`, step `u64`,
//! next epoch `u64`, sampling seed `u64`, lr `f64`, parameter count
//! `u64`, then the first and second moments in model parameter order.
//! Batch order for epoch `e` is a pure function of `(seed, e)`, so the
//! seed and the next epoch are the whole sampling state.

use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::TrainError;
use crate::siren::{Gradients, SirenModel};

const MAGIC: &[u8; 4] = b"FSTA";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub first: Gradients,
    pub second: Gradients,
    pub lr: f64,
    pub seed: u64,
    pub next_epoch: usize,
}

impl TrainState {
    pub fn new(model: &SirenModel, seed: u64) -> Self {
        Self {
            step: 0,
            first: Gradients::zeros_like(model),
            second: Gradients::zeros_like(model),
            lr: 0.0,
            seed,
            next_epoch: 0,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let first = self.first.flatten();
        let second = self.second.flatten();
        let mut out = Vec::with_capacity(48 + 16 * first.len());
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION).unwrap();
        out.write_u64::<LittleEndian>(self.step).unwrap();
        out.write_u64::<LittleEndian>(self.next_epoch as u64).unwrap();
        out.write_u64::<LittleEndian>(self.seed).unwrap();
        out.write_f64::<LittleEndian>(self.lr).unwrap();
        out.write_u64::<LittleEndian>(first.len() as u64).unwrap();
        for v in first.iter().chain(&second) {
            out.write_f64::<LittleEndian>(*v).unwrap();
        }
        out
    }

    /// Parse a sidecar written for `model`'s architecture.
    pub fn from_bytes(bytes: &[u8], model: &SirenModel) -> Result<Self, TrainError> {
        let bad = |m: &str| TrainError::State(m.to_string());
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(bad("not a training state file"));
        }
        let mut r = &bytes[4..];
        let short = |_| bad("truncated training state");
        let version = r.read_u32::<LittleEndian>().map_err(short)?;
        if version != VERSION {
            return Err(TrainError::State(format!("unsupported state version {version}")));
        }
        let step = r.read_u64::<LittleEndian>().map_err(short)?;
        let next_epoch = r.read_u64::<LittleEndian>().map_err(short)? as usize;
        let seed = r.read_u64::<LittleEndian>().map_err(short)?;
        let lr = r.read_f64::<LittleEndian>().map_err(short)?;
        let count = r.read_u64::<LittleEndian>().map_err(short)? as usize;
        if count != model.num_params() {
            return Err(TrainError::State(format!(
                "state holds {count} parameters, model has {}",
                model.num_params()
            )));
        }
        if r.len() != 16 * count {
            return Err(bad("truncated training state"));
        }
        let mut read = |n: usize| -> Vec<f64> { (0..n).map(|_| r.read_f64::<LittleEndian>().unwrap()).collect() };
        let first = unflatten(model, &read(count));
        let second = unflatten(model, &read(count));
        Ok(Self {
            step,
            first,
            second,
            lr,
            seed,
            next_epoch,
        })
    }
}

fn unflatten(model: &SirenModel, flat: &[f64]) -> Gradients {
    let mut g = Gradients::zeros_like(model);
    let mut it = flat.iter().copied();
    for layer in &mut g.layers {
        layer.weight.iter_mut().for_each(|w| *w = it.next().unwrap());
        layer.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
    }
    g
}

pub fn save_train_state(state: &TrainState, path: impl AsRef<Path>) -> Result<(), TrainError> {
    let path = path.as_ref();
    std::fs::write(path, state.to_bytes()).map_err(|source| TrainError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_train_state(path: impl AsRef<Path>, model: &SirenModel) -> Result<TrainState, TrainError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| TrainError::Io {
        path: path.display().to_string(),
        source,
    })?;
    TrainState::from_bytes(&bytes, model)
}
