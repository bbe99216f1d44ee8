//! Middlebury `.flo` files: `f32` magic 202021.25 ("PIEH"), `i32` width,
//! `i32` height, then row-major interleaved `f32` (u, v). Little-endian.

use std::io::Cursor;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{FlowError, FlowGrid};

const MAGIC: f32 = 202021.25;

pub fn write_flo_bytes(grid: &FlowGrid) -> Result<Vec<u8>, FlowError> {
    grid.check_finite()?;
    let mut out = Vec::with_capacity(12 + 8 * grid.uv.len());
    out.write_f32::<LittleEndian>(MAGIC).unwrap();
    out.write_i32::<LittleEndian>(grid.width as i32).unwrap();
    out.write_i32::<LittleEndian>(grid.height as i32).unwrap();
    for &[u, v] in &grid.uv {
        out.write_f32::<LittleEndian>(u).unwrap();
        out.write_f32::<LittleEndian>(v).unwrap();
    }
    Ok(out)
}

pub fn read_flo_bytes(bytes: &[u8]) -> Result<FlowGrid, FlowError> {
    if bytes.len() < 12 {
        return Err(FlowError::Truncated {
            needed: 12,
            found: bytes.len(),
        });
    }
    let mut cur = Cursor::new(bytes);
    let magic = cur.read_f32::<LittleEndian>().unwrap();
    if magic != MAGIC {
        return Err(FlowError::BadMagic(magic));
    }
    let width = cur.read_i32::<LittleEndian>().unwrap();
    let height = cur.read_i32::<LittleEndian>().unwrap();
    if width <= 0 || height <= 0 {
        return Err(FlowError::BadDimensions { width, height });
    }
    let (w, h) = (width as usize, height as usize);
    let needed = 12 + 8 * w * h;
    if bytes.len() < needed {
        return Err(FlowError::Truncated {
            needed,
            found: bytes.len(),
        });
    }
    let uv = (0..w * h)
        .map(|_| {
            let u = cur.read_f32::<LittleEndian>().unwrap();
            let v = cur.read_f32::<LittleEndian>().unwrap();
            [u, v]
        })
        .collect();
    FlowGrid::new(w, h, uv)
}

pub fn write_flo(grid: &FlowGrid, path: impl AsRef<Path>) -> Result<(), FlowError> {
    let path = path.as_ref();
    std::fs::write(path, write_flo_bytes(grid)?).map_err(|source| FlowError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowGrid, FlowError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| FlowError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_flo_bytes(&bytes)
}
