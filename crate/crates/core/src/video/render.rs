//! Evaluate a fitted network on the full pixel grid at chosen times.

use super::{from_signed_clamped, Dims, Frame, VideoError, VideoTensor};
use crate::siren::SirenModel;

/// Frames at continuous frame-index times (e.g. `2.5` halfway between
/// frames 2 and 3), mapped back to [0, 1] and clamped.
pub fn render_times(model: &SirenModel, times: &[f64], dims: Dims) -> Result<Vec<Frame>, VideoError> {
    let per_frame = dims.width * dims.height;
    let mut coords = Vec::with_capacity(per_frame * times.len());
    for &t in times {
        for y in 0..dims.height {
            for x in 0..dims.width {
                coords.push(dims.coord(x, y, t));
            }
        }
    }
    let values = model.forward(&coords)?;
    Ok(values
        .chunks(per_frame.max(1))
        .map(|chunk| Frame::new(dims.width, dims.height, chunk.iter().map(|v| v.map(from_signed_clamped)).collect()))
        .collect())
}

pub fn render_frames(model: &SirenModel, times: &[f64], dims: Dims) -> Result<VideoTensor, VideoError> {
    VideoTensor::new(render_times(model, times, dims)?)
}
