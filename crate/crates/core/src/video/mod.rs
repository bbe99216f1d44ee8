//! The discrete observation tensor, coordinate normalization, the
//! observed/held-out split, synthetic scenes, batching and rendering.

mod batch;
mod io;
mod render;
pub mod scene;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use batch::{make_batches, TrainingSet};
pub use io::{load_frames, save_frame_png, write_frames};
pub use render::{render_frames, render_times};
pub use scene::synth_scene;

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("no frames found in {0}")]
    Empty(String),
    #[error("gap at index {0}")]
    Gap(usize),
    #[error("duplicate frame index {0}")]
    DuplicateIndex(usize),
    #[error("frame {index} is {found_w}x{found_h}, expected {expected_w}x{expected_h}")]
    DimensionMismatch {
        index: usize,
        expected_w: usize,
        expected_h: usize,
        found_w: usize,
        found_h: usize,
    },
    #[error("cannot read frame {path}: {reason}")]
    Unreadable { path: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("pixel value {value} outside [0, 1] in frame {frame}")]
    OutOfRange { frame: usize, value: f64 },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("video has no frame roles")]
    MissingRoles,
    #[error(transparent)]
    Model(#[from] crate::siren::ModelError),
    #[error(transparent)]
    Flow(#[from] crate::flow::FlowError),
}

/// One RGB frame, values in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel count");
        Self { width, height, pixels }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Self {
        let pixels = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self { width, height, pixels }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Self::new(width, height, vec![rgb; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.pixels
    }

    /// Rec.601 luma.
    pub fn luma(&self) -> Vec<f64> {
        self.pixels.iter().map(|p| luma(*p)).collect()
    }
}

pub fn luma(p: [f64; 3]) -> f64 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    /// Normalized `(x, y, t)` of pixel `(x, y)` at continuous frame time `t`.
    pub fn coord(&self, x: usize, y: usize, t: f64) -> [f64; 3] {
        [
            CoordMap::new(self.width).to_normalized(x as f64),
            CoordMap::new(self.height).to_normalized(y as f64),
            CoordMap::new(self.frames).to_normalized(t),
        ]
    }
}

/// Affine map between indices `0..len-1` and `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoordMap {
    len: usize,
}

impl CoordMap {
    pub fn new(len: usize) -> Self {
        Self { len }
    }

    pub fn to_normalized(&self, index: f64) -> f64 {
        if self.len < 2 {
            return 0.0;
        }
        let span = (self.len - 1) as f64;
        (2.0 * index - span) / span
    }

    pub fn to_index(&self, x: f64) -> f64 {
        let span = self.len.saturating_sub(1) as f64;
        (x + 1.0) * span / 2.0
    }

    pub fn nearest_index(&self, x: f64) -> usize {
        self.to_index(x).round().max(0.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameRole {
    Observed,
    HeldOut,
}

impl FrameRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            FrameRole::Observed => "observed",
            FrameRole::HeldOut => "held-out",
        }
    }
}

/// Every `k`-th frame (starting at 0) observed, the rest held out.
pub fn split_observed(frames: usize, k: usize) -> Result<Vec<FrameRole>, VideoError> {
    if k < 2 {
        return Err(VideoError::InvalidSplit(format!("stride must be >= 2, got {k}")));
    }
    if frames < 3 {
        return Err(VideoError::InvalidSplit(format!("need at least 3 frames, got {frames}")));
    }
    Ok((0..frames)
        .map(|i| if i % k == 0 { FrameRole::Observed } else { FrameRole::HeldOut })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    frames: Vec<Frame>,
    roles: Option<Vec<FrameRole>>,
    pub fps: Option<f64>,
}

impl VideoTensor {
    pub fn new(frames: Vec<Frame>) -> Result<Self, VideoError> {
        let first = frames.first().ok_or_else(|| VideoError::Empty("frame list".into()))?;
        let (w, h) = (first.width, first.height);
        for (index, f) in frames.iter().enumerate() {
            if (f.width, f.height) != (w, h) {
                return Err(VideoError::DimensionMismatch {
                    index,
                    expected_w: w,
                    expected_h: h,
                    found_w: f.width,
                    found_h: f.height,
                });
            }
            if let Some(&value) = f.pixels.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(VideoError::OutOfRange { frame: index, value });
            }
        }
        Ok(Self {
            frames,
            roles: None,
            fps: None,
        })
    }

    /// Attach the every-`k` split.
    pub fn with_split(mut self, k: usize) -> Result<Self, VideoError> {
        self.roles = Some(split_observed(self.frames.len(), k)?);
        Ok(self)
    }

    pub fn with_roles(mut self, roles: Vec<FrameRole>) -> Result<Self, VideoError> {
        if roles.len() != self.frames.len() {
            return Err(VideoError::InvalidSplit(format!(
                "{} roles for {} frames",
                roles.len(),
                self.frames.len()
            )));
        }
        self.roles = Some(roles);
        Ok(self)
    }

    pub fn dims(&self) -> Dims {
        Dims {
            frames: self.frames.len(),
            height: self.frames[0].height,
            width: self.frames[0].width,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, i: usize) -> &Frame {
        &self.frames[i]
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn roles(&self) -> Option<&[FrameRole]> {
        self.roles.as_deref()
    }

    fn indices_with(&self, role: FrameRole) -> Vec<usize> {
        match &self.roles {
            Some(r) => r.iter().enumerate().filter(|(_, x)| **x == role).map(|(i, _)| i).collect(),
            None if role == FrameRole::Observed => (0..self.frames.len()).collect(),
            None => Vec::new(),
        }
    }

    /// Observed frame indices; all frames when no split is attached.
    pub fn observed_indices(&self) -> Vec<usize> {
        self.indices_with(FrameRole::Observed)
    }

    pub fn held_out_indices(&self) -> Vec<usize> {
        self.indices_with(FrameRole::HeldOut)
    }
}

/// Map a [0, 1] intensity to the [-1, 1] training range.
pub fn to_signed(v: f64) -> f64 {
    2.0 * v - 1.0
}

/// Inverse of [`to_signed`], clamped to [0, 1].
pub fn from_signed_clamped(v: f64) -> f64 {
    ((v + 1.0) / 2.0).clamp(0.0, 1.0)
}
