//! Optical flow fields: pixel-unit grids, conversion to the normalized
//! flow vector `(dx/dt, dy/dt, 1)`, Middlebury `.flo` interchange, exact
//! flow for synthetic scenes and a classical Horn-Schunck estimator.

mod flo;
mod horn_schunck;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::video::{scene::SceneSpec, Dims, VideoTensor};

pub use flo::{read_flo, read_flo_bytes, write_flo, write_flo_bytes};
pub use horn_schunck::{estimate_sequence_flow, horn_schunck, HornSchunckParams};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid flow file magic ({0})")]
    BadMagic(f32),
    #[error("flow file truncated: need {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("flow file has non-positive dimensions {width}x{height}")]
    BadDimensions { width: i32, height: i32 },
    #[error("flow grid is {found_w}x{found_h}, expected {expected_w}x{expected_h}")]
    DimensionMismatch {
        expected_w: usize,
        expected_h: usize,
        found_w: usize,
        found_h: usize,
    },
    #[error("geometry too small for normalization: {0}")]
    Geometry(String),
    #[error("non-finite flow value at ({x}, {y})")]
    NonFinite { x: usize, y: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no flow for observed frame {0}")]
    MissingFrame(usize),
    #[error("unsupported scene: {0}")]
    UnsupportedScene(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Dense pixel flow `(u, v)` in pixels per frame step, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGrid {
    width: usize,
    height: usize,
    uv: Vec<[f32; 2]>,
}

impl FlowGrid {
    pub fn new(width: usize, height: usize, uv: Vec<[f32; 2]>) -> Result<Self, FlowError> {
        if width == 0 || height == 0 {
            return Err(FlowError::BadDimensions {
                width: width as i32,
                height: height as i32,
            });
        }
        if uv.len() != width * height {
            return Err(FlowError::InvalidParameter(format!(
                "{} vectors for a {width}x{height} grid",
                uv.len()
            )));
        }
        Ok(Self { width, height, uv })
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        Self {
            width,
            height,
            uv: vec![[u, v]; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f32; 2]) -> Self {
        let uv = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self { width, height, uv }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        self.uv[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[[f32; 2]] {
        &self.uv
    }

    pub fn negated(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            uv: self.uv.iter().map(|[u, v]| [-u, -v]).collect(),
        }
    }

    pub fn mean(&self) -> [f64; 2] {
        let n = self.uv.len() as f64;
        let (su, sv) = self.uv.iter().fold((0.0, 0.0), |(a, b), [u, v]| (a + *u as f64, b + *v as f64));
        [su / n, sv / n]
    }

    fn check_finite(&self) -> Result<(), FlowError> {
        match self.uv.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
            Some(i) => Err(FlowError::NonFinite {
                x: i % self.width,
                y: i / self.width,
            }),
            None => Ok(()),
        }
    }

    /// Bilinear resample to a new resolution; vectors are scaled by the
    /// per-axis resolution ratio.
    pub fn resize(&self, width: usize, height: usize) -> FlowGrid {
        let sx = if width > 1 { (self.width - 1) as f64 / (width - 1) as f64 } else { 0.0 };
        let sy = if height > 1 { (self.height - 1) as f64 / (height - 1) as f64 } else { 0.0 };
        let ru = width as f64 / self.width as f64;
        let rv = height as f64 / self.height as f64;
        FlowGrid::from_fn(width, height, |x, y| {
            let fx = x as f64 * sx;
            let fy = y as f64 * sy;
            let x0 = fx.floor() as usize;
            let y0 = fy.floor() as usize;
            let x1 = (x0 + 1).min(self.width - 1);
            let y1 = (y0 + 1).min(self.height - 1);
            let (ax, ay) = (fx - x0 as f64, fy - y0 as f64);
            let lerp = |c: usize| {
                let g = |xx, yy| self.get(xx, yy)[c] as f64;
                (1.0 - ay) * ((1.0 - ax) * g(x0, y0) + ax * g(x1, y0)) + ay * ((1.0 - ax) * g(x0, y1) + ax * g(x1, y1))
            };
            [(lerp(0) * ru) as f32, (lerp(1) * rv) as f32]
        })
    }
}

/// Pixel flow attached to frames of a video, keyed by source frame index.
/// Each grid spans `stride` source frames (forward motion from its frame).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSequence {
    pub stride: usize,
    pub grids: BTreeMap<usize, FlowGrid>,
}

impl FlowSequence {
    pub fn new(stride: usize) -> Self {
        Self {
            stride,
            grids: BTreeMap::new(),
        }
    }

    pub fn get(&self, frame: usize) -> Option<&FlowGrid> {
        self.grids.get(&frame)
    }
}

/// Convert pixel flow to normalized flow vectors for every pixel of one
/// frame (row-major).
///
/// Pixel columns `0..W-1` map to `[-1, 1]` and likewise rows and source
/// frames, so `u` pixels per frame becomes `u * (T-1) / (W-1)` normalized
/// x-units per normalized t-unit after dividing by `stride`.
pub fn normalize_flow(grid: &FlowGrid, dims: Dims, stride: usize) -> Result<Vec<[f64; 3]>, FlowError> {
    if dims.width < 2 || dims.height < 2 || dims.frames < 2 {
        return Err(FlowError::Geometry(format!(
            "{}x{}x{} (need at least 2 along every axis)",
            dims.width, dims.height, dims.frames
        )));
    }
    if stride == 0 {
        return Err(FlowError::InvalidParameter("stride must be >= 1".into()));
    }
    if grid.width != dims.width || grid.height != dims.height {
        return Err(FlowError::DimensionMismatch {
            expected_w: dims.width,
            expected_h: dims.height,
            found_w: grid.width,
            found_h: grid.height,
        });
    }
    grid.check_finite()?;
    let t_span = (dims.frames - 1) as f64;
    let kx = t_span / ((dims.width - 1) as f64 * stride as f64);
    let ky = t_span / ((dims.height - 1) as f64 * stride as f64);
    Ok(grid.uv.iter().map(|&[u, v]| [u as f64 * kx, v as f64 * ky, 1.0]).collect())
}

/// Exact forward flow of a synthetic scene for every frame.
pub fn synth_flow(spec: &SceneSpec) -> Result<FlowSequence, FlowError> {
    spec.validate().map_err(|e| FlowError::UnsupportedScene(e.to_string()))?;
    let mut seq = FlowSequence::new(1);
    for k in 0..spec.frames {
        let grid = FlowGrid::from_fn(spec.width, spec.height, |x, y| {
            let d = spec.motion.displacement(spec.center(), [x as f64, y as f64]);
            [d[0] as f32, d[1] as f32]
        });
        seq.grids.insert(k, grid);
    }
    Ok(seq)
}

/// Normalized flow for every pixel of each observed frame of `video`.
pub fn normalized_for_observed(video: &VideoTensor, flows: &FlowSequence) -> Result<BTreeMap<usize, Vec<[f64; 3]>>, FlowError> {
    let dims = video.dims();
    video
        .observed_indices()
        .into_iter()
        .map(|k| {
            let grid = flows.get(k).ok_or(FlowError::MissingFrame(k))?;
            Ok((k, normalize_flow(grid, dims, flows.stride)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::scene::{Motion, Pattern};

    fn dims(w: usize, h: usize, t: usize) -> Dims {
        Dims { frames: t, height: h, width: w }
    }

    #[test]
    fn static_point_maps_to_unit_time() {
        let g = FlowGrid::constant(4, 4, 0.0, 0.0);
        assert!(normalize_flow(&g, dims(4, 4, 4), 1).unwrap().iter().all(|f| *f == [0.0, 0.0, 1.0]));
    }

    #[test]
    fn symmetric_geometry_is_identity_scale() {
        let g = FlowGrid::constant(9, 9, 1.0, 0.0);
        assert_eq!(normalize_flow(&g, dims(9, 9, 9), 1).unwrap()[0], [1.0, 0.0, 1.0]);
    }

    #[test]
    fn stated_arithmetic() {
        let g = FlowGrid::constant(33, 5, 2.0, 0.0);
        assert_eq!(normalize_flow(&g, dims(33, 5, 17), 1).unwrap()[0][0], 1.0);
        // a grid spanning two source frames is halved
        assert_eq!(normalize_flow(&g, dims(33, 5, 17), 2).unwrap()[0][0], 0.5);
    }

    #[test]
    fn normalize_rejects_mismatch_and_tiny_geometry() {
        let g = FlowGrid::constant(4, 4, 0.0, 0.0);
        assert!(matches!(normalize_flow(&g, dims(5, 4, 4), 1), Err(FlowError::DimensionMismatch { .. })));
        assert!(matches!(normalize_flow(&g, dims(4, 4, 1), 1), Err(FlowError::Geometry(_))));
    }

    #[test]
    fn normalize_is_linear() {
        let a = FlowGrid::from_fn(5, 4, |x, y| [x as f32 * 0.5, -(y as f32)]);
        let b = FlowGrid::from_fn(5, 4, |x, y| [0.25, (x + y) as f32]);
        let sum = FlowGrid::from_fn(5, 4, |x, y| {
            let (p, q) = (a.get(x, y), b.get(x, y));
            [p[0] + 2.0 * q[0], p[1] + 2.0 * q[1]]
        });
        let d = dims(5, 4, 7);
        let (na, nb, ns) = (
            normalize_flow(&a, d, 1).unwrap(),
            normalize_flow(&b, d, 1).unwrap(),
            normalize_flow(&sum, d, 1).unwrap(),
        );
        for i in 0..na.len() {
            for c in 0..2 {
                assert!((ns[i][c] - (na[i][c] + 2.0 * nb[i][c])).abs() < 1e-12);
            }
        }
    }

    fn spec(motion: Motion) -> SceneSpec {
        SceneSpec {
            pattern: Pattern::Sines,
            motion,
            width: 24,
            height: 20,
            frames: 5,
            seed: 1,
        }
    }

    #[test]
    fn translation_flow_is_constant() {
        let seq = synth_flow(&spec(Motion::Translate { u: 1.5, v: -0.5 })).unwrap();
        assert_eq!(seq.grids.len(), 5);
        assert!(seq.grids.values().all(|g| g.as_slice().iter().all(|p| *p == [1.5, -0.5])));
    }

    #[test]
    fn static_flow_is_zero() {
        let seq = synth_flow(&spec(Motion::Static)).unwrap();
        assert!(seq.grids.values().all(|g| g.as_slice().iter().all(|p| *p == [0.0, 0.0])));
    }

    #[test]
    fn rotation_flow_matches_composed_coordinate_warp() {
        let rate = 0.03;
        let s = spec(Motion::Rotate { rate });
        let seq = synth_flow(&s).unwrap();
        let c = s.center();
        let g = &seq.grids[&0];
        // oracle: compose 1000 small rotations of the coordinate
        let steps = 1000;
        let (sn, cs) = (rate / steps as f64).sin_cos();
        for &(x, y) in &[(0usize, 0usize), (23, 19), (5, 12), (12, 10)] {
            let (mut px, mut py) = (x as f64 - c[0], y as f64 - c[1]);
            for _ in 0..steps {
                (px, py) = (cs * px - sn * py, sn * px + cs * py);
            }
            let (u, v) = (px + c[0] - x as f64, py + c[1] - y as f64);
            let f = g.get(x, y);
            assert!((f[0] as f64 - u).abs() < 1e-5 && (f[1] as f64 - v).abs() < 1e-5, "{x},{y}: {f:?} vs {u},{v}");
        }
    }

    #[test]
    fn analytic_brightness_constancy_in_normalized_units() {
        // v(x, y, k) = p(x - u k, y - v k); check grad V . F = 0 in normalized coordinates
        let (u, v) = (1.5f32, -0.75f32);
        let s = SceneSpec {
            motion: Motion::Translate { u: u as f64, v: v as f64 },
            ..spec(Motion::Static)
        };
        let pattern = s.build_pattern();
        let d = dims(s.width, s.height, s.frames);
        let seq = synth_flow(&s).unwrap();
        let flows = normalize_flow(&seq.grids[&2], d, 1).unwrap();
        let (sx, sy, st) = (
            (d.width - 1) as f64 / 2.0,
            (d.height - 1) as f64 / 2.0,
            (d.frames - 1) as f64 / 2.0,
        );
        let k = 2.0;
        for (i, f) in flows.iter().enumerate().step_by(7) {
            let (x, y) = ((i % d.width) as f64, (i / d.width) as f64);
            let (_, grad) = pattern.eval_with_gradient(x - u as f64 * k, y - v as f64 * k);
            for c in 0..3 {
                let dv_dx = grad[c][0] * sx;
                let dv_dy = grad[c][1] * sy;
                let dv_dt = -(u as f64 * grad[c][0] + v as f64 * grad[c][1]) * st;
                let r = dv_dx * f[0] + dv_dy * f[1] + dv_dt * f[2];
                assert!(r.abs() < 1e-10, "residual {r}");
            }
        }
    }

    #[test]
    fn resize_scales_magnitudes() {
        let g = FlowGrid::constant(8, 6, 2.0, 1.0);
        let r = g.resize(16, 3);
        assert_eq!((r.width(), r.height()), (16, 3));
        assert!(r.as_slice().iter().all(|p| *p == [4.0, 0.5]));
    }
}
