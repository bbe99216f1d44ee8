//! Analytic synthetic scenes: a continuous RGB pattern moved by a known
//! rigid motion. Frames are rendered by evaluating the warped pattern
//! directly, so any continuous time has exact ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Frame, VideoError, VideoTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    /// Sum of a few oriented sinusoids per channel.
    Sines,
    /// Gaussian blobs squashed through tanh.
    Blobs,
    /// Checkerboard with smoothed edges.
    Checker,
}

impl std::str::FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sines" => Ok(Pattern::Sines),
            "blobs" => Ok(Pattern::Blobs),
            "checker" | "checker-lowpass" => Ok(Pattern::Checker),
            other => Err(format!("unknown pattern '{other}' (sines|blobs|checker)")),
        }
    }
}

/// Rigid motion in pixels (or radians) per frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Motion {
    Static,
    Translate { u: f64, v: f64 },
    /// Counter-clockwise in image coordinates about the frame centre.
    Rotate { rate: f64 },
}

impl Motion {
    /// Where the pattern point shown at `p` in frame `t` sits in frame 0.
    pub fn source_position(&self, center: [f64; 2], p: [f64; 2], t: f64) -> [f64; 2] {
        match *self {
            Motion::Static => p,
            Motion::Translate { u, v } => [p[0] - u * t, p[1] - v * t],
            Motion::Rotate { rate } => rotate_about(center, p, -rate * t),
        }
    }

    /// Displacement over one frame step of the point at `p`.
    pub fn displacement(&self, center: [f64; 2], p: [f64; 2]) -> [f64; 2] {
        match *self {
            Motion::Static => [0.0, 0.0],
            Motion::Translate { u, v } => [u, v],
            Motion::Rotate { rate } => {
                let q = rotate_about(center, p, rate);
                [q[0] - p[0], q[1] - p[1]]
            }
        }
    }
}

impl std::str::FromStr for Motion {
    type Err = String;

    /// `static`, `translate:U,V` or `rotate:RATE`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let nums: Result<Vec<f64>, _> = args.split(',').filter(|a| !a.is_empty()).map(str::parse).collect();
        let nums = nums.map_err(|e| format!("bad motion numbers in '{s}': {e}"))?;
        match (kind, nums.as_slice()) {
            ("static", []) => Ok(Motion::Static),
            ("translate", [u, v]) => Ok(Motion::Translate { u: *u, v: *v }),
            ("rotate", [rate]) => Ok(Motion::Rotate { rate: *rate }),
            _ => Err(format!("bad motion '{s}' (static | translate:U,V | rotate:RATE)")),
        }
    }
}

fn rotate_about(c: [f64; 2], p: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, co) = angle.sin_cos();
    let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
    [c[0] + co * dx - s * dy, c[1] + s * dx + co * dy]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub pattern: Pattern,
    pub motion: Motion,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
}

/// Largest allowed per-frame displacement as a fraction of the width.
pub const MAX_MOTION_FRACTION: f64 = 0.25;

impl SceneSpec {
    pub fn center(&self) -> [f64; 2] {
        [(self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0]
    }

    pub fn validate(&self) -> Result<(), VideoError> {
        if self.width < 2 || self.height < 2 || self.frames < 1 {
            return Err(VideoError::InvalidScene(format!(
                "dims {}x{}x{} too small",
                self.width, self.height, self.frames
            )));
        }
        let c = self.center();
        let corner_step = self.motion.displacement(c, [0.0, 0.0]);
        let step = corner_step[0].hypot(corner_step[1]);
        if !step.is_finite() || step > MAX_MOTION_FRACTION * self.width as f64 {
            return Err(VideoError::InvalidScene(format!(
                "motion of {step:.2} px/frame exceeds {:.0}% of the width",
                MAX_MOTION_FRACTION * 100.0
            )));
        }
        Ok(())
    }

    pub fn build_pattern(&self) -> PatternField {
        PatternField::new(self.pattern, self.width, self.height, self.seed)
    }

    /// Analytic frame at continuous time `t` (in frame steps).
    pub fn render_at(&self, field: &PatternField, t: f64) -> Frame {
        let c = self.center();
        Frame::from_fn(self.width, self.height, |x, y| {
            let s = self.motion.source_position(c, [x as f64, y as f64], t);
            field.eval(s[0], s[1]).map(|v| v.clamp(0.0, 1.0))
        })
    }
}

/// Render every frame of `spec`.
pub fn synth_scene(spec: &SceneSpec) -> Result<VideoTensor, VideoError> {
    spec.validate()?;
    let field = spec.build_pattern();
    let frames = (0..spec.frames).map(|k| spec.render_at(&field, k as f64)).collect();
    VideoTensor::new(frames)
}

/// Oriented plane wave `amp * sin(kx x + ky y + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    pub amp: f64,
    pub kx: f64,
    pub ky: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub cx: f64,
    pub cy: f64,
    pub sigma: f64,
    pub color: [f64; 3],
}

/// Seeded instance of a [`Pattern`] with an analytic gradient.
#[derive(Debug, Clone, PartialEq)]
pub enum PatternField {
    Sines { waves: [Vec<Wave>; 3] },
    Blobs { blobs: Vec<Blob> },
    Checker { period: f64, phase: [f64; 2], sharpness: f64, color: [f64; 3] },
}

const WAVES_PER_CHANNEL: usize = 4;
const BLOB_COUNT: usize = 6;

impl PatternField {
    pub fn new(pattern: Pattern, width: usize, height: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tau = std::f64::consts::TAU;
        match pattern {
            Pattern::Sines => {
                let mut channel = || {
                    (0..WAVES_PER_CHANNEL)
                        .map(|_| {
                            let wavelength = rng.random_range(12.0..24.0);
                            let angle: f64 = rng.random_range(0.0..tau);
                            let k = tau / wavelength;
                            Wave {
                                amp: 0.45 / WAVES_PER_CHANNEL as f64,
                                kx: k * angle.cos(),
                                ky: k * angle.sin(),
                                phase: rng.random_range(0.0..tau),
                            }
                        })
                        .collect()
                };
                PatternField::Sines {
                    waves: [channel(), channel(), channel()],
                }
            }
            Pattern::Blobs => {
                let scale = width.min(height) as f64;
                let blobs = (0..BLOB_COUNT)
                    .map(|_| Blob {
                        cx: rng.random_range(0.0..width as f64),
                        cy: rng.random_range(0.0..height as f64),
                        sigma: rng.random_range(0.08..0.16) * scale,
                        color: [rng.random_range(0.2..1.0), rng.random_range(0.2..1.0), rng.random_range(0.2..1.0)],
                    })
                    .collect();
                PatternField::Blobs { blobs }
            }
            Pattern::Checker => PatternField::Checker {
                period: width.min(height) as f64 / 3.0,
                phase: [rng.random_range(0.0..tau), rng.random_range(0.0..tau)],
                sharpness: 2.5,
                color: [rng.random_range(0.5..1.0), rng.random_range(0.5..1.0), rng.random_range(0.5..1.0)],
            },
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> [f64; 3] {
        self.eval_with_gradient(x, y).0
    }

    /// RGB value and per-channel `(d/dx, d/dy)` in pixel units.
    pub fn eval_with_gradient(&self, x: f64, y: f64) -> ([f64; 3], [[f64; 2]; 3]) {
        let mut value = [0.0; 3];
        let mut grad = [[0.0; 2]; 3];
        match self {
            PatternField::Sines { waves } => {
                for c in 0..3 {
                    value[c] = 0.5;
                    for w in &waves[c] {
                        let arg = w.kx * x + w.ky * y + w.phase;
                        value[c] += w.amp * arg.sin();
                        let d = w.amp * arg.cos();
                        grad[c][0] += d * w.kx;
                        grad[c][1] += d * w.ky;
                    }
                }
            }
            PatternField::Blobs { blobs } => {
                let mut sum = [0.0; 3];
                let mut dsum = [[0.0; 2]; 3];
                for b in blobs {
                    let (dx, dy) = (x - b.cx, y - b.cy);
                    let s2 = b.sigma * b.sigma;
                    let g = (-(dx * dx + dy * dy) / (2.0 * s2)).exp();
                    for c in 0..3 {
                        sum[c] += b.color[c] * g;
                        dsum[c][0] += b.color[c] * g * (-dx / s2);
                        dsum[c][1] += b.color[c] * g * (-dy / s2);
                    }
                }
                for c in 0..3 {
                    let th = sum[c].tanh();
                    value[c] = 0.1 + 0.8 * th;
                    let d = 0.8 * (1.0 - th * th);
                    grad[c] = [d * dsum[c][0], d * dsum[c][1]];
                }
            }
            PatternField::Checker {
                period,
                phase,
                sharpness,
                color,
            } => {
                let k = std::f64::consts::TAU / period;
                let (sx, cx) = (k * x + phase[0]).sin_cos();
                let (sy, cy) = (k * y + phase[1]).sin_cos();
                let th = (sharpness * sx * sy).tanh();
                let d = 1.0 - th * th;
                for c in 0..3 {
                    value[c] = 0.5 + 0.4 * color[c] * th;
                    let a = 0.4 * color[c] * d * sharpness;
                    grad[c] = [a * k * cx * sy, a * k * sx * cy];
                }
            }
        }
        (value, grad)
    }
}
