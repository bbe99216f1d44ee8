//! PSNR and SSIM between frames, and per-role aggregates over a video.

use std::io::Write;

use thiserror::Error;

use crate::par;
use crate::video::{Frame, FrameRole};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("frame size mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("frame {width}x{height} is smaller than the {window}x{window} SSIM window")]
    TooSmall { width: usize, height: usize, window: usize },
    #[error("{rendered} rendered frames vs {truth} ground-truth frames")]
    CountMismatch { rendered: usize, truth: usize },
    #[error("{roles} role tags for {frames} frames")]
    RoleMismatch { roles: usize, frames: usize },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

/// PSNR written to CSV in place of infinity.
pub const PSNR_SENTINEL_DB: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const DYNAMIC_RANGE: f64 = 1.0;

fn check_dims(a: &Frame, b: &Frame) -> Result<(), MetricsError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(MetricsError::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    Ok(())
}

/// Mean squared error over all pixels and channels.
pub fn mse(a: &Frame, b: &Frame) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(p, q)| (0..3).map(|c| (p[c] - q[c]).powi(2)).sum::<f64>())
        .sum();
    Ok(sum / (3 * a.pixels().len()) as f64)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// PSNR in dB for [0, 1] images; identical frames give infinity.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64, MetricsError> {
    Ok(psnr_from_mse(mse(a, b)?))
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let mid = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - mid).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Valid-region separable filter of a `w x h` image.
fn filter_valid(img: &[f64], w: usize, h: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = taps.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(k, t)| t * img[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(k, t)| t * rows[(y + k) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// SSIM on Rec.601 luma with an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, averaged over every window fully inside the frame.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricsError::TooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let x = a.luma();
    let y = b.luma();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let (mx, ow, oh) = filter_valid(&x, w, h, &taps);
    let (my, _, _) = filter_valid(&y, w, h, &taps);
    let (exx, _, _) = filter_valid(&xx, w, h, &taps);
    let (eyy, _, _) = filter_valid(&yy, w, h, &taps);
    let (exy, _, _) = filter_valid(&xy, w, h, &taps);
    let c1 = (K1 * DYNAMIC_RANGE).powi(2);
    let c2 = (K2 * DYNAMIC_RANGE).powi(2);
    let total: f64 = (0..ow * oh)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = exx[i] - ux * ux;
            let vy = eyy[i] - uy * uy;
            let cov = exy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / (ow * oh) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramePairMetrics {
    pub psnr: f64,
    pub ssim: f64,
}

impl FramePairMetrics {
    pub fn exact_match(&self) -> bool {
        self.psnr.is_infinite()
    }
}

pub fn frame_metrics(a: &Frame, b: &Frame) -> Result<FramePairMetrics, MetricsError> {
    Ok(FramePairMetrics {
        psnr: psnr(a, b)?,
        ssim: ssim(a, b)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub index: usize,
    pub role: FrameRole,
    pub metrics: FramePairMetrics,
    pub mse: f64,
}

/// Aggregate over the frames of one role.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoleSummary {
    pub frames: usize,
    /// Mean of per-frame PSNR (the reported figure).
    pub mean_psnr: f64,
    /// PSNR of the pooled MSE.
    pub global_psnr: f64,
    pub mean_ssim: f64,
    pub all_exact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoMetrics {
    pub frames: Vec<FrameRecord>,
    pub observed: Option<RoleSummary>,
    pub held_out: Option<RoleSummary>,
}

fn summarize(records: &[&FrameRecord]) -> Option<RoleSummary> {
    if records.is_empty() {
        return None;
    }
    let n = records.len() as f64;
    Some(RoleSummary {
        frames: records.len(),
        mean_psnr: records.iter().map(|r| r.metrics.psnr).sum::<f64>() / n,
        global_psnr: psnr_from_mse(records.iter().map(|r| r.mse).sum::<f64>() / n),
        mean_ssim: records.iter().map(|r| r.metrics.ssim).sum::<f64>() / n,
        all_exact: records.iter().all(|r| r.metrics.exact_match()),
    })
}

/// Per-frame metrics with separate observed and held-out aggregates.
pub fn video_metrics(rendered: &[Frame], truth: &[Frame], roles: &[FrameRole]) -> Result<VideoMetrics, MetricsError> {
    if rendered.len() != truth.len() {
        return Err(MetricsError::CountMismatch {
            rendered: rendered.len(),
            truth: truth.len(),
        });
    }
    if roles.len() != truth.len() {
        return Err(MetricsError::RoleMismatch {
            roles: roles.len(),
            frames: truth.len(),
        });
    }
    let frames = par::map_indices(truth.len(), |i| -> Result<FrameRecord, MetricsError> {
        Ok(FrameRecord {
            index: i,
            role: roles[i],
            metrics: frame_metrics(&rendered[i], &truth[i])?,
            mse: mse(&rendered[i], &truth[i])?,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let of_role = |role| frames.iter().filter(|r| r.role == role).collect::<Vec<_>>();
    let observed = summarize(&of_role(FrameRole::Observed));
    let held_out = summarize(&of_role(FrameRole::HeldOut));
    Ok(VideoMetrics {
        frames,
        observed,
        held_out,
    })
}

fn capped(psnr: f64) -> f64 {
    psnr.min(PSNR_SENTINEL_DB)
}

/// CSV `frame_index,role,psnr,ssim,exact_match`: one row per frame, then a
/// `mean` row per role present.
pub fn write_metrics_csv<W: Write>(out: W, metrics: &VideoMetrics) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frame_index", "role", "psnr", "ssim", "exact_match"])?;
    for r in &metrics.frames {
        w.write_record([
            r.index.to_string(),
            r.role.as_str().to_string(),
            capped(r.metrics.psnr).to_string(),
            r.metrics.ssim.to_string(),
            r.metrics.exact_match().to_string(),
        ])?;
    }
    for (role, s) in [(FrameRole::Observed, metrics.observed), (FrameRole::HeldOut, metrics.held_out)] {
        if let Some(s) = s {
            w.write_record([
                "mean".to_string(),
                role.as_str().to_string(),
                capped(s.mean_psnr).to_string(),
                s.mean_ssim.to_string(),
                s.all_exact.to_string(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_frame(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels = (0..w * h).map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]).collect();
        Frame::new(w, h, pixels)
    }

    #[test]
    fn psnr_examples() {
        let a = Frame::filled(4, 4, [0.2, 0.4, 0.6]);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = Frame::filled(4, 4, [0.3, 0.5, 0.7]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let black = Frame::filled(4, 4, [0.0; 3]);
        let white = Frame::filled(4, 4, [1.0; 3]);
        assert_eq!(psnr(&black, &white).unwrap(), 0.0);
        assert!(psnr(&a, &Frame::filled(5, 4, [0.0; 3])).is_err());
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let base = noise_frame(16, 16, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let unit: Vec<[f64; 3]> = (0..256).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let mut last = f64::INFINITY;
        for s in [0.001, 0.01, 0.05, 0.1] {
            let noisy = Frame::new(16, 16, base.pixels().iter().zip(&unit).map(|(p, n)| std::array::from_fn(|c| p[c] + s * n[c])).collect());
            let v = psnr(&base, &noisy).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn ssim_self_is_one_and_symmetric() {
        let a = noise_frame(20, 16, 3);
        let b = noise_frame(20, 16, 4);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn ssim_of_inverted_image_is_low() {
        // smooth image kept away from mid-gray
        let a = Frame::from_fn(24, 24, |x, y| {
            let v = if (x / 6 + y / 6) % 2 == 0 { 0.1 } else { 0.85 };
            [v, v, v]
        });
        let inv = Frame::new(24, 24, a.pixels().iter().map(|p| p.map(|v| 1.0 - v)).collect());
        assert!(ssim(&a, &inv).unwrap() < 0.2);
    }

    #[test]
    fn ssim_rejects_small_frames() {
        let a = Frame::filled(10, 20, [0.5; 3]);
        assert!(matches!(ssim(&a, &a), Err(MetricsError::TooSmall { .. })));
    }

    #[test]
    fn taps_are_normalized_and_symmetric() {
        let t = gaussian_taps(11, 1.5);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(t[0], t[10]);
        assert!(t[5] > t[4]);
    }

    fn frames(n: usize) -> Vec<Frame> {
        (0..n).map(|k| noise_frame(12, 12, 10 + k as u64)).collect()
    }

    #[test]
    fn identical_videos_are_exact() {
        let t = frames(3);
        let roles = [FrameRole::Observed, FrameRole::HeldOut, FrameRole::Observed];
        let m = video_metrics(&t, &t, &roles).unwrap();
        assert_eq!(m.observed.unwrap().mean_psnr, f64::INFINITY);
        assert_eq!(m.held_out.unwrap().mean_ssim, 1.0);
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 + 2);
        assert!(text.lines().nth(1).unwrap().starts_with("0,observed,99,1,true"));
    }

    #[test]
    fn corrupting_a_held_out_frame_only_moves_that_aggregate() {
        let t = frames(5);
        let roles = crate::video::split_observed(5, 2).unwrap();
        let nudged: Vec<Frame> = t
            .iter()
            .map(|f| Frame::new(12, 12, f.pixels().iter().map(|p| p.map(|v| (v + 0.01).min(1.0))).collect()))
            .collect();
        let base = video_metrics(&nudged, &t, &roles).unwrap();
        let mut r = nudged.clone();
        r[3] = noise_frame(12, 12, 99);
        let m = video_metrics(&r, &t, &roles).unwrap();
        assert_eq!(m.observed, base.observed);
        assert!(m.held_out.unwrap().mean_psnr < base.held_out.unwrap().mean_psnr - 10.0);
    }

    #[test]
    fn aggregates_are_means_of_frames() {
        let t = frames(4);
        let r: Vec<_> = frames(8).split_off(4);
        let roles = [FrameRole::Observed, FrameRole::HeldOut, FrameRole::Observed, FrameRole::HeldOut];
        let m = video_metrics(&r, &t, &roles).unwrap();
        let obs: Vec<_> = m.frames.iter().filter(|f| f.role == FrameRole::Observed).collect();
        let mean = (obs[0].metrics.psnr + obs[1].metrics.psnr) / 2.0;
        assert_eq!(m.observed.unwrap().mean_psnr, mean);
        assert!(video_metrics(&r[..3], &t, &roles).is_err());
        assert!(video_metrics(&r, &t, &roles[..3]).is_err());
    }
}
