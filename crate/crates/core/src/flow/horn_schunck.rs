//! Horn-Schunck dense optical flow.
//!
//! Derivatives use the 2x2x2 cube averages of the original formulation
//! and the flow is refined by Jacobi iterations
//! `u = u_avg - Ix (Ix u_avg + Iy v_avg + It) / (alpha^2 + Ix^2 + Iy^2)`,
//! with the 1/6 (edge) + 1/12 (corner) neighbourhood average. Borders
//! replicate.

use super::{FlowError, FlowGrid, FlowSequence};
use crate::video::{Frame, VideoTensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HornSchunckParams {
    pub alpha: f64,
    pub iterations: usize,
}

impl Default for HornSchunckParams {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            iterations: 500,
        }
    }
}

/// Flow from `a` to `b` on Rec.601 luma.
pub fn horn_schunck(a: &Frame, b: &Frame, params: HornSchunckParams) -> Result<FlowGrid, FlowError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(FlowError::DimensionMismatch {
            expected_w: a.width(),
            expected_h: a.height(),
            found_w: b.width(),
            found_h: b.height(),
        });
    }
    if !(params.alpha > 0.0 && params.alpha.is_finite()) {
        return Err(FlowError::InvalidParameter(format!("alpha must be > 0, got {}", params.alpha)));
    }
    if params.iterations == 0 {
        return Err(FlowError::InvalidParameter("iterations must be >= 1".into()));
    }
    let (w, h) = (a.width(), a.height());
    let e1 = a.luma();
    let e2 = b.luma();
    let at = |img: &[f64], x: isize, y: isize| {
        let xx = x.clamp(0, w as isize - 1) as usize;
        let yy = y.clamp(0, h as isize - 1) as usize;
        img[yy * w + xx]
    };

    let n = w * h;
    let mut ix = vec![0.0; n];
    let mut iy = vec![0.0; n];
    let mut it = vec![0.0; n];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let mut gx = 0.0;
            let mut gy = 0.0;
            let mut gt = 0.0;
            for img in [&e1, &e2] {
                gx += at(img, x + 1, y) - at(img, x, y) + at(img, x + 1, y + 1) - at(img, x, y + 1);
                gy += at(img, x, y + 1) - at(img, x, y) + at(img, x + 1, y + 1) - at(img, x + 1, y);
            }
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                gt += at(&e2, x + dx, y + dy) - at(&e1, x + dx, y + dy);
            }
            ix[i] = gx / 4.0;
            iy[i] = gy / 4.0;
            it[i] = gt / 4.0;
        }
    }

    let alpha2 = params.alpha * params.alpha;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut nu = vec![0.0; n];
    let mut nv = vec![0.0; n];
    for _ in 0..params.iterations {
        for y in 0..h as isize {
            for x in 0..w as isize {
                let i = y as usize * w + x as usize;
                let avg = |f: &[f64]| {
                    (at(f, x - 1, y) + at(f, x + 1, y) + at(f, x, y - 1) + at(f, x, y + 1)) / 6.0
                        + (at(f, x - 1, y - 1) + at(f, x + 1, y - 1) + at(f, x - 1, y + 1) + at(f, x + 1, y + 1)) / 12.0
                };
                let (ua, va) = (avg(&u), avg(&v));
                let k = (ix[i] * ua + iy[i] * va + it[i]) / (alpha2 + ix[i] * ix[i] + iy[i] * iy[i]);
                nu[i] = ua - ix[i] * k;
                nv[i] = va - iy[i] * k;
            }
        }
        std::mem::swap(&mut u, &mut nu);
        std::mem::swap(&mut v, &mut nv);
    }
    FlowGrid::new(w, h, u.iter().zip(&v).map(|(&a, &b)| [a as f32, b as f32]).collect())
}

/// Flow for every observed frame of `video`, measured between consecutive
/// observed frames. The last observed frame takes the flow towards its
/// predecessor, negated. Grids span `video`'s observation stride.
pub fn estimate_sequence_flow(video: &VideoTensor, params: HornSchunckParams) -> Result<FlowSequence, FlowError> {
    let observed = video.observed_indices();
    if observed.len() < 2 {
        return Err(FlowError::InvalidParameter("need at least two observed frames".into()));
    }
    let stride = observed[1] - observed[0];
    let mut seq = FlowSequence::new(stride);
    for pair in observed.windows(2) {
        let g = horn_schunck(video.frame(pair[0]), video.frame(pair[1]), params)?;
        seq.grids.insert(pair[0], g);
    }
    let (last, prev) = (observed[observed.len() - 1], observed[observed.len() - 2]);
    let back = horn_schunck(video.frame(last), video.frame(prev), params)?;
    seq.grids.insert(last, back.negated());
    Ok(seq)
}
