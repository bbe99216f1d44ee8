//! Independent reference implementations used as test oracles. They
//! read model parameters but share no evaluation code with the crate.

#![allow(dead_code, clippy::needless_range_loop)]

use ofinr_core::video::Frame;
use ofinr_core::SirenModel;

/// Plain-loop forward pass with forward-mode tangents along `dirs`.
pub fn forward_tangents(model: &SirenModel, x: [f64; 3], dirs: &[[f64; 3]]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let omega = model.config().omega();
    let layers = model.layers();
    let mut h: Vec<f64> = x.to_vec();
    let mut dh: Vec<Vec<f64>> = dirs.iter().map(|d| d.to_vec()).collect();
    for (l, layer) in layers.iter().enumerate() {
        let (rows, cols) = layer.weight.dim();
        let mut z = vec![0.0; rows];
        let mut dz = vec![vec![0.0; rows]; dirs.len()];
        for r in 0..rows {
            z[r] = layer.bias[r];
            for c in 0..cols {
                z[r] += layer.weight[[r, c]] * h[c];
                for k in 0..dirs.len() {
                    dz[k][r] += layer.weight[[r, c]] * dh[k][c];
                }
            }
        }
        if l + 1 == layers.len() {
            return (z, dz);
        }
        h = z.iter().map(|v| (omega * v).sin()).collect();
        for k in 0..dirs.len() {
            dh[k] = (0..rows).map(|r| omega * (omega * z[r]).cos() * dz[k][r]).collect();
        }
    }
    unreachable!("model has at least two layers")
}

pub fn forward(model: &SirenModel, x: [f64; 3]) -> [f64; 3] {
    let (v, _) = forward_tangents(model, x, &[]);
    [v[0], v[1], v[2]]
}

pub fn obs_loss(model: &SirenModel, coords: &[[f64; 3]], targets: &[[f64; 3]]) -> f64 {
    let mut sum = 0.0;
    for (x, t) in coords.iter().zip(targets) {
        let y = forward(model, *x);
        for c in 0..3 {
            sum += (y[c] - t[c]) * (y[c] - t[c]);
        }
    }
    sum / coords.len() as f64
}

pub fn of_loss(model: &SirenModel, coords: &[[f64; 3]], flows: &[[f64; 3]]) -> f64 {
    let mut sum = 0.0;
    for (x, f) in coords.iter().zip(flows) {
        let (_, d) = forward_tangents(model, *x, &[*f]);
        for c in 0..3 {
            sum += d[0][c].abs();
        }
    }
    sum / (3 * coords.len()) as f64
}

pub fn total_loss(model: &SirenModel, coords: &[[f64; 3]], targets: &[[f64; 3]], flows: &[[f64; 3]], lambda: f64) -> f64 {
    (1.0 - lambda) * obs_loss(model, coords, targets) + lambda * of_loss(model, coords, flows)
}

/// Fourth-order central difference of a scalar function.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn psnr(a: &Frame, b: &Frame) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..a.height() {
        for x in 0..a.width() {
            let (p, q) = (a.get(x, y), b.get(x, y));
            for c in 0..3 {
                sum += (p[c] - q[c]) * (p[c] - q[c]);
                n += 1;
            }
        }
    }
    let mse = sum / n as f64;
    10.0 * (1.0 / mse).log10()
}

/// SSIM by direct 2-D weighted sums over every 11x11 window.
pub fn ssim(a: &Frame, b: &Frame) -> f64 {
    const WIN: usize = 11;
    let sigma = 1.5f64;
    let mut weights = [[0.0f64; WIN]; WIN];
    let mut total = 0.0;
    for (u, row) in weights.iter_mut().enumerate() {
        for (v, w) in row.iter_mut().enumerate() {
            let (du, dv) = (u as f64 - 5.0, v as f64 - 5.0);
            *w = (-(du * du + dv * dv) / (2.0 * sigma * sigma)).exp();
            total += *w;
        }
    }
    let lum = |f: &Frame, x: usize, y: usize| {
        let p = f.get(x, y);
        0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
    };
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    let mut count = 0;
    for y0 in 0..=a.height() - WIN {
        for x0 in 0..=a.width() - WIN {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for u in 0..WIN {
                for v in 0..WIN {
                    let w = weights[u][v] / total;
                    let p = lum(a, x0 + v, y0 + u);
                    let q = lum(b, x0 + v, y0 + u);
                    mx += w * p;
                    my += w * q;
                    sxx += w * p * p;
                    syy += w * q * q;
                    sxy += w * p * q;
                }
            }
            let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
            acc += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    acc / count as f64
}
