//! Observation loss, optical-flow constraint loss and their weighted sum.
//!
//! * observation: mean over samples of `|f(x) - target|^2`
//! * flow: mean over samples and RGB channels of `|D f . F|`, where
//!   `F = (dx/dt, dy/dt, 1)` is the normalized flow at the sample
//! * total: `(1 - lambda) * observation + lambda * flow`
//!
//! `D f . F` is the derivative of the network along `F`, so it is computed
//! as a single forward tangent rather than a full Jacobian.

use thiserror::Error;

use crate::par;
use crate::siren::{backward, propagate, to_matrix, Gradients, JacobianResult, ModelError, SirenModel};

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("lambda must lie in [0, 1], got {0}")]
    InvalidLambda(f64),
    #[error("batch has {coords} coords but {other} {what}")]
    LengthMismatch {
        what: &'static str,
        coords: usize,
        other: usize,
    },
    #[error("flow vector at index {index} has time component {found}, expected 1")]
    FlowTimeComponent { index: usize, found: f64 },
    #[error("batch has no targets")]
    MissingTargets,
    #[error("batch has no flows")]
    MissingFlows,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    lambda: f64,
}

impl LossConfig {
    pub fn new(lambda: f64) -> Result<Self, LossError> {
        if (0.0..=1.0).contains(&lambda) {
            Ok(Self { lambda })
        } else {
            Err(LossError::InvalidLambda(lambda))
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Normalized coordinates with optional targets (RGB scaled to [-1, 1])
/// and normalized flow vectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleBatch {
    coords: Vec<[f64; 3]>,
    targets: Option<Vec<[f64; 3]>>,
    flows: Option<Vec<[f64; 3]>>,
}

impl SampleBatch {
    pub fn new(
        coords: Vec<[f64; 3]>,
        targets: Option<Vec<[f64; 3]>>,
        flows: Option<Vec<[f64; 3]>>,
    ) -> Result<Self, LossError> {
        let n = coords.len();
        if let Some(t) = &targets {
            if t.len() != n {
                return Err(LossError::LengthMismatch {
                    what: "targets",
                    coords: n,
                    other: t.len(),
                });
            }
        }
        if let Some(f) = &flows {
            if f.len() != n {
                return Err(LossError::LengthMismatch {
                    what: "flows",
                    coords: n,
                    other: f.len(),
                });
            }
            if let Some(index) = f.iter().position(|v| v[2] != 1.0) {
                return Err(LossError::FlowTimeComponent {
                    index,
                    found: f[index][2],
                });
            }
        }
        Ok(Self { coords, targets, flows })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn targets(&self) -> Option<&[[f64; 3]]> {
        self.targets.as_deref()
    }

    pub fn flows(&self) -> Option<&[[f64; 3]]> {
        self.flows.as_deref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub obs_loss: f64,
    pub of_loss: f64,
    pub total: f64,
    pub sample_count: usize,
}

impl LossReport {
    fn combine(obs_loss: f64, of_loss: f64, lambda: f64, sample_count: usize) -> Self {
        Self {
            obs_loss,
            of_loss,
            total: (1.0 - lambda) * obs_loss + lambda * of_loss,
            sample_count,
        }
    }

    /// Zero loss over zero samples; callers treat `sample_count == 0` as
    /// the warning flag.
    pub fn empty() -> Self {
        Self {
            obs_loss: 0.0,
            of_loss: 0.0,
            total: 0.0,
            sample_count: 0,
        }
    }

    /// CSV row `epoch,obs_loss,of_loss,total,lambda`.
    pub fn csv_row(&self, epoch: usize, lambda: f64) -> String {
        format!("{epoch},{},{},{},{lambda}", self.obs_loss, self.of_loss, self.total)
    }
}

pub const LOSS_CSV_HEADER: &str = "epoch,obs_loss,of_loss,total,lambda";

/// Per-channel `D f . F` for one sample.
pub fn flow_residual(jac: &JacobianResult, flow: [f64; 3]) -> [f64; 3] {
    jac.directional(flow)
}

/// Flow loss from already computed Jacobians.
pub fn flow_constraint_from_jacobians(jacs: &[JacobianResult], flows: &[[f64; 3]]) -> f64 {
    assert_eq!(jacs.len(), flows.len());
    if jacs.is_empty() {
        return 0.0;
    }
    let sum: f64 = jacs
        .iter()
        .zip(flows)
        .map(|(j, &f)| flow_residual(j, f).iter().map(|r| r.abs()).sum::<f64>())
        .sum();
    sum / (3 * jacs.len()) as f64
}

pub fn observation_loss(model: &SirenModel, batch: &SampleBatch) -> Result<f64, LossError> {
    let targets = batch.targets().ok_or(LossError::MissingTargets)?;
    if batch.is_empty() {
        log::warn!("observation loss over an empty batch");
        return Ok(0.0);
    }
    let pred = model.forward(batch.coords())?;
    let sum: f64 = pred.iter().zip(targets).map(|(p, t)| sq_dist(p, t)).sum();
    Ok(sum / batch.len() as f64)
}

pub fn flow_constraint_loss(model: &SirenModel, batch: &SampleBatch) -> Result<f64, LossError> {
    let flows = batch.flows().ok_or(LossError::MissingFlows)?;
    if batch.is_empty() {
        log::warn!("flow loss over an empty batch");
        return Ok(0.0);
    }
    let (_, residuals) = model.directional(batch.coords(), flows)?;
    let sum: f64 = residuals.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).sum();
    Ok(sum / (3 * batch.len()) as f64)
}

pub fn total_loss(model: &SirenModel, batch: &SampleBatch, cfg: &LossConfig) -> Result<LossReport, LossError> {
    let (report, _) = evaluate(model, batch, cfg, false)?;
    Ok(report)
}

/// Loss report and dL/dtheta of the weighted total, including the path
/// through the input derivatives.
pub fn total_loss_with_gradients(
    model: &SirenModel,
    batch: &SampleBatch,
    cfg: &LossConfig,
) -> Result<(LossReport, Gradients), LossError> {
    let (report, grads) = evaluate(model, batch, cfg, true)?;
    Ok((report, grads.expect("gradients requested")))
}

struct ChunkResult {
    obs_sum: f64,
    of_sum: f64,
    grads: Option<Gradients>,
}

fn evaluate(
    model: &SirenModel,
    batch: &SampleBatch,
    cfg: &LossConfig,
    with_grads: bool,
) -> Result<(LossReport, Option<Gradients>), LossError> {
    let targets = batch.targets().ok_or(LossError::MissingTargets)?;
    let flows = batch.flows().ok_or(LossError::MissingFlows)?;
    let n = batch.len();
    if n == 0 {
        log::warn!("loss over an empty batch");
        let grads = with_grads.then(|| Gradients::zeros_like(model));
        return Ok((LossReport::empty(), grads));
    }
    if let Some(index) = batch.coords().iter().position(|c| !c.iter().all(|v| v.is_finite())) {
        return Err(ModelError::NonFiniteInput { index }.into());
    }
    let lambda = cfg.lambda();
    let obs_scale = (1.0 - lambda) * 2.0 / n as f64;
    let of_scale = lambda / (3 * n) as f64;

    let idx: Vec<usize> = (0..n).collect();
    let parts = par::map_chunks(&idx, par::CHUNK, |chunk| {
        let (lo, hi) = (chunk[0], chunk[chunk.len() - 1] + 1);
        let trace = propagate(
            model,
            to_matrix(&batch.coords()[lo..hi]),
            vec![to_matrix(&flows[lo..hi])],
            with_grads,
        );
        let out = &trace.output;
        let jvp = &trace.tangent_outputs[0];
        let mut obs_sum = 0.0;
        let mut of_sum = 0.0;
        let mut value_seed = ndarray::Array2::zeros((hi - lo, 3));
        let mut tangent_seed = ndarray::Array2::zeros((hi - lo, 3));
        for i in 0..hi - lo {
            let t = targets[lo + i];
            let mut sq = 0.0;
            let mut abs = 0.0;
            for c in 0..3 {
                let d = out[[i, c]] - t[c];
                sq += d * d;
                let r = jvp[[i, c]];
                abs += r.abs();
                value_seed[[i, c]] = obs_scale * d;
                // subgradient of |r| at 0 is 0
                tangent_seed[[i, c]] = of_scale * sign(r);
            }
            obs_sum += sq;
            of_sum += abs;
        }
        let grads = with_grads.then(|| {
            let mut g = Gradients::zeros_like(model);
            let tseed = if lambda > 0.0 { vec![tangent_seed] } else { Vec::new() };
            backward(model, &trace, value_seed, tseed, &mut g);
            g
        });
        ChunkResult { obs_sum, of_sum, grads }
    });

    let mut obs_sum = 0.0;
    let mut of_sum = 0.0;
    for p in &parts {
        obs_sum += p.obs_sum;
        of_sum += p.of_sum;
    }
    let grads = with_grads.then(|| Gradients::sum_in_order(model, parts.into_iter().filter_map(|p| p.grads).collect()));
    let report = LossReport::combine(obs_sum / n as f64, of_sum / (3 * n) as f64, lambda, n);
    Ok((report, grads))
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|c| (a[c] - b[c]).powi(2)).sum()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
