//! Adam with a cosine learning-rate schedule, and the epoch loop that
//! minimizes the weighted observation + flow loss.

mod state;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objective::LossError;
use crate::siren::{Gradients, SirenModel};

pub use state::{load_train_state, save_train_state, TrainState};
pub use train::{
    fit, resume_fit, write_training_log, EpochLog, FitOptions, FitOutcome, CHECKPOINT_MODEL, CHECKPOINT_STATE,
    TRAINING_LOG_HEADER,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("step {step} outside schedule of {total} steps")]
    ScheduleRange { step: u64, total: u64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient in layer {layer}; step skipped")]
    NonFiniteGradient { layer: usize },
    #[error("gradient shapes do not match the model")]
    GradientShape,
    #[error("non-finite loss at epoch {epoch} step {step}{}", match .checkpoint { Some(p) => format!("; last good checkpoint at {p}"), None => String::new() })]
    NumericalAbort {
        epoch: usize,
        step: u64,
        checkpoint: Option<String>,
    },
    #[error("state file: {0}")]
    State(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Checkpoint(#[from] crate::siren::CheckpointError),
    #[error(transparent)]
    Video(#[from] crate::video::VideoError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

/// `max_lr * (1 + cos(pi * step / total_steps)) / 2`; no warmup.
pub fn cosine_lr(step: u64, total_steps: u64, max_lr: f64) -> Result<f64, TrainError> {
    if total_steps == 0 || step > total_steps {
        return Err(TrainError::ScheduleRange { step, total: total_steps });
    }
    let frac = step as f64 / total_steps as f64;
    Ok(max_lr * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub max_lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) {
            return bad(format!("max_lr must be > 0, got {}", self.max_lr));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return bad(format!("bad adam settings {a:?}"));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update. A non-finite gradient aborts the step
/// with the model and state untouched.
pub fn adam_step(
    model: &mut SirenModel,
    grads: &Gradients,
    state: &mut TrainState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<(), TrainError> {
    if !grads.shapes_match(model) || !state.first.shapes_match(model) {
        return Err(TrainError::GradientShape);
    }
    if let Some(layer) = grads.first_non_finite_layer() {
        return Err(TrainError::NonFiniteGradient { layer });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    };
    for (l, layer) in model.layers_mut().iter_mut().enumerate() {
        let g = &grads.layers[l];
        let (m, v) = (&mut state.first.layers[l], &mut state.second.layers[l]);
        ndarray::Zip::from(&mut layer.weight)
            .and(&g.weight)
            .and(&mut m.weight)
            .and(&mut v.weight)
            .for_each(|p, &g, m, v| update(p, g, m, v));
        ndarray::Zip::from(&mut layer.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(|p, &g, m, v| update(p, g, m, v));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::siren::{init_siren, Layer, SirenConfig};

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_lr(0, 100, 3e-4).unwrap(), 3e-4);
        assert_eq!(cosine_lr(100, 100, 3e-4).unwrap(), 0.0);
        assert!((cosine_lr(50, 100, 3e-4).unwrap() - 1.5e-4).abs() < 1e-18);
        assert!(cosine_lr(101, 100, 1.0).is_err());
        assert!(cosine_lr(0, 0, 1.0).is_err());
    }

    #[test]
    fn schedule_is_non_increasing() {
        let lrs: Vec<f64> = (0..=997).map(|s| cosine_lr(s, 997, 1.0).unwrap()).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    fn model() -> SirenModel {
        init_siren(SirenConfig::new(2, 2, 30.0).unwrap(), 1)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut m = model();
        let before = m.clone();
        let mut st = TrainState::new(&m, 0);
        let g = Gradients::zeros_like(&m);
        adam_step(&mut m, &g, &mut st, 1e-2, &AdamConfig::default()).unwrap();
        assert_eq!(m, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // hand-executed recurrence: m = 0.1 g, v = 0.001 g^2, m_hat = g, v_hat = g^2
        let mut m = model();
        let before = m.flat_params();
        let mut g = Gradients::zeros_like(&m);
        g.layers[0].weight[[0, 0]] = 1.0;
        let mut st = TrainState::new(&m, 0);
        let lr = 1e-3;
        adam_step(&mut m, &g, &mut st, lr, &AdamConfig::default()).unwrap();
        let after = m.flat_params();
        let expected = before[0] - lr * 1.0 / (1.0 + 1e-8);
        assert!((after[0] - expected).abs() < 1e-18);
        assert!((after[0] - (before[0] - lr)).abs() < 1e-10);
        assert_eq!(&after[1..], &before[1..]);
    }

    #[test]
    fn non_finite_gradient_aborts_cleanly() {
        let mut m = model();
        let before = m.clone();
        let mut g = Gradients::zeros_like(&m);
        g.layers[1].bias[0] = f64::NAN;
        let mut st = TrainState::new(&m, 0);
        let err = adam_step(&mut m, &g, &mut st, 1e-3, &AdamConfig::default()).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteGradient { layer: 1 }));
        assert_eq!(m, before);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let mut a = model();
        let mut b = model();
        let mut g = Gradients::zeros_like(&a);
        g.layers[0].weight.fill(0.3);
        g.layers[1] = Layer {
            weight: g.layers[1].weight.mapv(|_| -2.0),
            bias: g.layers[1].bias.mapv(|_| 0.5),
        };
        let (mut sa, mut sb) = (TrainState::new(&a, 0), TrainState::new(&b, 0));
        for _ in 0..3 {
            adam_step(&mut a, &g, &mut sa, 1e-3, &AdamConfig::default()).unwrap();
            adam_step(&mut b, &g, &mut sb, 1e-3, &AdamConfig::default()).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig {
            max_lr: 1e-4,
            epochs: 1,
            batch_size: 1,
            lambda: 0.12,
            seed: 0,
            precision: Precision::F64,
            adam: AdamConfig::default(),
        };
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { max_lr: 0.0, ..ok }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..ok }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..ok }.validate().is_err());
        assert!(TrainConfig { lambda: 1.5, ..ok }.validate().is_err());
    }
}
