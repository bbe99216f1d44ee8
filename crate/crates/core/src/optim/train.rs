use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{adam_step, cosine_lr, save_train_state, TrainConfig, TrainError, TrainState};
use crate::metrics::{psnr, PSNR_SENTINEL_DB};
use crate::objective::{total_loss_with_gradients, LossConfig};
use crate::siren::{save_model, SirenModel};
use crate::video::{make_batches, render_times, TrainingSet, VideoTensor};

pub const TRAINING_LOG_HEADER: [&str; 7] = ["epoch", "lr", "obs_loss", "of_loss", "total", "observed_psnr", "interp_psnr"];

/// File names used inside a checkpoint directory.
pub const CHECKPOINT_MODEL: &str = "checkpoint.model";
pub const CHECKPOINT_STATE: &str = "checkpoint.state";

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Render and score every `eval_every` epochs and after the last
    /// one; 0 disables evaluation.
    pub eval_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Write a checkpoint every this many epochs; 0 only at the end.
    pub checkpoint_every: usize,
    /// Stop once this many epochs (counted from epoch 0) are done, as if
    /// the process were interrupted there.
    pub stop_after: Option<usize>,
}

/// Sample-weighted epoch means of the losses seen during the updates,
/// plus the learning rate of the epoch's last step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub obs_loss: f64,
    pub of_loss: f64,
    pub total: f64,
    pub observed_psnr: Option<f64>,
    pub interp_psnr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: SirenModel,
    pub state: TrainState,
    pub log: Vec<EpochLog>,
    /// False when `stop_after` cut the run short.
    pub completed: bool,
}

pub fn fit(
    model: SirenModel,
    video: &VideoTensor,
    set: &TrainingSet,
    cfg: &TrainConfig,
    opts: &FitOptions,
) -> Result<FitOutcome, TrainError> {
    let state = TrainState::new(&model, cfg.seed);
    resume_fit(model, state, video, set, cfg, opts)
}

/// Continue from `state.next_epoch`. With the model and state saved at
/// an epoch boundary this reproduces the uninterrupted run exactly.
pub fn resume_fit(
    mut model: SirenModel,
    mut state: TrainState,
    video: &VideoTensor,
    set: &TrainingSet,
    cfg: &TrainConfig,
    opts: &FitOptions,
) -> Result<FitOutcome, TrainError> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(TrainError::InvalidConfig("no observed samples to fit".into()));
    }
    if state.seed != cfg.seed {
        return Err(TrainError::State(format!(
            "state was written with seed {}, config has {}",
            state.seed, cfg.seed
        )));
    }
    let loss_cfg = LossConfig::new(cfg.lambda)?;
    let steps_per_epoch = set.len().div_ceil(cfg.batch_size.min(set.len())) as u64;
    let total_steps = cfg.epochs as u64 * steps_per_epoch;
    let end = opts.stop_after.map_or(cfg.epochs, |s| s.min(cfg.epochs));
    let mut log = Vec::new();

    for epoch in state.next_epoch..end {
        let good = (model.clone(), state.clone());
        let mut rng = epoch_rng(cfg.seed, epoch);
        let batches = make_batches(set, cfg.batch_size, &mut rng);
        let (mut obs, mut of, mut total) = (0.0, 0.0, 0.0);
        for batch in &batches {
            let lr = cosine_lr(state.step, total_steps, cfg.max_lr)?;
            let (report, grads) = total_loss_with_gradients(&model, batch, &loss_cfg)?;
            let step_result = if report.total.is_finite() {
                adam_step(&mut model, &grads, &mut state, lr, &cfg.adam)
            } else {
                Err(TrainError::NumericalAbort {
                    epoch,
                    step: state.step,
                    checkpoint: None,
                })
            };
            if let Err(e) = step_result {
                log::error!("epoch {epoch}: {e}");
                let checkpoint = match &opts.checkpoint_dir {
                    Some(dir) => Some(write_checkpoint(dir, &good.0, &good.1)?.display().to_string()),
                    None => None,
                };
                return Err(TrainError::NumericalAbort {
                    epoch,
                    step: state.step,
                    checkpoint,
                });
            }
            state.lr = lr;
            let w = report.sample_count as f64;
            obs += report.obs_loss * w;
            of += report.of_loss * w;
            total += report.total * w;
        }
        state.next_epoch = epoch + 1;
        let n = set.len() as f64;
        let last = epoch + 1 == cfg.epochs;
        let evaluate = opts.eval_every > 0 && ((epoch + 1) % opts.eval_every == 0 || last);
        let (observed_psnr, interp_psnr) = if evaluate {
            evaluation_psnr(&model, video)?
        } else {
            (None, None)
        };
        let entry = EpochLog {
            epoch,
            lr: state.lr,
            obs_loss: obs / n,
            of_loss: of / n,
            total: total / n,
            observed_psnr,
            interp_psnr,
        };
        log::debug!("{entry:?}");
        log.push(entry);
        if let Some(dir) = &opts.checkpoint_dir {
            if (opts.checkpoint_every > 0 && (epoch + 1) % opts.checkpoint_every == 0) || epoch + 1 == end {
                write_checkpoint(dir, &model, &state)?;
            }
        }
    }
    Ok(FitOutcome {
        model,
        state,
        log,
        completed: end == cfg.epochs,
    })
}

/// Batch order of `epoch` depends only on the seed and the epoch number.
fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

fn write_checkpoint(dir: &Path, model: &SirenModel, state: &TrainState) -> Result<PathBuf, TrainError> {
    std::fs::create_dir_all(dir).map_err(|source| TrainError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let path = dir.join(CHECKPOINT_MODEL);
    save_model(model, &path)?;
    save_train_state(state, dir.join(CHECKPOINT_STATE))?;
    Ok(path)
}

/// Mean per-frame PSNR over observed and held-out frames.
fn evaluation_psnr(model: &SirenModel, video: &VideoTensor) -> Result<(Option<f64>, Option<f64>), TrainError> {
    let dims = video.dims();
    let score = |idx: Vec<usize>| -> Result<Option<f64>, TrainError> {
        if idx.is_empty() {
            return Ok(None);
        }
        let times: Vec<f64> = idx.iter().map(|&k| k as f64).collect();
        let rendered = render_times(model, &times, dims)?;
        let mut sum = 0.0;
        for (frame, &k) in rendered.iter().zip(&idx) {
            sum += psnr(frame, video.frame(k))?;
        }
        Ok(Some(sum / idx.len() as f64))
    };
    Ok((score(video.observed_indices())?, score(video.held_out_indices())?))
}

fn fmt_psnr(v: Option<f64>) -> String {
    match v {
        Some(p) if p.is_infinite() => format!("{PSNR_SENTINEL_DB}"),
        Some(p) => format!("{p}"),
        None => String::new(),
    }
}

/// One row per epoch; PSNR columns are empty on epochs without
/// evaluation.
pub fn write_training_log<W: Write>(out: W, log: &[EpochLog]) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAINING_LOG_HEADER)?;
    for e in log {
        w.write_record([
            e.epoch.to_string(),
            e.lr.to_string(),
            e.obs_loss.to_string(),
            e.of_loss.to_string(),
            e.total.to_string(),
            fmt_psnr(e.observed_psnr),
            fmt_psnr(e.interp_psnr),
        ])?;
    }
    w.flush().map_err(|source| TrainError::Io {
        path: "training log".into(),
        source,
    })?;
    Ok(())
}
