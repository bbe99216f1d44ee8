//! The subcommands, callable without going through argument parsing.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use ofinr_core::flow::{estimate_sequence_flow, read_flo, synth_flow, write_flo, FlowSequence};
use ofinr_core::metrics::{video_metrics, write_metrics_csv, VideoMetrics, PSNR_SENTINEL_DB};
use ofinr_core::optim::{
    fit, load_train_state, resume_fit, write_training_log, EpochLog, FitOptions, CHECKPOINT_MODEL, CHECKPOINT_STATE,
};
use ofinr_core::siren::{load_model_expecting, save_model};
use ofinr_core::video::scene::{Motion, Pattern, SceneSpec};
use ofinr_core::video::{
    load_frames, render_times, split_observed, synth_scene, write_frames, Dims, Frame, FrameRole, TrainingSet,
    VideoTensor,
};
use ofinr_core::{init_siren, SirenModel};
use serde::{Deserialize, Serialize};

use crate::config::{DataSection, ExperimentConfig, FlowSource, HornSchunckSection, Preset, ResolvedConfig};
use crate::error::CliError;

pub const FRAMES_DIR: &str = "frames";
pub const FLOW_DIR: &str = "flow";
pub const SCENE_FILE: &str = "scene.toml";
pub const FLOW_META_FILE: &str = "flow.toml";
pub const MODEL_FILE: &str = "model.fsir";
pub const TRAINING_LOG_FILE: &str = "training.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";

/// Sidecar of a `.flo` directory: how many source frames each grid spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowMeta {
    stride: usize,
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Trailing decimal number of a file stem.
fn stem_number(path: &Path) -> Option<usize> {
    let stem = path.file_stem()?.to_str()?;
    let start = stem.len() - stem.chars().rev().take_while(|c| c.is_ascii_digit()).count();
    stem[start..].parse().ok()
}

fn flo_files(dir: &Path) -> Result<Vec<(usize, PathBuf)>, CliError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("flo")) {
            if let Some(n) = stem_number(&path) {
                out.push((n, path));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn has_flo_files(dir: &Path) -> bool {
    dir.is_dir() && flo_files(dir).is_ok_and(|f| !f.is_empty())
}

/// Read a directory of numbered `.flo` grids, resampling any whose size
/// differs from the video.
pub fn load_flow_dir(dir: &Path, dims: Dims) -> Result<FlowSequence, CliError> {
    let meta_path = dir.join(FLOW_META_FILE);
    let stride = if meta_path.exists() {
        let text = std::fs::read_to_string(&meta_path).map_err(|e| CliError::io(&meta_path, e))?;
        let meta: FlowMeta = toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", meta_path.display())))?;
        meta.stride
    } else {
        1
    };
    if stride == 0 {
        return Err(CliError::usage(format!("{}: stride must be >= 1", meta_path.display())));
    }
    let mut seq = FlowSequence::new(stride);
    for (k, path) in flo_files(dir)? {
        let mut grid = read_flo(&path)?;
        if (grid.width(), grid.height()) != (dims.width, dims.height) {
            log::warn!(
                "{}: {}x{} flow resampled to {}x{}",
                path.display(),
                grid.width(),
                grid.height(),
                dims.width,
                dims.height
            );
            grid = grid.resize(dims.width, dims.height);
        }
        seq.grids.insert(k, grid);
    }
    if seq.grids.is_empty() {
        return Err(CliError::Io(format!("no .flo files in {}", dir.display())));
    }
    Ok(seq)
}

pub fn write_flow_dir(seq: &FlowSequence, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    create_dir(dir)?;
    let mut paths = Vec::with_capacity(seq.grids.len());
    for (k, grid) in &seq.grids {
        let path = dir.join(format!("flow_{k:04}.flo"));
        write_flo(grid, &path)?;
        paths.push(path);
    }
    let meta = toml::to_string(&FlowMeta { stride: seq.stride }).expect("flow meta serializes");
    write_text(&dir.join(FLOW_META_FILE), &meta)?;
    Ok(paths)
}

/// `dir/frames` when present, else `dir` itself.
fn frames_dir(dir: &Path) -> PathBuf {
    let sub = dir.join(FRAMES_DIR);
    if sub.is_dir() {
        sub
    } else {
        dir.to_path_buf()
    }
}

pub fn read_scene(path: &Path) -> Result<SceneSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub pattern: Pattern,
    pub motion: Motion,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    pub out: PathBuf,
}

/// Write numbered PNG frames, one exact `.flo` per frame and the scene
/// description.
pub fn cmd_synth(args: &SynthArgs) -> Result<SceneSpec, CliError> {
    let spec = SceneSpec {
        pattern: args.pattern,
        motion: args.motion,
        width: args.width,
        height: args.height,
        frames: args.frames,
        seed: args.seed,
    };
    spec.validate()?;
    let video = synth_scene(&spec)?;
    write_frames(video.frames(), args.out.join(FRAMES_DIR), "frame")?;
    write_flow_dir(&synth_flow(&spec)?, &args.out.join(FLOW_DIR))?;
    let text = toml::to_string(&spec).expect("scene serializes");
    write_text(&args.out.join(SCENE_FILE), &text)?;
    Ok(spec)
}

#[derive(Debug, Clone)]
pub struct FlowArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    pub observe_every: usize,
    pub horn_schunck: HornSchunckSection,
    /// Validate and copy these `.flo` files instead of estimating.
    pub from: Option<PathBuf>,
}

pub fn cmd_flow(args: &FlowArgs) -> Result<FlowSequence, CliError> {
    let video = load_frames(frames_dir(&args.data))?.with_split(args.observe_every)?;
    let seq = match &args.from {
        Some(dir) => load_flow_dir(dir, video.dims())?,
        None => estimate_sequence_flow(&video, args.horn_schunck.into())?,
    };
    write_flow_dir(&seq, &args.out)?;
    Ok(seq)
}

pub struct Prepared {
    pub video: VideoTensor,
    pub flows: FlowSequence,
    pub source: FlowSource,
}

/// Load frames, attach the split and obtain flow following the source
/// precedence: `.flo` files, then the scene's exact flow, then
/// Horn-Schunck.
pub fn prepare_data(data: &DataSection) -> Result<Prepared, CliError> {
    let video = load_frames(frames_dir(&data.dir))?.with_split(data.observe_every)?;
    let flow_dir = data.dir.join(FLOW_DIR);
    let scene_path = data.dir.join(SCENE_FILE);
    let source = match data.flow {
        FlowSource::Auto if has_flo_files(&flow_dir) => FlowSource::File,
        FlowSource::Auto if scene_path.is_file() => FlowSource::Synth,
        FlowSource::Auto => FlowSource::HornSchunck,
        explicit => explicit,
    };
    let flows = match source {
        FlowSource::File => load_flow_dir(&flow_dir, video.dims())?,
        FlowSource::Synth => {
            let spec = read_scene(&scene_path)?;
            let d = video.dims();
            if (spec.width, spec.height, spec.frames) != (d.width, d.height, d.frames) {
                return Err(CliError::usage(format!(
                    "scene is {}x{}x{} but frames are {}x{}x{}",
                    spec.width, spec.height, spec.frames, d.width, d.height, d.frames
                )));
            }
            synth_flow(&spec)?
        }
        FlowSource::HornSchunck | FlowSource::Auto => estimate_sequence_flow(&video, data.horn_schunck.into())?,
    };
    log::info!("flow source: {source:?}");
    Ok(Prepared { video, flows, source })
}

#[derive(Debug, Clone, Default)]
pub struct FitOverrides {
    pub preset: Option<Preset>,
    pub lambda: Option<f64>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Stop after this many epochs, leaving a resumable checkpoint.
    pub stop_after: Option<usize>,
}

impl FitOverrides {
    pub fn apply(&self, cfg: &ExperimentConfig) -> Result<ResolvedConfig, CliError> {
        let mut cfg = cfg.clone();
        if let Some(p) = self.preset {
            cfg.preset = p;
        }
        let mut r = cfg.resolve()?;
        if let Some(l) = self.lambda {
            r.train.lambda = l;
        }
        if let Some(e) = self.epochs {
            r.train.epochs = e;
        }
        if let Some(s) = self.seed {
            r.train.seed = s;
        }
        if let Some(o) = &self.out {
            r.output.dir = o.clone();
        }
        r.validate()?;
        Ok(r)
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub config: ResolvedConfig,
    pub model_path: PathBuf,
    pub log_path: PathBuf,
    pub last: Option<EpochLog>,
    pub completed: bool,
}

/// Fit a model to the configured data and write the checkpoint, the
/// training log and the resolved config into the output directory.
pub fn cmd_fit(cfg: &ExperimentConfig, overrides: &FitOverrides, resume: bool) -> Result<FitReport, CliError> {
    let mut r = overrides.apply(cfg)?;
    let prepared = prepare_data(&r.data)?;
    r.data.flow = prepared.source;
    r.geometry = Some(prepared.video.dims());
    let out = r.output.dir.clone();
    r.write(&out)?;

    let set = TrainingSet::new(&prepared.video, &prepared.flows)?;
    let siren = r.model.siren_config()?;
    let ckpt = out.join(CHECKPOINT_DIR);
    let opts = FitOptions {
        eval_every: r.output.eval_every,
        checkpoint_dir: Some(ckpt.clone()),
        checkpoint_every: r.output.checkpoint_every,
        stop_after: overrides.stop_after,
    };
    let log_path = out.join(TRAINING_LOG_FILE);
    let (outcome, earlier_rows) = if resume {
        let model = load_model_expecting(ckpt.join(CHECKPOINT_MODEL), &siren)?;
        let state = load_train_state(ckpt.join(CHECKPOINT_STATE), &model)?;
        let rows = earlier_log_rows(&log_path, state.next_epoch)?;
        log::info!("resuming at epoch {}", state.next_epoch);
        (resume_fit(model, state, &prepared.video, &set, &r.train, &opts)?, rows)
    } else {
        let model = init_siren(siren, r.model.seed);
        (fit(model, &prepared.video, &set, &r.train, &opts)?, Vec::new())
    };

    let model_path = out.join(MODEL_FILE);
    save_model(&outcome.model, &model_path)?;
    let mut buf = Vec::new();
    write_training_log(&mut buf, &outcome.log)?;
    let mut text = String::from_utf8(buf).expect("csv is utf-8");
    if !earlier_rows.is_empty() {
        let (header, rest) = text.split_once('\n').expect("header line");
        text = format!("{header}\n{}{rest}", earlier_rows.concat());
    }
    write_text(&log_path, &text)?;
    Ok(FitReport {
        config: r,
        model_path,
        log_path,
        last: outcome.log.last().copied(),
        completed: outcome.completed,
    })
}

/// Rows of an existing training log for epochs before `next_epoch`,
/// each with its trailing newline.
fn earlier_log_rows(path: &Path, next_epoch: usize) -> Result<Vec<String>, CliError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| l.split(',').next().and_then(|e| e.parse::<usize>().ok()).is_some_and(|e| e < next_epoch))
        .map(|l| format!("{l}\n"))
        .collect())
}

#[derive(Debug, Clone)]
pub struct InterpolateArgs {
    /// Output directory of a `fit` run.
    pub run: PathBuf,
    /// Model file to use instead of the run's final model.
    pub checkpoint: Option<PathBuf>,
    /// Continuous frame-index times.
    pub times: Vec<f64>,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct InterpolateReport {
    pub frames: Vec<PathBuf>,
    pub extrapolated: Vec<f64>,
}

pub fn load_run_model(run: &Path, checkpoint: Option<&Path>) -> Result<(SirenModel, Dims), CliError> {
    let r = ResolvedConfig::load(&run.join(crate::config::RESOLVED_CONFIG_FILE))?;
    let dims = r
        .geometry
        .ok_or_else(|| CliError::usage(format!("{} has no recorded geometry", run.display())))?;
    let path = checkpoint.map_or_else(|| run.join(MODEL_FILE), Path::to_path_buf);
    let model = load_model_expecting(&path, &r.model.siren_config()?)?;
    Ok((model, dims))
}

/// Render frames at arbitrary times; times outside the fitted range are
/// rendered anyway and reported.
pub fn cmd_interpolate(args: &InterpolateArgs) -> Result<InterpolateReport, CliError> {
    if args.times.is_empty() {
        return Err(CliError::usage("no times given"));
    }
    if let Some(t) = args.times.iter().find(|t| !t.is_finite()) {
        return Err(CliError::usage(format!("time {t} is not finite")));
    }
    let (model, dims) = load_run_model(&args.run, args.checkpoint.as_deref())?;
    let last = (dims.frames - 1) as f64;
    let extrapolated: Vec<f64> = args.times.iter().copied().filter(|t| *t < 0.0 || *t > last).collect();
    for t in &extrapolated {
        log::warn!("t = {t} is outside the fitted range [0, {last}]; extrapolating");
    }
    let frames = render_times(&model, &args.times, dims)?;
    let paths = write_frames(&frames, &args.out, "frame")?;
    let listing: String = args.times.iter().map(|t| format!("{t}\n")).collect();
    write_text(&args.out.join("times.txt"), &listing)?;
    Ok(InterpolateReport {
        frames: paths,
        extrapolated,
    })
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub rendered: PathBuf,
    pub truth: PathBuf,
    pub observe_every: usize,
    pub out: PathBuf,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<VideoMetrics, CliError> {
    let rendered = load_frames(frames_dir(&args.rendered))?;
    let truth = load_frames(frames_dir(&args.truth))?;
    let roles = split_observed(truth.len(), args.observe_every)?;
    let metrics = video_metrics(rendered.frames(), truth.frames(), &roles)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let file = File::create(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    write_metrics_csv(BufWriter::new(file), &metrics)?;
    Ok(metrics)
}

/// Round-trip through 8-bit storage, as PNG output and reload would.
pub fn quantize(frame: &Frame) -> Frame {
    let pixels = frame
        .pixels()
        .iter()
        .map(|p| p.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0))
        .collect();
    Frame::new(frame.width(), frame.height(), pixels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepAxis {
    Lambda,
    Omega,
    Width,
    /// Grid entries written `WIDTHxDEPTH`.
    WidthDepth,
    /// The base config with and without the flow term.
    OfOnoff,
}

impl SweepAxis {
    fn name(self) -> &'static str {
        match self {
            SweepAxis::Lambda => "lambda",
            SweepAxis::Omega => "omega",
            SweepAxis::Width => "width",
            SweepAxis::WidthDepth => "width-depth",
            SweepAxis::OfOnoff => "of-onoff",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepArgs {
    pub axis: SweepAxis,
    pub grid: Vec<String>,
    /// Run every grid value with the flow term on and off.
    pub cross_of: bool,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: String,
    pub setting: String,
    pub of: bool,
    pub lambda: f64,
    pub omega: f64,
    pub width: usize,
    pub depth: usize,
    pub role: FrameRole,
    pub mean_psnr: Option<f64>,
    pub mean_ssim: Option<f64>,
    pub error: Option<String>,
}

/// Lambda used for "flow term on" when the base config has it off.
const DEFAULT_OF_LAMBDA: f64 = 0.12;

fn sweep_settings(base: &ResolvedConfig, args: &SweepArgs) -> Vec<(String, Result<ResolvedConfig, CliError>)> {
    let parse = |v: &str| -> Result<ResolvedConfig, CliError> {
        let bad = |e: &dyn std::fmt::Display| CliError::usage(format!("bad {} value '{v}': {e}", args.axis.name()));
        let mut r = base.clone();
        match args.axis {
            SweepAxis::Lambda => r.train.lambda = v.parse().map_err(|e| bad(&e))?,
            SweepAxis::Omega => r.model.omega = v.parse().map_err(|e| bad(&e))?,
            SweepAxis::Width => r.model.width = v.parse().map_err(|e| bad(&e))?,
            SweepAxis::WidthDepth => {
                let (w, d) = v.split_once('x').ok_or_else(|| bad(&"expected WIDTHxDEPTH"))?;
                r.model.width = w.parse().map_err(|e| bad(&e))?;
                r.model.depth = d.parse().map_err(|e| bad(&e))?;
            }
            SweepAxis::OfOnoff => unreachable!("of-onoff has no grid"),
        }
        r.validate()?;
        Ok(r)
    };
    let on_lambda = if base.train.lambda > 0.0 { base.train.lambda } else { DEFAULT_OF_LAMBDA };
    let with_lambda = |r: &ResolvedConfig, l: f64| {
        let mut r = r.clone();
        r.train.lambda = l;
        r
    };
    if args.axis == SweepAxis::OfOnoff {
        return vec![
            ("on".into(), Ok(with_lambda(base, on_lambda))),
            ("off".into(), Ok(with_lambda(base, 0.0))),
        ];
    }
    let mut out = Vec::new();
    for v in &args.grid {
        let r = parse(v);
        if args.cross_of {
            let (on, off) = match &r {
                Ok(r) => (Ok(with_lambda(r, on_lambda)), Ok(with_lambda(r, 0.0))),
                Err(e) => (Err(CliError::usage(e.to_string())), Err(CliError::usage(e.to_string()))),
            };
            out.push((v.clone(), on));
            out.push((v.clone(), off));
        } else {
            out.push((v.clone(), r));
        }
    }
    out
}

/// Fit one setting in memory and score every frame after 8-bit
/// quantization, so the numbers match `fit` + `interpolate` + `eval`.
pub fn fit_and_score(r: &ResolvedConfig, prepared: &Prepared) -> Result<VideoMetrics, CliError> {
    let set = TrainingSet::new(&prepared.video, &prepared.flows)?;
    let model = init_siren(r.model.siren_config()?, r.model.seed);
    let outcome = fit(model, &prepared.video, &set, &r.train, &FitOptions::default())?;
    let dims = prepared.video.dims();
    let times: Vec<f64> = (0..dims.frames).map(|k| k as f64).collect();
    let rendered: Vec<Frame> = render_times(&outcome.model, &times, dims)?.iter().map(quantize).collect();
    let roles = prepared.video.roles().expect("split attached").to_vec();
    Ok(video_metrics(&rendered, prepared.video.frames(), &roles)?)
}

/// Run every setting in turn and write one row per (setting, role). A
/// failing setting is recorded and the sweep moves on.
pub fn cmd_sweep(cfg: &ExperimentConfig, args: &SweepArgs) -> Result<Vec<SweepRow>, CliError> {
    if args.axis != SweepAxis::OfOnoff && args.grid.is_empty() {
        return Err(CliError::usage("sweep grid is empty"));
    }
    let mut base = cfg.resolve()?;
    let prepared = prepare_data(&base.data)?;
    base.data.flow = prepared.source;
    base.geometry = Some(prepared.video.dims());
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        base.write(parent)?;
    }

    let mut rows = Vec::new();
    for (setting, r) in sweep_settings(&base, args) {
        let (r, metrics) = match r {
            Ok(r) => {
                log::info!("sweep {} = {setting} (lambda {})", args.axis.name(), r.train.lambda);
                let m = fit_and_score(&r, &prepared);
                (r, m)
            }
            Err(e) => (base.clone(), Err(e)),
        };
        for role in [FrameRole::Observed, FrameRole::HeldOut] {
            let (mean_psnr, mean_ssim, error) = match &metrics {
                Ok(m) => {
                    let s = if role == FrameRole::Observed { m.observed } else { m.held_out };
                    (s.map(|s| s.mean_psnr), s.map(|s| s.mean_ssim), None)
                }
                Err(e) => (None, None, Some(e.to_string())),
            };
            rows.push(SweepRow {
                axis: args.axis.name().into(),
                setting: setting.clone(),
                of: r.train.lambda > 0.0,
                lambda: r.train.lambda,
                omega: r.model.omega,
                width: r.model.width,
                depth: r.model.depth,
                role,
                mean_psnr,
                mean_ssim,
                error,
            });
        }
        if let Err(e) = &metrics {
            log::error!("sweep setting {setting} failed: {e}");
        }
    }
    write_sweep_csv(&args.out, &rows)?;
    Ok(rows)
}

pub const SWEEP_CSV_HEADER: [&str; 12] = [
    "axis", "setting", "of", "lambda", "omega", "width", "depth", "role", "mean_psnr", "mean_ssim", "status", "error",
];

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let io = |e: csv::Error| CliError::io(path, e);
    w.write_record(SWEEP_CSV_HEADER).map_err(io)?;
    let num = |v: Option<f64>| match v {
        Some(p) if p.is_infinite() => PSNR_SENTINEL_DB.to_string(),
        Some(p) => p.to_string(),
        None => String::new(),
    };
    for r in rows {
        w.write_record([
            r.axis.clone(),
            r.setting.clone(),
            if r.of { "on" } else { "off" }.to_string(),
            r.lambda.to_string(),
            r.omega.to_string(),
            r.width.to_string(),
            r.depth.to_string(),
            r.role.as_str().to_string(),
            num(r.mean_psnr),
            num(r.mean_ssim),
            if r.error.is_some() { "failed" } else { "ok" }.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
