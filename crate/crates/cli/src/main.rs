use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use ofinr_cli::config::{FlowSource, HornSchunckSection};
use ofinr_cli::{
    cmd_eval, cmd_fit, cmd_flow, cmd_interpolate, cmd_sweep, cmd_synth, CliError, EvalArgs, ExperimentConfig,
    FitOverrides, FlowArgs, InterpolateArgs, Preset, SweepArgs, SweepAxis, SynthArgs,
};
use ofinr_core::video::scene::{Motion, Pattern};

#[derive(Parser)]
#[command(name = "ofinr", version, about = "Fit sine networks to video with an optical-flow constraint and render in-between frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic moving-pattern clip with exact flow.
    Synth {
        #[arg(long, default_value = "sines")]
        pattern: Pattern,
        #[arg(long, default_value = "translate:1,0.5")]
        motion: Motion,
        /// WIDTHxHEIGHTxFRAMES
        #[arg(long, default_value = "48x48x16")]
        dims: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate flow with Horn-Schunck, or validate and copy .flo files.
    Flow {
        /// Dataset or frame directory.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        observe_every: usize,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        /// Directory of existing .flo files to pass through.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Fit a network to the observed frames.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        preset: Option<Preset>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        flow: Option<FlowSource>,
        /// Continue from the output directory's checkpoint.
        #[arg(long)]
        resume: bool,
        /// Stop after this many epochs, leaving a resumable checkpoint.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Render frames at continuous frame-index times, e.g. 2.5.
    Interpolate {
        /// Output directory of a fit run.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated times, or START:END:STEP.
        #[arg(long)]
        times: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score rendered frames against ground truth.
    Eval {
        #[arg(long)]
        rendered: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 2)]
        observe_every: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit once per grid value and tabulate final PSNR/SSIM per role.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values; `WIDTHxDEPTH` for width-depth.
        #[arg(long, default_value = "")]
        grid: String,
        /// Run each value with the flow term on and off.
        #[arg(long)]
        cross_of: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_dims(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split('x').collect();
    let [w, h, t] = parts.as_slice() else {
        bail!("dims must look like 48x48x16, got '{s}'");
    };
    Ok((w.parse()?, h.parse()?, t.parse()?))
}

fn parse_times(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if let [start, end, step] = parts.as_slice() {
        let (start, end, step): (f64, f64, f64) = (start.parse()?, end.parse()?, step.parse()?);
        if step.is_nan() || step <= 0.0 {
            bail!("time step must be positive");
        }
        let n = ((end - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| start + i as f64 * step).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad time '{t}'")))
        .collect()
}

fn usage(e: anyhow::Error) -> CliError {
    CliError::Usage(format!("{e:#}"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth {
            pattern,
            motion,
            dims,
            seed,
            out,
        } => {
            let (width, height, frames) = parse_dims(&dims).map_err(usage)?;
            let spec = cmd_synth(&SynthArgs {
                pattern,
                motion,
                width,
                height,
                frames,
                seed,
                out: out.clone(),
            })?;
            println!("wrote {} frames and flow to {}", spec.frames, out.display());
        }
        Command::Flow {
            data,
            out,
            observe_every,
            alpha,
            iterations,
            from,
        } => {
            let d = HornSchunckSection::default();
            let seq = cmd_flow(&FlowArgs {
                data,
                out: out.clone(),
                observe_every,
                horn_schunck: HornSchunckSection {
                    alpha: alpha.unwrap_or(d.alpha),
                    iterations: iterations.unwrap_or(d.iterations),
                },
                from,
            })?;
            println!("wrote {} flow grids (stride {}) to {}", seq.grids.len(), seq.stride, out.display());
        }
        Command::Fit {
            config,
            preset,
            lambda,
            epochs,
            seed,
            out,
            flow,
            resume,
            stop_after,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(f) = flow {
                cfg.data.flow = f;
            }
            let overrides = FitOverrides {
                preset,
                lambda,
                epochs,
                seed,
                out,
                stop_after,
            };
            let report = cmd_fit(&cfg, &overrides, resume)?;
            if let Some(last) = report.last {
                println!(
                    "epoch {}: obs {:.6} of {:.6} total {:.6}",
                    last.epoch, last.obs_loss, last.of_loss, last.total
                );
                if let (Some(o), Some(i)) = (last.observed_psnr, last.interp_psnr) {
                    println!("observed PSNR {o:.2} dB, interpolated PSNR {i:.2} dB");
                }
            }
            let status = if report.completed { "model" } else { "partial run; resume with --resume. model" };
            println!("{status} written to {}", report.model_path.display());
        }
        Command::Interpolate {
            run,
            checkpoint,
            times,
            out,
        } => {
            let times = parse_times(&times).map_err(usage)?;
            let report = cmd_interpolate(&InterpolateArgs {
                run,
                checkpoint,
                times,
                out: out.clone(),
            })?;
            if !report.extrapolated.is_empty() {
                eprintln!("warning: extrapolated times {:?}", report.extrapolated);
            }
            println!("wrote {} frames to {}", report.frames.len(), out.display());
        }
        Command::Eval {
            rendered,
            truth,
            observe_every,
            out,
        } => {
            let m = cmd_eval(&EvalArgs {
                rendered,
                truth,
                observe_every,
                out,
            })?;
            for (name, s) in [("observed", m.observed), ("interpolated", m.held_out)] {
                if let Some(s) = s {
                    println!(
                        "{name}: mean PSNR {:.3} dB (pooled {:.3} dB), mean SSIM {:.4} over {} frames",
                        s.mean_psnr, s.global_psnr, s.mean_ssim, s.frames
                    );
                }
            }
        }
        Command::Sweep {
            config,
            axis,
            grid,
            cross_of,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let grid = grid.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
            let rows = cmd_sweep(&cfg, &SweepArgs { axis, grid, cross_of, out: out.clone() })?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count() / 2;
            println!("wrote {} rows to {} ({failed} failed settings)", rows.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
