//! Library half of the `ofinr` command: configuration, presets and the
//! subcommands as plain functions.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{
    cmd_eval, cmd_fit, cmd_flow, cmd_interpolate, cmd_sweep, cmd_synth, EvalArgs, FitOverrides, FlowArgs,
    InterpolateArgs, SweepArgs, SweepAxis, SynthArgs,
};
pub use config::{ExperimentConfig, Preset, ResolvedConfig};
pub use error::CliError;
