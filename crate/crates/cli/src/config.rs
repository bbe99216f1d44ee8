//! Experiment configuration files and named presets.

use std::path::{Path, PathBuf};

use ofinr_core::flow::HornSchunckParams;
use ofinr_core::optim::{AdamConfig, Precision, TrainConfig};
use ofinr_core::video::Dims;
use ofinr_core::SirenConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Depth 9, width 512, omega 30, max lr 1e-5 for 5000 epochs.
    PaperDefault,
    /// Depth 6, width 720, omega 25, max lr 3.6e-5 for 15000 epochs.
    PaperFinal,
    /// Small network and budget for CPU runs on tiny clips.
    #[default]
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub depth: usize,
    pub width: usize,
    pub omega: f64,
    pub seed: u64,
}

impl ModelSection {
    pub fn siren_config(&self) -> Result<SirenConfig, CliError> {
        Ok(SirenConfig::new(self.depth, self.width, self.omega)?)
    }
}

impl Preset {
    pub fn model(self) -> ModelSection {
        match self {
            Preset::PaperDefault => ModelSection {
                depth: 9,
                width: 512,
                omega: 30.0,
                seed: 0,
            },
            Preset::PaperFinal => ModelSection {
                depth: 6,
                width: 720,
                omega: 25.0,
                seed: 0,
            },
            Preset::Desk => ModelSection {
                depth: 4,
                width: 64,
                omega: 30.0,
                seed: 1,
            },
        }
    }

    pub fn train(self) -> TrainConfig {
        let (max_lr, epochs, batch_size, seed) = match self {
            Preset::PaperDefault => (1e-5, 5000, 4096, 0),
            Preset::PaperFinal => (3.6e-5, 15000, 4096, 0),
            Preset::Desk => (1e-3, 100, 1024, 3),
        };
        TrainConfig {
            max_lr,
            epochs,
            batch_size,
            lambda: 0.12,
            seed,
            precision: Precision::F64,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FlowSource {
    /// `.flo` files if present, else the scene's exact flow, else Horn-Schunck.
    #[default]
    Auto,
    File,
    Synth,
    HornSchunck,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HornSchunckSection {
    pub alpha: f64,
    pub iterations: usize,
}

impl Default for HornSchunckSection {
    fn default() -> Self {
        let p = HornSchunckParams::default();
        Self {
            alpha: p.alpha,
            iterations: p.iterations,
        }
    }
}

impl From<HornSchunckSection> for HornSchunckParams {
    fn from(s: HornSchunckSection) -> Self {
        HornSchunckParams {
            alpha: s.alpha,
            iterations: s.iterations,
        }
    }
}

fn default_observe_every() -> usize {
    2
}

fn default_every() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Dataset directory with `frames/`, and optionally `flow/` and `scene.toml`.
    pub dir: PathBuf,
    #[serde(default = "default_observe_every")]
    pub observe_every: usize,
    #[serde(default)]
    pub flow: FlowSource,
    #[serde(default)]
    pub horn_schunck: HornSchunckSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    #[serde(default = "default_every")]
    pub eval_every: usize,
    #[serde(default = "default_every")]
    pub checkpoint_every: usize,
}

/// A configuration file as written by the user. Missing `model` or
/// `train` tables come from the preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub preset: Preset,
    pub model: Option<ModelSection>,
    pub train: Option<TrainConfig>,
    pub data: DataSection,
    pub output: OutputSection,
}

/// Fully resolved settings, written beside every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub preset: Preset,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub data: DataSection,
    pub output: OutputSection,
    pub geometry: Option<Dims>,
}

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Fill preset defaults and validate everything that can be checked
    /// without touching the data.
    pub fn resolve(&self) -> Result<ResolvedConfig, CliError> {
        let resolved = ResolvedConfig {
            preset: self.preset,
            model: self.model.unwrap_or_else(|| self.preset.model()),
            train: self.train.unwrap_or_else(|| self.preset.train()),
            data: self.data.clone(),
            output: self.output.clone(),
            geometry: None,
        };
        resolved.validate()?;
        Ok(resolved)
    }
}

impl ResolvedConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.model.siren_config()?;
        self.train.validate().map_err(|e| CliError::usage(e.to_string()))?;
        if self.data.observe_every < 2 {
            return Err(CliError::usage("data.observe_every must be >= 2"));
        }
        let hs = &self.data.horn_schunck;
        if hs.alpha.is_nan() || hs.alpha <= 0.0 || hs.iterations == 0 {
            return Err(CliError::usage("horn_schunck needs alpha > 0 and iterations >= 1"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(RESOLVED_CONFIG_FILE);
        std::fs::write(&path, self.to_toml()).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[data]\ndir = \"d\"\n[output]\ndir = \"o\"\n";

    #[test]
    fn large_presets_resolve_verbatim() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.preset = Preset::PaperDefault;
        let r = cfg.resolve().unwrap();
        assert_eq!((r.model.depth, r.model.width, r.model.omega), (9, 512, 30.0));
        assert_eq!((r.train.lambda, r.train.max_lr, r.train.epochs), (0.12, 1e-5, 5000));
        cfg.preset = Preset::PaperFinal;
        let r = cfg.resolve().unwrap();
        assert_eq!((r.model.depth, r.model.width, r.model.omega), (6, 720, 25.0));
        assert_eq!((r.train.lambda, r.train.max_lr, r.train.epochs), (0.12, 3.6e-5, 15000));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}colour = 1\n")).is_err());
        let bad = "[data]\ndir = \"d\"\nframes = 3\n[output]\ndir = \"o\"\n";
        assert!(ExperimentConfig::from_toml(bad).is_err());
    }

    #[test]
    fn invalid_values_fail_before_compute() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.train = Some(TrainConfig {
            lambda: 1.5,
            ..Preset::Desk.train()
        });
        assert!(matches!(cfg.resolve(), Err(CliError::Usage(_))));
        cfg.train = None;
        cfg.data.observe_every = 1;
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let text = format!("preset = \"desk\"\n{MINIMAL}");
        let mut r = ExperimentConfig::from_toml(&text).unwrap().resolve().unwrap();
        r.geometry = Some(Dims {
            frames: 16,
            height: 48,
            width: 48,
        });
        let back: ResolvedConfig = toml::from_str(&r.to_toml()).unwrap();
        assert_eq!(back, r);
    }
}
