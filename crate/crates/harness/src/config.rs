//! Run configuration: one TOML file with flat sections, plus
//! `section.key=value` overrides from the command line.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use velgan_core::metrics::{EvalConfig, SsimWindow};
use velgan_core::synth::GeoModelConfig;
use velgan_core::{ChannelMode, SplitSpec};
use velgan_net::{DiscLayer, DiscriminatorSpec, GeneratorSpec, LossConfig, NoiseMode, OptimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub dir: PathBuf,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("data/desk") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    /// Samples removed from the top of every trace (water column).
    pub crop_top: usize,
    pub train_fraction: f64,
    pub patch_size: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// 3 for `[seismic, v_avg, twt]`, 1 for seismic only.
    pub channels: usize,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self { crop_top: 28, train_fraction: 0.7, patch_size: 64, n_train: 400, n_test: 100, seed: 11, channels: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub base_width: usize,
    pub max_width: usize,
    pub dropout_rate: f64,
    pub dropout_blocks: usize,
    pub noise_mode: NoiseMode,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        let g = GeneratorSpec::default();
        Self {
            base_width: g.base_width,
            max_width: g.max_width,
            dropout_rate: g.dropout_rate,
            dropout_blocks: g.dropout_blocks,
            noise_mode: g.noise_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorSection {
    pub widths: Vec<usize>,
    pub strides: Vec<usize>,
    pub norms: Vec<bool>,
    pub kernel: usize,
    pub leaky_slope: f64,
}

impl Default for DiscriminatorSection {
    fn default() -> Self {
        let d = DiscriminatorSpec::patchgan70(1);
        Self {
            widths: d.layers.iter().map(|l| l.out_channels).collect(),
            strides: d.layers.iter().map(|l| l.stride).collect(),
            norms: d.layers.iter().map(|l| l.norm).collect(),
            kernel: d.kernel,
            leaky_slope: d.leaky_slope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub run_dir: PathBuf,
    pub epochs: usize,
    pub seed: u64,
    /// Test-set evaluation every this many epochs (and at the last one).
    pub eval_every: usize,
    pub checkpoint_every: usize,
    /// Keep a numbered checkpoint per save besides `latest.ckpt`.
    pub keep_checkpoints: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            run_dir: PathBuf::from("runs/desk"),
            epochs: 40,
            seed: 1,
            eval_every: 5,
            checkpoint_every: 10,
            keep_checkpoints: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Gaussian,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub window: WindowKind,
    pub n_map_samples: usize,
    pub histogram_bins: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { window: WindowKind::Gaussian, n_map_samples: 3, histogram_bins: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    pub synth: GeoModelConfig,
    pub preprocess: PreprocessSection,
    pub generator: GeneratorSection,
    pub discriminator: DiscriminatorSection,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl RunConfig {
    /// Reads `path` (or starts from defaults) and applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str::<toml::Table>(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.preprocess;
        if p.n_train == 0 || p.n_test == 0 {
            bail!("preprocess.n_train and preprocess.n_test must be positive");
        }
        ChannelMode::try_from(p.channels)?;
        let (train, test) = self.split().regions(self.synth.n_crosslines)?;
        if train.len().min(test.len()) < p.patch_size {
            bail!(
                "{}-crossline split gives {} training and {} test crosslines, fewer than the patch size {}",
                self.synth.n_crosslines,
                train.len(),
                test.len(),
                p.patch_size
            );
        }
        if self.synth.n_samples < p.crop_top + p.patch_size {
            bail!(
                "{} samples minus crop_top {} leaves less than the patch size {}",
                self.synth.n_samples,
                p.crop_top,
                p.patch_size
            );
        }
        if self.train.eval_every == 0 || self.train.checkpoint_every == 0 {
            bail!("train.eval_every and train.checkpoint_every must be positive");
        }
        let d = &self.discriminator;
        if d.widths.len() != d.strides.len() || d.widths.len() != d.norms.len() {
            bail!("discriminator widths, strides and norms must have equal length");
        }
        self.generator_spec().validate()?;
        self.discriminator_spec().validate()?;
        self.loss.validate()?;
        self.optim.validate()?;
        if self.discriminator_spec().map_size(p.patch_size).is_none_or(|m| m == 0) {
            bail!("patch size {} is too small for the discriminator", p.patch_size);
        }
        Ok(())
    }

    pub fn channel_mode(&self) -> ChannelMode {
        ChannelMode::try_from(self.preprocess.channels).expect("validated")
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec { train_fraction: self.preprocess.train_fraction }
    }

    pub fn generator_spec(&self) -> GeneratorSpec {
        let g = &self.generator;
        GeneratorSpec {
            in_channels: self.preprocess.channels,
            out_channels: 1,
            patch_size: self.preprocess.patch_size,
            base_width: g.base_width,
            max_width: g.max_width,
            dropout_rate: g.dropout_rate,
            dropout_blocks: g.dropout_blocks,
            noise_mode: g.noise_mode,
        }
    }

    pub fn discriminator_spec(&self) -> DiscriminatorSpec {
        let d = &self.discriminator;
        DiscriminatorSpec {
            in_channels: self.preprocess.channels + 1,
            kernel: d.kernel,
            pad: 1,
            leaky_slope: d.leaky_slope,
            layers: d
                .widths
                .iter()
                .zip(&d.strides)
                .zip(&d.norms)
                .map(|((&out_channels, &stride), &norm)| DiscLayer { out_channels, stride, norm })
                .collect(),
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            window: match self.eval.window {
                WindowKind::Gaussian => SsimWindow::STANDARD,
                WindowKind::Global => SsimWindow::Global,
            },
            n_map_samples: self.eval.n_map_samples,
            histogram_bins: self.eval.histogram_bins,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// Applies one `section.key=value` override. The value is read as a TOML
/// value when it parses as one, else as a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| anyhow!("override '{spec}' is not key=value"))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.len() != 2 || path.iter().any(|p| p.is_empty()) {
        bail!("override key '{key}' must be section.key");
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let section = table
        .entry(path[0].to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or_else(|| anyhow!("'{}' is not a section", path[0]))?;
    section.insert(path[1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_desk_profile() {
        let cfg = RunConfig::load(None, &[]).unwrap();
        assert_eq!(cfg.preprocess.patch_size, 64);
        assert_eq!((cfg.preprocess.n_train, cfg.preprocess.n_test), (400, 100));
        assert_eq!(cfg.train.epochs, 40);
        assert_eq!(cfg.discriminator_spec().receptive_field(), 70);
        assert_eq!(cfg.generator_spec().in_channels, 3);
    }

    #[test]
    fn overrides_parse_typed_values() {
        let cfg = RunConfig::load(
            None,
            &[
                "preprocess.channels=1".into(),
                "optim.lr=1e-4".into(),
                "train.run_dir=/tmp/x".into(),
                "loss.adversarial_form=minimax".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.channel_mode(), ChannelMode::SeismicOnly);
        assert_eq!(cfg.optim.lr, 1e-4);
        assert_eq!(cfg.train.run_dir, PathBuf::from("/tmp/x"));
        assert_eq!(cfg.discriminator_spec().in_channels, 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::load(None, &["preprocess.channels=2".into()]).is_err());
        assert!(RunConfig::load(None, &["nosection=1".into()]).is_err());
        assert!(RunConfig::load(None, &["preprocess.bogus=1".into()]).is_err());
        assert!(RunConfig::load(None, &["preprocess.patch_size=48".into()]).is_err());
        assert!(RunConfig::load(None, &["synth.n_crosslines=150".into()]).is_err());
        assert!(RunConfig::load(None, &["synth.n_samples=80".into()]).is_err());
    }

    #[test]
    fn frozen_copy_round_trips() {
        let cfg = RunConfig::load(None, &["synth.seed=99".into()]).unwrap();
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
