//! The experiment file: one TOML document describing target, sampling, bands,
//! networks, optimiser, convolution plan, rounds and seeds.

use std::path::{Path, PathBuf};

use phasednn::bands::ConvolutionPlan;
use phasednn::data::{SamplingSpec, TargetSpec};
use phasednn::kernels::{make_bands, parse_band_table, Band, BandLayout, KernelKind};
use phasednn::model::{NetSettings, RunConfig};
use phasednn::net::{AdamConfig, LayerSpec};
use phasednn::spectral::DetectConfig;
use phasednn::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BandsConfig {
    /// Translates of one kernel covering `[-mΔk, mΔk]`.
    Mesh {
        m: usize,
        width: f64,
        #[serde(default = "cubic")]
        kernel: KernelKind,
    },
    /// One characteristic band per `[lo, hi]` pair.
    Explicit { intervals: Vec<(f64, f64)> },
    /// A band table file (as written by `detect`), relative to the config file.
    Table { path: PathBuf },
}

fn cubic() -> KernelKind {
    KernelKind::CUBIC
}

/// Adam hyper-parameters plus the mini-batch size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Mini-batch size; omitted means full-batch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self {
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
            batch_size: None,
        }
    }
}

impl OptimizerConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Settings for `probe`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub frequencies: Vec<f64>,
    pub widths: LayerSpec,
    pub epochs: usize,
    #[serde(default)]
    pub optimizer: Option<OptimizerConfig>,
}

/// Settings for `baseline`: one network trained on the raw data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub widths: LayerSpec,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "one")]
    pub rounds: usize,
    pub target: TargetSpec,
    pub train_data: SamplingSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_data: Option<SamplingSpec>,
    pub base: NetSettings,
    pub band_net: NetSettings,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub bands: BandsConfig,
    #[serde(default)]
    pub convolution: ConvolutionPlan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detect: Option<DetectConfig>,
}

fn one() -> usize {
    1
}

/// Seeds for data sampling that a config leaves implicit.
const TRAIN_SAMPLE_STREAM: u64 = 0x7472_6169_6e;
const TEST_SAMPLE_STREAM: u64 = 0x7465_7374;

fn fill_seed(s: &mut SamplingSpec, seed: u64, stream: u64) {
    if let SamplingSpec::Random {
        seed: slot @ None, ..
    } = s
    {
        *slot = Some(seed ^ stream);
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| {
                text[..s.start.min(text.len())].matches('\n').count() + 1
            });
            Error::Parse {
                path: origin.to_path_buf(),
                line,
                msg: e.message().to_string(),
            }
        })
    }

    /// Reads a config file, resolving a band-table path against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text, path)?;
        if let BandsConfig::Table { path: table } = &mut cfg.bands {
            if table.is_relative() {
                *table = path.parent().unwrap_or(Path::new(".")).join(&table);
            }
        }
        Ok(cfg)
    }

    /// Applies a seed override and fills implicit sampling seeds, so the
    /// echoed config reproduces the run on its own.
    pub fn resolve(mut self, seed_override: Option<u64>) -> Result<Self> {
        if let Some(seed) = seed_override {
            self.seed = seed;
            // sampling seeds follow the master seed unless pinned in the file
        }
        fill_seed(&mut self.train_data, self.seed, TRAIN_SAMPLE_STREAM);
        if let Some(t) = &mut self.test_data {
            fill_seed(t, self.seed, TEST_SAMPLE_STREAM);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        self.train_data.validate()?;
        if let Some(t) = &self.test_data {
            t.validate()?;
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        self.convolution.validate()?;
        self.run_config()?.validate()
    }

    pub fn bands(&self) -> Result<(Vec<Band>, Vec<String>)> {
        match &self.bands {
            BandsConfig::Mesh { m, width, kernel } => {
                let set = make_bands(&BandLayout::Mesh {
                    m: *m,
                    width: *width,
                    kernel: *kernel,
                })?;
                Ok((set.bands, set.warnings))
            }
            BandsConfig::Explicit { intervals } => {
                let set = make_bands(&BandLayout::Explicit {
                    intervals: intervals.clone(),
                })?;
                Ok((set.bands, set.warnings))
            }
            BandsConfig::Table { path } => {
                let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
                Ok((parse_band_table(&text, path)?, Vec::new()))
            }
        }
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let (bands, _) = self.bands()?;
        Ok(RunConfig {
            base: self.base.clone(),
            band: self.band_net.clone(),
            adam: self.optimizer.adam(),
            batch_size: self.optimizer.batch_size,
            bands,
            convolution: self.convolution,
            rounds: self.rounds,
            seed: self.seed,
        })
    }
}
