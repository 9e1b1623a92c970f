use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mpe::models::{preset, Family, ModelConfig};
use mpe::splits::{SPLIT_NAMES, TAGS_SPLIT};
use mpe::training::{TrainConfig, MAX_SEED};
use serde::{Deserialize, Serialize};

/// Environment variable overriding the feature cache root.
pub const CACHE_ENV: &str = "MPE_CACHE";

/// A model named by preset, optionally with individual fields overridden,
/// or built from the fields alone.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub preset: Option<String>,
    pub family: Option<Family>,
    pub channels: Option<[usize; 4]>,
    pub gamma: Option<usize>,
    pub lambda: Option<usize>,
    pub dropout: Option<f64>,
    pub leaky_slope: Option<f64>,
    pub blstm_layers: Option<usize>,
}

impl ModelSpec {
    pub fn from_preset(name: &str) -> Self {
        Self { preset: Some(name.to_string()), ..Self::default() }
    }

    fn has_overrides(&self) -> bool {
        self.family.is_some()
            || self.channels.is_some()
            || self.gamma.is_some()
            || self.lambda.is_some()
            || self.dropout.is_some()
            || self.leaky_slope.is_some()
            || self.blstm_layers.is_some()
    }

    pub fn resolve(&self) -> Result<ModelConfig> {
        let mut c = match &self.preset {
            Some(name) => preset(name)?.config,
            None => {
                let family = self.family.context("model needs either `preset` or `family`")?;
                let channels = self.channels.context("model without a preset needs `channels`")?;
                ModelConfig::new(family, channels, self.gamma, self.lambda)
            }
        };
        if let Some(f) = self.family {
            c.family = f;
        }
        if let Some(ch) = self.channels {
            c.channels = ch;
        }
        if self.gamma.is_some() {
            c.gamma = self.gamma;
        }
        if self.lambda.is_some() {
            c.lambda = self.lambda;
        }
        if let Some(d) = self.dropout {
            c.dropout = d;
        }
        if let Some(s) = self.leaky_slope {
            c.leaky_slope = s;
        }
        if let Some(l) = self.blstm_layers {
            c.blstm_layers = l;
        }
        c.validate()?;
        Ok(c)
    }

    /// `CNN:M` for an unmodified preset, otherwise a label spelling out the
    /// widths.
    pub fn label(&self) -> Result<String> {
        if let (Some(name), false) = (&self.preset, self.has_overrides()) {
            return Ok(preset(name)?.name());
        }
        let c = self.resolve()?;
        let mut s = format!("{}:{}", c.family, c.channels.map(|v| v.to_string()).join("-"));
        if let Some(g) = c.gamma {
            s.push_str(&format!("-g{g}"));
        }
        if let Some(l) = c.lambda {
            s.push_str(&format!("-l{l}"));
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Approximate number of training patches; the stride is chosen to
    /// match it.
    pub train_patch_target: usize,
    /// Target for the validation set; the training stride is reused when
    /// absent.
    pub validation_patch_target: Option<usize>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { train_patch_target: 95_000, validation_patch_target: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub threshold: f32,
    pub batch_size: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { threshold: mpe::evaluation::DEFAULT_THRESHOLD, batch_size: 25 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub manifest: PathBuf,
    pub split: String,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Falls back to `$MPE_CACHE`, then `cache/` next to the manifest.
    pub cache_dir: Option<PathBuf>,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub sampling: SamplingConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            manifest: PathBuf::from("manifest.jsonl"),
            split: "MuN-10a".into(),
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
            cache_dir: None,
            model: ModelSpec::from_preset("SAUnet:L"),
            train: TrainConfig::default(),
            sampling: SamplingConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        // Relative paths are taken relative to the config file.
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::path::absolute(parent)?;
        for p in [&mut cfg.manifest, &mut cfg.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(c) = cfg.cache_dir.as_mut().filter(|c| c.is_relative()) {
            *c = base.join(&*c);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, toml::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        if let Some(s) = self.seeds.iter().find(|&&s| s > MAX_SEED) {
            bail!("seed {s} exceeds {MAX_SEED}");
        }
        if self.split != TAGS_SPLIT && !SPLIT_NAMES.contains(&self.split.as_str()) {
            bail!("unknown split {:?}; expected one of {:?} or {TAGS_SPLIT:?}", self.split, SPLIT_NAMES);
        }
        if self.sampling.train_patch_target == 0 || self.sampling.validation_patch_target == Some(0) {
            bail!("patch targets must be positive");
        }
        if self.evaluation.batch_size == 0 {
            bail!("evaluation batch size must be positive");
        }
        self.model.resolve()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn cache_dir(&self) -> PathBuf {
        if let Some(c) = &self.cache_dir {
            return c.clone();
        }
        if let Some(c) = std::env::var_os(CACHE_ENV) {
            return PathBuf::from(c);
        }
        self.manifest.parent().unwrap_or(Path::new(".")).join("cache")
    }

    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(&self.name).join(format!("seed-{seed}"))
    }
}
