//! Run configuration: a TOML document with sections mirroring the library
//! modules, overlaid by a profile. Every default is a full-scale value, so
//! an empty file under `--profile paper` resolves to the complete full-scale
//! configuration; `--profile desk` shrinks batches, epochs, and the encoder
//! so the whole pipeline runs on CPU in CI.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use explicar_core::corpus::DataFormat;
use explicar_core::textclean::{CleanConfig, CleanStep};
use explicar_core::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
}

impl Profile {
    pub fn parse(s: &str) -> Result<Profile> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => bail!("unknown profile {other:?}; expected desk or paper"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub format: Option<DataFormat>,
}

/// Step flags for the cleaning pipeline; order stays canonical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanSection {
    pub lowercase: bool,
    pub strip_urls: bool,
    pub strip_mentions_hashtags: bool,
    pub non_alnum_to_space: bool,
    pub strip_digits: bool,
    pub strip_single_chars: bool,
    pub collapse_whitespace: bool,
    pub trim: bool,
}

impl Default for CleanSection {
    fn default() -> Self {
        CleanSection {
            lowercase: true,
            strip_urls: true,
            strip_mentions_hashtags: true,
            non_alnum_to_space: true,
            strip_digits: true,
            strip_single_chars: true,
            collapse_whitespace: true,
            trim: true,
        }
    }
}

impl CleanSection {
    pub fn to_clean_config(&self) -> CleanConfig {
        let enabled = |step: &CleanStep| match step {
            CleanStep::Lowercase => self.lowercase,
            CleanStep::StripUrls => self.strip_urls,
            CleanStep::StripMentionsHashtags => self.strip_mentions_hashtags,
            CleanStep::NonAlnumToSpace => self.non_alnum_to_space,
            CleanStep::StripDigits => self.strip_digits,
            CleanStep::StripSingleChars => self.strip_single_chars,
            CleanStep::CollapseWhitespace => self.collapse_whitespace,
            CleanStep::Trim => self.trim,
        };
        CleanConfig {
            steps: CleanStep::DEFAULT_ORDER.iter().copied().filter(enabled).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub ratios: [f64; 3],
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { ratios: [0.8, 0.1, 0.1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub backend_id: String,
    pub freeze: String,
    pub max_length: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            backend_id: "xlm-roberta-base".to_string(),
            freeze: "first8".to_string(),
            max_length: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimeSection {
    pub n_samples: usize,
    pub kernel_width: f64,
    pub ridge_lambda: f64,
    pub top_k: usize,
    pub seed: u64,
    pub enumerate_threshold: usize,
    pub target_class: String,
    /// Sentence the pipeline explains; defaults to the first test example.
    pub explain_text: Option<String>,
}

impl Default for LimeSection {
    fn default() -> Self {
        let lime = explicar_core::limex::LimeConfig::default();
        LimeSection {
            n_samples: lime.n_samples,
            kernel_width: lime.kernel_width,
            ridge_lambda: lime.ridge_lambda,
            top_k: lime.top_k,
            seed: lime.seed,
            enumerate_threshold: lime.enumerate_threshold,
            target_class: "predicted".to_string(),
            explain_text: None,
        }
    }
}

impl LimeSection {
    pub fn to_lime_config(&self) -> explicar_core::limex::LimeConfig {
        explicar_core::limex::LimeConfig {
            n_samples: self.n_samples,
            kernel_width: self.kernel_width,
            ridge_lambda: self.ridge_lambda,
            top_k: self.top_k,
            seed: self.seed,
            enumerate_threshold: self.enumerate_threshold,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub out_dir: Option<PathBuf>,
}

/// The full resolved configuration; this is what run manifests snapshot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub clean: CleanSection,
    pub split: SplitSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub lime: LimeSection,
    pub pipeline: PipelineSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let raw = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&raw)
            .with_context(|| format!("invalid config {}", path.display()))?;
        Ok(config)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<RunConfig> {
        match path {
            Some(p) => RunConfig::load(p),
            None => Ok(RunConfig::default()),
        }
    }

    /// Apply a profile on top of the file values. The paper profile is the
    /// identity (the file defaults already are the full-scale values); the
    /// desk profile shrinks batches to 16, epochs to 1, and substitutes the
    /// tiny encoder.
    pub fn apply_profile(&mut self, profile: Profile) {
        match profile {
            Profile::Paper => {}
            Profile::Desk => {
                self.train.train_batch_size = 16;
                self.train.eval_batch_size = 16;
                self.train.epochs = 1;
                self.model.backend_id = "tiny-12".to_string();
                self.model.max_length = 32;
            }
        }
    }

}
