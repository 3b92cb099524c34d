//! Pipeline configuration: one declarative TOML document merged with flag
//! overrides (flags win). The effective configuration is hashed into every
//! artifact header for provenance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::export::StageTag;
use crate::filter::{ExactMatchMode, FilterConfig};
use crate::interplay::{EndpointConfig, EpisodeLimits};

/// Tool-graph construction settings (the seed comes from the global seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphSettings {
    pub tau: f64,
    pub embed_dim: usize,
}

impl Default for GraphSettings {
    fn default() -> Self {
        Self { tau: 0.8, embed_dim: 512 }
    }
}

/// Task-walk length bounds (per-task seeds derive from the global seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkSettings {
    pub min_steps: usize,
    pub max_steps: usize,
}

impl Default for WalkSettings {
    fn default() -> Self {
        Self { min_steps: 2, max_steps: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSettings {
    /// Number of tasks to synthesize, spread round-robin over domains.
    pub n_tasks: usize,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self { n_tasks: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlaySettings {
    /// Utterances the scripted user splits the intent into.
    pub chunks: usize,
    /// Worker threads for episode execution (1 = sequential).
    pub parallel: usize,
}

impl Default for PlaySettings {
    fn default() -> Self {
        Self { chunks: 2, parallel: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExportSettings {
    pub stage_tag: StageTag,
}

impl Default for ExportSettings {
    fn default() -> Self {
        Self { stage_tag: StageTag::Stage1General }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub bucket_width: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { bucket_width: 1 }
    }
}

/// The whole pipeline's configuration document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Global seed; every stage derives its randomness from it and every
    /// artifact header records it.
    pub seed: u64,
    pub graph: GraphSettings,
    pub walk: WalkSettings,
    pub synth: SynthSettings,
    pub play: PlaySettings,
    pub filter: FilterConfig,
    pub limits: EpisodeLimits,
    pub export: ExportSettings,
    pub eval: EvalSettings,
    /// When set, episodes talk to this chat-completions endpoint; when
    /// absent, deterministic in-process clients are used.
    pub endpoint: Option<EndpointConfig>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("invalid flag value: {0}")]
    Flag(String),
}

/// Load a TOML config, or the defaults when no path is given.
pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig, ConfigError> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.to_path_buf(), source: e })?;
    toml::from_str(&text)
        .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), detail: e.to_string() })
}

/// Flag-level overrides; every set field beats the config document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tau: Option<f64>,
    pub max_steps: Option<usize>,
    pub parallel: Option<usize>,
    pub exact_match_mode: Option<ExactMatchMode>,
    pub stage_tag: Option<StageTag>,
    pub n_tasks: Option<usize>,
    pub chunks: Option<usize>,
    pub bucket_width: Option<usize>,
}

impl PipelineConfig {
    pub fn with_overrides(mut self, o: &Overrides) -> Self {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(tau) = o.tau {
            self.graph.tau = tau;
        }
        if let Some(max_steps) = o.max_steps {
            self.walk.max_steps = max_steps;
            self.walk.min_steps = self.walk.min_steps.min(max_steps);
        }
        if let Some(parallel) = o.parallel {
            self.play.parallel = parallel;
        }
        if let Some(mode) = o.exact_match_mode {
            self.filter.exact_match_mode = mode;
        }
        if let Some(tag) = o.stage_tag {
            self.export.stage_tag = tag;
        }
        if let Some(n) = o.n_tasks {
            self.synth.n_tasks = n;
        }
        if let Some(chunks) = o.chunks {
            self.play.chunks = chunks;
        }
        if let Some(width) = o.bucket_width {
            self.eval.bucket_width = width;
        }
        self
    }
}

/// Parse an `--exact-match-mode` flag value.
pub fn parse_exact_match_mode(s: &str) -> Result<ExactMatchMode, ConfigError> {
    match s {
        "all_read_only" => Ok(ExactMatchMode::AllReadOnly),
        "always" => Ok(ExactMatchMode::Always),
        other => Err(ConfigError::Flag(format!(
            "exact-match-mode must be all_read_only or always, got `{other}`"
        ))),
    }
}

/// Parse a `--stage-tag` flag value.
pub fn parse_stage_tag(s: &str) -> Result<StageTag, ConfigError> {
    match s {
        "stage1_general" => Ok(StageTag::Stage1General),
        "stage2_domain" => Ok(StageTag::Stage2Domain),
        other => Err(ConfigError::Flag(format!(
            "stage-tag must be stage1_general or stage2_domain, got `{other}`"
        ))),
    }
}
