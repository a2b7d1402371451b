//! Pipeline configuration: a TOML file plus `SOUNDSCAPE_*` environment
//! overrides, and construction of the adapter set it describes.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::http::{ChatCompletionsClient, ModelServerClient};
use crate::adapters::media::FfmpegDecoder;
use crate::adapters::stub::StubManifest;
use crate::adapters::{AdapterError, AdapterSet, RetryPolicy};
use crate::ideation::IdeationConfig;
use crate::localization::LocalizationConfig;
use crate::mixer::{ExportConfig, MixSettings};
use crate::scene_context::SceneConfig;
use crate::soundgen::SoundgenConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub model_server_url: String,
    pub llm_endpoint: String,
    pub llm_model: String,
    pub timeout_s: f64,
    pub generator_sample_rate: u32,
    pub ffmpeg: PathBuf,
    pub ffprobe: PathBuf,
    /// Never read from the config file; only from the environment.
    #[serde(skip)]
    pub llm_api_key: Option<String>,
    #[serde(skip)]
    pub model_server_api_key: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            model_server_url: "http://127.0.0.1:8765".into(),
            llm_endpoint: "https://api.openai.com/v1/chat/completions".into(),
            llm_model: "gpt-4".into(),
            timeout_s: 120.0,
            generator_sample_rate: 32_000,
            ffmpeg: "ffmpeg".into(),
            ffprobe: "ffprobe".into(),
            llm_api_key: None,
            model_server_api_key: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub backends: BackendConfig,
    pub retry: RetryPolicy,
    pub scene: SceneConfig,
    pub ideation: IdeationConfig,
    pub soundgen: SoundgenConfig,
    pub localization: LocalizationConfig,
    pub mix: MixSettings,
    pub export: ExportConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid value for {var}: {reason}")]
    Env { var: String, reason: String },
    #[error(transparent)]
    Backend(#[from] AdapterError),
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Defaults, overlaid by `path` when given, then by the process
    /// environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.to_path_buf(),
                    source,
                })?;
                Self::from_toml(&text, p)?
            }
            None => Self::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        let b = &mut self.backends;
        if let Some(v) = get("SOUNDSCAPE_MODEL_SERVER_URL") {
            b.model_server_url = v;
        }
        if let Some(v) = get("SOUNDSCAPE_LLM_ENDPOINT") {
            b.llm_endpoint = v;
        }
        if let Some(v) = get("SOUNDSCAPE_LLM_MODEL") {
            b.llm_model = v;
        }
        if let Some(v) = get("SOUNDSCAPE_FFMPEG") {
            b.ffmpeg = v.into();
        }
        if let Some(v) = get("SOUNDSCAPE_FFPROBE") {
            b.ffprobe = v.into();
        }
        if let Some(v) = get("SOUNDSCAPE_TIMEOUT_S") {
            b.timeout_s = v.parse().map_err(|_| ConfigError::Env {
                var: "SOUNDSCAPE_TIMEOUT_S".into(),
                reason: format!("{v:?} is not a number"),
            })?;
        }
        b.llm_api_key = get("SOUNDSCAPE_LLM_API_KEY").filter(|k| !k.is_empty());
        b.model_server_api_key = get("SOUNDSCAPE_MODEL_SERVER_API_KEY").filter(|k| !k.is_empty());
        Ok(())
    }

    /// Ideation settings with the shared retry policy applied.
    pub fn ideation(&self) -> IdeationConfig {
        IdeationConfig {
            retry: self.retry,
            ..self.ideation.clone()
        }
    }

    /// Stub adapters when a manifest is given, otherwise the configured
    /// model server, chat endpoint and ffmpeg.
    pub fn adapters(&self, stub: Option<StubManifest>) -> Result<AdapterSet, ConfigError> {
        if let Some(manifest) = stub {
            return Ok(AdapterSet::stub(manifest));
        }
        let b = &self.backends;
        let timeout = Duration::from_secs_f64(b.timeout_s.max(0.001));
        let models = Arc::new(
            ModelServerClient::new(&b.model_server_url, timeout, b.generator_sample_rate)?
                .with_api_key(b.model_server_api_key.clone()),
        );
        let llm = Arc::new(ChatCompletionsClient::new(
            &b.llm_endpoint,
            &b.llm_model,
            b.llm_api_key.clone(),
            timeout,
        )?);
        Ok(AdapterSet {
            decoder: Arc::new(FfmpegDecoder::new(&b.ffmpeg, &b.ffprobe)),
            detector: models.clone(),
            classifier: models.clone(),
            ocr: models.clone(),
            asr: models.clone(),
            tagger: models.clone(),
            captioner: models.clone(),
            llm,
            generator: models.clone(),
            localizer: models.clone(),
            presence: models.clone(),
            parser: models,
        })
    }
}
