//! Config file plus environment overrides.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use bargein_core::SessionConfig;
use bargein_llm::{LlmConfig, ENV_ENDPOINT};

/// Contents of `--config`. Every section is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    /// Session defaults for `serve`.
    pub session: SessionConfig,
    pub llm: Option<LlmConfig>,
    pub trace_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.session
            .validate()
            .with_context(|| format!("config {}", path.display()))?;
        Ok(cfg)
    }

    /// The model endpoint, if the file or the environment names one.
    pub fn model(&self) -> Result<Option<LlmConfig>> {
        if self.llm.is_none() && std::env::var_os(ENV_ENDPOINT).is_none() {
            return Ok(None);
        }
        Ok(Some(self.model_or_default()?))
    }

    /// The model endpoint, falling back to built-in defaults.
    pub fn model_or_default(&self) -> Result<LlmConfig> {
        Ok(self.llm.clone().unwrap_or_default().with_env()?)
    }
}
