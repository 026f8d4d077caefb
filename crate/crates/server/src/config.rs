use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cueguard_core::rules::{SentenceSplitter, DEFAULT_TERMINATORS};
use cueguard_core::taxonomy::{BlockReasons, UnknownCategory};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Prefix of environment variables that override file settings.
pub const ENV_PREFIX: &str = "CUEGUARD_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for {var}: {reason}")]
    Env { var: String, reason: String },
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: String,
    pub log_path: PathBuf,
    pub model_path: Option<PathBuf>,
    pub rules_path: Option<PathBuf>,
    /// Where samples and verdicts are kept between restarts.
    pub review_path: Option<PathBuf>,
    pub sample_size: usize,
    pub sampling_seed: u64,
    pub terminators: String,
    /// Bearer token required on mutating operator endpoints. Unset leaves
    /// them open.
    pub operator_token: Option<String>,
    pub sync_log: bool,
    /// Category id to block-reason text.
    pub block_reasons: BTreeMap<String, String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            listen: "127.0.0.1:8080".into(),
            log_path: PathBuf::from("decisions.jsonl"),
            model_path: None,
            rules_path: None,
            review_path: None,
            sample_size: 50,
            sampling_seed: 0,
            terminators: DEFAULT_TERMINATORS.iter().collect(),
            operator_token: None,
            sync_log: false,
            block_reasons: BTreeMap::new(),
        }
    }
}

fn env_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

/// `\n` and `\t` written as two characters become the real characters.
fn unescape(v: &str) -> String {
    v.replace("\\n", "\n").replace("\\t", "\t")
}

impl ServerConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let config: ServerConfig = toml::from_str(s)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads the optional file, then applies `CUEGUARD_*` variables from the
    /// process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.to_path_buf(), source })?;
                ServerConfig::from_toml_str(&text)?
            }
            None => ServerConfig::default(),
        };
        config.apply_env(std::env::vars())?;
        Ok(config)
    }

    /// Applies overrides such as `CUEGUARD_LISTEN` or `CUEGUARD_SAMPLE_SIZE`.
    /// Unrelated variables are ignored. An empty path variable unsets it.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        for (key, value) in vars {
            let Some(name) = key.strip_prefix(ENV_PREFIX) else { continue };
            let bad = |reason: String| ConfigError::Env { var: key.clone(), reason };
            match name {
                "LISTEN" => self.listen = value,
                "LOG_PATH" => self.log_path = PathBuf::from(value),
                "MODEL_PATH" => self.model_path = env_path(&value),
                "RULES_PATH" => self.rules_path = env_path(&value),
                "REVIEW_PATH" => self.review_path = env_path(&value),
                "SAMPLE_SIZE" => self.sample_size = value.parse().map_err(|e| bad(format!("{e}")))?,
                "SAMPLING_SEED" => self.sampling_seed = value.parse().map_err(|e| bad(format!("{e}")))?,
                "TERMINATORS" => self.terminators = unescape(&value),
                "OPERATOR_TOKEN" => self.operator_token = (!value.is_empty()).then_some(value),
                "SYNC_LOG" => self.sync_log = value.parse().map_err(|e| bad(format!("{e}")))?,
                _ => {}
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sample_size == 0 {
            return Err(ConfigError::Invalid { field: "sample_size", reason: "must be positive".into() });
        }
        if self.terminators.is_empty() {
            return Err(ConfigError::Invalid { field: "terminators", reason: "at least one is required".into() });
        }
        self.block_reasons().map_err(|e| ConfigError::Invalid { field: "block_reasons", reason: e.to_string() })?;
        Ok(())
    }

    pub fn splitter(&self) -> SentenceSplitter {
        SentenceSplitter::new(self.terminators.chars())
    }

    pub fn block_reasons(&self) -> Result<BlockReasons, UnknownCategory> {
        BlockReasons::with_overrides(self.block_reasons.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }
}
