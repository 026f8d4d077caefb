use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::{Datelike, NaiveDate};
use cueguard_core::classifier::{scalar_width, LinearModel, ModelFileError, QueryClassifier};
use cueguard_core::feedback::{sample_for_review, ReviewSample, ReviewStore};
use cueguard_core::gateway::{Gateway, GatewayError, GatewayOptions, JsonlDecisionLog, ReportType, StorageError};
use cueguard_core::rules::{read_rule_file, write_rule_file, Rule, RuleFileError};
use thiserror::Error;

use crate::config::{ConfigError, ServerConfig};

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("decision log: {0}")]
    Log(#[from] StorageError),
    #[error("model {path}: {source}")]
    Model { path: PathBuf, source: ModelFileError },
    #[error("rules {path}: {source}")]
    Rules { path: PathBuf, source: RuleFileError },
    #[error("review store {path}: {reason}")]
    Review { path: PathBuf, reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Loads a model file of either scalar width.
pub fn load_model_file(path: &Path) -> Result<Arc<dyn QueryClassifier>, StartupError> {
    let bytes = std::fs::read(path).map_err(|source| StartupError::Io { path: path.to_path_buf(), source })?;
    let wrap = |source| StartupError::Model { path: path.to_path_buf(), source };
    Ok(match scalar_width(&bytes).map_err(wrap)? {
        4 => Arc::new(LinearModel::<f32>::from_bytes(&bytes).map_err(wrap)?),
        _ => Arc::new(LinearModel::<f64>::from_bytes(&bytes).map_err(wrap)?),
    })
}

pub fn load_rules_file(path: &Path) -> Result<Vec<Rule>, StartupError> {
    let file = File::open(path).map_err(|source| StartupError::Io { path: path.to_path_buf(), source })?;
    read_rule_file(BufReader::new(file)).map_err(|source| StartupError::Rules { path: path.to_path_buf(), source })
}

/// Writes through a sibling temp file so readers never see a partial file.
fn replace_file(path: &Path, write: impl FnOnce(&mut File) -> std::io::Result<()>) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp)?;
    write(&mut f)?;
    f.sync_all()?;
    std::fs::rename(tmp, path)
}

/// Everything the handlers share.
pub struct AppState {
    pub gateway: Arc<Gateway>,
    pub config: ServerConfig,
    review: Mutex<ReviewStore>,
    staged: Mutex<Vec<Rule>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl AppState {
    /// Opens the log and loads the model, rules and review store named in
    /// `config`. A missing model leaves the gateway not ready.
    pub fn from_config(config: ServerConfig) -> Result<Self, StartupError> {
        config.validate()?;
        let log = Arc::new(JsonlDecisionLog::open(&config.log_path, config.sync_log)?);
        let options = GatewayOptions {
            block_reasons: config.block_reasons().map_err(|e| ConfigError::Invalid { field: "block_reasons", reason: e.to_string() })?,
            splitter: config.splitter(),
            ..Default::default()
        };
        let gateway = Gateway::new(log, options)?;
        if let Some(path) = &config.model_path {
            gateway.load_model(load_model_file(path)?)?;
        }
        if let Some(path) = config.rules_path.as_ref().filter(|p| p.exists()) {
            gateway.load_rules(load_rules_file(path)?)?;
        }
        let review = match config.review_path.as_ref().filter(|p| p.exists()) {
            Some(path) => {
                let file = File::open(path).map_err(|source| StartupError::Io { path: path.clone(), source })?;
                serde_json::from_reader(BufReader::new(file))
                    .map_err(|e| StartupError::Review { path: path.clone(), reason: e.to_string() })?
            }
            None => ReviewStore::new(),
        };
        Ok(AppState::with_gateway(Arc::new(gateway), config, review))
    }

    pub fn with_gateway(gateway: Arc<Gateway>, config: ServerConfig, review: ReviewStore) -> Self {
        let staged = gateway.rules();
        AppState { gateway, config, review: Mutex::new(review), staged: Mutex::new(staged) }
    }

    pub fn staged_rules(&self) -> Vec<Rule> {
        lock(&self.staged).clone()
    }

    /// Adds or replaces a staged rule by id; returns true when it replaced one.
    pub fn stage_rule(&self, rule: Rule) -> bool {
        let mut staged = lock(&self.staged);
        match staged.iter_mut().find(|r| r.id == rule.id) {
            Some(slot) => {
                *slot = rule;
                true
            }
            None => {
                staged.push(rule);
                false
            }
        }
    }

    pub fn unstage_rule(&self, id: &str) -> bool {
        let mut staged = lock(&self.staged);
        let before = staged.len();
        staged.retain(|r| r.id != id);
        staged.len() != before
    }

    /// Persists the active rules to the configured rules file, if any.
    pub fn save_rules(&self, rules: &[Rule]) -> std::io::Result<()> {
        let Some(path) = &self.config.rules_path else { return Ok(()) };
        replace_file(path, |f| write_rule_file(f, rules).map_err(std::io::Error::other))
    }

    pub fn review(&self) -> MutexGuard<'_, ReviewStore> {
        lock(&self.review)
    }

    pub fn save_review(&self, store: &ReviewStore) -> std::io::Result<()> {
        let Some(path) = &self.config.review_path else { return Ok(()) };
        replace_file(path, |f| {
            serde_json::to_writer(&mut *f, store)?;
            f.write_all(b"\n")
        })
    }

    pub fn sampling_seed(&self, date: NaiveDate) -> u64 {
        self.config.sampling_seed ^ date.num_days_from_ce() as u64
    }

    /// Ensures the review store holds the day's uniform sample plus every
    /// blocked decision of that day a user reported as over-blocked.
    /// Repeated calls add nothing new.
    pub fn ensure_samples(&self, date: NaiveDate) -> Result<usize, GatewayError> {
        let decisions = self.gateway.decisions()?;
        let mut fresh = sample_for_review(&decisions, date, self.config.sample_size, self.sampling_seed(date));
        let reported: std::collections::HashSet<String> = self
            .gateway
            .feedback_reports()
            .into_iter()
            .filter(|r| r.report_type == ReportType::OverBlocked)
            .map(|r| r.query_id)
            .collect();
        fresh.extend(
            decisions
                .iter()
                .filter(|d| d.blocked && d.decided_at.date_naive() == date && reported.contains(&d.query_id))
                .map(|d| ReviewSample::new(d, date)),
        );
        let mut store = self.review();
        let added = store.add_samples(fresh);
        if added > 0 {
            self.save_review(&store).map_err(|e| StorageError::Write(e.to_string()))?;
        }
        Ok(added)
    }
}
