//! The classifier slot in front of the generator: classify, apply rules, log,
//! and hand the generator a cue prefix.

mod log;

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use log::{
    decode_record, encode_record, read_decision_log, DecisionLog, JsonlDecisionLog, MemoryDecisionLog, StorageError,
    LOG_FORMAT_VERSION,
};

use crate::classifier::{ClassifierError, QueryClassifier, Scores};
use crate::rules::{apply_adjustment, compile_rules_with, match_rules, CompiledRuleSet, DecisionSource, Rule, RuleError, SentenceSplitter};
use crate::taxonomy::{BlockReasons, Category};

/// Wire form of the category cue handed to the generator.
pub fn cue_prefix(category: Category) -> String {
    format!("[CATEGORY:{}]", category.id())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
    pub received_at: DateTime<Utc>,
    /// Encrypted upstream; carried through but never logged or exported.
    #[serde(default)]
    pub user_pseudonym: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub query_id: String,
    pub text: String,
    pub label: Category,
    pub source: DecisionSource,
    pub scores: Scores<f64>,
    pub cue_prefix: String,
    pub blocked: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_reason: Option<String>,
    pub model_version: String,
    /// Increments on every model swap; `model_version` is free-form.
    pub model_generation: u64,
    pub ruleset_version: u64,
    pub decided_at: DateTime<Utc>,
}

impl Decision {
    /// The text handed downstream: cue prefix followed by the query.
    pub fn generator_input(&self) -> String {
        format!("{} {}", self.cue_prefix, self.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportType {
    OverBlocked,
    UnderBlocked,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackReport {
    pub query_id: String,
    pub report_type: ReportType,
    #[serde(default)]
    pub note: String,
    pub submitted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acknowledgment {
    pub accepted: bool,
    pub queue_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveVersions {
    pub model_version: Option<String>,
    pub model_generation: u64,
    pub ruleset_version: u64,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no model loaded")]
    NotReady,
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("decision could not be logged: {0}")]
    StorageFailure(#[from] StorageError),
    #[error("unknown query id {0}")]
    UnknownQueryId(String),
    #[error("reload needs a model or a rule list")]
    NothingToReload,
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Rules(#[from] RuleError),
}

/// Where `decided_at` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Timestamping {
    #[default]
    Wall,
    /// Use the query's `received_at`; makes replayed logs reproducible.
    ReceivedAt,
}

#[derive(Debug, Clone, Default)]
pub struct GatewayOptions {
    pub block_reasons: BlockReasons,
    pub timestamping: Timestamping,
    pub splitter: SentenceSplitter,
}

struct Snapshot {
    classifier: Option<Arc<dyn QueryClassifier>>,
    model_generation: u64,
    rules: Arc<CompiledRuleSet>,
    rule_sources: Arc<Vec<Rule>>,
}

pub struct Gateway {
    active: RwLock<Arc<Snapshot>>,
    reload_lock: Mutex<()>,
    log: Arc<dyn DecisionLog>,
    known_ids: Mutex<HashSet<String>>,
    feedback: Mutex<Vec<FeedbackReport>>,
    options: GatewayOptions,
    id_prefix: String,
    next_id: AtomicU64,
}

impl Gateway {
    /// Creates a gateway with no model and an empty rule set. Query ids
    /// already present in the log are accepted for feedback.
    pub fn new(log: Arc<dyn DecisionLog>, options: GatewayOptions) -> Result<Self, GatewayError> {
        let known_ids = log.read_all()?.into_iter().map(|d| d.query_id).collect();
        let rules = compile_rules_with(&[], 0, options.splitter.clone())?;
        Ok(Gateway {
            active: RwLock::new(Arc::new(Snapshot {
                classifier: None,
                model_generation: 0,
                rules: Arc::new(rules),
                rule_sources: Arc::new(Vec::new()),
            })),
            reload_lock: Mutex::new(()),
            log,
            known_ids: Mutex::new(known_ids),
            feedback: Mutex::new(Vec::new()),
            options,
            id_prefix: format!("q{:x}", Utc::now().timestamp_millis()),
            next_id: AtomicU64::new(0),
        })
    }

    pub fn options(&self) -> &GatewayOptions {
        &self.options
    }

    pub fn versions(&self) -> ActiveVersions {
        let snap = self.active.read().clone();
        ActiveVersions {
            model_version: snap.classifier.as_ref().map(|c| c.model_version().to_string()),
            model_generation: snap.model_generation,
            ruleset_version: snap.rules.version(),
        }
    }

    /// Source rules of the active rule set, including disabled ones.
    pub fn rules(&self) -> Vec<Rule> {
        self.active.read().rule_sources.as_ref().clone()
    }

    pub fn log(&self) -> &Arc<dyn DecisionLog> {
        &self.log
    }

    pub fn decisions(&self) -> Result<Vec<Decision>, GatewayError> {
        Ok(self.log.read_all()?)
    }

    /// A fresh query id for callers that did not supply one.
    pub fn generate_query_id(&self) -> String {
        format!("{}-{}", self.id_prefix, self.next_id.fetch_add(1, Ordering::Relaxed))
    }

    /// Classifies, applies rules, and logs the decision before returning it.
    ///
    /// The active snapshot stays pinned until the record is in the log, so a
    /// concurrent reload waits for in-flight decisions and versions never go
    /// backwards in the log.
    pub fn decide(&self, query: &QueryRecord) -> Result<Decision, GatewayError> {
        if query.text.trim().is_empty() {
            return Err(GatewayError::InvalidQuery("text is empty".into()));
        }
        if query.query_id.is_empty() {
            return Err(GatewayError::InvalidQuery("query_id is empty".into()));
        }
        let guard = self.active.read();
        let snap: &Snapshot = &guard;
        let classifier = snap.classifier.as_ref().ok_or(GatewayError::NotReady)?;

        let prediction = classifier.predict(&query.text)?;
        let matches = match_rules(&snap.rules, &query.text);
        let adjusted = apply_adjustment(&prediction, &matches);
        let blocked = adjusted.label.is_sensitive();
        let decision = Decision {
            query_id: query.query_id.clone(),
            text: query.text.clone(),
            label: adjusted.label,
            source: adjusted.source,
            scores: prediction.scores,
            cue_prefix: cue_prefix(adjusted.label),
            blocked,
            block_reason: blocked.then(|| self.options.block_reasons.get(adjusted.label).to_string()),
            model_version: prediction.model_version,
            model_generation: snap.model_generation,
            ruleset_version: snap.rules.version(),
            decided_at: match self.options.timestamping {
                Timestamping::Wall => Utc::now(),
                Timestamping::ReceivedAt => query.received_at,
            },
        };
        self.log.append(&decision)?;
        drop(guard);
        self.known_ids.lock().insert(decision.query_id.clone());
        Ok(decision)
    }

    /// Stores a user report against a logged decision. Duplicate reports are
    /// all kept.
    pub fn record_feedback(&self, report: FeedbackReport) -> Result<Acknowledgment, GatewayError> {
        if !self.known_ids.lock().contains(&report.query_id) {
            return Err(GatewayError::UnknownQueryId(report.query_id));
        }
        let mut queue = self.feedback.lock();
        queue.push(report);
        Ok(Acknowledgment { accepted: true, queue_len: queue.len() })
    }

    pub fn feedback_queue_len(&self) -> usize {
        self.feedback.lock().len()
    }

    pub fn feedback_reports(&self) -> Vec<FeedbackReport> {
        self.feedback.lock().clone()
    }

    /// Removes and returns queued reports for hand-off to review.
    pub fn take_feedback(&self) -> Vec<FeedbackReport> {
        std::mem::take(&mut *self.feedback.lock())
    }

    /// Swaps in a new model and/or rule list. Rules are compiled before the
    /// swap; on any error the active versions are untouched.
    pub fn reload(
        &self,
        model: Option<Arc<dyn QueryClassifier>>,
        rules: Option<Vec<Rule>>,
    ) -> Result<ActiveVersions, GatewayError> {
        if model.is_none() && rules.is_none() {
            return Err(GatewayError::NothingToReload);
        }
        let _serial = self.reload_lock.lock();
        let current = self.active.read().clone();

        let (compiled, sources) = match rules {
            Some(rules) => {
                let compiled = compile_rules_with(&rules, current.rules.version() + 1, self.options.splitter.clone())?;
                (Arc::new(compiled), Arc::new(rules))
            }
            None => (current.rules.clone(), current.rule_sources.clone()),
        };
        let (classifier, generation) = match model {
            Some(m) => (Some(m), current.model_generation + 1),
            None => (current.classifier.clone(), current.model_generation),
        };
        let next = Arc::new(Snapshot { classifier, model_generation: generation, rules: compiled, rule_sources: sources });
        *self.active.write() = next;
        drop(current);
        Ok(self.versions())
    }

    pub fn load_model(&self, model: Arc<dyn QueryClassifier>) -> Result<ActiveVersions, GatewayError> {
        self.reload(Some(model), None)
    }

    pub fn load_rules(&self, rules: Vec<Rule>) -> Result<ActiveVersions, GatewayError> {
        self.reload(None, Some(rules))
    }
}
