//! HTTP featurizer backend.
//!
//! Wire contract: `POST <url>` with `{"text": "..."}`, answered by
//! `{"dimension": D, "entries": [[index, weight], ...]}`.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::features::SparseVector;
use super::ClassifierError;
use crate::scalar::Scalar;

fn default_timeout_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub url: String,
    pub dimension: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

#[derive(Debug, Serialize)]
pub struct FeatureRequest<'a> {
    pub text: &'a str,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureResponse {
    pub dimension: usize,
    pub entries: Vec<(usize, f64)>,
}

#[derive(Clone)]
pub struct RemoteFeaturizer {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl fmt::Debug for RemoteFeaturizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteFeaturizer").field("config", &self.config).finish()
    }
}

impl RemoteFeaturizer {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        RemoteFeaturizer { config, agent }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    pub fn featurize<T: Scalar>(&self, text: &str) -> Result<SparseVector<T>, ClassifierError> {
        let unavailable = |e: &dyn fmt::Display| ClassifierError::RemoteFeaturizerUnavailable(e.to_string());
        let mut response = self
            .agent
            .post(&self.config.url)
            .send_json(FeatureRequest { text })
            .map_err(|e| unavailable(&e))?;
        let body: FeatureResponse = response.body_mut().read_json().map_err(|e| unavailable(&e))?;
        if body.dimension != self.config.dimension {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.config.dimension,
                actual: body.dimension,
            });
        }
        let mut entries = body.entries;
        entries.sort_by_key(|&(i, _)| i);
        SparseVector::new(
            body.dimension,
            entries.into_iter().map(|(i, w)| (i, T::from_f64_lossy(w))).collect(),
        )
    }
}
