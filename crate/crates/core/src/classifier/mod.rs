//! Frozen featurizer plus a trainable 13-way linear head.

mod dataset;
mod eval;
mod features;
mod format;
mod head;
mod remote;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{
    read_dataset, resample_to_distribution, write_dataset, DatasetError, LabeledExample, Origin, ResampleError,
    TargetDistribution,
};
pub use eval::{evaluate, ConfusionMatrix, EvalReport};
pub use features::{hash_ngrams, Featurizer, FeaturizerConfig, HashingConfig, SparseVector};
pub use format::{decode_model, encode_model, read_model, scalar_width, write_model, ModelFileError};
pub use head::{LinearHead, Scores};
pub use remote::{FeatureRequest, FeatureResponse, RemoteConfig, RemoteFeaturizer};
pub use train::{
    continue_training, gradient, objective, train, train_features, Gradient, Hyperparams, TrainError, TrainingSet,
};

use crate::scalar::Scalar;
use crate::taxonomy::Category;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifierError {
    #[error("feature dimension {actual} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("remote featurizer unavailable: {0}")]
    RemoteFeaturizerUnavailable(String),
    #[error("invalid feature vector: {0}")]
    InvalidFeatures(String),
    #[error("invalid model weights: {0}")]
    InvalidWeights(String),
    #[error("invalid featurizer config: {0}")]
    InvalidConfig(String),
    #[error("model was trained with featurizer {model}, not {featurizer}")]
    FeaturizerMismatch { model: String, featurizer: String },
    #[error("dataset is empty")]
    EmptyDataset,
}

/// 1-best output of a classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Category,
    pub scores: Scores<f64>,
    pub model_version: String,
}

/// Anything that can stand in the gateway's classifier slot.
pub trait QueryClassifier: Send + Sync {
    fn model_version(&self) -> &str;

    fn predict(&self, text: &str) -> Result<Prediction, ClassifierError>;
}

/// A trained head paired with the featurizer it was trained against.
#[derive(Debug, Clone)]
pub struct LinearModel<T> {
    head: LinearHead<T>,
    featurizer: Featurizer,
}

impl<T: Scalar> LinearModel<T> {
    pub fn new(head: LinearHead<T>, featurizer: Featurizer) -> Result<Self, ClassifierError> {
        let hash = featurizer.config_hash();
        if head.featurizer_config_hash != hash {
            return Err(ClassifierError::FeaturizerMismatch {
                model: head.featurizer_config_hash.clone(),
                featurizer: hash,
            });
        }
        if head.dimension() != featurizer.dimension() {
            return Err(ClassifierError::DimensionMismatch {
                expected: head.dimension(),
                actual: featurizer.dimension(),
            });
        }
        Ok(LinearModel { head, featurizer })
    }

    /// Loads a model file and instantiates the featurizer it embeds.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelFileError> {
        let (head, config) = decode_model::<T>(bytes)?;
        let featurizer = Featurizer::from_config(&config).map_err(|e| ModelFileError::Invalid(e.to_string()))?;
        LinearModel::new(head, featurizer).map_err(|e| ModelFileError::Invalid(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_model(&self.head, &self.featurizer.config())
    }

    pub fn head(&self) -> &LinearHead<T> {
        &self.head
    }

    pub fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    pub fn score(&self, text: &str) -> Result<Scores<T>, ClassifierError> {
        self.head.score(&self.featurizer.featurize(text)?)
    }
}

impl<T: Scalar> QueryClassifier for LinearModel<T> {
    fn model_version(&self) -> &str {
        &self.head.model_version
    }

    fn predict(&self, text: &str) -> Result<Prediction, ClassifierError> {
        let scores = self.score(text)?;
        Ok(Prediction {
            label: scores.argmax(),
            scores: scores.to_f64(),
            model_version: self.head.model_version.clone(),
        })
    }
}

/// `argmax(score(featurize(text)))` with the lowest-ordinal tie-break.
pub fn predict<T: Scalar>(
    head: &LinearHead<T>,
    featurizer: &Featurizer,
    text: &str,
) -> Result<Prediction, ClassifierError> {
    let scores = head.score(&featurizer.featurize(text)?)?;
    Ok(Prediction {
        label: scores.argmax(),
        scores: scores.to_f64(),
        model_version: head.model_version.clone(),
    })
}
