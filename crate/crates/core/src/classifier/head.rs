use serde::{Deserialize, Serialize};

use super::features::SparseVector;
use super::ClassifierError;
use crate::scalar::Scalar;
use crate::taxonomy::{Category, NUM_CATEGORIES};

/// Trainable 13-way linear layer on top of frozen features.
///
/// `weights` is row-major: row `c` holds the `dimension` weights of the
/// category with ordinal `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead<T> {
    pub(crate) dimension: usize,
    pub(crate) weights: Vec<T>,
    pub(crate) bias: [T; NUM_CATEGORIES],
    pub model_version: String,
    pub featurizer_config_hash: String,
}

impl<T: Scalar> LinearHead<T> {
    pub fn zeros(dimension: usize, model_version: impl Into<String>, featurizer_config_hash: impl Into<String>) -> Self {
        LinearHead {
            dimension,
            weights: vec![T::zero(); NUM_CATEGORIES * dimension],
            bias: [T::zero(); NUM_CATEGORIES],
            model_version: model_version.into(),
            featurizer_config_hash: featurizer_config_hash.into(),
        }
    }

    pub fn from_parts(
        dimension: usize,
        weights: Vec<T>,
        bias: [T; NUM_CATEGORIES],
        model_version: impl Into<String>,
        featurizer_config_hash: impl Into<String>,
    ) -> Result<Self, ClassifierError> {
        if weights.len() != NUM_CATEGORIES * dimension {
            return Err(ClassifierError::InvalidWeights(format!(
                "expected {} weights, got {}",
                NUM_CATEGORIES * dimension,
                weights.len()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|w| !w.is_finite()) {
            return Err(ClassifierError::InvalidWeights("non-finite parameter".into()));
        }
        Ok(LinearHead {
            dimension,
            weights,
            bias,
            model_version: model_version.into(),
            featurizer_config_hash: featurizer_config_hash.into(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T; NUM_CATEGORIES] {
        &self.bias
    }

    pub fn row(&self, category: usize) -> &[T] {
        &self.weights[category * self.dimension..(category + 1) * self.dimension]
    }

    pub fn row_mut(&mut self, category: usize) -> &mut [T] {
        let d = self.dimension;
        &mut self.weights[category * d..(category + 1) * d]
    }

    pub fn bias_mut(&mut self) -> &mut [T; NUM_CATEGORIES] {
        &mut self.bias
    }

    /// `W·x + b`.
    pub fn logits(&self, features: &SparseVector<T>) -> Result<[T; NUM_CATEGORIES], ClassifierError> {
        if features.dimension() != self.dimension {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dimension,
                actual: features.dimension(),
            });
        }
        let mut out = self.bias;
        for (c, logit) in out.iter_mut().enumerate() {
            *logit = *logit + features.dot(self.row(c));
        }
        Ok(out)
    }

    /// `softmax(W·x + b)`.
    pub fn score(&self, features: &SparseVector<T>) -> Result<Scores<T>, ClassifierError> {
        Ok(Scores::from_logits(&self.logits(features)?))
    }

    pub fn cast<U: Scalar>(&self) -> LinearHead<U> {
        let conv = |v: &T| U::from_f64_lossy(v.to_f64_lossy());
        LinearHead {
            dimension: self.dimension,
            weights: self.weights.iter().map(conv).collect(),
            bias: self.bias.each_ref().map(conv),
            model_version: self.model_version.clone(),
            featurizer_config_hash: self.featurizer_config_hash.clone(),
        }
    }
}

/// 13-way probability vector indexed by category ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct Scores<T>(pub [T; NUM_CATEGORIES]);

impl<T: Scalar> Scores<T> {
    pub fn uniform() -> Self {
        Scores([T::one() / T::from_usize(NUM_CATEGORIES).unwrap(); NUM_CATEGORIES])
    }

    /// Numerically stable softmax.
    pub fn from_logits(logits: &[T; NUM_CATEGORIES]) -> Self {
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let exps = logits.map(|l| (l - max).exp());
        let total: T = exps.iter().copied().sum();
        Scores(exps.map(|e| e / total))
    }

    /// One-hot on `category`.
    pub fn certain(category: Category) -> Self {
        let mut p = [T::zero(); NUM_CATEGORIES];
        p[category.ordinal()] = T::one();
        Scores(p)
    }

    pub fn get(&self, category: Category) -> T {
        self.0[category.ordinal()]
    }

    pub fn as_array(&self) -> &[T; NUM_CATEGORIES] {
        &self.0
    }

    /// Highest-scoring category; ties go to the lowest ordinal.
    pub fn argmax(&self) -> Category {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        Category::ALL[best]
    }

    pub fn to_f64(&self) -> Scores<f64> {
        Scores(self.0.map(|v| v.to_f64_lossy()))
    }
}
