//! Mini-batch gradient descent for the linear head.
//!
//! Objective: mean softmax cross-entropy plus `l2/2 · ||W||²` (the bias is
//! not penalized). The featurizer is frozen; only `W` and `b` move.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::LabeledExample;
use super::features::{Featurizer, SparseVector};
use super::head::{LinearHead, Scores};
use super::ClassifierError;
use crate::scalar::Scalar;
use crate::taxonomy::{Category, NUM_CATEGORIES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub model_version: String,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.1,
            l2: 1e-4,
            batch_size: 32,
            epochs: 100,
            seed: 0,
            model_version: "model-1".to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("loss became non-finite in epoch {epoch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error(transparent)]
    Features(#[from] ClassifierError),
}

/// Featurized examples sharing one frozen featurizer.
#[derive(Debug, Clone)]
pub struct TrainingSet<T> {
    pub dimension: usize,
    pub featurizer_config_hash: String,
    pub rows: Vec<(SparseVector<T>, Category)>,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn featurize(examples: &[LabeledExample], featurizer: &Featurizer) -> Result<Self, ClassifierError> {
        let rows = examples
            .iter()
            .map(|e| Ok((featurizer.featurize(&e.text)?, e.label)))
            .collect::<Result<Vec<_>, ClassifierError>>()?;
        Ok(TrainingSet {
            dimension: featurizer.dimension(),
            featurizer_config_hash: featurizer.config_hash(),
            rows,
        })
    }
}

/// Featurizes `examples` and fits a head on them.
pub fn train<T: Scalar>(
    examples: &[LabeledExample],
    featurizer: &Featurizer,
    hp: &Hyperparams,
) -> Result<LinearHead<T>, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let set = TrainingSet::featurize(examples, featurizer)?;
    train_features(&set, hp)
}

/// Fits a head from zero initialization.
pub fn train_features<T: Scalar>(set: &TrainingSet<T>, hp: &Hyperparams) -> Result<LinearHead<T>, TrainError> {
    let head = LinearHead::zeros(set.dimension, hp.model_version.clone(), set.featurizer_config_hash.clone());
    continue_training(head, set, hp)
}

/// Runs `hp.epochs` more epochs starting from `head`.
///
/// Weight decay is applied lazily: `W` is held as `scale · V` so a step only
/// touches the rows and columns present in the batch.
pub fn continue_training<T: Scalar>(
    head: LinearHead<T>,
    set: &TrainingSet<T>,
    hp: &Hyperparams,
) -> Result<LinearHead<T>, TrainError> {
    if set.rows.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if hp.batch_size == 0 {
        return Err(TrainError::InvalidHyperparams("batch_size must be positive".into()));
    }
    if hp.learning_rate.is_nan() || hp.learning_rate <= 0.0 || hp.l2.is_nan() || hp.l2 < 0.0 {
        return Err(TrainError::InvalidHyperparams("learning_rate must be > 0 and l2 >= 0".into()));
    }
    if head.dimension != set.dimension {
        return Err(ClassifierError::DimensionMismatch { expected: head.dimension, actual: set.dimension }.into());
    }
    if let Some((x, _)) = set.rows.iter().find(|(x, _)| x.dimension() != set.dimension) {
        return Err(ClassifierError::DimensionMismatch { expected: set.dimension, actual: x.dimension() }.into());
    }

    let lr = T::from_f64_lossy(hp.learning_rate);
    let l2 = T::from_f64_lossy(hp.l2);
    let decay = T::one() - lr * l2;
    let rescale_below = T::from_f64_lossy(1e-4);

    let mut head = LinearHead { model_version: hp.model_version.clone(), ..head };
    let mut scale = T::one();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut order: Vec<usize> = (0..set.rows.len()).collect();
    let n = T::from_usize(set.rows.len()).unwrap();

    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut data_loss = T::zero();

        for batch in order.chunks(hp.batch_size) {
            let inv_batch = lr / T::from_usize(batch.len()).unwrap();
            // residuals computed against the pre-step weights
            let mut residuals = Vec::with_capacity(batch.len());
            for &i in batch {
                let (x, label) = &set.rows[i];
                let mut logits = head.bias;
                for (c, logit) in logits.iter_mut().enumerate() {
                    *logit = *logit + scale * x.dot(head.row(c));
                }
                let p = Scores::from_logits(&logits);
                let py = p.get(*label);
                data_loss = data_loss - py.ln();
                let mut g = p.0;
                g[label.ordinal()] = g[label.ordinal()] - T::one();
                residuals.push((i, g));
            }
            if !data_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch });
            }

            if decay == T::zero() {
                head.weights.iter_mut().for_each(|w| *w = T::zero());
                scale = T::one();
            } else {
                scale = scale * decay;
            }
            let step = inv_batch / scale;
            for (i, g) in &residuals {
                let x = &set.rows[*i].0;
                for (c, &gc) in g.iter().enumerate() {
                    if gc == T::zero() {
                        continue;
                    }
                    let row = head.row_mut(c);
                    for &(j, xj) in x.entries() {
                        row[j] = row[j] - step * gc * xj;
                    }
                }
                for (b, &gc) in head.bias.iter_mut().zip(g.iter()) {
                    *b = *b - inv_batch * gc;
                }
            }
            if scale.abs() < rescale_below {
                head.weights.iter_mut().for_each(|w| *w = *w * scale);
                scale = T::one();
            }
        }

        let sq: T = head.weights.iter().map(|&w| w * w).sum();
        let loss = data_loss / n + l2 * scale * scale * sq / T::from_f64_lossy(2.0);
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch });
        }
    }

    if scale != T::one() {
        head.weights.iter_mut().for_each(|w| *w = *w * scale);
    }
    if head.weights.iter().chain(head.bias.iter()).any(|w| !w.is_finite()) {
        return Err(TrainError::NonFiniteLoss { epoch: hp.epochs.saturating_sub(1) });
    }
    Ok(head)
}

/// Dense gradient of the objective with respect to `W` and `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub weights: Vec<T>,
    pub bias: [T; NUM_CATEGORIES],
}

/// Mean cross-entropy plus `l2/2 · ||W||²` over `rows`.
pub fn objective<T: Scalar>(head: &LinearHead<T>, rows: &[(SparseVector<T>, Category)], l2: T) -> Result<T, ClassifierError> {
    let mut total = T::zero();
    for (x, label) in rows {
        let p = head.score(x)?;
        total = total - p.get(*label).ln();
    }
    let sq: T = head.weights.iter().map(|&w| w * w).sum();
    Ok(total / T::from_usize(rows.len()).unwrap() + l2 * sq / T::from_f64_lossy(2.0))
}

/// Analytic gradient of [`objective`].
pub fn gradient<T: Scalar>(
    head: &LinearHead<T>,
    rows: &[(SparseVector<T>, Category)],
    l2: T,
) -> Result<Gradient<T>, ClassifierError> {
    let d = head.dimension;
    let n = T::from_usize(rows.len()).unwrap();
    let mut weights: Vec<T> = head.weights.iter().map(|&w| l2 * w).collect();
    let mut bias = [T::zero(); NUM_CATEGORIES];
    for (x, label) in rows {
        let mut g = head.score(x)?.0;
        g[label.ordinal()] = g[label.ordinal()] - T::one();
        for (c, &gc) in g.iter().enumerate() {
            bias[c] = bias[c] + gc / n;
            for &(j, xj) in x.entries() {
                weights[c * d + j] = weights[c * d + j] + gc * xj / n;
            }
        }
    }
    Ok(Gradient { weights, bias })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::dataset::Origin;

    #[test]
    fn empty_dataset() {
        let err = train::<f64>(&[], &Featurizer::hashing(64), &Hyperparams::default()).unwrap_err();
        assert!(matches!(err, TrainError::EmptyDataset));
    }

    #[test]
    fn divergent_learning_rate_is_reported() {
        let examples = vec![
            LabeledExample::new("aaa", Category::FelonyCrimes, Origin::InternalAnnotation).unwrap(),
            LabeledExample::new("zzz", Category::Safe, Origin::InternalAnnotation).unwrap(),
        ];
        let hp = Hyperparams { learning_rate: 1e308, epochs: 50, ..Default::default() };
        let err = train::<f64>(&examples, &Featurizer::hashing(64), &hp).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteLoss { .. }), "{err:?}");
    }

    #[test]
    fn same_seed_same_weights() {
        let examples: Vec<_> = (0..40)
            .map(|i| {
                let label = if i % 2 == 0 { Category::Privacy } else { Category::Safe };
                LabeledExample::new(format!("query {i} {}", label.id()), label, Origin::InternalAnnotation).unwrap()
            })
            .collect();
        let hp = Hyperparams { epochs: 5, seed: 11, ..Default::default() };
        let featurizer = Featurizer::hashing(256);
        let a = train::<f64>(&examples, &featurizer, &hp).unwrap();
        let b = train::<f64>(&examples, &featurizer, &hp).unwrap();
        let bits = |h: &LinearHead<f64>| h.weights().iter().chain(h.bias()).map(|w| w.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.featurizer_config_hash, featurizer.config_hash());
    }

    #[test]
    fn rejects_zero_batch() {
        let set = TrainingSet::<f64> {
            dimension: 4,
            featurizer_config_hash: "h".into(),
            rows: vec![(SparseVector::empty(4), Category::Safe)],
        };
        let hp = Hyperparams { batch_size: 0, ..Default::default() };
        assert!(matches!(train_features(&set, &hp), Err(TrainError::InvalidHyperparams(_))));
    }
}
