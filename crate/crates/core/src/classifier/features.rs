use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::remote::{RemoteConfig, RemoteFeaturizer};
use super::ClassifierError;
use crate::scalar::Scalar;

/// Sparse feature vector with strictly increasing indices below `dimension`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector<T> {
    dimension: usize,
    entries: Vec<(usize, T)>,
}

impl<T: Scalar> SparseVector<T> {
    pub fn new(dimension: usize, entries: Vec<(usize, T)>) -> Result<Self, ClassifierError> {
        let mut prev: Option<usize> = None;
        for &(index, weight) in &entries {
            if index >= dimension {
                return Err(ClassifierError::InvalidFeatures(format!(
                    "index {index} out of range for dimension {dimension}"
                )));
            }
            if prev.is_some_and(|p| p >= index) {
                return Err(ClassifierError::InvalidFeatures(
                    "indices must be strictly increasing".into(),
                ));
            }
            if !weight.is_finite() {
                return Err(ClassifierError::InvalidFeatures(format!(
                    "non-finite weight at index {index}"
                )));
            }
            prev = Some(index);
        }
        Ok(SparseVector { dimension, entries })
    }

    pub fn empty(dimension: usize) -> Self {
        SparseVector { dimension, entries: Vec::new() }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[(usize, T)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dot(&self, dense: &[T]) -> T {
        self.entries
            .iter()
            .fold(T::zero(), |acc, &(i, w)| acc + dense[i] * w)
    }

    pub fn norm(&self) -> T {
        self.entries
            .iter()
            .fold(T::zero(), |acc, &(_, w)| acc + w * w)
            .sqrt()
    }

    pub fn cast<U: Scalar>(&self) -> SparseVector<U> {
        SparseVector {
            dimension: self.dimension,
            entries: self
                .entries
                .iter()
                .map(|&(i, w)| (i, U::from_f64_lossy(w.to_f64_lossy())))
                .collect(),
        }
    }
}

/// Settings of the local hashed character n-gram featurizer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashingConfig {
    pub dimension: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub lowercase: bool,
}

impl Default for HashingConfig {
    fn default() -> Self {
        HashingConfig {
            dimension: 1 << 18,
            ngram_min: 1,
            ngram_max: 3,
            lowercase: true,
        }
    }
}

impl HashingConfig {
    pub fn with_dimension(dimension: usize) -> Self {
        HashingConfig { dimension, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeaturizerConfig {
    Hashing(HashingConfig),
    Remote(RemoteConfig),
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig::Hashing(HashingConfig::default())
    }
}

impl FeaturizerConfig {
    pub fn dimension(&self) -> usize {
        match self {
            FeaturizerConfig::Hashing(c) => c.dimension,
            FeaturizerConfig::Remote(c) => c.dimension,
        }
    }

    /// Short content hash identifying this configuration; stored in model
    /// weights so a model is never paired with a different featurizer.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        crate::util::hex(&Sha256::digest(&canonical)[..8])
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        match self {
            FeaturizerConfig::Hashing(c) => {
                if c.dimension == 0 {
                    return Err(ClassifierError::InvalidConfig("dimension must be positive".into()));
                }
                if c.ngram_min == 0 || c.ngram_min > c.ngram_max {
                    return Err(ClassifierError::InvalidConfig(format!(
                        "invalid n-gram range {}..={}",
                        c.ngram_min, c.ngram_max
                    )));
                }
                Ok(())
            }
            FeaturizerConfig::Remote(c) => {
                if c.dimension == 0 {
                    return Err(ClassifierError::InvalidConfig("dimension must be positive".into()));
                }
                Ok(())
            }
        }
    }
}

/// Frozen text-to-features mapping. Training never touches it.
#[derive(Debug, Clone)]
pub enum Featurizer {
    Hashing(HashingConfig),
    Remote(RemoteFeaturizer),
}

impl Featurizer {
    pub fn from_config(config: &FeaturizerConfig) -> Result<Self, ClassifierError> {
        config.validate()?;
        Ok(match config {
            FeaturizerConfig::Hashing(c) => Featurizer::Hashing(c.clone()),
            FeaturizerConfig::Remote(c) => Featurizer::Remote(RemoteFeaturizer::new(c.clone())),
        })
    }

    pub fn hashing(dimension: usize) -> Self {
        Featurizer::Hashing(HashingConfig::with_dimension(dimension))
    }

    pub fn config(&self) -> FeaturizerConfig {
        match self {
            Featurizer::Hashing(c) => FeaturizerConfig::Hashing(c.clone()),
            Featurizer::Remote(r) => FeaturizerConfig::Remote(r.config().clone()),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Featurizer::Hashing(c) => c.dimension,
            Featurizer::Remote(r) => r.config().dimension,
        }
    }

    pub fn config_hash(&self) -> String {
        self.config().config_hash()
    }

    pub fn featurize<T: Scalar>(&self, text: &str) -> Result<SparseVector<T>, ClassifierError> {
        match self {
            Featurizer::Hashing(c) => Ok(hash_ngrams(text, c)),
            Featurizer::Remote(r) => r.featurize(text),
        }
    }
}

// 64-bit FNV-1a; stable across platforms and releases, unlike std's hasher.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Hashed character n-gram counts, L2-normalized.
pub fn hash_ngrams<T: Scalar>(text: &str, config: &HashingConfig) -> SparseVector<T> {
    let normalized;
    let text = if config.lowercase {
        normalized = text.to_lowercase();
        normalized.as_str()
    } else {
        text
    };
    // byte offsets of every char boundary, including the end
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let chars = bounds.len() - 1;

    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for n in config.ngram_min..=config.ngram_max {
        if n > chars {
            break;
        }
        for start in 0..=chars - n {
            let gram = &text.as_bytes()[bounds[start]..bounds[start + n]];
            let index = (fnv1a(gram) % config.dimension as u64) as usize;
            *counts.entry(index).or_insert(0.0) += 1.0;
        }
    }

    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    let entries = counts
        .into_iter()
        .map(|(i, c)| (i, T::from_f64_lossy(c / norm)))
        .collect();
    SparseVector { dimension: config.dimension, entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_text_has_no_entries() {
        let v: SparseVector<f64> = hash_ngrams("", &HashingConfig::default());
        assert!(v.is_empty());
    }

    #[test]
    fn deterministic_and_normalized() {
        let config = HashingConfig::default();
        let a: SparseVector<f64> = hash_ngrams("마약 구매 방법", &config);
        let b: SparseVector<f64> = hash_ngrams("마약 구매 방법", &config);
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        // 8 chars: 8 unigrams + 7 bigrams + 6 trigrams, repeated grams share a bucket
        assert!(a.entries().len() <= 21);
        assert!(SparseVector::new(a.dimension(), a.entries().to_vec()).is_ok());
    }

    #[test]
    fn one_character_edits_change_the_vector() {
        let config = HashingConfig::default();
        let alphabet: Vec<char> = "abcdefghij가나다라마바사 .?".chars().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let len = rng.gen_range(1..20);
            let mut chars: Vec<char> = (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
            let original: String = chars.iter().collect();
            let pos = rng.gen_range(0..len);
            let mut replacement = chars[pos];
            while replacement == chars[pos] {
                replacement = alphabet[rng.gen_range(0..alphabet.len())];
            }
            chars[pos] = replacement;
            let edited: String = chars.iter().collect();
            let a: SparseVector<f64> = hash_ngrams(&original, &config);
            let b: SparseVector<f64> = hash_ngrams(&edited, &config);
            assert_ne!(a, b, "{original:?} vs {edited:?}");
        }
    }

    #[test]
    fn lowercase_folding() {
        let config = HashingConfig::default();
        let a: SparseVector<f64> = hash_ngrams("ABC", &config);
        let b: SparseVector<f64> = hash_ngrams("abc", &config);
        assert_eq!(a, b);
        let raw = HashingConfig { lowercase: false, ..config };
        assert_ne!(hash_ngrams::<f64>("ABC", &raw), hash_ngrams::<f64>("abc", &raw));
    }

    #[test]
    fn sparse_vector_validation() {
        assert!(SparseVector::new(4, vec![(0, 1.0f64), (3, 2.0)]).is_ok());
        assert!(SparseVector::new(4, vec![(3, 1.0f64), (1, 2.0)]).is_err());
        assert!(SparseVector::new(4, vec![(1, 1.0f64), (1, 2.0)]).is_err());
        assert!(SparseVector::new(4, vec![(4, 1.0f64)]).is_err());
        assert!(SparseVector::new(4, vec![(0, f64::NAN)]).is_err());
    }

    #[test]
    fn config_hash_tracks_config() {
        let a = FeaturizerConfig::default();
        let b = FeaturizerConfig::Hashing(HashingConfig::with_dimension(64));
        assert_eq!(a.config_hash(), FeaturizerConfig::default().config_hash());
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 16);
    }

    #[test]
    fn rejects_bad_ngram_range() {
        let bad = FeaturizerConfig::Hashing(HashingConfig { ngram_min: 3, ngram_max: 1, ..Default::default() });
        assert!(Featurizer::from_config(&bad).is_err());
    }
}
