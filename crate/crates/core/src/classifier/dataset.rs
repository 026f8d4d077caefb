//! Labeled examples, the line-oriented dataset format and distribution-matched
//! resampling.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{Category, ReferenceDistribution, NUM_CATEGORIES, NUM_SENSITIVE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    PublicCorpus,
    InternalAnnotation,
    RuleDerived,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub label: Category,
    pub origin: Origin,
}

impl LabeledExample {
    pub fn new(text: impl Into<String>, label: Category, origin: Origin) -> Result<Self, DatasetError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(DatasetError::EmptyText { line: None });
        }
        Ok(LabeledExample { text, label, origin })
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("example text is empty{}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    EmptyText { line: Option<usize> },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads one JSON object per line (`text`, `label`, `origin`); blank lines are
/// skipped.
pub fn read_dataset(reader: impl BufRead) -> Result<Vec<LabeledExample>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let example: LabeledExample = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if example.text.trim().is_empty() {
            return Err(DatasetError::EmptyText { line: Some(i + 1) });
        }
        out.push(example);
    }
    Ok(out)
}

pub fn write_dataset<'a>(
    mut writer: impl Write,
    examples: impl IntoIterator<Item = &'a LabeledExample>,
) -> std::io::Result<()> {
    for example in examples {
        serde_json::to_writer(&mut writer, example)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Per-category target shares in percent over all 13 categories.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution {
    pub shares: [f64; NUM_CATEGORIES],
}

impl TargetDistribution {
    /// Sensitive shares taken verbatim, `safe` at zero.
    pub fn from_reference(reference: &ReferenceDistribution) -> Self {
        let mut shares = [0.0; NUM_CATEGORIES];
        shares[..NUM_SENSITIVE].copy_from_slice(&reference.avg);
        TargetDistribution { shares }
    }

    /// `safe` gets `safe_share` percent; the sensitive shares are rescaled to
    /// fill the remaining mass in their reference proportions.
    pub fn with_safe_share(reference: &ReferenceDistribution, safe_share: f64) -> Self {
        let total = reference.avg_sum();
        let mut shares = [0.0; NUM_CATEGORIES];
        for (i, share) in reference.avg.iter().enumerate() {
            shares[i] = share / total * (100.0 - safe_share);
        }
        shares[Category::Safe.ordinal()] = safe_share;
        TargetDistribution { shares }
    }

    pub fn single(category: Category) -> Self {
        let mut shares = [0.0; NUM_CATEGORIES];
        shares[category.ordinal()] = 100.0;
        TargetDistribution { shares }
    }

    /// `round(share × size / 100)` per category.
    pub fn counts(&self, size: usize) -> [usize; NUM_CATEGORIES] {
        self.shares.map(|s| (s * size as f64 / 100.0).round().max(0.0) as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResampleError {
    #[error("corpus has no examples for category {0}")]
    MissingCategoryExamples(Category),
}

/// Draws a dataset whose per-category counts are `round(share × size)`.
///
/// Each category is drawn without replacement while the corpus has enough
/// examples and with replacement for the remainder. The result is shuffled;
/// everything is deterministic under `seed`. Because counts are rounded per
/// category the output length can differ from `size` by a few items when the
/// shares do not sum to exactly 100.
pub fn resample_to_distribution(
    corpus: &[LabeledExample],
    target: &TargetDistribution,
    size: usize,
    seed: u64,
) -> Result<Vec<LabeledExample>, ResampleError> {
    let counts = target.counts(size);
    let mut pools: Vec<Vec<&LabeledExample>> = vec![Vec::new(); NUM_CATEGORIES];
    for example in corpus {
        pools[example.label.ordinal()].push(example);
    }
    for category in Category::ALL {
        if counts[category.ordinal()] > 0 && pools[category.ordinal()].is_empty() {
            return Err(ResampleError::MissingCategoryExamples(category));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(counts.iter().sum());
    for category in Category::ALL {
        let want = counts[category.ordinal()];
        let pool = &pools[category.ordinal()];
        if want == 0 {
            continue;
        }
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut rng);
        let direct = want.min(pool.len());
        out.extend(order[..direct].iter().map(|&i| pool[i].clone()));
        for _ in direct..want {
            out.push(pool[rng.gen_range(0..pool.len())].clone());
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}
