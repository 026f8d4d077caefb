use serde::{Deserialize, Serialize};

use super::dataset::LabeledExample;
use super::{ClassifierError, QueryClassifier};
use crate::taxonomy::{Category, NUM_CATEGORIES};

/// Counts indexed `[true ordinal][predicted ordinal]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CATEGORIES]; NUM_CATEGORIES],
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: Category, predicted: Category) {
        self.add(truth, predicted, 1);
    }

    pub fn add(&mut self, truth: Category, predicted: Category, count: u64) {
        self.counts[truth.ordinal()][predicted.ordinal()] += count;
    }

    pub fn get(&self, truth: Category, predicted: Category) -> u64 {
        self.counts[truth.ordinal()][predicted.ordinal()]
    }

    pub fn row_total(&self, truth: Category) -> u64 {
        self.counts[truth.ordinal()].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..NUM_CATEGORIES).map(|i| self.counts[i][i]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Per true category: correct / items; `None` when the category has no
    /// test items.
    pub per_category_accuracy: [Option<f64>; NUM_CATEGORIES],
    /// Correct `safe` predictions over all `safe`-labeled items.
    pub safe_recall: Option<f64>,
    /// Exact-category accuracy over sensitive-labeled items.
    pub category_accuracy: Option<f64>,
    pub overall_accuracy: f64,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self, ClassifierError> {
        let total = confusion.total();
        if total == 0 {
            return Err(ClassifierError::EmptyDataset);
        }
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        let per_category_accuracy =
            Category::ALL.map(|c| ratio(confusion.get(c, c), confusion.row_total(c)));
        let sensitive_total: u64 = Category::sensitive().map(|c| confusion.row_total(c)).sum();
        let sensitive_correct: u64 = Category::sensitive().map(|c| confusion.get(c, c)).sum();
        Ok(EvalReport {
            per_category_accuracy,
            safe_recall: per_category_accuracy[Category::Safe.ordinal()],
            category_accuracy: ratio(sensitive_correct, sensitive_total),
            overall_accuracy: confusion.correct() as f64 / total as f64,
            confusion,
        })
    }
}

pub fn evaluate<C: QueryClassifier + ?Sized>(
    classifier: &C,
    testset: &[LabeledExample],
) -> Result<EvalReport, ClassifierError> {
    if testset.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let mut confusion = ConfusionMatrix::default();
    for example in testset {
        let prediction = classifier.predict(&example.text)?;
        confusion.record(example.label, prediction.label);
    }
    EvalReport::from_confusion(confusion)
}
