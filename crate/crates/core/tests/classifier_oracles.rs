mod common;

use common::*;
use cueguard_core::classifier::{
    evaluate, predict, train, train_features, ClassifierError, ConfusionMatrix, EvalReport, Hyperparams,
    LabeledExample, Origin, Prediction, QueryClassifier, Scores, TrainingSet,
};
use cueguard_core::taxonomy::{Category, NUM_CATEGORIES};

#[test]
fn gradient_matches_finite_differences() {
    for seed in 0..20 {
        let err = max_gradient_error(seed);
        assert!(err < 1e-4, "instance {seed}: relative error {err:e}");
    }
}

#[test]
fn toy_separable_set_is_learned() {
    let examples = toy_separable();
    let featurizer = toy_featurizer();
    let hp = Hyperparams { epochs: 1000, batch_size: 4, learning_rate: 0.5, ..Default::default() };
    let head = train::<f64>(&examples, &featurizer, &hp).unwrap();
    for e in &examples {
        assert_eq!(predict(&head, &featurizer, &e.text).unwrap().label, e.label, "{}", e.text);
    }

    // the independent dense reference agrees on every training example
    let set = TrainingSet::<f64>::featurize(&examples, &featurizer).unwrap();
    let (w, b) = reference_gd(&set.rows, 64, 0.5, hp.l2, 1000);
    for (x, label) in &set.rows {
        assert_eq!(reference_predict(&w, &b, 64, x), *label);
    }
}

#[test]
fn full_batch_trainer_equals_dense_reference() {
    let examples = toy_separable();
    let featurizer = toy_featurizer();
    let set = TrainingSet::<f64>::featurize(&examples, &featurizer).unwrap();
    let hp = Hyperparams { epochs: 60, batch_size: examples.len(), learning_rate: 0.3, l2: 0.05, ..Default::default() };
    let head = train_features(&set, &hp).unwrap();
    let (w, b) = reference_gd(&set.rows, 64, 0.3, 0.05, 60);
    for (a, r) in head.weights().iter().zip(&w) {
        assert!((a - r).abs() < 1e-9, "{a} vs {r}");
    }
    for (a, r) in head.bias().iter().zip(&b) {
        assert!((a - r).abs() < 1e-9, "{a} vs {r}");
    }
}

#[test]
fn training_leaves_featurizer_alone() {
    let featurizer = toy_featurizer();
    let before = featurizer.config();
    let _ = train::<f64>(&toy_separable(), &featurizer, &Hyperparams { epochs: 3, ..Default::default() }).unwrap();
    assert_eq!(featurizer.config(), before);
}

#[test]
fn f32_and_f64_agree_on_toy_set() {
    let examples = toy_separable();
    let featurizer = toy_featurizer();
    let hp = Hyperparams { epochs: 200, batch_size: 4, learning_rate: 0.5, ..Default::default() };
    let wide = train::<f64>(&examples, &featurizer, &hp).unwrap();
    let narrow = train::<f32>(&examples, &featurizer, &hp).unwrap();
    for e in &examples {
        assert_eq!(
            predict(&wide, &featurizer, &e.text).unwrap().label,
            predict(&narrow, &featurizer, &e.text).unwrap().label
        );
    }
}

/// Predicts the category named before the first `|`.
struct Scripted;

impl QueryClassifier for Scripted {
    fn model_version(&self) -> &str {
        "scripted"
    }
    fn predict(&self, text: &str) -> Result<Prediction, ClassifierError> {
        let label: Category = text.split('|').next().unwrap().parse().unwrap();
        Ok(Prediction { label, scores: Scores::certain(label), model_version: "scripted".into() })
    }
}

fn item(truth: Category, predicted: Category, i: usize) -> LabeledExample {
    LabeledExample::new(format!("{}|{i}", predicted.id()), truth, Origin::InternalAnnotation).unwrap()
}

#[test]
fn safe_recall_on_reported_split() {
    let mut m = ConfusionMatrix::default();
    m.add(Category::Safe, Category::Safe, 157);
    m.add(Category::Safe, Category::Discrimination, 18);
    let report = EvalReport::from_confusion(m).unwrap();
    let recall = report.safe_recall.unwrap() * 100.0;
    assert!((recall - 89.7).abs() < 0.05, "{recall}");
}

#[test]
fn paper_shaped_split_overall_accuracy() {
    // 175 safe (157 right), 125 sensitive spread over the 12 categories
    let mut testset = Vec::new();
    for i in 0..175 {
        let predicted = if i < 157 { Category::Safe } else { Category::ALL[i % 12] };
        testset.push(item(Category::Safe, predicted, i));
    }
    let sensitive = &Category::ALL[..12];
    for i in 0..125 {
        let truth = sensitive[i % 12];
        let predicted = match i % 7 {
            0 => Category::Safe,
            1 => sensitive[(i + 1) % 12],
            _ => truth,
        };
        testset.push(item(truth, predicted, i));
    }
    let report = evaluate(&Scripted, &testset).unwrap();

    let mut correct_safe = 0;
    let mut correct_sensitive = 0;
    let mut per_class = [(0u64, 0u64); NUM_CATEGORIES];
    for e in &testset {
        let predicted = Scripted.predict(&e.text).unwrap().label;
        per_class[e.label.ordinal()].1 += 1;
        if predicted == e.label {
            per_class[e.label.ordinal()].0 += 1;
            if e.label.is_safe() {
                correct_safe += 1;
            } else {
                correct_sensitive += 1;
            }
        }
    }
    assert_eq!(report.overall_accuracy, (correct_safe + correct_sensitive) as f64 / 300.0);
    assert_eq!(report.category_accuracy, Some(correct_sensitive as f64 / 125.0));
    assert_eq!(report.safe_recall, Some(157.0 / 175.0));
    for c in Category::ALL {
        assert_eq!(report.confusion.row_total(c), per_class[c.ordinal()].1);
    }
    // overall accuracy is the class-size-weighted mean of per-class accuracy
    let weighted: f64 = Category::ALL
        .iter()
        .filter_map(|c| report.per_category_accuracy[c.ordinal()].map(|a| a * per_class[c.ordinal()].1 as f64))
        .sum::<f64>()
        / 300.0;
    assert!((weighted - report.overall_accuracy).abs() < 1e-12);
}
