#![allow(dead_code)]

use cueguard_core::classifier::{
    gradient, objective, Featurizer, LabeledExample, LinearHead, Origin, SparseVector,
};
use cueguard_core::taxonomy::{Category, NUM_CATEGORIES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rows = Vec<(SparseVector<f64>, Category)>;

/// A random small instance: head, rows and L2 strength.
pub fn random_instance(seed: u64) -> (LinearHead<f64>, Rows, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(4..=64);
    let weights = (0..NUM_CATEGORIES * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let bias = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let head = LinearHead::from_parts(d, weights, bias, "fd", "fd").unwrap();
    let rows = (0..rng.gen_range(1..6))
        .map(|_| {
            let mut idx: Vec<usize> = (0..d).filter(|_| rng.gen_bool(0.3)).collect();
            if idx.is_empty() {
                idx.push(rng.gen_range(0..d));
            }
            let entries = idx.into_iter().map(|i| (i, rng.gen_range(-2.0..2.0))).collect();
            (SparseVector::new(d, entries).unwrap(), Category::ALL[rng.gen_range(0..NUM_CATEGORIES)])
        })
        .collect();
    (head, rows, rng.gen_range(0.0..0.1))
}

/// Largest relative error between the analytic gradient and central
/// differences, over every bias entry and up to 40 weight entries.
pub fn max_gradient_error(seed: u64) -> f64 {
    let (head, rows, l2) = random_instance(seed);
    let analytic = gradient(&head, &rows, l2).unwrap();
    let d = head.dimension();
    let h = 1e-5;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfd);
    let mut worst: f64 = 0.0;
    for k in 0..NUM_CATEGORIES {
        let mut plus = head.clone();
        plus.bias_mut()[k] += h;
        let mut minus = head.clone();
        minus.bias_mut()[k] -= h;
        let numeric = (objective(&plus, &rows, l2).unwrap() - objective(&minus, &rows, l2).unwrap()) / (2.0 * h);
        worst = worst.max(rel(analytic.bias[k], numeric));
    }
    for _ in 0..40 {
        let (c, j) = (rng.gen_range(0..NUM_CATEGORIES), rng.gen_range(0..d));
        let mut plus = head.clone();
        plus.row_mut(c)[j] += h;
        let mut minus = head.clone();
        minus.row_mut(c)[j] -= h;
        let numeric = (objective(&plus, &rows, l2).unwrap() - objective(&minus, &rows, l2).unwrap()) / (2.0 * h);
        worst = worst.max(rel(analytic.weights[c * d + j], numeric));
    }
    worst
}

/// 20 examples in two classes built from disjoint alphabets.
pub fn toy_separable() -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let felony: Vec<char> = "abcdefg".chars().collect();
    let safe: Vec<char> = "tuvwxyz".chars().collect();
    (0..20)
        .map(|i| {
            let (alphabet, label) = if i % 2 == 0 { (&felony, Category::FelonyCrimes) } else { (&safe, Category::Safe) };
            let text: String = (0..rng.gen_range(3..9)).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
            LabeledExample::new(text, label, Origin::InternalAnnotation).unwrap()
        })
        .collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Plain dense full-batch gradient descent, written independently of the
/// library trainer. Returns (weights row-major 13×d, bias).
pub fn reference_gd(rows: &Rows, d: usize, lr: f64, l2: f64, epochs: usize) -> (Vec<f64>, Vec<f64>) {
    let dense: Vec<Vec<f64>> = rows
        .iter()
        .map(|(x, _)| {
            let mut v = vec![0.0; d];
            for &(j, w) in x.entries() {
                v[j] = w;
            }
            v
        })
        .collect();
    let n = rows.len() as f64;
    let mut w = vec![0.0; NUM_CATEGORIES * d];
    let mut b = vec![0.0; NUM_CATEGORIES];
    for _ in 0..epochs {
        let mut gw: Vec<f64> = w.iter().map(|x| l2 * x).collect();
        let mut gb = vec![0.0; NUM_CATEGORIES];
        for (x, (_, label)) in dense.iter().zip(rows) {
            let logits: Vec<f64> = (0..NUM_CATEGORIES)
                .map(|c| b[c] + (0..d).map(|j| w[c * d + j] * x[j]).sum::<f64>())
                .collect();
            let p = softmax(&logits);
            for c in 0..NUM_CATEGORIES {
                let r = p[c] - if c == label.ordinal() { 1.0 } else { 0.0 };
                gb[c] += r / n;
                for j in 0..d {
                    gw[c * d + j] += r * x[j] / n;
                }
            }
        }
        for (x, g) in w.iter_mut().zip(&gw) {
            *x -= lr * g;
        }
        for (x, g) in b.iter_mut().zip(&gb) {
            *x -= lr * g;
        }
    }
    (w, b)
}

pub fn reference_predict(w: &[f64], b: &[f64], d: usize, x: &SparseVector<f64>) -> Category {
    let logits: Vec<f64> = (0..NUM_CATEGORIES)
        .map(|c| b[c] + x.entries().iter().map(|&(j, v)| w[c * d + j] * v).sum::<f64>())
        .collect();
    let mut best = 0;
    for c in 1..NUM_CATEGORIES {
        if logits[c] > logits[best] {
            best = c;
        }
    }
    Category::ALL[best]
}

pub fn toy_featurizer() -> Featurizer {
    Featurizer::hashing(64)
}
