use std::collections::HashMap;

use chrono::{NaiveDate, TimeZone, Utc};
use cueguard_core::classifier::Scores;
use cueguard_core::feedback::sample_for_review;
use cueguard_core::gateway::{cue_prefix, Decision};
use cueguard_core::rules::DecisionSource;
use cueguard_core::taxonomy::Category;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn decisions(n: usize) -> Vec<Decision> {
    (0..n)
        .map(|i| {
            let label = Category::ALL[i % 12];
            Decision {
                query_id: format!("q{i}"),
                text: format!("text {i}"),
                label,
                source: DecisionSource::Model,
                scores: Scores::certain(label),
                cue_prefix: cue_prefix(label),
                blocked: true,
                block_reason: None,
                model_version: "m".into(),
                model_generation: 1,
                ruleset_version: 0,
                decided_at: Utc.with_ymd_and_hms(2024, 5, 2, 0, 0, 0).unwrap() + chrono::Duration::seconds(i as i64),
            }
        })
        .collect()
}

#[test]
fn sampling_is_uniform_over_seeds() {
    let pool = decisions(10_000);
    let date = NaiveDate::from_ymd_opt(2024, 5, 2).unwrap();
    let mut hits: HashMap<String, u64> = HashMap::new();
    let seeds = 1000;
    for seed in 0..seeds {
        let s = sample_for_review(&pool, date, 50, seed);
        assert_eq!(s.len(), 50);
        for x in s {
            *hits.entry(x.query_id).or_insert(0) += 1;
        }
    }
    let expected = (seeds * 50) as f64 / pool.len() as f64;
    let chi2: f64 = pool
        .iter()
        .map(|d| {
            let o = *hits.get(&d.query_id).unwrap_or(&0) as f64;
            (o - expected).powi(2) / expected
        })
        .sum();
    let dist = ChiSquared::new((pool.len() - 1) as f64).unwrap();
    let p = 1.0 - dist.cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}");
}

#[test]
fn sampling_never_returns_safe() {
    let mut pool = decisions(500);
    for d in pool.iter_mut().step_by(3) {
        d.label = Category::Safe;
    }
    let date = NaiveDate::from_ymd_opt(2024, 5, 2).unwrap();
    for seed in 0..50 {
        assert!(sample_for_review(&pool, date, 50, seed).iter().all(|s| s.decision.label.is_sensitive()));
    }
}
