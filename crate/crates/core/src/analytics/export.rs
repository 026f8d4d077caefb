//! Comma-separated and plot-ready renderings of analytics results.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{distribution, CorrelationMatrix, DailyBucket, DistributionSnapshot, KeywordReport, Scope};
use crate::taxonomy::{Category, NUM_SENSITIVE};

fn sensitive_ids() -> impl Iterator<Item = &'static str> {
    Category::sensitive().map(|c| c.id())
}

fn finish(writer: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(writer.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

/// `date,weekday,total,sensitive,<category ids...>`
pub fn buckets_csv(buckets: &[DailyBucket]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["date".to_string(), "weekday".into(), "total_queries".into(), "sensitive_queries".into()];
    header.extend(sensitive_ids().map(String::from));
    w.write_record(&header).expect("in-memory write");
    for b in buckets {
        let mut row = vec![b.date.to_string(), b.weekday().to_string(), b.total_queries.to_string(), b.sensitive_queries.to_string()];
        row.extend(b.per_category.iter().map(u64::to_string));
        w.write_record(&row).expect("in-memory write");
    }
    finish(w)
}

/// One row per category: `category,count,share` for each snapshot.
pub fn distribution_csv(snapshot: &DistributionSnapshot) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["category", "count", "share"]).expect("in-memory write");
    for (i, id) in sensitive_ids().enumerate() {
        w.write_record([id.to_string(), snapshot.counts[i].to_string(), format!("{:.4}", snapshot.shares[i])])
            .expect("in-memory write");
    }
    finish(w)
}

/// Square matrix with category ids on both axes; empty cells are undefined.
pub fn correlation_csv(matrix: &CorrelationMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![String::new()];
    header.extend(sensitive_ids().map(String::from));
    w.write_record(&header).expect("in-memory write");
    for (i, id) in sensitive_ids().enumerate() {
        let mut row = vec![id.to_string()];
        row.extend(matrix.values[i].iter().map(|v| v.map(|r| format!("{r:.6}")).unwrap_or_default()));
        w.write_record(&row).expect("in-memory write");
    }
    finish(w)
}

pub fn keywords_csv(report: &KeywordReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", "term", "count", "new_on_max_day"]).expect("in-memory write");
    for (i, t) in report.ranked.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            t.term.clone(),
            t.count.to_string(),
            report.new_on_max_day.contains(&t.term).to_string(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativePoint {
    pub date: NaiveDate,
    pub shares: [f64; NUM_SENSITIVE],
}

/// Cumulative distribution after each date; dates before the first
/// sensitive query are omitted.
pub fn cumulative_series(buckets: &[DailyBucket]) -> Vec<CumulativePoint> {
    buckets
        .iter()
        .filter_map(|b| {
            distribution(buckets, Scope::CumulativeTo { date: b.date })
                .ok()
                .map(|s| CumulativePoint { date: b.date, shares: s.shares })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::tests::{at, decision};
    use crate::analytics::{bucketize_decisions, category_correlation};
    use crate::rules::DecisionSource;

    #[test]
    fn csv_shapes() {
        let decisions: Vec<_> = (0..30)
            .map(|i| decision("q", "t", Category::ALL[i % 13], DecisionSource::Model, at(1 + (i % 3) as u32, 1)))
            .collect();
        let buckets = bucketize_decisions(&decisions);
        let text = buckets_csv(&buckets);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("date,weekday,total_queries,sensitive_queries,felony_crimes"));
        assert_eq!(lines[0].split(',').count(), 16);

        let dist = distribution(&buckets, Scope::Overall).unwrap();
        assert_eq!(distribution_csv(&dist).lines().count(), 13);
        let corr = correlation_csv(&category_correlation(&buckets).unwrap());
        assert_eq!(corr.lines().count(), 13);

        let series = cumulative_series(&buckets);
        assert_eq!(series.len(), 3);
        assert_eq!(series[2].shares, dist.shares);
    }
}
