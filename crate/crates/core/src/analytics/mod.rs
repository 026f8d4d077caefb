//! Batch analyses over the decision log. Everything here is a pure function
//! of its input; counts come from final (post-rule) labels.

mod export;
mod keywords;

use std::collections::BTreeMap;
use std::io::BufRead;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use export::{
    buckets_csv, correlation_csv, cumulative_series, distribution_csv, keywords_csv, CumulativePoint,
};
pub use keywords::{extract_keywords, KeywordReport, SimpleTokenizer, TermCount, Tokenizer, DEFAULT_STOPLIST};

use crate::gateway::{read_decision_log, Decision, StorageError};
use crate::taxonomy::{Category, NUM_SENSITIVE};

pub const DEFAULT_EVENT_DAYS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("corrupt decision record at line {line}: {reason}")]
    CorruptRecord { line: usize, reason: String },
    #[error("log read failed: {0}")]
    Read(String),
    #[error("no buckets")]
    EmptyInput,
    #[error("no sensitive queries in scope")]
    EmptyScope,
    #[error("scope {0} is outside the bucket range")]
    ScopeOutOfRange(String),
    #[error("need at least two dates, got {0}")]
    InsufficientData(usize),
}

impl From<StorageError> for AnalyticsError {
    fn from(e: StorageError) -> Self {
        match e {
            StorageError::CorruptRecord { line, reason } => AnalyticsError::CorruptRecord { line, reason },
            other => AnalyticsError::Read(other.to_string()),
        }
    }
}

/// Counts for one UTC calendar day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyBucket {
    pub date: NaiveDate,
    pub total_queries: u64,
    pub sensitive_queries: u64,
    /// Indexed by sensitive category ordinal.
    pub per_category: [u64; NUM_SENSITIVE],
}

impl DailyBucket {
    pub fn new(date: NaiveDate) -> Self {
        DailyBucket { date, total_queries: 0, sensitive_queries: 0, per_category: [0; NUM_SENSITIVE] }
    }

    pub fn weekday(&self) -> Weekday {
        self.date.weekday()
    }

    pub fn record(&mut self, label: Category) {
        self.total_queries += 1;
        if label.is_sensitive() {
            self.sensitive_queries += 1;
            self.per_category[label.ordinal()] += 1;
        }
    }

    pub fn merge(&mut self, other: &DailyBucket) {
        debug_assert_eq!(self.date, other.date);
        self.total_queries += other.total_queries;
        self.sensitive_queries += other.sensitive_queries;
        for (a, b) in self.per_category.iter_mut().zip(other.per_category) {
            *a += b;
        }
    }

    pub fn count(&self, category: Category) -> u64 {
        if category.is_safe() {
            self.total_queries - self.sensitive_queries
        } else {
            self.per_category[category.ordinal()]
        }
    }
}

pub fn bucketize_decisions<'a>(decisions: impl IntoIterator<Item = &'a Decision>) -> Vec<DailyBucket> {
    let mut by_date: BTreeMap<NaiveDate, DailyBucket> = BTreeMap::new();
    for d in decisions {
        let date = d.decided_at.date_naive();
        by_date.entry(date).or_insert_with(|| DailyBucket::new(date)).record(d.label);
    }
    by_date.into_values().collect()
}

/// Parses a decision log and buckets it by date.
pub fn bucketize(log: impl BufRead) -> Result<Vec<DailyBucket>, AnalyticsError> {
    let decisions = read_decision_log(log)?;
    Ok(bucketize_decisions(&decisions))
}

/// Date-wise sum of two bucket lists.
pub fn merge_buckets(a: &[DailyBucket], b: &[DailyBucket]) -> Vec<DailyBucket> {
    let mut by_date: BTreeMap<NaiveDate, DailyBucket> = BTreeMap::new();
    for bucket in a.iter().chain(b) {
        by_date
            .entry(bucket.date)
            .and_modify(|m| m.merge(bucket))
            .or_insert_with(|| bucket.clone());
    }
    by_date.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DateValue {
    pub date: NaiveDate,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRatios {
    /// Earliest date with the maximum volume.
    pub peak_date: NaiveDate,
    pub peak_volume: u64,
    pub ratios: Vec<DateValue>,
}

/// Daily volume divided by the maximum daily volume.
pub fn daily_volume_ratio(buckets: &[DailyBucket]) -> Result<VolumeRatios, AnalyticsError> {
    let mut peak: Option<&DailyBucket> = None;
    for b in buckets {
        if peak.is_none_or(|p| b.total_queries > p.total_queries || (b.total_queries == p.total_queries && b.date < p.date)) {
            peak = Some(b);
        }
    }
    let peak = peak.ok_or(AnalyticsError::EmptyInput)?;
    let max = peak.total_queries as f64;
    let ratios = buckets
        .iter()
        .map(|b| DateValue { date: b.date, value: if max > 0.0 { b.total_queries as f64 / max } else { 0.0 } })
        .collect();
    Ok(VolumeRatios { peak_date: peak.date, peak_volume: peak.total_queries, ratios })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatePercent {
    pub date: NaiveDate,
    /// `None` for a date with no queries.
    pub percent: Option<f64>,
}

/// Sensitive share of each day's volume, in percent.
pub fn sensitive_ratio(buckets: &[DailyBucket]) -> Vec<DatePercent> {
    buckets
        .iter()
        .map(|b| DatePercent {
            date: b.date,
            percent: (b.total_queries > 0).then(|| b.sensitive_queries as f64 * 100.0 / b.total_queries as f64),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scope {
    Date { date: NaiveDate },
    CumulativeTo { date: NaiveDate },
    Overall,
    Window { start: NaiveDate, days: usize },
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scope::Date { date } => write!(f, "date {date}"),
            Scope::CumulativeTo { date } => write!(f, "cumulative to {date}"),
            Scope::Overall => f.write_str("overall"),
            Scope::Window { start, days } => write!(f, "{days} days from {start}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSnapshot {
    pub scope: Scope,
    pub sensitive_queries: u64,
    /// Indexed by sensitive category ordinal.
    pub counts: [u64; NUM_SENSITIVE],
    /// Percent of `sensitive_queries`, same indexing.
    pub shares: [f64; NUM_SENSITIVE],
}

impl DistributionSnapshot {
    fn from_counts(scope: Scope, counts: [u64; NUM_SENSITIVE]) -> Result<Self, AnalyticsError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(AnalyticsError::EmptyScope);
        }
        let shares = counts.map(|c| c as f64 * 100.0 / total as f64);
        Ok(DistributionSnapshot { scope, sensitive_queries: total, counts, shares })
    }

    pub fn share(&self, category: Category) -> f64 {
        self.shares[category.ordinal()]
    }
}

/// Per-category share of sensitive queries within `scope`.
pub fn distribution(buckets: &[DailyBucket], scope: Scope) -> Result<DistributionSnapshot, AnalyticsError> {
    let (Some(first), Some(last)) = (buckets.first(), buckets.last()) else {
        return Err(AnalyticsError::EmptyInput);
    };
    let in_range = |d: NaiveDate| d >= first.date && d <= last.date;
    let keep: Box<dyn Fn(NaiveDate) -> bool> = match scope {
        Scope::Date { date } => {
            if !in_range(date) {
                return Err(AnalyticsError::ScopeOutOfRange(scope.to_string()));
            }
            Box::new(move |d| d == date)
        }
        Scope::CumulativeTo { date } => {
            if !in_range(date) {
                return Err(AnalyticsError::ScopeOutOfRange(scope.to_string()));
            }
            Box::new(move |d| d <= date)
        }
        Scope::Overall => Box::new(|_| true),
        Scope::Window { start, days } => {
            let end = start + Duration::days(days as i64 - 1);
            if days == 0 || !in_range(start) || !in_range(end) {
                return Err(AnalyticsError::ScopeOutOfRange(scope.to_string()));
            }
            Box::new(move |d| d >= start && d <= end)
        }
    };
    let mut counts = [0u64; NUM_SENSITIVE];
    for b in buckets.iter().filter(|b| keep(b.date)) {
        for (c, n) in counts.iter_mut().zip(b.per_category) {
            *c += n;
        }
    }
    DistributionSnapshot::from_counts(scope, counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventWindowReport {
    pub window: DistributionSnapshot,
    pub overall: DistributionSnapshot,
    /// Window share minus overall share, in percentage points.
    pub delta: [f64; NUM_SENSITIVE],
}

/// Distribution over `[start, start + days)` compared with the overall one.
pub fn event_window(
    buckets: &[DailyBucket],
    start: NaiveDate,
    days: Option<usize>,
) -> Result<EventWindowReport, AnalyticsError> {
    let days = days.unwrap_or(DEFAULT_EVENT_DAYS);
    let window = distribution(buckets, Scope::Window { start, days })?;
    let overall = distribution(buckets, Scope::Overall)?;
    let delta = std::array::from_fn(|i| window.shares[i] - overall.shares[i]);
    Ok(EventWindowReport { window, overall, delta })
}

/// Pearson coefficients between daily per-category count series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub dates: usize,
    /// `None` where either series has zero variance.
    pub values: [[Option<f64>; NUM_SENSITIVE]; NUM_SENSITIVE],
}

impl CorrelationMatrix {
    pub fn get(&self, a: Category, b: Category) -> Option<f64> {
        self.values[a.ordinal()][b.ordinal()]
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn category_correlation(buckets: &[DailyBucket]) -> Result<CorrelationMatrix, AnalyticsError> {
    if buckets.len() < 2 {
        return Err(AnalyticsError::InsufficientData(buckets.len()));
    }
    let series: Vec<Vec<f64>> = (0..NUM_SENSITIVE)
        .map(|c| buckets.iter().map(|b| b.per_category[c] as f64).collect())
        .collect();
    let mut values = [[None; NUM_SENSITIVE]; NUM_SENSITIVE];
    for i in 0..NUM_SENSITIVE {
        let varies = pearson(&series[i], &series[i]).is_some();
        values[i][i] = varies.then_some(1.0);
        for j in i + 1..NUM_SENSITIVE {
            let r = pearson(&series[i], &series[j]);
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix { dates: buckets.len(), values })
}
