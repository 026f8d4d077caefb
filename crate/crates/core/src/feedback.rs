//! Daily review of sensitive decisions: sampling, verdicts, harm precision,
//! and turning verdicts into draft rules and training examples.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{LabeledExample, Origin};
use crate::gateway::Decision;
use crate::rules::{Rule, SentenceSplitter};
use crate::taxonomy::Category;

pub const DEFAULT_SAMPLE_SIZE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    MustSafe,
    LookSafe,
    Harm,
    CannotDecide,
}

impl Verdict {
    pub const ALL: [Verdict; 4] = [Verdict::MustSafe, Verdict::LookSafe, Verdict::Harm, Verdict::CannotDecide];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::MustSafe => "MustSafe",
            Verdict::LookSafe => "LookSafe",
            Verdict::Harm => "Harm",
            Verdict::CannotDecide => "CannotDecide",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown verdict {0:?}")]
pub struct UnknownVerdict(pub String);

impl FromStr for Verdict {
    type Err = UnknownVerdict;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Verdict::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| UnknownVerdict(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Pending,
    Labeled,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSample {
    pub sample_id: String,
    pub query_id: String,
    pub text: String,
    pub decision: Decision,
    pub sampled_for_date: NaiveDate,
    pub status: SampleStatus,
}

impl ReviewSample {
    pub fn new(decision: &Decision, date: NaiveDate) -> Self {
        ReviewSample {
            sample_id: format!("{date}:{}", decision.query_id),
            query_id: decision.query_id.clone(),
            text: decision.text.clone(),
            decision: decision.clone(),
            sampled_for_date: date,
            status: SampleStatus::Pending,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub sample_id: String,
    pub verdict: Verdict,
    pub reviewer: String,
    pub labeled_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    #[default]
    Uniform,
    /// Round-robin over categories so rare ones are reviewed too.
    StratifiedByCategory,
}

/// Uniform sample without replacement of `date`'s sensitive decisions.
/// Returned in log order.
pub fn sample_for_review(decisions: &[Decision], date: NaiveDate, n: usize, seed: u64) -> Vec<ReviewSample> {
    sample_for_review_with(decisions, date, n, seed, SamplingMode::Uniform)
}

pub fn sample_for_review_with(
    decisions: &[Decision],
    date: NaiveDate,
    n: usize,
    seed: u64,
    mode: SamplingMode,
) -> Vec<ReviewSample> {
    let eligible: Vec<usize> = decisions
        .iter()
        .enumerate()
        .filter(|(_, d)| d.label.is_sensitive() && d.decided_at.date_naive() == date)
        .map(|(i, _)| i)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = match mode {
        SamplingMode::Uniform => eligible.choose_multiple(&mut rng, n).copied().collect(),
        SamplingMode::StratifiedByCategory => {
            let mut by_category: BTreeMap<Category, Vec<usize>> = BTreeMap::new();
            for &i in &eligible {
                by_category.entry(decisions[i].label).or_default().push(i);
            }
            let mut pools: Vec<Vec<usize>> = by_category
                .into_values()
                .map(|mut pool| {
                    pool.shuffle(&mut rng);
                    pool.reverse();
                    pool
                })
                .collect();
            let mut out = Vec::with_capacity(n.min(eligible.len()));
            while out.len() < n && pools.iter().any(|p| !p.is_empty()) {
                for pool in pools.iter_mut() {
                    if out.len() == n {
                        break;
                    }
                    if let Some(i) = pool.pop() {
                        out.push(i);
                    }
                }
            }
            out
        }
    };
    chosen.sort_unstable();
    chosen.into_iter().map(|i| ReviewSample::new(&decisions[i], date)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReviewError {
    #[error("unknown sample {0}")]
    UnknownSample(String),
    #[error("sample already labeled by {0}")]
    AlreadyLabeled(String),
    #[error("sample {0} was skipped")]
    Skipped(String),
    #[error("reviewer name is empty")]
    EmptyReviewer,
}

/// Samples and verdicts. Serializable so it can be kept on disk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReviewStore {
    samples: BTreeMap<String, ReviewSample>,
    records: Vec<ReviewRecord>,
}

impl ReviewStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds samples not already present; returns how many were new.
    pub fn add_samples(&mut self, samples: impl IntoIterator<Item = ReviewSample>) -> usize {
        let mut added = 0;
        for s in samples {
            if !self.samples.contains_key(&s.sample_id) {
                self.samples.insert(s.sample_id.clone(), s);
                added += 1;
            }
        }
        added
    }

    pub fn sample(&self, sample_id: &str) -> Option<&ReviewSample> {
        self.samples.get(sample_id)
    }

    pub fn samples(&self) -> impl Iterator<Item = &ReviewSample> {
        self.samples.values()
    }

    pub fn samples_for(&self, date: NaiveDate) -> Vec<&ReviewSample> {
        self.samples.values().filter(|s| s.sampled_for_date == date).collect()
    }

    pub fn records(&self) -> &[ReviewRecord] {
        &self.records
    }

    pub fn record_verdict(
        &mut self,
        sample_id: &str,
        verdict: Verdict,
        reviewer: &str,
        labeled_at: DateTime<Utc>,
    ) -> Result<ReviewRecord, ReviewError> {
        if reviewer.trim().is_empty() {
            return Err(ReviewError::EmptyReviewer);
        }
        let sample = self
            .samples
            .get_mut(sample_id)
            .ok_or_else(|| ReviewError::UnknownSample(sample_id.to_string()))?;
        match sample.status {
            SampleStatus::Pending => {}
            SampleStatus::Skipped => return Err(ReviewError::Skipped(sample_id.to_string())),
            SampleStatus::Labeled => {
                let by = self
                    .records
                    .iter()
                    .find(|r| r.sample_id == sample_id)
                    .map(|r| r.reviewer.clone())
                    .unwrap_or_default();
                return Err(ReviewError::AlreadyLabeled(by));
            }
        }
        sample.status = SampleStatus::Labeled;
        let record = ReviewRecord {
            sample_id: sample_id.to_string(),
            verdict,
            reviewer: reviewer.to_string(),
            labeled_at,
        };
        self.records.push(record.clone());
        Ok(record)
    }

    /// Takes a sample out of the review queue without a verdict.
    pub fn mark_skipped(&mut self, sample_id: &str) -> Result<(), ReviewError> {
        let sample = self
            .samples
            .get_mut(sample_id)
            .ok_or_else(|| ReviewError::UnknownSample(sample_id.to_string()))?;
        if sample.status == SampleStatus::Labeled {
            return Err(ReviewError::AlreadyLabeled(String::new()));
        }
        sample.status = SampleStatus::Skipped;
        Ok(())
    }

    /// Harm precision per day or ISO week of the sampled date.
    pub fn precision_by(&self, grouping: Grouping) -> Vec<PeriodPrecision> {
        let mut groups: BTreeMap<String, Vec<ReviewRecord>> = BTreeMap::new();
        for s in self.samples.values() {
            groups.entry(grouping.key(s.sampled_for_date)).or_default();
        }
        for r in &self.records {
            if let Some(s) = self.samples.get(&r.sample_id) {
                groups.entry(grouping.key(s.sampled_for_date)).or_default().push(r.clone());
            }
        }
        let (keys, records): (Vec<String>, Vec<Vec<ReviewRecord>>) = groups.into_iter().unzip();
        keys.into_iter()
            .zip(&records)
            .zip(precision_timeline(&records))
            .map(|((period, recs), precision)| PeriodPrecision { period, counts: VerdictCounts::tally(recs), precision })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub must_safe: u64,
    pub look_safe: u64,
    pub harm: u64,
    pub cannot_decide: u64,
}

impl VerdictCounts {
    pub fn tally<'a>(records: impl IntoIterator<Item = &'a ReviewRecord>) -> Self {
        let mut c = VerdictCounts::default();
        for r in records {
            c.add(r.verdict);
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.must_safe + self.look_safe + self.harm + self.cannot_decide
    }

    pub fn add(&mut self, verdict: Verdict) {
        match verdict {
            Verdict::MustSafe => self.must_safe += 1,
            Verdict::LookSafe => self.look_safe += 1,
            Verdict::Harm => self.harm += 1,
            Verdict::CannotDecide => self.cannot_decide += 1,
        }
    }

    /// 100 · Harm / (MustSafe + LookSafe + Harm).
    pub fn harm_precision(&self) -> Result<f64, PrecisionError> {
        let decided = self.must_safe + self.look_safe + self.harm;
        if decided == 0 {
            return Err(PrecisionError::Undefined);
        }
        Ok(self.harm as f64 * 100.0 / decided as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PrecisionError {
    #[error("precision undefined: no decided verdicts")]
    Undefined,
}

pub fn harm_precision(records: &[ReviewRecord]) -> Result<f64, PrecisionError> {
    VerdictCounts::tally(records).harm_precision()
}

/// Harm precision per period; `None` where a period has no decided verdicts.
pub fn precision_timeline(periods: &[Vec<ReviewRecord>]) -> Vec<Option<f64>> {
    periods.iter().map(|p| harm_precision(p).ok()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    #[default]
    Day,
    Week,
}

impl Grouping {
    pub fn key(self, date: NaiveDate) -> String {
        match self {
            Grouping::Day => date.to_string(),
            Grouping::Week => {
                let w = date.iso_week();
                format!("{}-W{:02}", w.year(), w.week())
            }
        }
    }
}

impl FromStr for Grouping {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "day" => Ok(Grouping::Day),
            "week" => Ok(Grouping::Week),
            other => Err(format!("unknown grouping {other:?}, expected day or week")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodPrecision {
    pub period: String,
    pub counts: VerdictCounts,
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corrections {
    /// Disabled drafts; an operator has to enable them.
    pub rules: Vec<Rule>,
    pub examples: Vec<LabeledExample>,
    /// Records whose sample was not found.
    pub unresolved: Vec<String>,
}

/// Anchored, escaped literal of the query's longest sentence.
pub fn literal_whitelist_pattern(text: &str, splitter: &SentenceSplitter) -> String {
    let longest = splitter
        .split(text)
        .into_iter()
        .fold("", |best, s| if s.chars().count() > best.chars().count() { s } else { best });
    format!("^{}$", regex::escape(longest))
}

/// MustSafe verdicts become whitelist drafts plus safe examples; Harm
/// verdicts become examples labeled with the decided category.
pub fn promote_corrections<'a>(
    records: &[ReviewRecord],
    samples: impl IntoIterator<Item = &'a ReviewSample>,
    splitter: &SentenceSplitter,
) -> Corrections {
    let by_id: HashMap<&str, &ReviewSample> = samples.into_iter().map(|s| (s.sample_id.as_str(), s)).collect();
    let mut out = Corrections::default();
    for r in records {
        let Some(sample) = by_id.get(r.sample_id.as_str()) else {
            out.unresolved.push(r.sample_id.clone());
            continue;
        };
        match r.verdict {
            Verdict::MustSafe => {
                let mut rule = Rule::whitelist(
                    format!("proposal-{}-{}", r.sample_id, r.reviewer),
                    literal_whitelist_pattern(&sample.text, splitter),
                )
                .with_exemplars([sample.text.clone()])
                .disabled();
                rule.author = r.reviewer.clone();
                rule.created_at = r.labeled_at;
                out.rules.push(rule);
                if let Ok(ex) = LabeledExample::new(&sample.text, Category::Safe, Origin::InternalAnnotation) {
                    out.examples.push(ex);
                }
            }
            Verdict::Harm => {
                if let Ok(ex) = LabeledExample::new(&sample.text, sample.decision.label, Origin::InternalAnnotation) {
                    out.examples.push(ex);
                }
            }
            Verdict::LookSafe | Verdict::CannotDecide => {}
        }
    }
    out
}

/// `sample_id,query_id,date,label,verdict,reviewer,labeled_at`
pub fn verdicts_csv(store: &ReviewStore) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "query_id", "date", "label", "verdict", "reviewer", "labeled_at"])
        .expect("in-memory write");
    for r in store.records() {
        let (query_id, date, label) = store
            .sample(&r.sample_id)
            .map(|s| (s.query_id.clone(), s.sampled_for_date.to_string(), s.decision.label.id().to_string()))
            .unwrap_or_default();
        w.write_record([
            r.sample_id.as_str(),
            &query_id,
            &date,
            &label,
            r.verdict.as_str(),
            &r.reviewer,
            &r.labeled_at.to_rfc3339(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}
