use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::bucketize_decisions;
use crate::gateway::Decision;
use crate::taxonomy::Category;

/// General search words that dominate every category.
pub const DEFAULT_STOPLIST: [&str; 5] = ["방법", "사람", "생각", "추천", "말"];

/// Turns query text into terms. A part-of-speech tagger can be plugged in
/// here to keep only nouns.
pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Splits on anything that is not alphanumeric and lowercases.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimpleTokenizer;

impl Tokenizer for SimpleTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCount {
    pub term: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordReport {
    pub category: Category,
    /// Count descending, then term ascending.
    pub ranked: Vec<TermCount>,
    /// Day on which the category had its largest share.
    pub max_day: Option<NaiveDate>,
    pub new_on_max_day: BTreeSet<String>,
}

fn top_k<'a>(
    texts: impl Iterator<Item = &'a str>,
    tokenizer: &dyn Tokenizer,
    stoplist: &BTreeSet<String>,
    k: usize,
) -> Vec<TermCount> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for text in texts {
        for term in tokenizer.tokenize(text) {
            if !stoplist.contains(&term) {
                *counts.entry(term).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<TermCount> = counts.into_iter().map(|(term, count)| TermCount { term, count }).collect();
    ranked.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.term.cmp(&b.term)));
    ranked.truncate(k);
    ranked
}

/// Top-`k` terms among queries finally labeled `category`, plus the terms
/// that first reach a daily top-`k` on the category's maximum-share day.
pub fn extract_keywords(
    decisions: &[Decision],
    category: Category,
    stoplist: &[&str],
    k: usize,
    tokenizer: &dyn Tokenizer,
) -> KeywordReport {
    let stoplist: BTreeSet<String> = stoplist.iter().map(|s| s.to_lowercase()).collect();
    let in_category: Vec<&Decision> = decisions.iter().filter(|d| d.label == category).collect();
    let ranked = top_k(in_category.iter().map(|d| d.text.as_str()), tokenizer, &stoplist, k);
    if in_category.is_empty() {
        return KeywordReport { category, ranked, max_day: None, new_on_max_day: BTreeSet::new() };
    }

    let share = |b: &super::DailyBucket| {
        let denom = if category.is_safe() { b.total_queries } else { b.sensitive_queries };
        if denom == 0 { 0.0 } else { b.count(category) as f64 / denom as f64 }
    };
    let mut max_day = None;
    let mut best = f64::NEG_INFINITY;
    for b in bucketize_decisions(decisions) {
        let s = share(&b);
        if s > best {
            best = s;
            max_day = Some(b.date);
        }
    }
    let max_day = max_day.expect("category has decisions, so buckets exist");

    let mut per_day: BTreeMap<NaiveDate, Vec<&str>> = BTreeMap::new();
    for d in &in_category {
        per_day.entry(d.decided_at.date_naive()).or_default().push(&d.text);
    }
    let mut prior: BTreeSet<String> = BTreeSet::new();
    let mut new_on_max_day = BTreeSet::new();
    for (date, texts) in &per_day {
        let top = top_k(texts.iter().copied(), tokenizer, &stoplist, k);
        if *date == max_day {
            new_on_max_day = top.into_iter().map(|t| t.term).filter(|t| !prior.contains(t)).collect();
            break;
        }
        prior.extend(top.into_iter().map(|t| t.term));
    }
    KeywordReport { category, ranked, max_day: Some(max_day), new_on_max_day }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::tests::{at, decision};
    use crate::rules::DecisionSource;

    fn q(text: &str, label: Category, day: u32) -> Decision {
        decision("q", text, label, DecisionSource::Model, at(day, 9))
    }

    #[test]
    fn empty_category_gives_empty_report() {
        let r = extract_keywords(&[q("주식 전망", Category::FuturePrediction, 1)], Category::Privacy, &[], 10, &SimpleTokenizer);
        assert!(r.ranked.is_empty());
        assert_eq!(r.max_day, None);
    }

    #[test]
    fn stoplist_removes_only_token() {
        let r = extract_keywords(&[q("방법", Category::Privacy, 1)], Category::Privacy, &DEFAULT_STOPLIST, 10, &SimpleTokenizer);
        assert!(r.ranked.is_empty());
    }

    #[test]
    fn term_only_on_max_day_is_new() {
        let decisions = vec![
            q("주가 전망", Category::FuturePrediction, 1),
            q("날씨", Category::Safe, 1),
            q("날씨", Category::Safe, 1),
            q("주가 전망", Category::FuturePrediction, 2),
            q("공매도 전망", Category::FuturePrediction, 3),
            q("공매도 금지", Category::FuturePrediction, 3),
        ];
        let r = extract_keywords(&decisions, Category::FuturePrediction, &[], 5, &SimpleTokenizer);
        // day 1 share 1/1, day 2 1/1, day 3 2/2: earliest max wins
        assert_eq!(r.max_day, NaiveDate::from_ymd_opt(2024, 3, 1));

        let mut decisions = decisions;
        decisions.push(q("욕", Category::Profanity, 1));
        decisions.push(q("욕", Category::Profanity, 2));
        let r = extract_keywords(&decisions, Category::FuturePrediction, &[], 5, &SimpleTokenizer);
        assert_eq!(r.max_day, NaiveDate::from_ymd_opt(2024, 3, 3));
        let expected: BTreeSet<String> = ["공매도", "금지"].map(String::from).into();
        assert_eq!(r.new_on_max_day, expected);
        assert_eq!(r.ranked[0], TermCount { term: "전망".into(), count: 3 });
    }

    #[test]
    fn counts_match_brute_force() {
        let words = ["주식", "가격", "시장", "비트", "전망", "방법"];
        let decisions: Vec<Decision> = (0..500)
            .map(|i| {
                let text = format!("{} {}, {}!", words[i % 6], words[(i * 7) % 6], words[(i / 3) % 6]);
                q(&text, if i % 4 == 0 { Category::Safe } else { Category::FuturePrediction }, 1 + (i % 9) as u32)
            })
            .collect();
        let r = extract_keywords(&decisions, Category::FuturePrediction, &DEFAULT_STOPLIST, 100, &SimpleTokenizer);
        for tc in &r.ranked {
            let brute: u64 = decisions
                .iter()
                .filter(|d| d.label == Category::FuturePrediction)
                .map(|d| d.text.split([' ', ',', '!']).filter(|w| *w == tc.term).count() as u64)
                .sum();
            assert_eq!(tc.count, brute, "{}", tc.term);
        }
        assert!(r.ranked.windows(2).all(|w| w[0].count >= w[1].count));
        assert!(r.ranked.iter().all(|t| t.term != "방법"));
        assert_eq!(r.ranked.len(), 5);
    }
}
