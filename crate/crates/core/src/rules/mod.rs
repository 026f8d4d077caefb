//! Sentence-level regex whitelist/blacklist overlay.
//!
//! Patterns use the `regex` crate dialect: linear-time matching, no
//! backreferences or look-around. Every rule is tested against each sentence
//! of the query separately (see [`SentenceSplitter`]).

mod sentence;

use std::collections::HashSet;
use std::io::{Read, Write};

use chrono::{DateTime, Utc};
use regex::{Regex, RegexSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sentence::{SentenceSplitter, DEFAULT_TERMINATORS};

use crate::classifier::{LabeledExample, Origin, Prediction};
use crate::taxonomy::Category;

pub const RULE_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Whitelist,
    Blacklist,
}

fn enabled_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub kind: RuleKind,
    pub pattern: String,
    /// Required for blacklist rules, absent for whitelist rules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exemplars: Vec<String>,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
    #[serde(default)]
    pub author: String,
    #[serde(default)]
    pub created_at: DateTime<Utc>,
}

impl Rule {
    pub fn whitelist(id: impl Into<String>, pattern: impl Into<String>) -> Self {
        Rule {
            id: id.into(),
            kind: RuleKind::Whitelist,
            pattern: pattern.into(),
            category: None,
            exemplars: Vec::new(),
            enabled: true,
            author: String::new(),
            created_at: DateTime::<Utc>::default(),
        }
    }

    pub fn blacklist(id: impl Into<String>, pattern: impl Into<String>, category: Category) -> Self {
        Rule {
            kind: RuleKind::Blacklist,
            category: Some(category),
            ..Rule::whitelist(id, pattern)
        }
    }

    pub fn with_exemplars<S: Into<String>>(mut self, exemplars: impl IntoIterator<Item = S>) -> Self {
        self.exemplars = exemplars.into_iter().map(Into::into).collect();
        self
    }

    pub fn disabled(mut self) -> Self {
        self.enabled = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("rule {id}: invalid pattern: {reason}")]
    InvalidPattern { id: String, reason: String },
    #[error("duplicate rule id {0}")]
    DuplicateRuleId(String),
    #[error("blacklist rule {0} has no category")]
    CategoryMissing(String),
    #[error("rule {id}: {reason}")]
    InvalidCategory { id: String, reason: String },
}

#[derive(Debug)]
struct CompiledRule {
    id: String,
    category: Option<Category>,
    regex: Regex,
}

#[derive(Debug)]
struct Matcher {
    set: RegexSet,
    rules: Vec<CompiledRule>,
}

impl Matcher {
    fn new(rules: Vec<CompiledRule>) -> Self {
        let set = RegexSet::new(rules.iter().map(|r| r.regex.as_str())).expect("patterns already compiled");
        Matcher { set, rules }
    }
}

/// Immutable, validated set of enabled rules.
#[derive(Debug)]
pub struct CompiledRuleSet {
    version: u64,
    whitelist: Matcher,
    blacklist: Matcher,
    splitter: SentenceSplitter,
    source_ids: Vec<String>,
}

impl CompiledRuleSet {
    pub fn empty(version: u64) -> Self {
        compile_rules(&[], version).expect("empty set compiles")
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.source_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_ids.is_empty()
    }

    /// Ids of the compiled (enabled) rules in input order.
    pub fn source_ids(&self) -> &[String] {
        &self.source_ids
    }

    pub fn splitter(&self) -> &SentenceSplitter {
        &self.splitter
    }
}

/// Compiles the enabled rules with the default sentence splitter.
pub fn compile_rules(rules: &[Rule], version: u64) -> Result<CompiledRuleSet, RuleError> {
    compile_rules_with(rules, version, SentenceSplitter::default())
}

/// Validates and compiles every enabled rule; any error rejects the whole
/// batch. Disabled rules are ignored entirely, exactly as if absent.
pub fn compile_rules_with(
    rules: &[Rule],
    version: u64,
    splitter: SentenceSplitter,
) -> Result<CompiledRuleSet, RuleError> {
    let mut seen = HashSet::new();
    let mut whitelist = Vec::new();
    let mut blacklist = Vec::new();
    let mut source_ids = Vec::new();
    for rule in rules.iter().filter(|r| r.enabled) {
        if !seen.insert(rule.id.as_str()) {
            return Err(RuleError::DuplicateRuleId(rule.id.clone()));
        }
        match (rule.kind, rule.category) {
            (RuleKind::Blacklist, None) => return Err(RuleError::CategoryMissing(rule.id.clone())),
            (RuleKind::Blacklist, Some(Category::Safe)) => {
                return Err(RuleError::InvalidCategory {
                    id: rule.id.clone(),
                    reason: "blacklist category must be sensitive".into(),
                })
            }
            (RuleKind::Whitelist, Some(_)) => {
                return Err(RuleError::InvalidCategory {
                    id: rule.id.clone(),
                    reason: "whitelist rules carry no category".into(),
                })
            }
            _ => {}
        }
        let regex = Regex::new(&rule.pattern).map_err(|e| RuleError::InvalidPattern {
            id: rule.id.clone(),
            reason: e.to_string(),
        })?;
        let compiled = CompiledRule { id: rule.id.clone(), category: rule.category, regex };
        match rule.kind {
            RuleKind::Whitelist => whitelist.push(compiled),
            RuleKind::Blacklist => blacklist.push(compiled),
        }
        source_ids.push(rule.id.clone());
    }
    Ok(CompiledRuleSet {
        version,
        whitelist: Matcher::new(whitelist),
        blacklist: Matcher::new(blacklist),
        splitter,
        source_ids,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleMatch {
    pub rule_id: String,
    pub kind: RuleKind,
    pub category: Option<Category>,
    pub sentence_index: usize,
    /// Byte range of the first match within the sentence.
    pub span: (usize, usize),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleMatches {
    pub sentence_count: usize,
    pub matches: Vec<RuleMatch>,
}

impl RuleMatches {
    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn has_whitelist(&self) -> bool {
        self.matches.iter().any(|m| m.kind == RuleKind::Whitelist)
    }

    /// Lowest-ordinal category among blacklist matches.
    pub fn blacklist_category(&self) -> Option<Category> {
        self.matches
            .iter()
            .filter(|m| m.kind == RuleKind::Blacklist)
            .filter_map(|m| m.category)
            .min()
    }
}

/// Tests every rule against every sentence of `text`; reports one entry per
/// (rule, sentence) pair that matches. Blacklist entries come first.
pub fn match_rules(ruleset: &CompiledRuleSet, text: &str) -> RuleMatches {
    let sentences = ruleset.splitter.split(text);
    let mut matches = Vec::new();
    for (kind, matcher) in [(RuleKind::Blacklist, &ruleset.blacklist), (RuleKind::Whitelist, &ruleset.whitelist)] {
        if matcher.rules.is_empty() {
            continue;
        }
        for (sentence_index, sentence) in sentences.iter().enumerate() {
            for i in matcher.set.matches(sentence).iter() {
                let rule = &matcher.rules[i];
                if let Some(m) = rule.regex.find(sentence) {
                    matches.push(RuleMatch {
                        rule_id: rule.id.clone(),
                        kind,
                        category: rule.category,
                        sentence_index,
                        span: (m.start(), m.end()),
                    });
                }
            }
        }
    }
    RuleMatches { sentence_count: sentences.len(), matches }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSource {
    Model,
    WhitelistOverride,
    BlacklistOverride,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Adjustment {
    pub label: Category,
    pub source: DecisionSource,
}

/// Combines the model's 1-best label with rule matches.
///
/// Blacklist outranks whitelist; whitelists only correct a sensitive
/// prediction (a `safe` prediction is already what they would produce).
pub fn apply_adjustment(prediction: &Prediction, matches: &RuleMatches) -> Adjustment {
    if let Some(category) = matches.blacklist_category() {
        return Adjustment { label: category, source: DecisionSource::BlacklistOverride };
    }
    if prediction.label.is_sensitive() && matches.has_whitelist() {
        return Adjustment { label: Category::Safe, source: DecisionSource::WhitelistOverride };
    }
    Adjustment { label: prediction.label, source: DecisionSource::Model }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRule {
    pub rule_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleExport {
    pub examples: Vec<LabeledExample>,
    pub skipped: Vec<SkippedRule>,
}

/// Turns rule exemplars into training examples: blacklist exemplars get the
/// rule's category, whitelist exemplars get `safe`.
pub fn export_training_from_rules(rules: &[Rule]) -> RuleExport {
    let mut export = RuleExport::default();
    for rule in rules {
        let skip = |reason: &str| SkippedRule { rule_id: rule.id.clone(), reason: reason.to_string() };
        if !rule.enabled {
            export.skipped.push(skip("disabled"));
            continue;
        }
        let label = match (rule.kind, rule.category) {
            (RuleKind::Whitelist, _) => Category::Safe,
            (RuleKind::Blacklist, Some(c)) if c.is_sensitive() => c,
            (RuleKind::Blacklist, _) => {
                export.skipped.push(skip("blacklist rule without a sensitive category"));
                continue;
            }
        };
        let before = export.examples.len();
        export.examples.extend(
            rule.exemplars
                .iter()
                .filter_map(|text| LabeledExample::new(text.clone(), label, Origin::RuleDerived).ok()),
        );
        if export.examples.len() == before {
            export.skipped.push(skip("no exemplars"));
        }
    }
    export
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleFile {
    pub format_version: u32,
    pub rules: Vec<Rule>,
}

#[derive(Debug, Error)]
pub enum RuleFileError {
    #[error("unsupported rule file version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed rule file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn read_rule_file(reader: impl Read) -> Result<Vec<Rule>, RuleFileError> {
    let file: RuleFile = serde_json::from_reader(reader)?;
    if file.format_version != RULE_FILE_VERSION {
        return Err(RuleFileError::UnsupportedVersion(file.format_version));
    }
    Ok(file.rules)
}

pub fn write_rule_file(mut writer: impl Write, rules: &[Rule]) -> Result<(), RuleFileError> {
    let file = RuleFile { format_version: RULE_FILE_VERSION, rules: rules.to_vec() };
    serde_json::to_writer_pretty(&mut writer, &file)?;
    writer.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Scores;

    fn prediction(label: Category) -> Prediction {
        Prediction { label, scores: Scores::certain(label), model_version: "m".into() }
    }

    #[test]
    fn compile_counts_enabled_rules() {
        let set = compile_rules(&[Rule::whitelist("w1", "뜻$")], 1).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.version(), 1);
        let set = compile_rules(&[Rule::whitelist("w1", "x").disabled()], 2).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn compile_errors() {
        assert!(matches!(
            compile_rules(&[Rule::whitelist("bad", "(")], 1),
            Err(RuleError::InvalidPattern { id, .. }) if id == "bad"
        ));
        assert_eq!(
            compile_rules(&[Rule::whitelist("a", "x"), Rule::whitelist("a", "y")], 1).unwrap_err(),
            RuleError::DuplicateRuleId("a".into())
        );
        let mut missing = Rule::blacklist("b", "x", Category::Privacy);
        missing.category = None;
        assert_eq!(compile_rules(&[missing], 1).unwrap_err(), RuleError::CategoryMissing("b".into()));
        assert!(matches!(
            compile_rules(&[Rule::blacklist("s", "x", Category::Safe)], 1),
            Err(RuleError::InvalidCategory { .. })
        ));
        // backreferences are outside the dialect
        assert!(compile_rules(&[Rule::whitelist("br", r"(a)\1")], 1).is_err());
    }

    #[test]
    fn sentence_indices() {
        let set = compile_rules(&[Rule::blacklist("b", "주소", Category::Privacy)], 1).unwrap();
        assert!(match_rules(&CompiledRuleSet::empty(0), "아무 말").is_empty());
        let m = match_rules(&set, "안녕하세요. 그 사람 집 주소 알려줘");
        assert_eq!(m.sentence_count, 2);
        assert_eq!(m.matches.len(), 1);
        assert_eq!(m.matches[0].sentence_index, 1);
        assert_eq!(m.matches[0].span, (15, 21));
        let m = match_rules(&set, "주소? 주소!");
        assert_eq!(m.matches.len(), 2);
        assert_eq!(m.matches[1].sentence_index, 1);
    }

    #[test]
    fn anchors_are_per_sentence() {
        let set = compile_rules(&[Rule::whitelist("w", "^무료 영화$")], 1).unwrap();
        assert!(match_rules(&set, "무료 영화").has_whitelist());
        assert!(match_rules(&set, "안녕\n무료 영화").has_whitelist());
        assert!(!match_rules(&set, "무료 영화 다운로드").has_whitelist());
    }

    #[test]
    fn adjustment_precedence() {
        let both = compile_rules(
            &[Rule::whitelist("w", "뜻"), Rule::blacklist("b", "마약", Category::FelonyCrimes)],
            1,
        )
        .unwrap();
        let none = match_rules(&both, "날씨");
        assert_eq!(
            apply_adjustment(&prediction(Category::Safe), &none),
            Adjustment { label: Category::Safe, source: DecisionSource::Model }
        );
        let white = match_rules(&both, "차별 뜻");
        assert_eq!(
            apply_adjustment(&prediction(Category::Discrimination), &white),
            Adjustment { label: Category::Safe, source: DecisionSource::WhitelistOverride }
        );
        assert_eq!(apply_adjustment(&prediction(Category::Safe), &white).source, DecisionSource::Model);
        let conflict = match_rules(&both, "마약 뜻");
        assert_eq!(
            apply_adjustment(&prediction(Category::Safe), &conflict),
            Adjustment { label: Category::FelonyCrimes, source: DecisionSource::BlacklistOverride }
        );
    }

    #[test]
    fn lowest_blacklist_ordinal_wins() {
        let set = compile_rules(
            &[
                Rule::blacklist("p", "번호", Category::Profanity),
                Rule::blacklist("v", "번호", Category::Privacy),
            ],
            1,
        )
        .unwrap();
        let adj = apply_adjustment(&prediction(Category::Safe), &match_rules(&set, "전화 번호"));
        assert_eq!(adj.label, Category::Privacy);
    }

    #[test]
    fn training_export() {
        let rules = vec![
            Rule::whitelist("w", "뜻$").with_exemplars(["마약 뜻"]),
            Rule::blacklist("b", "마약", Category::FelonyCrimes).with_exemplars(["마약 구매", "마약 판매", "마약 제조"]),
            Rule::whitelist("bare", "x"),
        ];
        let export = export_training_from_rules(&rules);
        assert_eq!(export.examples.len(), 4);
        assert_eq!(export.examples[0].label, Category::Safe);
        assert_eq!(export.examples[0].text, "마약 뜻");
        assert!(export.examples.iter().all(|e| e.origin == Origin::RuleDerived));
        assert_eq!(export.examples.iter().filter(|e| e.label == Category::FelonyCrimes).count(), 3);
        assert_eq!(export.skipped, vec![SkippedRule { rule_id: "bare".into(), reason: "no exemplars".into() }]);
    }

    #[test]
    fn rule_file_roundtrip_and_version() {
        let rules = vec![Rule::blacklist("b", "마약", Category::FelonyCrimes).with_exemplars(["마약 구매"])];
        let mut buf = Vec::new();
        write_rule_file(&mut buf, &rules).unwrap();
        assert_eq!(read_rule_file(buf.as_slice()).unwrap(), rules);
        let v2 = r#"{"format_version": 2, "rules": []}"#;
        assert!(matches!(read_rule_file(v2.as_bytes()), Err(RuleFileError::UnsupportedVersion(2))));
        let minimal = r#"{"format_version": 1, "rules": [{"id": "w", "kind": "whitelist", "pattern": "a"}]}"#;
        let parsed = read_rule_file(minimal.as_bytes()).unwrap();
        assert!(parsed[0].enabled);
    }
}
