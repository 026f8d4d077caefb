//! Seeded synthetic query streams with planted labels.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::io::{BufRead, Write};

use chrono::{DateTime, Datelike, Duration, NaiveDate, Utc};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassifierError, Prediction, QueryClassifier, Scores};
use crate::gateway::QueryRecord;
use crate::taxonomy::{reference_distribution, Category, NUM_SENSITIVE};

pub const DEFAULT_EVENT_DURATION: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum SimulatorError {
    #[error("invalid config at {field}: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("event window {start}..{end} outside the {days}-day stream")]
    WindowOutOfRange { start: usize, end: usize, days: usize },
    #[error("stream file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("stream io: {0}")]
    Io(String),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> SimulatorError {
    SimulatorError::InvalidConfig { field: field.into(), reason: reason.into() }
}

fn default_duration() -> usize {
    DEFAULT_EVENT_DURATION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    /// Zero-based day index.
    pub start_day: usize,
    #[serde(default = "default_duration")]
    pub duration: usize,
    pub multipliers: BTreeMap<Category, f64>,
    #[serde(default)]
    pub label: String,
    /// Terms mixed into boosted queries during the window.
    #[serde(default)]
    pub keywords: Vec<String>,
}

impl EventSpec {
    pub fn new(label: impl Into<String>, start_day: usize, multipliers: impl IntoIterator<Item = (Category, f64)>) -> Self {
        EventSpec {
            start_day,
            duration: DEFAULT_EVENT_DURATION,
            multipliers: multipliers.into_iter().collect(),
            label: label.into(),
            keywords: Vec::new(),
        }
    }

    pub fn with_keywords<S: Into<String>>(mut self, keywords: impl IntoIterator<Item = S>) -> Self {
        self.keywords = keywords.into_iter().map(Into::into).collect();
        self
    }

    pub fn covers(&self, day: usize) -> bool {
        day >= self.start_day && day < self.start_day + self.duration
    }

    fn validate(&self, days: usize, path: &str) -> Result<(), SimulatorError> {
        if self.duration == 0 {
            return Err(invalid(format!("{path}.duration"), "must be at least 1"));
        }
        for (c, m) in &self.multipliers {
            if !m.is_finite() || *m <= 0.0 {
                return Err(invalid(format!("{path}.multipliers.{}", c.id()), "must be finite and positive"));
            }
            if c.is_safe() {
                return Err(invalid(format!("{path}.multipliers.safe"), "only sensitive categories can be boosted"));
            }
        }
        if self.start_day + self.duration > days {
            return Err(SimulatorError::WindowOutOfRange {
                start: self.start_day,
                end: self.start_day + self.duration,
                days,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamConfig {
    pub days: usize,
    pub start_date: NaiveDate,
    pub peak_volume: u64,
    /// Days at the start that run at peak volume.
    pub launch_days: usize,
    /// Later days' volume as a fraction of peak.
    pub ratio_band: [f64; 2],
    /// Monday first. Scales a day's position inside `ratio_band`.
    pub weekday_multipliers: [f64; 7],
    pub sensitive_band: [f64; 2],
    /// Percent per sensitive category ordinal.
    pub base_distribution: [f64; NUM_SENSITIVE],
    pub events: Vec<EventSpec>,
    pub users: usize,
    pub seed: u64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            days: 70,
            start_date: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            peak_volume: 10_000,
            launch_days: 3,
            ratio_band: [0.50, 0.85],
            weekday_multipliers: [1.0, 1.0, 1.0, 1.0, 1.0, 0.6, 0.6],
            sensitive_band: [0.03, 0.04],
            base_distribution: reference_distribution().avg,
            events: Vec::new(),
            users: 2_000,
            seed: 0,
        }
    }
}

fn check_band(band: [f64; 2], field: &str) -> Result<(), SimulatorError> {
    let [lo, hi] = band;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi && hi <= 1.0) {
        return Err(invalid(field, "need 0 < low <= high <= 1"));
    }
    Ok(())
}

impl StreamConfig {
    pub fn validate(&self) -> Result<(), SimulatorError> {
        if self.days == 0 {
            return Err(invalid("days", "must be at least 1"));
        }
        if self.peak_volume == 0 {
            return Err(invalid("peak_volume", "must be positive"));
        }
        if self.launch_days > self.days {
            return Err(invalid("launch_days", "exceeds days"));
        }
        if self.users == 0 {
            return Err(invalid("users", "must be positive"));
        }
        check_band(self.ratio_band, "ratio_band")?;
        check_band(self.sensitive_band, "sensitive_band")?;
        for (i, m) in self.weekday_multipliers.iter().enumerate() {
            if !(m.is_finite() && *m > 0.0 && *m <= 1.0) {
                return Err(invalid(format!("weekday_multipliers[{i}]"), "need 0 < m <= 1"));
            }
        }
        for (i, s) in self.base_distribution.iter().enumerate() {
            if !(s.is_finite() && *s >= 0.0) {
                return Err(invalid(format!("base_distribution.{}", Category::ALL[i].id()), "must be finite and non-negative"));
            }
        }
        let sum: f64 = self.base_distribution.iter().sum();
        if (sum - 100.0).abs() > 1.0 {
            return Err(invalid("base_distribution", format!("shares sum to {sum}, expected about 100")));
        }
        for (i, e) in self.events.iter().enumerate() {
            e.validate(self.days, &format!("events[{i}]"))?;
        }
        Ok(())
    }

    /// Base distribution scaled to sum to 1.
    pub fn normalized_base(&self) -> [f64; NUM_SENSITIVE] {
        let sum: f64 = self.base_distribution.iter().sum();
        self.base_distribution.map(|s| s / sum)
    }

    /// Category weights for `day` after applying every covering event;
    /// sums to 1.
    pub fn day_weights(&self, day: usize) -> [f64; NUM_SENSITIVE] {
        let mut w = self.base_distribution;
        for e in self.events.iter().filter(|e| e.covers(day)) {
            for (c, m) in &e.multipliers {
                w[c.ordinal()] *= m;
            }
        }
        let sum: f64 = w.iter().sum();
        w.map(|x| x / sum)
    }

    pub fn date_of(&self, day: usize) -> NaiveDate {
        self.start_date + Duration::days(day as i64)
    }
}

/// Returns `config` with `event` appended.
pub fn inject_event(config: &StreamConfig, event: EventSpec) -> Result<StreamConfig, SimulatorError> {
    event.validate(config.days, &format!("events[{}]", config.events.len()))?;
    let mut out = config.clone();
    out.events.push(event);
    Ok(out)
}

/// Token that marks a category in generated text.
pub fn signature_token(category: Category) -> Option<&'static str> {
    Some(match category {
        Category::FelonyCrimes => "범죄",
        Category::AgeRestricted => "성인",
        Category::Privacy => "주소",
        Category::Copyright => "다운로드",
        Category::Discrimination => "차별",
        Category::SuicideSelfHarm => "자살",
        Category::Profanity => "욕설",
        Category::Personification => "대화",
        Category::HighStakes => "민원",
        Category::FuturePrediction => "전망",
        Category::ControversialFactuality => "정치",
        Category::ErrorInducing => "멸망",
        Category::Safe => return None,
    })
}

fn category_keywords(category: Category) -> &'static [&'static str] {
    match category {
        Category::FelonyCrimes => &["마약", "사이트", "사건", "번호", "연예인", "영화", "남자", "의심"],
        Category::AgeRestricted => &["사진", "여자", "친구", "남자", "영상"],
        Category::Privacy => &["번호", "정보", "집", "비밀", "아이디", "개인", "등록", "루머"],
        Category::Copyright => &["사이트", "무료", "사진", "소설", "영화"],
        Category::Discrimination => &["남자", "여자", "이유", "친구", "문제"],
        Category::SuicideSelfHarm => &["고통", "우울", "엄마", "죽음"],
        Category::Profanity => &["단어", "뜻", "표현", "친구", "사용", "반말"],
        Category::Personification => &["친구", "사진", "여자", "이름", "대통령"],
        Category::HighStakes => &["학부모", "표", "사례", "위치", "악성", "극단"],
        Category::FuturePrediction => &["주식", "가능", "투자", "주가", "가격", "시장", "비트"],
        Category::ControversialFactuality => &["대통령", "땅", "나라", "문제", "법", "이유"],
        Category::ErrorInducing => &["꿈", "삼촌", "인간", "인공지능", "지배", "세계", "지구"],
        Category::Safe => SAFE_WORDS,
    }
}

const SAFE_WORDS: &[&str] = &[
    "날씨", "맛집", "레시피", "여행", "운동", "공부", "영어", "노래", "강아지", "커피", "책", "게임", "휴가", "요리",
    "기차", "버스", "카메라", "자전거", "꽃", "바다", "산", "수학", "피아노", "빵",
];

const NOISE: &[&str] = &["방법", "사람", "생각", "추천", "말", "좀", "알려줘", "어떻게", "요즘", "진짜"];

fn render_text(rng: &mut ChaCha8Rng, category: Category, extra: &[String]) -> String {
    let pick = |rng: &mut ChaCha8Rng, words: &[&'static str]| *words.choose(rng).expect("non-empty word list");
    let noise = pick(rng, NOISE);
    let words = category_keywords(category);
    let a = pick(rng, words);
    let b = pick(rng, words);
    let extra = if !extra.is_empty() && rng.gen_bool(0.5) {
        format!(" {}", extra.choose(rng).expect("non-empty"))
    } else {
        String::new()
    };
    match signature_token(category) {
        Some(sig) => match rng.gen_range(0..4) {
            0 => format!("{sig} {a} {noise}{extra}"),
            1 => format!("{a} {sig} {b} {noise}?{extra}"),
            2 => format!("{noise} {a}{extra} {b} {sig}."),
            _ => format!("{a} {b}. {sig} {noise}!{extra}"),
        },
        None => match rng.gen_range(0..3) {
            0 => format!("{a} {noise}"),
            1 => format!("{a} {b} {noise}?"),
            _ => format!("{noise} {a}."),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulatedQuery {
    pub day: usize,
    pub record: QueryRecord,
    pub planted: Category,
}

/// Lazily generated stream; one day is materialized at a time.
pub struct StreamIter {
    config: StreamConfig,
    rng: ChaCha8Rng,
    users: Vec<String>,
    day: usize,
    buffer: VecDeque<SimulatedQuery>,
}

pub fn generate_stream(config: &StreamConfig) -> Result<StreamIter, SimulatorError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let users = (0..config.users).map(|_| format!("enc:{:016x}", rng.gen::<u64>())).collect();
    Ok(StreamIter { config: config.clone(), rng, users, day: 0, buffer: VecDeque::new() })
}

impl StreamIter {
    pub fn config(&self) -> &StreamConfig {
        &self.config
    }

    fn day_volume(&mut self, day: usize) -> u64 {
        let c = &self.config;
        if day < c.launch_days {
            return c.peak_volume;
        }
        let [lo, hi] = c.ratio_band;
        let weekday = c.date_of(day).weekday().num_days_from_monday() as usize;
        let ratio = lo + (hi - lo) * self.rng.gen::<f64>() * c.weekday_multipliers[weekday];
        let peak = c.peak_volume as f64;
        let min = ((lo * peak).ceil() as u64).max(1);
        let max = ((hi * peak).floor() as u64).max(min);
        ((ratio * peak).round() as u64).clamp(min, max)
    }

    fn fill_day(&mut self) {
        let day = self.day;
        let volume = self.day_volume(day) as usize;
        let [slo, shi] = self.config.sensitive_band;
        let rate = slo + (shi - slo) * self.rng.gen::<f64>();
        let v = volume as f64;
        let (min, max) = ((slo * v).ceil() as usize, (shi * v).floor() as usize);
        let mut count = (rate * v).round() as usize;
        if min <= max {
            count = count.clamp(min, max);
        }
        let sensitive: HashSet<usize> = rand::seq::index::sample(&mut self.rng, volume, count.min(volume)).into_iter().collect();

        let weights = self.config.day_weights(day);
        let picker = WeightedIndex::new(weights).expect("weights validated");
        let extras: Vec<(Category, Vec<String>)> = self
            .config
            .events
            .iter()
            .filter(|e| e.covers(day) && !e.keywords.is_empty())
            .flat_map(|e| e.multipliers.iter().filter(|(_, m)| **m > 1.0).map(|(c, _)| (*c, e.keywords.clone())))
            .collect();

        let midnight: DateTime<Utc> = self.config.date_of(day).and_hms_opt(0, 0, 0).expect("midnight").and_utc();
        for i in 0..volume {
            let planted = if sensitive.contains(&i) {
                Category::ALL[picker.sample(&mut self.rng)]
            } else {
                Category::Safe
            };
            let extra: Vec<String> = extras.iter().filter(|(c, _)| *c == planted).flat_map(|(_, k)| k.clone()).collect();
            let text = render_text(&mut self.rng, planted, &extra);
            let user = self.users.choose(&mut self.rng).expect("users validated").clone();
            let offset_ms = (i as i64 * 86_400_000) / volume as i64;
            self.buffer.push_back(SimulatedQuery {
                day,
                record: QueryRecord {
                    query_id: format!("d{day:03}-{i:06}"),
                    text,
                    received_at: midnight + Duration::milliseconds(offset_ms),
                    user_pseudonym: user,
                },
                planted,
            });
        }
    }
}

impl Iterator for StreamIter {
    type Item = SimulatedQuery;

    fn next(&mut self) -> Option<SimulatedQuery> {
        while self.buffer.is_empty() {
            if self.day >= self.config.days {
                return None;
            }
            self.fill_day();
            self.day += 1;
        }
        self.buffer.pop_front()
    }
}

/// Reads the signature token; recovers planted labels exactly.
#[derive(Debug, Clone)]
pub struct SignatureOracle {
    version: String,
}

impl Default for SignatureOracle {
    fn default() -> Self {
        SignatureOracle { version: "signature-oracle".into() }
    }
}

impl SignatureOracle {
    pub fn classify(text: &str) -> Category {
        text.split(|c: char| !c.is_alphanumeric())
            .find_map(|token| Category::sensitive().into_iter().find(|c| signature_token(*c) == Some(token)))
            .unwrap_or(Category::Safe)
    }
}

impl QueryClassifier for SignatureOracle {
    fn model_version(&self) -> &str {
        &self.version
    }

    fn predict(&self, text: &str) -> Result<Prediction, ClassifierError> {
        let label = Self::classify(text);
        Ok(Prediction { label, scores: Scores::certain(label), model_version: self.version.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedLabel {
    pub query_id: String,
    pub planted: Category,
}

/// Writes queries to `stream` and planted labels to `labels`, one JSON
/// object per line each. Returns the number of queries.
pub fn write_stream(
    queries: impl IntoIterator<Item = SimulatedQuery>,
    mut stream: impl Write,
    mut labels: impl Write,
) -> Result<usize, SimulatorError> {
    let io = |e: std::io::Error| SimulatorError::Io(e.to_string());
    let mut n = 0;
    for q in queries {
        serde_json::to_writer(&mut stream, &q.record).map_err(|e| SimulatorError::Io(e.to_string()))?;
        stream.write_all(b"\n").map_err(io)?;
        let label = PlantedLabel { query_id: q.record.query_id, planted: q.planted };
        serde_json::to_writer(&mut labels, &label).map_err(|e| SimulatorError::Io(e.to_string()))?;
        labels.write_all(b"\n").map_err(io)?;
        n += 1;
    }
    stream.flush().map_err(io)?;
    labels.flush().map_err(io)?;
    Ok(n)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, SimulatorError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| SimulatorError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SimulatorError::Parse { line: i + 1, reason: e.to_string() })?);
    }
    Ok(out)
}

pub fn read_stream(reader: impl BufRead) -> Result<Vec<QueryRecord>, SimulatorError> {
    read_jsonl(reader)
}

pub fn read_planted_labels(reader: impl BufRead) -> Result<Vec<PlantedLabel>, SimulatorError> {
    read_jsonl(reader)
}
