//! The sensitive-query category system.
//!
//! Twelve sensitive categories in three groups plus `safe`. Ordinals are the
//! canonical order used everywhere a per-category array appears: score
//! vectors, confusion matrices, daily buckets and reference shares.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of categories including `safe`.
pub const NUM_CATEGORIES: usize = 13;
/// Number of sensitive categories (everything except `safe`).
pub const NUM_SENSITIVE: usize = 12;

/// Version stamp written into exported taxonomy documents.
pub const TAXONOMY_VERSION: &str = "2024.1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown category id {0:?}")]
pub struct UnknownCategory(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    Legal,
    Ethical,
    ServiceSensitive,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Category {
    FelonyCrimes = 0,
    AgeRestricted = 1,
    Privacy = 2,
    Copyright = 3,
    Discrimination = 4,
    SuicideSelfHarm = 5,
    Profanity = 6,
    Personification = 7,
    HighStakes = 8,
    FuturePrediction = 9,
    ControversialFactuality = 10,
    ErrorInducing = 11,
    Safe = 12,
}

impl Category {
    /// All categories in canonical order.
    pub const ALL: [Category; NUM_CATEGORIES] = [
        Category::FelonyCrimes,
        Category::AgeRestricted,
        Category::Privacy,
        Category::Copyright,
        Category::Discrimination,
        Category::SuicideSelfHarm,
        Category::Profanity,
        Category::Personification,
        Category::HighStakes,
        Category::FuturePrediction,
        Category::ControversialFactuality,
        Category::ErrorInducing,
        Category::Safe,
    ];

    /// The twelve sensitive categories in canonical order.
    pub fn sensitive() -> impl Iterator<Item = Category> {
        Self::ALL[..NUM_SENSITIVE].iter().copied()
    }

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(ordinal: usize) -> Option<Category> {
        Self::ALL.get(ordinal).copied()
    }

    pub fn is_safe(self) -> bool {
        self == Category::Safe
    }

    pub fn is_sensitive(self) -> bool {
        !self.is_safe()
    }

    pub fn id(self) -> &'static str {
        match self {
            Category::FelonyCrimes => "felony_crimes",
            Category::AgeRestricted => "age_restricted",
            Category::Privacy => "privacy",
            Category::Copyright => "copyright",
            Category::Discrimination => "discrimination",
            Category::SuicideSelfHarm => "suicide_self_harm",
            Category::Profanity => "profanity",
            Category::Personification => "personification",
            Category::HighStakes => "high_stakes",
            Category::FuturePrediction => "future_prediction",
            Category::ControversialFactuality => "controversial_factuality",
            Category::ErrorInducing => "error_inducing",
            Category::Safe => "safe",
        }
    }

    pub fn group(self) -> Group {
        match self.ordinal() {
            0..=3 => Group::Legal,
            4..=7 => Group::Ethical,
            8..=11 => Group::ServiceSensitive,
            _ => Group::None,
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Category::FelonyCrimes => "Felony crimes",
            Category::AgeRestricted => "Age-restricted contents",
            Category::Privacy => "Privacy",
            Category::Copyright => "Minor copyright infringement",
            Category::Discrimination => "Discrimination",
            Category::SuicideSelfHarm => "Suicide and self-harm",
            Category::Profanity => "Profanity",
            Category::Personification => "Personification of the system",
            Category::HighStakes => "High-stakes domains",
            Category::FuturePrediction => "Future prediction",
            Category::ControversialFactuality => "Controversial factuality",
            Category::ErrorInducing => "Error-inducing",
            Category::Safe => "Safe",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Category::FelonyCrimes => {
                "Promotes or prepares serious crimes such as assault, fraud or drug trade; factual or definitional questions are excluded."
            }
            Category::AgeRestricted => "Requests for adult-rated material unsuitable for minors.",
            Category::Privacy => {
                "Seeks non-public personal information about a specific individual (addresses, phone numbers, identifiers)."
            }
            Category::Copyright => "Seeks unauthorized access to copyrighted works, e.g. free streams of paid content.",
            Category::Discrimination => {
                "Promotes, justifies or incites discrimination or hatred against a group or its members."
            }
            Category::SuicideSelfHarm => "Seeks methods or expresses intent that may lead to self-harm.",
            Category::Profanity => "Contains insults or asks the system to produce offensive language.",
            Category::Personification => {
                "Treats the system as a person or asks it to act beyond its defined capabilities."
            }
            Category::HighStakes => "Medical, legal or similar questions where an imprecise answer can cause harm.",
            Category::FuturePrediction => "Asks for speculative predictions such as prices or event outcomes.",
            Category::ControversialFactuality => {
                "Asks to settle facts that are contested along cultural, national or belief lines."
            }
            Category::ErrorInducing => "Nonsensical premises or prompt injection aimed at eliciting wrong output.",
            Category::Safe => "No sensitive intent detected.",
        }
    }

    fn default_block_reason(self) -> &'static str {
        match self {
            Category::FelonyCrimes => "This request may facilitate a serious crime, so no answer is generated.",
            Category::AgeRestricted => "This request concerns age-restricted content, so no answer is generated.",
            Category::Privacy => "This request may expose someone's personal information, so no answer is generated.",
            Category::Copyright => "This request may lead to copyright infringement, so no answer is generated.",
            Category::Discrimination => "This request may promote discrimination, so no answer is generated.",
            Category::SuicideSelfHarm => {
                "This request touches on self-harm. If you are struggling, please reach out to a local support line."
            }
            Category::Profanity => "This request contains or asks for offensive language, so no answer is generated.",
            Category::Personification => "This request asks the assistant to act beyond its role, so no answer is generated.",
            Category::HighStakes => {
                "This request needs professional advice; please consult a qualified expert."
            }
            Category::FuturePrediction => "Future outcomes cannot be predicted reliably, so no answer is generated.",
            Category::ControversialFactuality => {
                "This topic is contested and an answer could take sides, so no answer is generated."
            }
            Category::ErrorInducing => "This request rests on a premise that cannot be answered reliably.",
            Category::Safe => "",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Category {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_category(s)
    }
}

/// Catalog entry with every descriptive field of a category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryInfo {
    pub ordinal: usize,
    pub id: String,
    pub group: Group,
    pub display_name: String,
    pub description: String,
    pub block_reason_template: String,
}

impl CategoryInfo {
    fn new(category: Category, block_reason: &str) -> Self {
        CategoryInfo {
            ordinal: category.ordinal(),
            id: category.id().to_string(),
            group: category.group(),
            display_name: category.display_name().to_string(),
            description: category.description().to_string(),
            block_reason_template: block_reason.to_string(),
        }
    }
}

/// All 13 categories in canonical order with default block reasons.
pub fn category_catalog() -> Vec<CategoryInfo> {
    BlockReasons::default().catalog()
}

/// Case-sensitive lookup by id.
pub fn parse_category(id: &str) -> Result<Category, UnknownCategory> {
    Category::ALL
        .iter()
        .copied()
        .find(|c| c.id() == id)
        .ok_or_else(|| UnknownCategory(id.to_string()))
}

/// Block-reason text per category, overridable from configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockReasons {
    templates: [String; NUM_CATEGORIES],
}

impl Default for BlockReasons {
    fn default() -> Self {
        BlockReasons {
            templates: Category::ALL.map(|c| c.default_block_reason().to_string()),
        }
    }
}

impl BlockReasons {
    /// Defaults with the given `id -> text` overrides applied.
    pub fn with_overrides<'a>(
        overrides: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, UnknownCategory> {
        let mut reasons = Self::default();
        for (id, text) in overrides {
            let category = parse_category(id)?;
            reasons.templates[category.ordinal()] = text.to_string();
        }
        Ok(reasons)
    }

    pub fn get(&self, category: Category) -> &str {
        &self.templates[category.ordinal()]
    }

    pub fn catalog(&self) -> Vec<CategoryInfo> {
        Category::ALL
            .iter()
            .map(|&c| CategoryInfo::new(c, self.get(c)))
            .collect()
    }
}

/// Long-run share of each sensitive category among sensitive queries, in
/// percent, together with the largest single-day share observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDistribution {
    /// Indexed by sensitive ordinal (0..12).
    pub avg: [f64; NUM_SENSITIVE],
    pub max: [f64; NUM_SENSITIVE],
    /// Set where the published average is only an upper bound.
    pub avg_upper_bound: [bool; NUM_SENSITIVE],
}

impl ReferenceDistribution {
    pub fn avg_of(&self, category: Category) -> Option<f64> {
        self.avg.get(category.ordinal()).copied()
    }

    pub fn max_of(&self, category: Category) -> Option<f64> {
        self.max.get(category.ordinal()).copied()
    }

    pub fn avg_sum(&self) -> f64 {
        self.avg.iter().sum()
    }
}

/// The converged distribution observed over the first 70 days of service.
///
/// `high_stakes` was reported as "<0.1"; it is stored as 0.1 with its
/// upper-bound flag set.
pub fn reference_distribution() -> ReferenceDistribution {
    let avg = [9.9, 4.9, 1.9, 4.3, 36.1, 1.6, 2.4, 12.2, 0.1, 7.9, 17.8, 1.1];
    let max = [17.6, 11.6, 5.1, 10.7, 45.5, 17.2, 5.3, 18.2, 0.4, 15.8, 32.3, 3.8];
    let mut avg_upper_bound = [false; NUM_SENSITIVE];
    avg_upper_bound[Category::HighStakes.ordinal()] = true;
    ReferenceDistribution { avg, max, avg_upper_bound }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceShare {
    pub avg: f64,
    pub max: f64,
    pub avg_upper_bound: bool,
}

/// Exportable form of the catalog and reference distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyDocument {
    pub format_version: u32,
    pub taxonomy_version: String,
    pub categories: BTreeMap<String, CategoryInfo>,
    pub reference_distribution: BTreeMap<String, ReferenceShare>,
}

pub fn taxonomy_document(reasons: &BlockReasons) -> TaxonomyDocument {
    let reference = reference_distribution();
    TaxonomyDocument {
        format_version: 1,
        taxonomy_version: TAXONOMY_VERSION.to_string(),
        categories: reasons
            .catalog()
            .into_iter()
            .map(|info| (info.id.clone(), info))
            .collect(),
        reference_distribution: Category::sensitive()
            .map(|c| {
                let i = c.ordinal();
                (
                    c.id().to_string(),
                    ReferenceShare {
                        avg: reference.avg[i],
                        max: reference.max[i],
                        avg_upper_bound: reference.avg_upper_bound[i],
                    },
                )
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_order_and_groups() {
        let catalog = category_catalog();
        assert_eq!(catalog.len(), 13);
        assert_eq!(catalog[0].id, "felony_crimes");
        assert_eq!(catalog[11].id, "error_inducing");
        let safe = catalog.iter().find(|c| c.id == "safe").unwrap();
        assert_eq!(safe.ordinal, 12);
        assert_eq!(safe.group, Group::None);
        for (i, info) in catalog.iter().enumerate() {
            assert_eq!(info.ordinal, i);
            let expected = match i {
                0..=3 => Group::Legal,
                4..=7 => Group::Ethical,
                8..=11 => Group::ServiceSensitive,
                _ => Group::None,
            };
            assert_eq!(info.group, expected);
        }
        assert_eq!(category_catalog(), catalog);
    }

    #[test]
    fn parse_is_case_sensitive() {
        assert_eq!(parse_category("discrimination").unwrap().ordinal(), 4);
        assert!(parse_category("SAFE").is_err());
        assert!(parse_category("").is_err());
        for c in Category::ALL {
            assert_eq!(parse_category(c.id()).unwrap(), c);
            assert_eq!(Category::from_ordinal(c.ordinal()), Some(c));
        }
    }

    #[test]
    fn serde_uses_ids() {
        let json = serde_json::to_string(&Category::SuicideSelfHarm).unwrap();
        assert_eq!(json, "\"suicide_self_harm\"");
        for c in Category::ALL {
            let back: Category = serde_json::from_str(&format!("\"{}\"", c.id())).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn reference_values() {
        let reference = reference_distribution();
        assert_eq!(reference.avg_of(Category::Discrimination), Some(36.1));
        assert_eq!(reference.max_of(Category::SuicideSelfHarm), Some(17.2));
        assert!(reference.avg_upper_bound[Category::HighStakes.ordinal()]);
        // column sum is 100.2 because of rounding in the published table
        let sum = reference.avg_sum();
        assert!((sum - 100.2).abs() < 1e-9, "{sum}");
        assert!((sum - 100.0).abs() <= 0.5);
        for i in 0..NUM_SENSITIVE {
            assert!((0.0..=100.0).contains(&reference.avg[i]));
            assert!((0.0..=100.0).contains(&reference.max[i]));
            assert!(reference.avg[i] <= reference.max[i]);
        }
    }

    #[test]
    fn block_reason_overrides() {
        let reasons = BlockReasons::with_overrides([("privacy", "custom")]).unwrap();
        assert_eq!(reasons.get(Category::Privacy), "custom");
        assert!(!reasons.get(Category::FelonyCrimes).is_empty());
        assert!(BlockReasons::with_overrides([("nope", "x")]).is_err());
    }

    #[test]
    fn document_is_version_stamped() {
        let doc = taxonomy_document(&BlockReasons::default());
        assert_eq!(doc.taxonomy_version, TAXONOMY_VERSION);
        assert_eq!(doc.categories.len(), 13);
        assert_eq!(doc.reference_distribution.len(), 12);
        let json = serde_json::to_string(&doc).unwrap();
        let back: TaxonomyDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(back, doc);
    }
}
