//! Review intelligence: keyword classification of human review comments and
//! an opt-in LLM narrative over the resulting distribution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::Utc;
use regex::{Regex, RegexBuilder};
use rusqlite::{params, OptionalExtension};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{CallTag, Gateway};
use crate::telemetry::Store;
use crate::usage::Provider;

/// The category rule table that ships with the crate.
pub const BUILTIN_RULES_JSON: &str = include_str!("../data/review_categories.json");

pub const SUMMARY_FEATURE: &str = "intelligence_summary";
pub const UNCATEGORIZED: &str = "uncategorized";
const TOP_PATTERN_LIMIT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    BugRisk,
    Style,
    Naming,
    Performance,
    Security,
    Testing,
    Documentation,
    Design,
    Nitpick,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::BugRisk,
        Category::Style,
        Category::Naming,
        Category::Performance,
        Category::Security,
        Category::Testing,
        Category::Documentation,
        Category::Design,
        Category::Nitpick,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::BugRisk => "bug_risk",
            Category::Style => "style",
            Category::Naming => "naming",
            Category::Performance => "performance",
            Category::Security => "security",
            Category::Testing => "testing",
            Category::Documentation => "documentation",
            Category::Design => "design",
            Category::Nitpick => "nitpick",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid("category", format!("unknown category {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryRule {
    pub category: Category,
    pub patterns: Vec<String>,
    pub priority: u32,
}

/// Compiled rule table, ordered by priority (lowest number first).
#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<(CategoryRule, Vec<Regex>)>,
}

impl RuleSet {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_RULES_JSON).expect("shipped rule table is valid")
    }

    /// Load a rule table. It must define each of the nine categories exactly
    /// once with unique priorities.
    pub fn from_json(text: &str) -> Result<Self> {
        let rules: Vec<CategoryRule> = serde_json::from_str(text)
            .map_err(|e| Error::invalid("rules", format!("line {}: {e}", e.line())))?;
        Self::new(rules)
    }

    pub fn new(mut rules: Vec<CategoryRule>) -> Result<Self> {
        let cats: BTreeSet<_> = rules.iter().map(|r| r.category).collect();
        if rules.len() != Category::ALL.len() || cats.len() != Category::ALL.len() {
            return Err(Error::invalid(
                "rules",
                "each of the nine categories must appear exactly once",
            ));
        }
        let prios: BTreeSet<_> = rules.iter().map(|r| r.priority).collect();
        if prios.len() != rules.len() {
            return Err(Error::invalid("rules", "priorities must be unique"));
        }
        rules.sort_by_key(|r| r.priority);
        let compiled = rules
            .into_iter()
            .map(|rule| {
                let regexes = rule
                    .patterns
                    .iter()
                    .map(|p| {
                        RegexBuilder::new(p)
                            .case_insensitive(true)
                            .build()
                            .map_err(|e| Error::invalid("rules", format!("pattern {p:?}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((rule, regexes))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RuleSet { rules: compiled })
    }

    pub fn rules(&self) -> impl Iterator<Item = &CategoryRule> {
        self.rules.iter().map(|(r, _)| r)
    }

    /// First matching rule in priority order wins.
    pub fn classify(&self, text: &str) -> CommentClassification {
        for (rule, regexes) in &self.rules {
            if let Some(i) = regexes.iter().position(|r| r.is_match(text)) {
                return CommentClassification {
                    comment: text.to_string(),
                    category: Some(rule.category),
                    matched_pattern: Some(rule.patterns[i].clone()),
                };
            }
        }
        CommentClassification {
            comment: text.to_string(),
            category: None,
            matched_pattern: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentClassification {
    pub comment: String,
    /// `None` means uncategorized.
    pub category: Option<Category>,
    pub matched_pattern: Option<String>,
}

impl CommentClassification {
    pub fn label(&self) -> &'static str {
        self.category.map_or(UNCATEGORIZED, Category::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternCount {
    pub pattern: String,
    pub category: Category,
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntelligenceDigest {
    pub distribution: BTreeMap<Category, u64>,
    pub uncategorized: u64,
    pub top_patterns: Vec<PatternCount>,
    #[serde(default)]
    pub narrative: Option<String>,
}

impl IntelligenceDigest {
    pub fn classified_total(&self) -> u64 {
        self.distribution.values().sum::<u64>() + self.uncategorized
    }

    pub fn is_empty(&self) -> bool {
        self.distribution.values().all(|&c| c == 0)
    }

    /// Categories with nonzero counts, largest first then by name.
    pub fn ranked(&self) -> Vec<(Category, u64)> {
        let mut v: Vec<_> = self
            .distribution
            .iter()
            .filter(|(_, &n)| n > 0)
            .map(|(&c, &n)| (c, n))
            .collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.as_str().cmp(b.0.as_str())));
        v
    }
}

/// Classify a batch of comments and aggregate the results.
pub fn build_digest<S: AsRef<str>>(rules: &RuleSet, comments: &[S]) -> IntelligenceDigest {
    let mut digest = IntelligenceDigest::default();
    let mut patterns: BTreeMap<(String, Category), u64> = BTreeMap::new();
    for c in comments {
        let cls = rules.classify(c.as_ref());
        match (cls.category, cls.matched_pattern) {
            (Some(cat), Some(p)) => {
                *digest.distribution.entry(cat).or_default() += 1;
                *patterns.entry((p, cat)).or_default() += 1;
            }
            _ => digest.uncategorized += 1,
        }
    }
    let mut top: Vec<_> = patterns
        .into_iter()
        .map(|((pattern, category), count)| PatternCount {
            pattern,
            category,
            count,
        })
        .collect();
    top.sort_by(|a, b| b.count.cmp(&a.count).then(a.pattern.cmp(&b.pattern)));
    top.truncate(TOP_PATTERN_LIMIT);
    digest.top_patterns = top;
    digest
}

/// Prompt asking for a 3-5 paragraph narrative about the team's review
/// culture. Identical digests give identical prompts.
pub fn build_summary_prompt(digest: &IntelligenceDigest) -> Result<String> {
    if digest.is_empty() {
        return Err(Error::invalid("digest", "nothing to summarize"));
    }
    let mut p = String::new();
    p.push_str(
        "You are analyzing the code review culture of a software team. The data below \
         comes from keyword classification of the human review comments left on the \
         team's pull requests.\n\n",
    );
    p.push_str(&format!(
        "Category distribution ({} comments classified):\n",
        digest.classified_total()
    ));
    for (cat, n) in digest.ranked() {
        p.push_str(&format!("- {cat}: {n}\n"));
    }
    p.push_str(&format!("- {UNCATEGORIZED}: {}\n\n", digest.uncategorized));
    if !digest.top_patterns.is_empty() {
        p.push_str("Most frequent matched patterns:\n");
        for t in &digest.top_patterns {
            p.push_str(&format!("- {} ({}): {}\n", t.pattern, t.category, t.count));
        }
        p.push('\n');
    }
    p.push_str(
        "Write a narrative analysis of 3 to 5 paragraphs. Describe what reviewers focus on \
         most, which areas appear under-reviewed, any recurring themes, and concrete \
         suggestions for improving review quality. Use plain prose without headings or \
         bullet lists.",
    );
    Ok(p)
}

/// Ask the configured provider for a narrative. The call is tracked like any
/// other gateway call, under the `intelligence_summary` feature.
pub async fn generate_ai_summary(
    gateway: &Gateway,
    digest: &IntelligenceDigest,
    provider: Provider,
    model: &str,
) -> Result<String> {
    let prompt = build_summary_prompt(digest)?;
    let tag = CallTag::new("intelligence", "summary", SUMMARY_FEATURE);
    let result = gateway.chat(provider, model, &prompt, &tag).await?;
    Ok(result.text)
}

/// Persist the latest digest so reports can include it.
pub fn save_digest(store: &Store, digest: &IntelligenceDigest) -> Result<()> {
    let json = serde_json::to_string(digest)
        .map_err(|e| Error::invalid("digest", e.to_string()))?;
    store.write(|tx| {
        tx.execute(
            "INSERT INTO review_digest (id, digest, updated_ms) VALUES (1, ?1, ?2)
             ON CONFLICT(id) DO UPDATE SET digest = excluded.digest, updated_ms = excluded.updated_ms",
            params![json, Utc::now().timestamp_millis()],
        )?;
        Ok(())
    })
}

pub fn load_digest(store: &Store) -> Result<Option<IntelligenceDigest>> {
    let text: Option<String> = store.read(|tx| {
        Ok(tx
            .query_row("SELECT digest FROM review_digest WHERE id = 1", [], |r| r.get(0))
            .optional()?)
    })?;
    text.map(|t| serde_json::from_str(&t).map_err(|e| Error::invalid("digest", e.to_string())))
        .transpose()
}
