//! Cleanup and structural validation of LLM code-review output.
//!
//! Pipeline: strip a conversational opener before the JSON block, strip a
//! sign-off after it, pull the JSON out of a markdown fence if there is one,
//! parse and check the review shape, truncate oversized text, cap the comment
//! count. Every step that changes something leaves a flag on the outcome.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const MAX_SUMMARY_CHARS: usize = 1000;
pub const MAX_BODY_CHARS: usize = 2000;
pub const MAX_COMMENTS: usize = 50;
pub const ELLIPSIS: char = '…';

/// Conversational openers, matched case-insensitively at the start of the
/// text that precedes the JSON block.
pub const PREAMBLE_PATTERNS: [(&str, &str); 6] = [
    ("sure", r"^sure\b"),
    ("here_is", r"^here(?:'s|’s|\s+is|\s+are)\b"),
    ("certainly", r"^certainly\b"),
    ("of_course", r"^of\s+course\b"),
    ("i_will", r"^i(?:'ll|’ll|\s+will)\b"),
    ("okay", r"^(?:okay|ok)\b"),
];

/// Sign-offs, matched case-insensitively at the start of the text that
/// follows the JSON block.
pub const POSTAMBLE_PATTERNS: [(&str, &str); 3] = [
    ("note", r"^note\s*:"),
    ("feel_free", r"^feel\s+free\s+to\s+(?:ask|reach\s+out)\b"),
    ("hope_this_helps", r"^(?:i\s+)?hope\s+(?:this|that|it)\s+helps\b"),
];

fn compile(patterns: &[(&str, &str)]) -> Vec<Regex> {
    patterns
        .iter()
        .map(|(_, p)| Regex::new(&format!("(?i){p}")).expect("static pattern"))
        .collect()
}

fn preamble_rules() -> &'static [Regex] {
    static RULES: OnceLock<Vec<Regex>> = OnceLock::new();
    RULES.get_or_init(|| compile(&PREAMBLE_PATTERNS))
}

fn postamble_rules() -> &'static [Regex] {
    static RULES: OnceLock<Vec<Regex>> = OnceLock::new();
    RULES.get_or_init(|| compile(&POSTAMBLE_PATTERNS))
}

/// Index of the first opener rule matching `text`, if any.
pub fn match_preamble(text: &str) -> Option<usize> {
    let t = text.trim_start();
    preamble_rules().iter().position(|r| r.is_match(t))
}

/// Index of the first sign-off rule matching `text`, if any.
pub fn match_postamble(text: &str) -> Option<usize> {
    let t = text.trim_start();
    postamble_rules().iter().position(|r| r.is_match(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Critical,
    Major,
    Minor,
    Info,
}

impl Severity {
    /// Unknown or missing values become `Info`.
    pub fn normalize(raw: Option<&str>) -> Severity {
        match raw.map(|s| s.trim().to_ascii_lowercase()).as_deref() {
            Some("critical") => Severity::Critical,
            Some("major") => Severity::Major,
            Some("minor") => Severity::Minor,
            _ => Severity::Info,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewComment {
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
    pub body: String,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewPayload {
    pub summary: String,
    pub comments: Vec<ReviewComment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationFlag {
    PreambleStripped,
    PostambleStripped,
    JsonExtractedFromFence,
    SummaryTruncated,
    CommentTruncated,
    CommentsCapped,
    ParseFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub payload: Option<ReviewPayload>,
    pub raw: String,
    pub flags: BTreeSet<ValidationFlag>,
    pub clean: bool,
    /// Why parsing or structural validation failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ValidationOutcome {
    pub fn has(&self, flag: ValidationFlag) -> bool {
        self.flags.contains(&flag)
    }
}

/// Location of the JSON candidate inside a larger text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct BlockSpan {
    /// Start of the fence or opening brace.
    outer_start: usize,
    /// End of the closing fence or closing brace.
    outer_end: usize,
    inner_start: usize,
    inner_end: usize,
    fenced: bool,
}

fn find_fence(text: &str) -> Option<BlockSpan> {
    let open = text.find("```")?;
    let after_ticks = open + 3;
    // The opening fence line may carry a language tag (```json).
    let inner_start = match text[after_ticks..].find('\n') {
        Some(nl) => after_ticks + nl + 1,
        None => return None,
    };
    let inner_end = inner_start + find_closing_fence(&text[inner_start..])?;
    Some(BlockSpan {
        outer_start: open,
        outer_end: inner_end + 3,
        inner_start,
        inner_end,
        fenced: true,
    })
}

/// Offset of the closing fence. One at the start of a line wins over
/// backticks embedded mid-line, which may sit inside a JSON string.
fn find_closing_fence(body: &str) -> Option<usize> {
    let mut line_start = 0;
    for line in body.split_inclusive('\n') {
        let indent = line.len() - line.trim_start_matches([' ', '\t']).len();
        if line[indent..].starts_with("```") {
            return Some(line_start + indent);
        }
        line_start += line.len();
    }
    body.find("```")
}

/// Span of the first balanced `{...}` object, skipping braces inside string
/// literals.
fn find_braces(text: &str) -> Option<BlockSpan> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    let end = start + i + 1;
                    return Some(BlockSpan {
                        outer_start: start,
                        outer_end: end,
                        inner_start: start,
                        inner_end: end,
                        fenced: false,
                    });
                }
            }
            _ => {}
        }
    }
    None
}

// A fence wins unless a balanced object starts before it; backticks inside a
// bare JSON string must not be mistaken for a fence.
fn locate_block(text: &str) -> Option<BlockSpan> {
    match (find_fence(text), find_braces(text)) {
        (Some(f), Some(b)) if b.outer_start < f.outer_start => Some(b),
        (Some(f), _) => Some(f),
        (None, b) => b,
    }
}

/// The first fenced block's interior, else the first balanced JSON object,
/// else `None`.
pub fn extract_json_block(text: &str) -> Option<&str> {
    locate_block(text).map(|s| text[s.inner_start..s.inner_end].trim())
}

fn truncate_chars(s: &str, max: usize) -> Option<String> {
    if s.chars().count() <= max {
        return None;
    }
    let mut out: String = s.chars().take(max - 1).collect();
    out.push(ELLIPSIS);
    Some(out)
}

fn parse_payload(value: Value) -> Result<ReviewPayload, String> {
    let Value::Object(mut obj) = value else {
        return Err("top-level value is not an object".into());
    };
    let summary = match obj.remove("summary") {
        Some(Value::String(s)) => s,
        Some(_) => return Err("summary is not a string".into()),
        None => return Err("summary is missing".into()),
    };
    let raw_comments = match obj.remove("comments") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(a)) => a,
        Some(_) => return Err("comments is not an array".into()),
    };
    let mut comments = Vec::with_capacity(raw_comments.len());
    for (i, c) in raw_comments.into_iter().enumerate() {
        let Value::Object(c) = c else {
            return Err(format!("comments[{i}] is not an object"));
        };
        let file = match c.get("file") {
            Some(Value::String(f)) if !f.trim().is_empty() => f.clone(),
            _ => return Err(format!("comments[{i}].file is missing or not a string")),
        };
        let body = match c.get("body") {
            Some(Value::String(b)) if !b.trim().is_empty() => b.clone(),
            _ => return Err(format!("comments[{i}].body is missing or empty")),
        };
        let line = match c.get("line") {
            None | Some(Value::Null) => None,
            Some(v) => match v.as_u64() {
                Some(n) if n >= 1 => Some(n),
                _ => return Err(format!("comments[{i}].line is not a positive integer")),
            },
        };
        let severity = Severity::normalize(c.get("severity").and_then(Value::as_str));
        comments.push(ReviewComment {
            file,
            line,
            body,
            severity,
        });
    }
    Ok(ReviewPayload { summary, comments })
}

/// Clean and validate a raw review response. Never fails: problems are
/// reported through the outcome's flags.
pub fn validate_review(raw: &str) -> ValidationOutcome {
    let mut flags = BTreeSet::new();
    let failed = |mut flags: BTreeSet<ValidationFlag>, error: String| {
        flags.insert(ValidationFlag::ParseFailed);
        ValidationOutcome {
            payload: None,
            raw: raw.to_string(),
            clean: false,
            flags,
            error: Some(error),
        }
    };

    let Some(span) = locate_block(raw) else {
        return failed(flags, "no JSON object or fenced block found".into());
    };

    let before = &raw[..span.outer_start];
    if !before.trim().is_empty() && match_preamble(before).is_some() {
        flags.insert(ValidationFlag::PreambleStripped);
    }
    let after = &raw[span.outer_end..];
    if !after.trim().is_empty() && match_postamble(after).is_some() {
        flags.insert(ValidationFlag::PostambleStripped);
    }
    if span.fenced {
        flags.insert(ValidationFlag::JsonExtractedFromFence);
    }

    let candidate = raw[span.inner_start..span.inner_end].trim();
    let value: Value = match serde_json::from_str(candidate) {
        Ok(v) => v,
        Err(e) => return failed(flags, format!("invalid JSON: {e}")),
    };
    let mut payload = match parse_payload(value) {
        Ok(p) => p,
        Err(e) => return failed(flags, e),
    };

    if let Some(s) = truncate_chars(&payload.summary, MAX_SUMMARY_CHARS) {
        payload.summary = s;
        flags.insert(ValidationFlag::SummaryTruncated);
    }
    for c in &mut payload.comments {
        if let Some(b) = truncate_chars(&c.body, MAX_BODY_CHARS) {
            c.body = b;
            flags.insert(ValidationFlag::CommentTruncated);
        }
    }
    if payload.comments.len() > MAX_COMMENTS {
        payload.comments.truncate(MAX_COMMENTS);
        flags.insert(ValidationFlag::CommentsCapped);
    }

    ValidationOutcome {
        payload: Some(payload),
        raw: raw.to_string(),
        clean: flags.is_empty(),
        flags,
        error: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ValidationFlag::*;

    fn flags(o: &ValidationOutcome) -> Vec<ValidationFlag> {
        o.flags.iter().copied().collect()
    }

    #[test]
    fn preamble_example() {
        let o = validate_review(r#"Sure, I'll analyze this PR. {"summary":"ok","comments":[]}"#);
        assert_eq!(flags(&o), vec![PreambleStripped]);
        assert_eq!(o.payload.unwrap().summary, "ok");
    }

    #[test]
    fn identity_is_clean() {
        let o = validate_review(r#"{"summary":"ok","comments":[]}"#);
        assert!(o.clean);
        assert!(o.flags.is_empty());
    }

    #[test]
    fn caps_at_fifty() {
        let comments: Vec<_> = (0..51)
            .map(|i| format!(r#"{{"file":"a.rs","line":{},"body":"c{i}","severity":"minor"}}"#, i + 1))
            .collect();
        let raw = format!(r#"{{"summary":"s","comments":[{}]}}"#, comments.join(","));
        let o = validate_review(&raw);
        assert!(o.has(CommentsCapped));
        let p = o.payload.unwrap();
        assert_eq!(p.comments.len(), 50);
        assert_eq!(p.comments[49].body, "c49");
    }

    #[test]
    fn plain_text_fails_and_keeps_raw() {
        let raw = "I could not produce JSON, sorry.";
        let o = validate_review(raw);
        assert_eq!(flags(&o), vec![ParseFailed]);
        assert!(o.payload.is_none());
        assert_eq!(o.raw, raw);
    }

    #[test]
    fn extract_examples() {
        assert_eq!(extract_json_block("```json\n{\"a\":1}\n```"), Some("{\"a\":1}"));
        assert_eq!(
            extract_json_block("prefix {\"a\":{\"b\":2}} suffix"),
            Some("{\"a\":{\"b\":2}}")
        );
        assert_eq!(extract_json_block("no braces at all"), None);
        assert_eq!(extract_json_block("```\n{\"a\":1}\n```"), Some("{\"a\":1}"));
    }

    #[test]
    fn braces_inside_strings_do_not_close() {
        let text = r#"x {"a":"}{ \" }","b":1} y"#;
        assert_eq!(extract_json_block(text), Some(r#"{"a":"}{ \" }","b":1}"#));
        assert_eq!(extract_json_block("{\"open\": 1"), None);
    }

    #[test]
    fn each_preamble_rule_fires() {
        let openers = [
            "Sure, I'll analyze this PR.",
            "Here's my review:",
            "Certainly! Below is the JSON.",
            "Of course. Review follows:",
            "I'll review the changes now.",
            "Okay, here you go:",
        ];
        for (i, opener) in openers.iter().enumerate() {
            assert_eq!(match_preamble(opener), Some(i), "{opener}");
            let o = validate_review(&format!("{opener}\n{{\"summary\":\"s\",\"comments\":[]}}"));
            assert_eq!(flags(&o), vec![PreambleStripped], "{opener}");
        }
        assert_eq!(PREAMBLE_PATTERNS.len(), 6);
    }

    #[test]
    fn each_postamble_rule_fires() {
        let closers = [
            "Note: line numbers are approximate.",
            "Feel free to ask if anything is unclear!",
            "Hope this helps!",
        ];
        for (i, closer) in closers.iter().enumerate() {
            assert_eq!(match_postamble(closer), Some(i), "{closer}");
            let o = validate_review(&format!("{{\"summary\":\"s\",\"comments\":[]}}\n\n{closer}"));
            assert_eq!(flags(&o), vec![PostambleStripped], "{closer}");
        }
    }

    #[test]
    fn unmatched_surroundings_are_not_flagged() {
        let o = validate_review("Review:\n{\"summary\":\"s\",\"comments\":[]}\n-- bot");
        assert!(o.clean);
        assert!(o.payload.is_some());
    }

    #[test]
    fn fence_with_preamble_and_postamble() {
        let raw = "Here is the review:\n```json\n{\"summary\":\"s\",\"comments\":[{\"file\":\"a.rs\",\"body\":\"b\",\"severity\":\"MAJOR\"}]}\n```\nHope this helps!";
        let o = validate_review(raw);
        assert_eq!(flags(&o), vec![PreambleStripped, PostambleStripped, JsonExtractedFromFence]);
        let p = o.payload.unwrap();
        assert_eq!(p.comments[0].severity, Severity::Major);
        assert_eq!(p.comments[0].line, None);
    }

    #[test]
    fn truncation_appends_ellipsis() {
        let raw = serde_json::json!({
            "summary": "s".repeat(1500),
            "comments": [{"file": "a", "body": "b".repeat(2500), "severity": "weird"}]
        })
        .to_string();
        let o = validate_review(&raw);
        assert_eq!(flags(&o), vec![SummaryTruncated, CommentTruncated]);
        let p = o.payload.unwrap();
        assert_eq!(p.summary.chars().count(), 1000);
        assert!(p.summary.ends_with(ELLIPSIS));
        assert_eq!(p.comments[0].body.chars().count(), 2000);
        assert_eq!(p.comments[0].severity, Severity::Info);
    }

    #[test]
    fn structural_failures() {
        for raw in [
            r#"{"comments": []}"#,
            r#"{"summary": 3}"#,
            r#"{"summary": "s", "comments": {}}"#,
            r#"{"summary": "s", "comments": [{"body": "b"}]}"#,
            r#"{"summary": "s", "comments": [{"file": "a", "body": ""}]}"#,
            r#"{"summary": "s", "comments": [{"file": "a", "body": "b", "line": 0}]}"#,
            r#"["not", "object"]"#,
        ] {
            let o = validate_review(raw);
            assert!(o.has(ParseFailed), "{raw}");
            assert!(o.payload.is_none());
            assert!(o.error.is_some());
        }
    }

    #[test]
    fn stripping_never_touches_block_contents() {
        // "Note:" inside the JSON must survive.
        let raw = r#"Sure! {"summary":"Note: keep this","comments":[]} Note: drop this"#;
        let o = validate_review(raw);
        assert_eq!(o.payload.as_ref().unwrap().summary, "Note: keep this");
        assert!(o.has(PostambleStripped));
    }

    fn arb_comment() -> impl Strategy<Value = serde_json::Value> {
        (
            "[a-z]{1,8}\\.rs",
            proptest::option::of(1u64..5000),
            prop_oneof![".{1,40}", ".{1990,2100}"],
            prop::sample::select(vec!["critical", "major", "minor", "info", "nit", "HIGH"]),
        )
            .prop_map(|(file, line, body, sev)| {
                serde_json::json!({"file": file, "line": line, "body": body, "severity": sev})
            })
            .prop_filter("body must be non-blank", |v| {
                !v["body"].as_str().unwrap().trim().is_empty()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bounds_and_idempotence(
            summary in prop_oneof![".{0,50}", ".{990,1100}"],
            comments in prop::collection::vec(arb_comment(), 0..60),
            pre in prop::sample::select(vec!["", "Sure, here you go. ", "Okay:\n"]),
            post in prop::sample::select(vec!["", "\nHope this helps!", "\nNote: approximate"]),
            fenced in any::<bool>(),
        ) {
            let json = serde_json::json!({"summary": summary, "comments": comments}).to_string();
            let body = if fenced { format!("```json\n{json}\n```") } else { json };
            let o = validate_review(&format!("{pre}{body}{post}"));
            let p = o.payload.clone().unwrap_or_else(|| panic!("well-formed input parses: {:?} flags {:?}", o.error, o.flags));
            prop_assert!(p.summary.chars().count() <= MAX_SUMMARY_CHARS);
            prop_assert!(p.comments.len() <= MAX_COMMENTS);
            prop_assert!(p.comments.iter().all(|c| c.body.chars().count() <= MAX_BODY_CHARS));
            prop_assert_eq!(o.clean, o.flags.is_empty());

            let again = validate_review(&serde_json::to_string(&p).unwrap());
            prop_assert!(again.clean);
            prop_assert_eq!(again.payload.unwrap(), p);
        }

        #[test]
        fn never_panics(s in ".{0,200}") {
            let o = validate_review(&s);
            prop_assert_eq!(o.payload.is_none(), o.has(ValidationFlag::ParseFailed));
        }
    }
}
