//! Claude Code session transcript importer.
//!
//! Claude Code keeps one JSONL transcript per session under
//! `~/.claude/projects/<project>/<session>.jsonl`. Assistant turns carry a
//! `message.usage` block; everything else (user turns, tool events, summaries)
//! is skipped. Each usage line becomes one telemetry event keyed by
//! `cc:{session_id}:{entry_uuid}`, so re-importing a tree is a no-op.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use tracing::{info, warn};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::gateway::annotate_usage;
use crate::money::Usd;
use crate::pricing::{MatchKind, PricingRegistry};
use crate::telemetry::{truncate_to_millis, Store, TelemetryEvent, DEDUP_KEY};
use crate::usage::TokenUsage;

pub const DEFAULT_ROOT: &str = "~/.claude/projects/";
pub const AGENT: &str = "claude_code";
pub const FEATURE: &str = "import";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionEntry {
    /// Transcript path relative to the import root.
    pub session_id: String,
    pub entry_uuid: String,
    pub model: String,
    pub usage: TokenUsage,
    pub timestamp: DateTime<Utc>,
    /// A cost recorded in the transcript itself; wins over registry pricing.
    pub explicit_cost: Option<Usd>,
}

impl SessionEntry {
    pub fn dedup_key(&self) -> String {
        format!("cc:{}:{}", self.session_id, self.entry_uuid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedLine {
    Entry(SessionEntry),
    /// Valid JSON without a usage block.
    Skip,
    Malformed(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportResult {
    pub files_scanned: u64,
    pub lines_read: u64,
    pub events_imported: u64,
    pub duplicates_skipped: u64,
    pub lines_skipped_malformed: u64,
}

fn content_hash(line: &str) -> String {
    let digest = Sha256::digest(line.as_bytes());
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}

fn count(usage: &Value, key: &str) -> u64 {
    usage.get(key).and_then(Value::as_u64).unwrap_or(0)
}

/// Parse one transcript line. `fallback_ts` is used when the line has no
/// parseable `timestamp` (normally the file's modification time).
pub fn parse_session_line(line: &str, file_identity: &str, fallback_ts: DateTime<Utc>) -> ParsedLine {
    let value: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return ParsedLine::Malformed(e.to_string()),
    };
    let Some(usage) = value.pointer("/message/usage").filter(|u| u.is_object()) else {
        return ParsedLine::Skip;
    };

    let usage = TokenUsage::new(count(usage, "input_tokens"), count(usage, "output_tokens"))
        .with_cache(
            count(usage, "cache_read_input_tokens"),
            count(usage, "cache_creation_input_tokens"),
        );
    let model = value
        .pointer("/message/model")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let entry_uuid = value
        .get("uuid")
        .and_then(Value::as_str)
        .filter(|u| !u.is_empty())
        .map(str::to_string)
        .unwrap_or_else(|| content_hash(line));
    let timestamp = value
        .get("timestamp")
        .and_then(Value::as_str)
        .and_then(|s| DateTime::parse_from_rfc3339(s).ok())
        .map(|t| t.with_timezone(&Utc))
        .unwrap_or(fallback_ts);
    let explicit_cost = ["costUSD", "cost_usd"]
        .iter()
        .find_map(|k| value.get(*k).and_then(Value::as_f64))
        .and_then(|c| Usd::from_f64(c).ok())
        .filter(|c| !c.is_negative());

    ParsedLine::Entry(SessionEntry {
        session_id: file_identity.to_string(),
        entry_uuid,
        model,
        usage,
        timestamp: truncate_to_millis(timestamp),
        explicit_cost,
    })
}

/// Expand a leading `~/` against `$HOME`.
pub fn expand_home(path: &str) -> PathBuf {
    match (path.strip_prefix("~/").or(if path == "~" { Some("") } else { None }), std::env::var_os("HOME")) {
        (Some(rest), Some(home)) => PathBuf::from(home).join(rest),
        _ => PathBuf::from(path),
    }
}

pub fn default_root() -> PathBuf {
    expand_home(DEFAULT_ROOT)
}

fn to_event(entry: &SessionEntry, registry: &PricingRegistry) -> TelemetryEvent {
    let (resolution, registry_cost) = registry.price(&entry.model, &entry.usage);
    let (cost, cost_source) = match entry.explicit_cost {
        Some(c) => (c, "transcript"),
        None => (registry_cost, "registry"),
    };
    let mut event = TelemetryEvent::new(AGENT, "completion", "anthropic", &entry.model)
        .with_tokens(entry.usage.input_tokens, entry.usage.output_tokens)
        .with_cost(cost)
        .with_feature(FEATURE)
        .at(entry.timestamp)
        .with_meta(DEDUP_KEY, entry.dedup_key())
        .with_meta("source", AGENT)
        .with_meta("session_id", entry.session_id.as_str())
        .with_meta("cost_source", cost_source);
    let kind = if entry.explicit_cost.is_some() {
        MatchKind::Exact
    } else {
        resolution.match_kind
    };
    annotate_usage(&mut event, &entry.usage, kind);
    event
}

fn file_mtime(path: &Path) -> DateTime<Utc> {
    std::fs::metadata(path)
        .and_then(|m| m.modified())
        .map(DateTime::<Utc>::from)
        .unwrap_or_else(|_| Utc::now())
}

/// Single-flight wrapper: at most one import runs at a time.
#[derive(Debug, Default)]
pub struct Importer {
    running: AtomicBool,
}

/// Marks an import as running until dropped.
#[derive(Debug)]
pub struct ImportGuard<'a>(&'a AtomicBool);

impl Drop for ImportGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

impl Importer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_running(&self) -> bool {
        self.running.load(Ordering::Acquire)
    }

    /// Claim the single import slot. Fails with [`Error::ImportInFlight`]
    /// while another guard is alive.
    pub fn begin(&self) -> Result<ImportGuard<'_>> {
        self.running
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .map_err(|_| Error::ImportInFlight)?;
        Ok(ImportGuard(&self.running))
    }

    /// Fails with [`Error::ImportInFlight`] if another import is running.
    pub fn run(
        &self,
        store: &Store,
        registry: &PricingRegistry,
        root: &Path,
        dry_run: bool,
    ) -> Result<ImportResult> {
        let _guard = self.begin()?;
        import_claude_code(store, registry, root, dry_run)
    }
}

/// Import every `*.jsonl` transcript under `root`.
pub fn import_claude_code(
    store: &Store,
    registry: &PricingRegistry,
    root: &Path,
    dry_run: bool,
) -> Result<ImportResult> {
    let meta = std::fs::metadata(root).map_err(|e| Error::Io {
        path: root.display().to_string(),
        source: e,
    })?;
    if !meta.is_dir() {
        return Err(Error::Io {
            path: root.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotADirectory, "not a directory"),
        });
    }

    let mut result = ImportResult::default();
    let mut seen_this_run = HashSet::new();

    let files = WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| match e {
            Ok(e) => Some(e),
            Err(err) => {
                warn!(error = %err, "skipping unreadable directory entry");
                None
            }
        })
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "jsonl"));

    for file in files {
        let path = file.path();
        result.files_scanned += 1;
        let session_id = path
            .strip_prefix(root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        let handle = match File::open(path) {
            Ok(f) => f,
            Err(e) => {
                warn!(path = %path.display(), error = %e, "cannot open transcript");
                result.lines_skipped_malformed += 1;
                continue;
            }
        };
        let fallback_ts = file_mtime(path);

        let mut batch = Vec::new();
        for line in BufReader::new(handle).lines() {
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    warn!(path = %path.display(), error = %e, "unreadable transcript line");
                    result.lines_read += 1;
                    result.lines_skipped_malformed += 1;
                    continue;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            result.lines_read += 1;
            match parse_session_line(&line, &session_id, fallback_ts) {
                ParsedLine::Entry(entry) => {
                    let key = entry.dedup_key();
                    if !seen_this_run.insert(key.clone()) {
                        result.duplicates_skipped += 1;
                        continue;
                    }
                    if dry_run {
                        if store.contains_dedup_key(&key)? {
                            result.duplicates_skipped += 1;
                        } else {
                            result.events_imported += 1;
                        }
                    } else {
                        batch.push(to_event(&entry, registry));
                    }
                }
                ParsedLine::Skip => {}
                ParsedLine::Malformed(_) => result.lines_skipped_malformed += 1,
            }
        }

        if !batch.is_empty() {
            for rec in store.record_events(&batch)? {
                if rec.duplicate {
                    result.duplicates_skipped += 1;
                } else {
                    result.events_imported += 1;
                }
            }
        }
    }

    info!(
        root = %root.display(),
        dry_run,
        files = result.files_scanned,
        imported = result.events_imported,
        duplicates = result.duplicates_skipped,
        "claude code import finished"
    );
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::{BuiltinRegistry, DEFAULT_TTL};
    use std::sync::Arc;

    fn epoch() -> DateTime<Utc> {
        DateTime::<Utc>::UNIX_EPOCH
    }

    #[test]
    fn parses_usage_line() {
        let line = r#"{"uuid":"u1","timestamp":"2025-01-02T03:04:05Z","message":{"model":"claude-sonnet-4","usage":{"input_tokens":100,"output_tokens":20,"cache_read_input_tokens":4000}}}"#;
        let ParsedLine::Entry(e) = parse_session_line(line, "proj/s1.jsonl", epoch()) else {
            panic!("expected entry");
        };
        assert_eq!(e.entry_uuid, "u1");
        assert_eq!(e.model, "claude-sonnet-4");
        assert_eq!(e.usage, TokenUsage::new(100, 20).with_cache(4000, 0));
        assert_eq!(e.timestamp.to_rfc3339(), "2025-01-02T03:04:05+00:00");
        assert_eq!(e.dedup_key(), "cc:proj/s1.jsonl:u1");
    }

    #[test]
    fn user_turn_is_skipped() {
        let line = r#"{"type":"user","message":{"content":"hi"}}"#;
        assert_eq!(parse_session_line(line, "s", epoch()), ParsedLine::Skip);
    }

    #[test]
    fn garbage_is_malformed() {
        assert!(matches!(parse_session_line("not json", "s", epoch()), ParsedLine::Malformed(_)));
    }

    #[test]
    fn missing_uuid_and_timestamp_fall_back() {
        let line = r#"{"message":{"model":"m","usage":{"input_tokens":1,"output_tokens":2}}}"#;
        let ParsedLine::Entry(a) = parse_session_line(line, "s", epoch()) else { panic!() };
        let ParsedLine::Entry(b) = parse_session_line(line, "s", epoch()) else { panic!() };
        assert_eq!(a.entry_uuid, b.entry_uuid);
        assert_eq!(a.entry_uuid.len(), 32);
        assert_eq!(a.timestamp, epoch());
    }

    #[test]
    fn explicit_cost_is_read() {
        let line = r#"{"uuid":"x","costUSD":0.041023,"message":{"model":"m","usage":{"input_tokens":1,"output_tokens":2}}}"#;
        let ParsedLine::Entry(e) = parse_session_line(line, "s", epoch()) else { panic!() };
        assert_eq!(e.explicit_cost, Some(Usd::from_micros(41_023)));
    }

    fn registry(store: &Arc<Store>) -> PricingRegistry {
        PricingRegistry::load(BuiltinRegistry::Embedded, store.clone(), DEFAULT_TTL).unwrap()
    }

    #[test]
    fn empty_directory_counts_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(Store::open_in_memory().unwrap());
        let r = import_claude_code(&store, &registry(&store), dir.path(), false).unwrap();
        assert_eq!(r, ImportResult::default());
    }

    #[test]
    fn missing_root_is_an_error() {
        let store = Arc::new(Store::open_in_memory().unwrap());
        let err = import_claude_code(&store, &registry(&store), Path::new("/no/such/root"), false);
        assert!(matches!(err, Err(Error::Io { .. })));
    }

    #[test]
    fn small_tree_imports_then_dedups() {
        let dir = tempfile::tempdir().unwrap();
        let proj = dir.path().join("-home-dev-proj");
        std::fs::create_dir_all(&proj).unwrap();
        let mut lines = Vec::new();
        for i in 0..6 {
            lines.push(format!(
                r#"{{"uuid":"a{i}","timestamp":"2025-05-01T00:00:0{i}Z","message":{{"model":"claude-sonnet-4-20250514","usage":{{"input_tokens":{},"output_tokens":10}}}}}}"#,
                100 * (i + 1)
            ));
            lines.push(r#"{"type":"user","message":{"content":"next"}}"#.to_string());
        }
        std::fs::write(proj.join("s1.jsonl"), lines.join("\n")).unwrap();
        let lines2: Vec<_> = (0..4)
            .map(|i| format!(r#"{{"uuid":"b{i}","message":{{"model":"claude-haiku-4-5","usage":{{"input_tokens":5,"output_tokens":5}}}}}}"#))
            .chain(["{broken".to_string()])
            .collect();
        std::fs::write(proj.join("s2.jsonl"), lines2.join("\n")).unwrap();
        std::fs::write(proj.join("notes.txt"), "ignored").unwrap();

        let store = Arc::new(Store::open_in_memory().unwrap());
        let reg = registry(&store);

        let dry = import_claude_code(&store, &reg, dir.path(), true).unwrap();
        assert_eq!(dry.events_imported, 10);
        assert_eq!(store.count_events().unwrap(), 0);

        let first = import_claude_code(&store, &reg, dir.path(), false).unwrap();
        assert_eq!(first.files_scanned, 2);
        assert_eq!(first.events_imported, 10);
        assert_eq!(first.duplicates_skipped, 0);
        assert_eq!(first.lines_skipped_malformed, 1);
        assert_eq!(first.lines_read, 17);

        let second = import_claude_code(&store, &reg, dir.path(), false).unwrap();
        assert_eq!(second.events_imported, 0);
        assert_eq!(second.duplicates_skipped, 10);
        assert_eq!(store.count_events().unwrap(), 10);
    }

    #[test]
    fn single_flight_guard() {
        let importer = Importer::new();
        let guard = importer.begin().unwrap();
        assert!(importer.is_running());
        assert!(matches!(importer.begin(), Err(Error::ImportInFlight)));
        let store = Arc::new(Store::open_in_memory().unwrap());
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            importer.run(&store, &registry(&store), dir.path(), false),
            Err(Error::ImportInFlight)
        ));
        drop(guard);
        assert!(importer.run(&store, &registry(&store), dir.path(), false).is_ok());
        assert!(!importer.is_running());
    }
}
