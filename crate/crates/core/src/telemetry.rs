//! Unified telemetry table.
//!
//! Every ingestion pathway (gateway calls, transcript imports, manual entries)
//! lands here as a [`TelemetryEvent`]. The store is a single SQLite file that
//! also holds pricing overrides and the latest review digest.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rusqlite::types::ToSql;
use rusqlite::{params, Connection, ErrorCode, OptionalExtension, Row, Transaction};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use uuid::Uuid;

use crate::error::{Error, Result};
use crate::money::Usd;

pub const SCHEMA_VERSION: i64 = 1;

/// Metadata key whose value must be unique across stored events.
pub const DEDUP_KEY: &str = "dedup_key";

const READER_CONNECTIONS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Period {
    #[serde(rename = "7d")]
    Days7,
    #[serde(rename = "30d")]
    Days30,
    #[serde(rename = "90d")]
    Days90,
    #[serde(rename = "all")]
    All,
}

impl Period {
    pub const ALL: [Period; 4] = [Period::Days7, Period::Days30, Period::Days90, Period::All];

    pub fn days(self) -> Option<i64> {
        match self {
            Period::Days7 => Some(7),
            Period::Days30 => Some(30),
            Period::Days90 => Some(90),
            Period::All => None,
        }
    }

    /// Inclusive lower bound `now - N * 24h`, or `None` for all time.
    pub fn cutoff(self, now: DateTime<Utc>) -> Option<DateTime<Utc>> {
        self.days().map(|d| now - Duration::hours(24 * d))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Period::Days7 => "7d",
            Period::Days30 => "30d",
            Period::Days90 => "90d",
            Period::All => "all",
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Period {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "7d" => Ok(Period::Days7),
            "30d" => Ok(Period::Days30),
            "90d" => Ok(Period::Days90),
            "all" => Ok(Period::All),
            other => Err(Error::invalid(
                "period",
                format!("expected one of 7d, 30d, 90d, all; got {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventStatus {
    Ok,
    Error,
}

impl EventStatus {
    fn as_str(self) -> &'static str {
        match self {
            EventStatus::Ok => "ok",
            EventStatus::Error => "error",
        }
    }
}

/// One AI interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryEvent {
    pub id: String,
    pub timestamp: DateTime<Utc>,
    pub agent: String,
    pub operation: String,
    pub provider: String,
    #[serde(default)]
    pub model: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Always `input_tokens + output_tokens`; cache counts go in metadata.
    pub total_tokens: u64,
    pub cost_usd: Usd,
    pub latency_ms: Option<u64>,
    pub feature: String,
    pub status: EventStatus,
    pub error: Option<String>,
    #[serde(default)]
    pub metadata: Map<String, Value>,
}

/// Truncate to whole milliseconds, the precision the store keeps.
pub fn truncate_to_millis(ts: DateTime<Utc>) -> DateTime<Utc> {
    Utc.timestamp_millis_opt(ts.timestamp_millis())
        .single()
        .unwrap_or(ts)
}

impl TelemetryEvent {
    /// A zero-token, zero-cost `ok` event stamped with a fresh id and the
    /// current time.
    pub fn new(
        agent: impl Into<String>,
        operation: impl Into<String>,
        provider: impl Into<String>,
        model: impl Into<String>,
    ) -> Self {
        TelemetryEvent {
            id: Uuid::new_v4().to_string(),
            timestamp: truncate_to_millis(Utc::now()),
            agent: agent.into(),
            operation: operation.into(),
            provider: provider.into(),
            model: model.into(),
            input_tokens: 0,
            output_tokens: 0,
            total_tokens: 0,
            cost_usd: Usd::ZERO,
            latency_ms: None,
            feature: String::new(),
            status: EventStatus::Ok,
            error: None,
            metadata: Map::new(),
        }
    }

    pub fn with_tokens(mut self, input: u64, output: u64) -> Self {
        self.input_tokens = input;
        self.output_tokens = output;
        self.total_tokens = input + output;
        self
    }

    pub fn with_cost(mut self, cost: Usd) -> Self {
        self.cost_usd = cost;
        self
    }

    pub fn with_feature(mut self, feature: impl Into<String>) -> Self {
        self.feature = feature.into();
        self
    }

    pub fn at(mut self, timestamp: DateTime<Utc>) -> Self {
        self.timestamp = truncate_to_millis(timestamp);
        self
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn failed(mut self, error: impl Into<String>) -> Self {
        self.status = EventStatus::Error;
        self.error = Some(error.into());
        self
    }

    pub fn dedup_key(&self) -> Option<&str> {
        self.metadata.get(DEDUP_KEY).and_then(Value::as_str)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::invalid("id", "must not be empty"));
        }
        let Some(sum) = self.input_tokens.checked_add(self.output_tokens) else {
            return Err(Error::invalid("total_tokens", "token counts overflow"));
        };
        if self.total_tokens != sum {
            return Err(Error::invalid(
                "total_tokens",
                format!(
                    "total_tokens mismatch: {} != {} + {}",
                    self.total_tokens, self.input_tokens, self.output_tokens
                ),
            ));
        }
        if self.total_tokens > i64::MAX as u64 {
            return Err(Error::invalid("total_tokens", "exceeds storable range"));
        }
        if self.latency_ms.is_some_and(|l| l > i64::MAX as u64) {
            return Err(Error::invalid("latency_ms", "exceeds storable range"));
        }
        if self.cost_usd.is_negative() {
            return Err(Error::invalid("cost_usd", "must be non-negative"));
        }
        match (self.status, &self.error) {
            (EventStatus::Error, None) => {
                return Err(Error::invalid("error", "required when status is error"))
            }
            (EventStatus::Ok, Some(_)) => {
                return Err(Error::invalid("error", "must be absent when status is ok"))
            }
            _ => {}
        }
        if let Some(v) = self.metadata.get(DEDUP_KEY) {
            if !v.is_string() {
                return Err(Error::invalid("metadata", "dedup_key must be a string"));
            }
        }
        Ok(())
    }
}

/// Outcome of [`Store::record_event`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Recorded {
    pub id: String,
    /// The event's dedup key was already stored; `id` is the existing row.
    pub duplicate: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
pub struct EventFilter {
    pub period: Option<Period>,
    pub provider: Option<String>,
    pub model: Option<String>,
    pub feature: Option<String>,
    pub agent: Option<String>,
}

impl EventFilter {
    pub fn period(period: Period) -> Self {
        EventFilter {
            period: Some(period),
            ..Default::default()
        }
    }

    pub fn provider(mut self, provider: impl Into<String>) -> Self {
        self.provider = Some(provider.into());
        self
    }

    pub fn model(mut self, model: impl Into<String>) -> Self {
        self.model = Some(model.into());
        self
    }

    pub fn feature(mut self, feature: impl Into<String>) -> Self {
        self.feature = Some(feature.into());
        self
    }

    pub fn agent(mut self, agent: impl Into<String>) -> Self {
        self.agent = Some(agent.into());
        self
    }
}

/// SQLite-backed telemetry store.
///
/// Writes go through one connection behind a mutex. File-backed stores run in
/// WAL mode with separate reader connections, so reads see a consistent
/// snapshot without waiting on writers.
pub struct Store {
    writer: Mutex<Connection>,
    readers: Vec<Mutex<Connection>>,
    next_reader: AtomicUsize,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store")
            .field("readers", &self.readers.len())
            .finish()
    }
}

impl Store {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let writer = Connection::open(path)?;
        writer.pragma_update(None, "journal_mode", "WAL")?;
        configure(&writer)?;
        migrate(&writer)?;

        let readers = (0..READER_CONNECTIONS)
            .map(|_| -> Result<_> {
                let conn = Connection::open(path)?;
                configure(&conn)?;
                Ok(Mutex::new(conn))
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Store {
            writer: Mutex::new(writer),
            readers,
            next_reader: AtomicUsize::new(0),
        })
    }

    pub fn open_in_memory() -> Result<Self> {
        let conn = Connection::open_in_memory()?;
        configure(&conn)?;
        migrate(&conn)?;
        Ok(Store {
            writer: Mutex::new(conn),
            readers: Vec::new(),
            next_reader: AtomicUsize::new(0),
        })
    }

    /// Run `f` inside a write transaction; commits on `Ok`.
    pub(crate) fn write<T>(&self, f: impl FnOnce(&Transaction<'_>) -> Result<T>) -> Result<T> {
        let mut conn = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let tx = conn.transaction()?;
        let out = f(&tx)?;
        tx.commit()?;
        Ok(out)
    }

    /// Run `f` inside a read transaction, giving it a stable snapshot.
    pub(crate) fn read<T>(&self, f: impl FnOnce(&Transaction<'_>) -> Result<T>) -> Result<T> {
        if self.readers.is_empty() {
            return self.write(f);
        }
        let start = self.next_reader.fetch_add(1, Ordering::Relaxed);
        let n = self.readers.len();
        let mut guard = (0..n)
            .find_map(|i| self.readers[(start + i) % n].try_lock().ok())
            .unwrap_or_else(|| {
                self.readers[start % n]
                    .lock()
                    .unwrap_or_else(|e| e.into_inner())
            });
        let tx = guard.transaction()?;
        let out = f(&tx)?;
        tx.finish()?;
        Ok(out)
    }

    pub fn schema_version(&self) -> Result<i64> {
        self.read(|tx| {
            let v: String = tx.query_row(
                "SELECT value FROM schema_meta WHERE key = 'schema_version'",
                [],
                |r| r.get(0),
            )?;
            v.parse()
                .map_err(|_| Error::invalid("schema_version", format!("unparseable {v:?}")))
        })
    }

    pub fn record_event(&self, event: &TelemetryEvent) -> Result<Recorded> {
        event.validate()?;
        self.write(|tx| insert_event(tx, event))
    }

    /// Record many events in one transaction. Validation happens up front, so
    /// either every event is accepted (or deduplicated) or none is written.
    pub fn record_events(&self, events: &[TelemetryEvent]) -> Result<Vec<Recorded>> {
        for e in events {
            e.validate()?;
        }
        self.write(|tx| events.iter().map(|e| insert_event(tx, e)).collect())
    }

    pub fn contains_dedup_key(&self, key: &str) -> Result<bool> {
        self.read(|tx| {
            Ok(tx
                .query_row(
                    "SELECT 1 FROM ai_telemetry WHERE dedup_key = ?1",
                    [key],
                    |_| Ok(()),
                )
                .optional()?
                .is_some())
        })
    }

    pub fn query_events(
        &self,
        filter: &EventFilter,
        now: DateTime<Utc>,
    ) -> Result<Vec<TelemetryEvent>> {
        let mut sql = String::from(
            "SELECT id, ts_ms, agent, operation, provider, model, input_tokens, output_tokens, \
             total_tokens, cost_micros, latency_ms, feature, status, error, metadata \
             FROM ai_telemetry WHERE 1 = 1",
        );
        let mut args: Vec<Box<dyn ToSql>> = Vec::new();
        if let Some(cutoff) = filter.period.and_then(|p| p.cutoff(now)) {
            sql.push_str(" AND ts_ms >= ?");
            args.push(Box::new(cutoff.timestamp_millis()));
        }
        for (column, value) in [
            ("provider", &filter.provider),
            ("model", &filter.model),
            ("feature", &filter.feature),
            ("agent", &filter.agent),
        ] {
            if let Some(v) = value {
                sql.push_str(&format!(" AND {column} = ?"));
                args.push(Box::new(v.clone()));
            }
        }
        sql.push_str(" ORDER BY ts_ms ASC, seq ASC");

        self.read(|tx| {
            let mut stmt = tx.prepare(&sql)?;
            let rows = stmt.query_map(
                rusqlite::params_from_iter(args.iter().map(|a| a.as_ref())),
                row_to_event,
            )?;
            rows.map(|r| r.map_err(Error::from)).collect()
        })
    }

    pub fn count_events(&self) -> Result<u64> {
        self.read(|tx| {
            let n: i64 = tx.query_row("SELECT COUNT(*) FROM ai_telemetry", [], |r| r.get(0))?;
            Ok(n as u64)
        })
    }
}

fn configure(conn: &Connection) -> Result<()> {
    conn.busy_timeout(std::time::Duration::from_secs(5))?;
    conn.pragma_update(None, "foreign_keys", "ON")?;
    Ok(())
}

fn migrate(conn: &Connection) -> Result<()> {
    conn.execute_batch(
        "CREATE TABLE IF NOT EXISTS schema_meta (
             key   TEXT PRIMARY KEY,
             value TEXT NOT NULL
         );
         CREATE TABLE IF NOT EXISTS ai_telemetry (
             seq           INTEGER PRIMARY KEY AUTOINCREMENT,
             id            TEXT NOT NULL UNIQUE,
             ts_ms         INTEGER NOT NULL,
             agent         TEXT NOT NULL,
             operation     TEXT NOT NULL,
             provider      TEXT NOT NULL,
             model         TEXT NOT NULL DEFAULT '',
             input_tokens  INTEGER NOT NULL CHECK (input_tokens >= 0),
             output_tokens INTEGER NOT NULL CHECK (output_tokens >= 0),
             total_tokens  INTEGER NOT NULL CHECK (total_tokens = input_tokens + output_tokens),
             cost_micros   INTEGER NOT NULL CHECK (cost_micros >= 0),
             latency_ms    INTEGER,
             feature       TEXT NOT NULL,
             status        TEXT NOT NULL CHECK (status IN ('ok', 'error')),
             error         TEXT,
             metadata      TEXT NOT NULL DEFAULT '{}',
             dedup_key     TEXT UNIQUE
         );
         CREATE INDEX IF NOT EXISTS idx_ai_telemetry_ts ON ai_telemetry (ts_ms);
         CREATE TABLE IF NOT EXISTS model_pricing (
             model_id      TEXT PRIMARY KEY COLLATE NOCASE,
             provider      TEXT NOT NULL,
             display_name  TEXT NOT NULL,
             input_micros  INTEGER NOT NULL,
             output_micros INTEGER NOT NULL,
             updated_ms    INTEGER NOT NULL
         );
         CREATE TABLE IF NOT EXISTS review_digest (
             id         INTEGER PRIMARY KEY CHECK (id = 1),
             digest     TEXT NOT NULL,
             updated_ms INTEGER NOT NULL
         );",
    )?;
    let current: Option<String> = conn
        .query_row(
            "SELECT value FROM schema_meta WHERE key = 'schema_version'",
            [],
            |r| r.get(0),
        )
        .optional()?;
    if current.is_none() {
        conn.execute(
            "INSERT INTO schema_meta (key, value) VALUES ('schema_version', ?1)",
            [SCHEMA_VERSION.to_string()],
        )?;
    }
    Ok(())
}

fn insert_event(tx: &Transaction<'_>, event: &TelemetryEvent) -> Result<Recorded> {
    let dedup = event.dedup_key();
    if let Some(key) = dedup {
        let existing: Option<String> = tx
            .query_row(
                "SELECT id FROM ai_telemetry WHERE dedup_key = ?1",
                [key],
                |r| r.get(0),
            )
            .optional()?;
        if let Some(id) = existing {
            return Ok(Recorded {
                id,
                duplicate: true,
            });
        }
    }

    let metadata = Value::Object(event.metadata.clone()).to_string();
    let result = tx.execute(
        "INSERT INTO ai_telemetry (id, ts_ms, agent, operation, provider, model, input_tokens,
             output_tokens, total_tokens, cost_micros, latency_ms, feature, status, error,
             metadata, dedup_key)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14, ?15, ?16)",
        params![
            event.id,
            event.timestamp.timestamp_millis(),
            event.agent,
            event.operation,
            event.provider,
            event.model,
            event.input_tokens as i64,
            event.output_tokens as i64,
            event.total_tokens as i64,
            event.cost_usd.micros(),
            event.latency_ms.map(|l| l as i64),
            event.feature,
            event.status.as_str(),
            event.error,
            metadata,
            dedup,
        ],
    );
    match result {
        Ok(_) => Ok(Recorded {
            id: event.id.clone(),
            duplicate: false,
        }),
        Err(rusqlite::Error::SqliteFailure(e, _)) if e.code == ErrorCode::ConstraintViolation => {
            Err(Error::invalid("id", format!("event id {} already stored", event.id)))
        }
        Err(e) => Err(e.into()),
    }
}

fn row_to_event(row: &Row<'_>) -> rusqlite::Result<TelemetryEvent> {
    let ts_ms: i64 = row.get(1)?;
    let status: String = row.get(12)?;
    let metadata: String = row.get(14)?;
    let metadata = match serde_json::from_str::<Value>(&metadata) {
        Ok(Value::Object(map)) => map,
        _ => Map::new(),
    };
    Ok(TelemetryEvent {
        id: row.get(0)?,
        timestamp: Utc
            .timestamp_millis_opt(ts_ms)
            .single()
            .unwrap_or_default(),
        agent: row.get(2)?,
        operation: row.get(3)?,
        provider: row.get(4)?,
        model: row.get(5)?,
        input_tokens: row.get::<_, i64>(6)? as u64,
        output_tokens: row.get::<_, i64>(7)? as u64,
        total_tokens: row.get::<_, i64>(8)? as u64,
        cost_usd: Usd::from_micros(row.get(9)?),
        latency_ms: row.get::<_, Option<i64>>(10)?.map(|l| l as u64),
        feature: row.get(11)?,
        status: if status == "error" {
            EventStatus::Error
        } else {
            EventStatus::Ok
        },
        error: row.get(13)?,
        metadata,
    })
}
