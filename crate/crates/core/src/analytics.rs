//! Cost analytics over the telemetry table, plus manual cost entries.
//!
//! Aggregation runs as SQL grouping inside one read transaction, so every
//! breakdown in a [`CostSummary`] comes from the same snapshot. Money is summed
//! as integer micro-USD; the per-dimension sums therefore equal the total
//! exactly.

use chrono::{DateTime, NaiveDate, NaiveTime, Utc};
use rusqlite::{params_from_iter, Transaction};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::money::Usd;
use crate::telemetry::{Period, Store, TelemetryEvent};

/// Group key for events without a model and without a label.
pub const UNLABELED_MODEL: &str = "(manual)";

const MODEL_KEY_SQL: &str =
    "CASE WHEN model = '' THEN COALESCE(json_extract(metadata, '$.label'), '(manual)') ELSE model END";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub key: String,
    pub events: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost_usd: Usd,
    pub cost_micros: i64,
}

/// Spend per (agent, model) pair, e.g. one row per imported model plus one
/// per manual subscription.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRow {
    pub source: String,
    pub model: String,
    pub events: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost_usd: Usd,
    pub cost_micros: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyPoint {
    pub utc_date: NaiveDate,
    pub cost_usd: Usd,
    pub cost_micros: i64,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub period: Period,
    pub total_cost_usd: Usd,
    pub total_cost_micros: i64,
    pub total_input_tokens: u64,
    pub total_output_tokens: u64,
    pub total_events: u64,
    /// Mean over events that carry a latency; `None` when none do.
    pub average_latency_ms: Option<f64>,
    pub by_model: Vec<BreakdownRow>,
    pub by_feature: Vec<BreakdownRow>,
    pub by_source: Vec<SourceRow>,
    pub daily: Vec<DailyPoint>,
}

impl CostSummary {
    pub fn total_tokens(&self) -> u64 {
        self.total_input_tokens + self.total_output_tokens
    }
}

fn window(period: Period, now: DateTime<Utc>) -> (String, Vec<i64>) {
    match period.cutoff(now) {
        Some(c) => ("WHERE ts_ms >= ?".into(), vec![c.timestamp_millis()]),
        None => (String::new(), Vec::new()),
    }
}

fn breakdown(tx: &Transaction<'_>, key_sql: &str, filter: &str, args: &[i64]) -> Result<Vec<BreakdownRow>> {
    let sql = format!(
        "SELECT {key_sql} AS k, COUNT(*), COALESCE(SUM(input_tokens), 0),
                COALESCE(SUM(output_tokens), 0), COALESCE(SUM(cost_micros), 0)
         FROM ai_telemetry {filter}
         GROUP BY k
         ORDER BY 5 DESC, k ASC"
    );
    let mut stmt = tx.prepare(&sql)?;
    let rows = stmt.query_map(params_from_iter(args), |r| {
        let micros: i64 = r.get(4)?;
        Ok(BreakdownRow {
            key: r.get(0)?,
            events: r.get::<_, i64>(1)? as u64,
            input_tokens: r.get::<_, i64>(2)? as u64,
            output_tokens: r.get::<_, i64>(3)? as u64,
            cost_usd: Usd::from_micros(micros),
            cost_micros: micros,
        })
    })?;
    Ok(rows.collect::<rusqlite::Result<_>>()?)
}

/// Aggregate all events inside the period window ending at `now`.
pub fn cost_summary(store: &Store, period: Period, now: DateTime<Utc>) -> Result<CostSummary> {
    let (filter, args) = window(period, now);
    store.read(|tx| {
        let (total_events, input, output, micros, avg_latency) = tx.query_row(
            &format!(
                "SELECT COUNT(*), COALESCE(SUM(input_tokens), 0), COALESCE(SUM(output_tokens), 0),
                        COALESCE(SUM(cost_micros), 0), AVG(latency_ms)
                 FROM ai_telemetry {filter}"
            ),
            params_from_iter(&args),
            |r| {
                Ok((
                    r.get::<_, i64>(0)? as u64,
                    r.get::<_, i64>(1)? as u64,
                    r.get::<_, i64>(2)? as u64,
                    r.get::<_, i64>(3)?,
                    r.get::<_, Option<f64>>(4)?,
                ))
            },
        )?;

        let by_model = breakdown(tx, MODEL_KEY_SQL, &filter, &args)?;
        let by_feature = breakdown(tx, "feature", &filter, &args)?;

        let by_source = {
            let mut stmt = tx.prepare(&format!(
                "SELECT agent, {MODEL_KEY_SQL} AS k, COUNT(*), SUM(input_tokens),
                        SUM(output_tokens), SUM(cost_micros)
                 FROM ai_telemetry {filter}
                 GROUP BY agent, k
                 ORDER BY 6 DESC, agent ASC, k ASC"
            ))?;
            let rows = stmt.query_map(params_from_iter(&args), |r| {
                let micros: i64 = r.get(5)?;
                Ok(SourceRow {
                    source: r.get(0)?,
                    model: r.get(1)?,
                    events: r.get::<_, i64>(2)? as u64,
                    input_tokens: r.get::<_, i64>(3)? as u64,
                    output_tokens: r.get::<_, i64>(4)? as u64,
                    cost_usd: Usd::from_micros(micros),
                    cost_micros: micros,
                })
            })?;
            rows.collect::<rusqlite::Result<Vec<_>>>()?
        };

        let daily = {
            let mut stmt = tx.prepare(&format!(
                "SELECT date(ts_ms / 1000, 'unixepoch') AS d, SUM(cost_micros), COUNT(*)
                 FROM ai_telemetry {filter}
                 GROUP BY d
                 ORDER BY d ASC"
            ))?;
            let rows = stmt.query_map(params_from_iter(&args), |r| {
                Ok((r.get::<_, String>(0)?, r.get::<_, i64>(1)?, r.get::<_, i64>(2)?))
            })?;
            let mut out = Vec::new();
            for row in rows {
                let (d, micros, events) = row?;
                let utc_date = NaiveDate::parse_from_str(&d, "%Y-%m-%d")
                    .map_err(|e| Error::invalid("utc_date", format!("{d:?}: {e}")))?;
                out.push(DailyPoint {
                    utc_date,
                    cost_usd: Usd::from_micros(micros),
                    cost_micros: micros,
                    events: events as u64,
                });
            }
            out
        };

        Ok(CostSummary {
            period,
            total_cost_usd: Usd::from_micros(micros),
            total_cost_micros: micros,
            total_input_tokens: input,
            total_output_tokens: output,
            total_events,
            average_latency_ms: avg_latency,
            by_model,
            by_feature,
            by_source,
            daily,
        })
    })
}

/// The `limit` most expensive events in the period, most expensive first.
pub fn top_events(
    store: &Store,
    period: Period,
    now: DateTime<Utc>,
    limit: usize,
) -> Result<Vec<TelemetryEvent>> {
    let mut events = store.query_events(&crate::telemetry::EventFilter::period(period), now)?;
    events.sort_by(|a, b| {
        b.cost_usd
            .cmp(&a.cost_usd)
            .then(a.timestamp.cmp(&b.timestamp))
            .then(a.id.cmp(&b.id))
    });
    events.truncate(limit);
    Ok(events)
}

/// Spend for a tool with no usage API (a subscription, a seat licence).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualCostEntry {
    pub label: String,
    pub cost_usd: Usd,
    pub utc_date: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ManualCostEntry {
    pub fn validate(&self) -> Result<()> {
        if self.label.trim().is_empty() {
            return Err(Error::invalid("label", "must not be empty"));
        }
        if self.cost_usd <= Usd::ZERO {
            return Err(Error::invalid("cost_usd", "must be greater than zero"));
        }
        Ok(())
    }

    pub fn to_event(&self) -> TelemetryEvent {
        let label = self.label.trim();
        let mut event = TelemetryEvent::new("manual", "manual_entry", "manual", "")
            .with_cost(self.cost_usd)
            .with_feature("manual")
            .at(self.utc_date.and_time(NaiveTime::MIN).and_utc())
            .with_meta("label", label)
            .with_meta("source", "manual");
        if let Some(note) = self.note.as_deref().filter(|n| !n.trim().is_empty()) {
            event.metadata.insert("note".into(), Value::String(note.to_string()));
        }
        event
    }
}

/// Store a manual entry as a zero-token telemetry event dated at midnight UTC.
pub fn record_manual_cost(store: &Store, entry: &ManualCostEntry) -> Result<String> {
    entry.validate()?;
    Ok(store.record_event(&entry.to_event())?.id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;
    use proptest::prelude::*;

    fn ts(s: &str) -> DateTime<Utc> {
        DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
    }

    #[test]
    fn empty_store_is_zeroed() {
        let store = Store::open_in_memory().unwrap();
        let s = cost_summary(&store, Period::All, Utc::now()).unwrap();
        assert_eq!(s.total_events, 0);
        assert_eq!(s.total_cost_usd, Usd::ZERO);
        assert_eq!(s.total_tokens(), 0);
        assert_eq!(s.average_latency_ms, None);
        assert!(s.by_model.is_empty() && s.by_feature.is_empty() && s.daily.is_empty());
    }

    #[test]
    fn two_days_two_points() {
        let store = Store::open_in_memory().unwrap();
        let now = ts("2025-06-10T12:00:00Z");
        store
            .record_event(
                &TelemetryEvent::new("a", "chat", "p", "m")
                    .with_cost("1.25".parse().unwrap())
                    .at(ts("2025-06-01T10:00:00Z")),
            )
            .unwrap();
        store
            .record_event(
                &TelemetryEvent::new("a", "chat", "p", "m")
                    .with_cost("2.50".parse().unwrap())
                    .at(ts("2025-06-02T23:59:59Z")),
            )
            .unwrap();
        let s = cost_summary(&store, Period::All, now).unwrap();
        assert_eq!(s.total_cost_usd.to_string(), "3.750000");
        assert_eq!(s.daily.len(), 2);
        assert_eq!(s.daily[0].utc_date, NaiveDate::from_ymd_opt(2025, 6, 1).unwrap());
    }

    #[test]
    fn average_latency_ignores_missing() {
        let store = Store::open_in_memory().unwrap();
        let mut a = TelemetryEvent::new("a", "chat", "p", "m");
        a.latency_ms = Some(100);
        let mut b = TelemetryEvent::new("a", "chat", "p", "m");
        b.latency_ms = Some(300);
        let c = TelemetryEvent::new("manual", "manual_entry", "manual", "");
        store.record_events(&[a, b, c]).unwrap();
        let s = cost_summary(&store, Period::All, Utc::now()).unwrap();
        assert_eq!(s.average_latency_ms, Some(200.0));
    }

    #[test]
    fn manual_entry_lands_under_label_and_feature() {
        let store = Store::open_in_memory().unwrap();
        let entry = ManualCostEntry {
            label: "Cursor Pro".into(),
            cost_usd: "20.00".parse().unwrap(),
            utc_date: NaiveDate::from_ymd_opt(2025, 6, 1).unwrap(),
            note: None,
        };
        let before = cost_summary(&store, Period::All, Utc::now()).unwrap();
        record_manual_cost(&store, &entry).unwrap();
        let s = cost_summary(&store, Period::All, Utc::now()).unwrap();
        assert_eq!(s.total_cost_micros - before.total_cost_micros, 20_000_000);
        assert_eq!(s.by_model[0].key, "Cursor Pro");
        assert_eq!(s.by_feature[0].key, "manual");
        assert_eq!(s.by_source[0].source, "manual");
        assert_eq!(s.total_tokens(), 0);
    }

    #[test]
    fn manual_entry_rejections() {
        let store = Store::open_in_memory().unwrap();
        let mut entry = ManualCostEntry {
            label: "Cursor Pro".into(),
            cost_usd: Usd::ZERO,
            utc_date: NaiveDate::from_ymd_opt(2025, 6, 1).unwrap(),
            note: None,
        };
        assert!(matches!(record_manual_cost(&store, &entry), Err(Error::Invalid { field: "cost_usd", .. })));
        entry.cost_usd = "-5".parse().unwrap();
        assert!(matches!(record_manual_cost(&store, &entry), Err(Error::Invalid { field: "cost_usd", .. })));
        entry.cost_usd = Usd::from_cents(100);
        entry.label = "  ".into();
        assert!(matches!(record_manual_cost(&store, &entry), Err(Error::Invalid { field: "label", .. })));
        assert_eq!(store.count_events().unwrap(), 0);
    }

    #[test]
    fn top_events_orders_by_cost() {
        let store = Store::open_in_memory().unwrap();
        let now = Utc::now();
        for c in [3, 9, 1, 7] {
            store
                .record_event(&TelemetryEvent::new("a", "chat", "p", "m").with_cost(Usd::from_cents(c)).at(now))
                .unwrap();
        }
        let top = top_events(&store, Period::All, now, 2).unwrap();
        assert_eq!(top.iter().map(|e| e.cost_usd).collect::<Vec<_>>(), vec![Usd::from_cents(9), Usd::from_cents(7)]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn widening_period_is_monotone(
            events in prop::collection::vec((0i64..200 * 24, 0i64..5_000_000), 0..40)
        ) {
            let store = Store::open_in_memory().unwrap();
            let now = ts("2025-07-01T00:00:00Z");
            let evs: Vec<_> = events
                .iter()
                .map(|(age_h, c)| {
                    TelemetryEvent::new("a", "op", "p", "m")
                        .with_cost(Usd::from_micros(*c))
                        .at(now - Duration::hours(*age_h))
                })
                .collect();
            store.record_events(&evs).unwrap();
            let mut prev: Option<CostSummary> = None;
            for p in Period::ALL {
                let s = cost_summary(&store, p, now).unwrap();
                if let Some(prev) = prev {
                    prop_assert!(s.total_events >= prev.total_events);
                    prop_assert!(s.total_cost_micros >= prev.total_cost_micros);
                }
                prev = Some(s);
            }
        }
    }
}
