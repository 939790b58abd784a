//! Shareable reports: Weekly Digest, Cost Report and Review Summary, each
//! rendered as Markdown and as a self-contained HTML document.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::analytics::{cost_summary, top_events, BreakdownRow, CostSummary};
use crate::error::{Error, Result};
use crate::intelligence::{load_digest, IntelligenceDigest, UNCATEGORIZED};
use crate::markdown::markdown_to_html;
use crate::telemetry::{Period, Store};

const NOTABLE_EVENTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportType {
    #[serde(alias = "weekly")]
    WeeklyDigest,
    #[serde(alias = "cost")]
    CostReport,
    #[serde(alias = "review")]
    ReviewSummary,
}

impl ReportType {
    pub fn as_str(self) -> &'static str {
        match self {
            ReportType::WeeklyDigest => "weekly_digest",
            ReportType::CostReport => "cost_report",
            ReportType::ReviewSummary => "review_summary",
        }
    }
}

impl fmt::Display for ReportType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReportType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weekly" | "weekly_digest" => Ok(ReportType::WeeklyDigest),
            "cost" | "cost_report" => Ok(ReportType::CostReport),
            "review" | "review_summary" => Ok(ReportType::ReviewSummary),
            other => Err(Error::invalid(
                "report_type",
                format!("unknown report type {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRequest {
    pub report_type: ReportType,
    /// Used by the cost report; `None` means all time. The weekly digest is
    /// always 7 days.
    #[serde(default)]
    pub period: Option<Period>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub report_type: ReportType,
    pub generated_at: DateTime<Utc>,
    pub markdown: String,
    pub html: String,
}

pub fn generate_report(store: &Store, req: ReportRequest, now: DateTime<Utc>) -> Result<ReportDocument> {
    let markdown = match req.report_type {
        ReportType::WeeklyDigest => weekly_digest(store, now)?,
        ReportType::CostReport => cost_report(store, req.period.unwrap_or(Period::All), now)?,
        ReportType::ReviewSummary => review_summary(load_digest(store)?.as_ref(), now),
    };
    Ok(ReportDocument {
        report_type: req.report_type,
        generated_at: now,
        html: markdown_to_html(&markdown),
        markdown,
    })
}

/// `1234567` -> `1,234,567`.
pub fn fmt_count(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn fmt_time(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%d %H:%M UTC").to_string()
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn source_label(agent: &str) -> String {
    match agent {
        "claude_code" => "Claude Code CLI".into(),
        "manual" => "Manual entry".into(),
        "ai_gateway" => "AI gateway".into(),
        "ai_reviewer" => "AI reviewer".into(),
        "intelligence" => "Review intelligence".into(),
        other => other.into(),
    }
}

fn period_label(period: Period) -> String {
    match period.days() {
        Some(d) => format!("last {d} days"),
        None => "all time".into(),
    }
}

fn header(md: &mut String, title: &str, period: Period, now: DateTime<Utc>) {
    md.push_str(&format!("# {title}\n\n"));
    let window = match period.cutoff(now) {
        Some(c) => format!("{} ({} to {})", period_label(period), fmt_time(c), fmt_time(now)),
        None => period_label(period),
    };
    md.push_str(&format!("Generated {} | Period: {window}\n\n", fmt_time(now)));
}

fn totals_table(md: &mut String, s: &CostSummary) {
    md.push_str("| Metric | Value |\n|---|---|\n");
    md.push_str(&format!("| Total cost | **{}** |\n", s.total_cost_usd.display()));
    md.push_str(&format!("| Events | {} |\n", fmt_count(s.total_events)));
    md.push_str(&format!("| Input tokens | {} |\n", fmt_count(s.total_input_tokens)));
    md.push_str(&format!("| Output tokens | {} |\n", fmt_count(s.total_output_tokens)));
    let latency = s
        .average_latency_ms
        .map_or_else(|| "n/a".to_string(), |l| format!("{l:.0} ms"));
    md.push_str(&format!("| Average latency | {latency} |\n\n"));
}

fn breakdown_table(md: &mut String, label: &str, rows: &[BreakdownRow]) {
    md.push_str(&format!("| {label} | Events | Input tokens | Output tokens | Cost |\n"));
    md.push_str("|---|---|---|---|---|\n");
    for r in rows {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            cell(&r.key),
            fmt_count(r.events),
            fmt_count(r.input_tokens),
            fmt_count(r.output_tokens),
            r.cost_usd.display()
        ));
    }
    md.push('\n');
}

fn weekly_digest(store: &Store, now: DateTime<Utc>) -> Result<String> {
    let period = Period::Days7;
    let s = cost_summary(store, period, now)?;
    let mut md = String::new();
    header(&mut md, "Weekly Digest", period, now);
    md.push_str(
        "Pull request, Jira and calendar sections are not available in this deployment; \
         this digest covers AI usage only.\n\n",
    );

    md.push_str("## AI cost summary\n\n");
    if s.total_events == 0 {
        md.push_str("No AI activity was recorded in the last 7 days.\n\n");
    }
    totals_table(&mut md, &s);

    if !s.by_model.is_empty() {
        md.push_str("## Cost by model\n\n");
        breakdown_table(&mut md, "Model", &s.by_model);

        md.push_str("## Notable events\n\n");
        md.push_str("| When | Source | Model | Feature | Tokens | Cost |\n");
        md.push_str("|---|---|---|---|---|---|\n");
        for e in top_events(store, period, now, NOTABLE_EVENTS)? {
            let model = if e.model.is_empty() {
                e.metadata
                    .get("label")
                    .and_then(|v| v.as_str())
                    .unwrap_or("-")
                    .to_string()
            } else {
                e.model.clone()
            };
            md.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} |\n",
                fmt_time(e.timestamp),
                cell(&source_label(&e.agent)),
                cell(&model),
                cell(&e.feature),
                fmt_count(e.total_tokens),
                e.cost_usd.display()
            ));
        }
        md.push('\n');
    }
    Ok(md)
}

fn cost_report(store: &Store, period: Period, now: DateTime<Utc>) -> Result<String> {
    let s = cost_summary(store, period, now)?;
    let mut md = String::new();
    header(&mut md, "AI Cost Report", period, now);

    md.push_str("## Summary\n\n");
    if s.total_events == 0 {
        md.push_str("No AI activity was recorded in this period.\n\n");
    }
    totals_table(&mut md, &s);

    if s.total_events == 0 {
        return Ok(md);
    }

    md.push_str("## Cost by source\n\n");
    md.push_str("| Source | Model | Events | Tokens | Cost |\n|---|---|---|---|---|\n");
    for r in &s.by_source {
        let tokens = r.input_tokens + r.output_tokens;
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            cell(&source_label(&r.source)),
            cell(&r.model),
            fmt_count(r.events),
            if tokens == 0 { "-".to_string() } else { fmt_count(tokens) },
            r.cost_usd.display()
        ));
    }
    md.push_str(&format!(
        "| **Total** | | **{}** | **{}** | **{}** |\n\n",
        fmt_count(s.total_events),
        fmt_count(s.total_tokens()),
        s.total_cost_usd.display()
    ));

    md.push_str("## Cost by model\n\n");
    breakdown_table(&mut md, "Model", &s.by_model);
    md.push_str("## Cost by feature\n\n");
    breakdown_table(&mut md, "Feature", &s.by_feature);

    md.push_str("## Daily trend\n\n| Date (UTC) | Events | Cost |\n|---|---|---|\n");
    for d in &s.daily {
        md.push_str(&format!(
            "| {} | {} | {} |\n",
            d.utc_date,
            fmt_count(d.events),
            d.cost_usd.display()
        ));
    }
    md.push('\n');
    Ok(md)
}

fn share(n: u64, total: u64) -> String {
    if total == 0 {
        return "0.0%".into();
    }
    format!("{:.1}%", n as f64 * 100.0 / total as f64)
}

fn review_summary(digest: Option<&IntelligenceDigest>, now: DateTime<Utc>) -> String {
    let mut md = String::new();
    md.push_str("# Review Summary\n\n");
    md.push_str(&format!("Generated {}\n\n", fmt_time(now)));

    let Some(d) = digest.filter(|d| d.classified_total() > 0) else {
        md.push_str("No review comments have been classified yet.\n");
        return md;
    };
    let total = d.classified_total();

    md.push_str("## Category distribution\n\n| Category | Comments | Share |\n|---|---|---|\n");
    for (cat, n) in d.ranked() {
        md.push_str(&format!("| {cat} | {} | {} |\n", fmt_count(n), share(n, total)));
    }
    md.push_str(&format!(
        "| {UNCATEGORIZED} | {} | {} |\n",
        fmt_count(d.uncategorized),
        share(d.uncategorized, total)
    ));
    md.push_str(&format!("| **Total** | **{}** | **100.0%** |\n\n", fmt_count(total)));

    if !d.top_patterns.is_empty() {
        md.push_str("## Top patterns\n\n| Pattern | Category | Matches |\n|---|---|---|\n");
        for p in &d.top_patterns {
            md.push_str(&format!(
                "| `{}` | {} | {} |\n",
                cell(&p.pattern),
                p.category,
                fmt_count(p.count)
            ));
        }
        md.push('\n');
    }

    if let Some(n) = d.narrative.as_deref().filter(|n| !n.trim().is_empty()) {
        md.push_str("## AI narrative\n\n");
        md.push_str(n.trim());
        md.push_str("\n\n");
    }
    md
}
