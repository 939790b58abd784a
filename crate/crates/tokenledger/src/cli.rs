//! Command-line interface. `run_cli` returns the process exit code: 0 on
//! success, 1 on a runtime failure, 2 on a usage error.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use chrono::{NaiveDate, Utc};
use clap::{Parser, Subcommand, ValueEnum};

use tokenledger_core::analytics::{record_manual_cost, ManualCostEntry};
use tokenledger_core::importer::{default_root, import_claude_code};
use tokenledger_core::intelligence::{build_digest, save_digest, RuleSet};
use tokenledger_core::money::Usd;
use tokenledger_core::pricing::{ModelPricing, PricingRegistry, PricingSource};
use tokenledger_core::reports::{generate_report, ReportRequest, ReportType};
use tokenledger_core::{Period, Store};

use crate::config::ServiceConfig;

#[derive(Debug, Parser)]
#[command(name = "tokenledger", version, about = "Self-hosted AI cost observability")]
struct Cli {
    /// Database file (overrides TOKENLEDGER_DB).
    #[arg(long, global = true)]
    db: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        /// Listen port (overrides TOKENLEDGER_PORT).
        #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
        port: Option<u16>,
    },
    /// Import token usage from Claude Code session transcripts.
    ImportClaudeCode {
        #[arg(long)]
        root: Option<PathBuf>,
        /// Count what would be imported without writing.
        #[arg(long)]
        dry_run: bool,
    },
    /// Generate a report.
    Report {
        #[arg(long = "type", value_enum)]
        report_type: ReportKind,
        #[arg(long, value_enum, default_value = "md")]
        format: OutputFormat,
        /// Write to FILE instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// 7d, 30d, 90d or all (cost report only; default all).
        #[arg(long)]
        period: Option<Period>,
    },
    /// Record spend for a tool without a usage API.
    AddCost {
        #[arg(long)]
        label: String,
        /// USD amount, e.g. 20 or 19.99.
        #[arg(long)]
        amount: Usd,
        /// YYYY-MM-DD (UTC); defaults to today.
        #[arg(long)]
        date: Option<NaiveDate>,
        #[arg(long)]
        note: Option<String>,
    },
    /// Inspect or edit model pricing.
    Models {
        #[command(subcommand)]
        action: ModelsAction,
    },
    /// Classify review comments, one per line, and store the digest.
    Classify {
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum ModelsAction {
    /// List the merged registry.
    List,
    /// Add or replace a pricing override.
    Add {
        model_id: String,
        #[arg(long)]
        provider: String,
        /// USD per million input tokens.
        #[arg(long)]
        input: Usd,
        /// USD per million output tokens.
        #[arg(long)]
        output: Usd,
        #[arg(long)]
        display_name: Option<String>,
    },
    /// Remove a pricing override.
    Rm { model_id: String },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportKind {
    Weekly,
    Cost,
    Review,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputFormat {
    Md,
    Html,
}

pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = ServiceConfig::from_env()?;
    if let Some(db) = cli.db {
        config.db_path = db;
    }
    let open_store = || -> anyhow::Result<Arc<Store>> {
        Store::open(&config.db_path)
            .map(Arc::new)
            .with_context(|| format!("opening {}", config.db_path.display()))
    };
    let open_registry = |store: Arc<Store>| -> anyhow::Result<PricingRegistry> {
        Ok(PricingRegistry::load(config.registry.clone(), store, config.cache_ttl)?
            .with_multipliers(config.multipliers))
    };

    match cli.command {
        Command::Serve { port } => {
            if let Some(p) = port {
                config.port = p;
            }
            init_tracing();
            tokio::runtime::Runtime::new()?.block_on(crate::serve(config))
        }
        Command::ImportClaudeCode { root, dry_run } => {
            let store = open_store()?;
            let registry = open_registry(store.clone())?;
            let root = root.or(config.import_root.clone()).unwrap_or_else(default_root);
            let r = import_claude_code(&store, &registry, &root, dry_run)?;
            println!(
                "{}files scanned: {}, lines read: {}, imported: {}, duplicates skipped: {}, malformed: {}",
                if dry_run { "[dry run] " } else { "" },
                r.files_scanned,
                r.lines_read,
                r.events_imported,
                r.duplicates_skipped,
                r.lines_skipped_malformed
            );
            Ok(())
        }
        Command::Report { report_type, format, out, period } => {
            let store = open_store()?;
            let report_type = match report_type {
                ReportKind::Weekly => ReportType::WeeklyDigest,
                ReportKind::Cost => ReportType::CostReport,
                ReportKind::Review => ReportType::ReviewSummary,
            };
            let doc = generate_report(&store, ReportRequest { report_type, period }, Utc::now())?;
            let text = match format {
                OutputFormat::Md => doc.markdown,
                OutputFormat::Html => doc.html,
            };
            match out {
                Some(path) => {
                    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
                    eprintln!("wrote {}", path.display());
                }
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
            Ok(())
        }
        Command::AddCost { label, amount, date, note } => {
            let store = open_store()?;
            let entry = ManualCostEntry {
                label,
                cost_usd: amount,
                utc_date: date.unwrap_or_else(|| Utc::now().date_naive()),
                note,
            };
            let id = record_manual_cost(&store, &entry)?;
            println!("recorded {} for {} on {} ({id})", entry.cost_usd.display(), entry.label.trim(), entry.utc_date);
            Ok(())
        }
        Command::Models { action } => {
            let registry = open_registry(open_store()?)?;
            match action {
                ModelsAction::List => {
                    println!("{:<28} {:<10} {:>12} {:>12}  SOURCE", "MODEL", "PROVIDER", "INPUT/MTOK", "OUTPUT/MTOK");
                    for m in registry.list_models() {
                        println!(
                            "{:<28} {:<10} {:>12} {:>12}  {}",
                            m.model_id,
                            m.provider,
                            m.input_cost_per_mtok.display(),
                            m.output_cost_per_mtok.display(),
                            match m.source {
                                PricingSource::Builtin => "builtin",
                                PricingSource::Override => "override",
                            }
                        );
                    }
                }
                ModelsAction::Add { model_id, provider, input, output, display_name } => {
                    let stored = registry.upsert_override(ModelPricing {
                        display_name: display_name.unwrap_or_else(|| model_id.clone()),
                        model_id,
                        provider,
                        input_cost_per_mtok: input,
                        output_cost_per_mtok: output,
                        source: PricingSource::Override,
                    })?;
                    println!("saved override {}", stored.model_id);
                }
                ModelsAction::Rm { model_id } => {
                    if !registry.delete_override(&model_id)? {
                        bail!("model override {model_id:?} not found");
                    }
                    println!("removed override {model_id}");
                }
            }
            Ok(())
        }
        Command::Classify { file } => {
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let comments: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            let rules = RuleSet::builtin();
            for c in &comments {
                println!("{:<14} {c}", rules.classify(c).label());
            }
            let digest = build_digest(&rules, &comments);
            println!();
            for (cat, n) in digest.ranked() {
                println!("{cat}: {n}");
            }
            println!("uncategorized: {}", digest.uncategorized);
            save_digest(&*open_store()?, &digest)?;
            Ok(())
        }
    }
}

/// Log level from `TOKENLEDGER_LOG` (error, warn, info, debug, trace).
fn init_tracing() {
    let level = std::env::var("TOKENLEDGER_LOG")
        .ok()
        .and_then(|l| l.parse::<tracing::Level>().ok())
        .unwrap_or(tracing::Level::INFO);
    let _ = tracing_subscriber::fmt().with_max_level(level).try_init();
}
