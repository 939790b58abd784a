//! Core of tokenledger: a self-hosted ledger of AI token usage and spend.
//!
//! Usage arrives from three pathways that all land in one telemetry table:
//! provider API responses (through [`gateway`]), CLI-agent session transcripts
//! (through [`importer`]), and manual entries (through [`analytics`]). On top
//! of the store sit the pricing registry, cost analytics, review-output
//! validation, review-comment classification and report generation.

pub mod analytics;
pub mod clock;
pub mod error;
pub mod gateway;
pub mod importer;
pub mod intelligence;
pub mod markdown;
pub mod money;
pub mod pricing;
pub mod reports;
pub mod telemetry;
pub mod usage;
pub mod validator;

pub use clock::{Clock, FixedClock, SystemClock};
pub use error::{Error, Result};
pub use money::Usd;
pub use telemetry::{EventFilter, Period, Store, TelemetryEvent};
pub use usage::{Provider, TokenUsage};
