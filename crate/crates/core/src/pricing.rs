//! Model pricing registry.
//!
//! A builtin JSON registry (model id -> per-million-token rates) merged with
//! user overrides persisted in the `model_pricing` table. Overrides shadow
//! builtin entries with the same id. The merged view is an immutable snapshot
//! that is swapped on mutation and lazily rebuilt once its TTL expires.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use chrono::Utc;
use rusqlite::params;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{Error, Result};
use crate::money::{parse_fixed6, round_half_even_u128, Usd};
use crate::telemetry::Store;
use crate::usage::TokenUsage;

/// The registry that ships with the crate.
pub const BUILTIN_REGISTRY_JSON: &str = include_str!("../data/model_registry.json");

pub const DEFAULT_TTL: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PricingSource {
    Builtin,
    Override,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelPricing {
    pub model_id: String,
    pub provider: String,
    pub display_name: String,
    /// USD per 1,000,000 input tokens.
    pub input_cost_per_mtok: Usd,
    /// USD per 1,000,000 output tokens.
    pub output_cost_per_mtok: Usd,
    pub source: PricingSource,
}

impl ModelPricing {
    pub fn validate(&self) -> Result<()> {
        if self.model_id.trim().is_empty() {
            return Err(Error::invalid("model_id", "must not be empty"));
        }
        if self.input_cost_per_mtok.is_negative() {
            return Err(Error::invalid("input_cost_per_mtok", "must be non-negative"));
        }
        if self.output_cost_per_mtok.is_negative() {
            return Err(Error::invalid("output_cost_per_mtok", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Exact,
    Fuzzy,
    Unpriced,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PricingResolution {
    pub requested_name: String,
    pub entry: Option<ModelPricing>,
    pub match_kind: MatchKind,
}

impl PricingResolution {
    pub fn unpriced(name: &str) -> Self {
        PricingResolution {
            requested_name: name.to_string(),
            entry: None,
            match_kind: MatchKind::Unpriced,
        }
    }

    pub fn is_priced(&self) -> bool {
        self.entry.is_some()
    }
}

/// Pricing multipliers applied to the input rate for prompt-cache tokens,
/// held as parts-per-million (1_000_000 = 1.0x).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheMultipliers {
    pub read_ppm: u64,
    pub creation_ppm: u64,
}

impl Default for CacheMultipliers {
    fn default() -> Self {
        CacheMultipliers {
            read_ppm: 100_000,
            creation_ppm: 1_250_000,
        }
    }
}

impl CacheMultipliers {
    /// Parse decimal multipliers such as `"0.1"` and `"1.25"`.
    pub fn parse(read: &str, creation: &str) -> Result<Self> {
        let conv = |field, s: &str| -> Result<u64> {
            let v = parse_fixed6(s).map_err(|e| Error::invalid(field, e.to_string()))?;
            u64::try_from(v).map_err(|_| Error::invalid(field, "must be non-negative"))
        };
        Ok(CacheMultipliers {
            read_ppm: conv("cache_read_multiplier", read)?,
            creation_ppm: conv("cache_creation_multiplier", creation)?,
        })
    }
}

/// An exact cost in units of 10^-18 USD.
///
/// Rates carry six decimals per million tokens and multipliers six decimals,
/// so every term of the cost formula is an integer in this unit. Sums of
/// `ExactCost` are exact; rounding to micro-USD happens once, in
/// [`ExactCost::to_usd`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExactCost(pub u128);

const ATTO_PER_MICRO: u128 = 1_000_000_000_000;

impl ExactCost {
    /// Round half-even to micro-USD.
    pub fn to_usd(self) -> Usd {
        let micros = round_half_even_u128(self.0, ATTO_PER_MICRO);
        Usd::from_micros(i64::try_from(micros).unwrap_or(i64::MAX))
    }
}

impl std::ops::Add for ExactCost {
    type Output = ExactCost;

    fn add(self, rhs: ExactCost) -> ExactCost {
        ExactCost(self.0 + rhs.0)
    }
}

/// `in/1e6 * in_rate + out/1e6 * out_rate + cache_read/1e6 * in_rate * read_mult
///  + cache_creation/1e6 * in_rate * creation_mult`; zero when unpriced.
pub fn compute_cost(
    usage: &TokenUsage,
    resolution: &PricingResolution,
    multipliers: CacheMultipliers,
) -> ExactCost {
    let Some(entry) = &resolution.entry else {
        return ExactCost(0);
    };
    let rate_in = entry.input_cost_per_mtok.micros().max(0) as u128;
    let rate_out = entry.output_cost_per_mtok.micros().max(0) as u128;
    let u = |v: u64| u128::from(v);

    let base = (u(usage.input_tokens) * rate_in + u(usage.output_tokens) * rate_out) * 1_000_000;
    let cache = u(usage.cache_read_tokens) * rate_in * u(multipliers.read_ppm)
        + u(usage.cache_creation_tokens) * rate_in * u(multipliers.creation_ppm);
    ExactCost(base + cache)
}

#[derive(Debug, Deserialize)]
struct BuiltinEntry {
    provider: String,
    #[serde(default)]
    display_name: Option<String>,
    input_cost_per_mtok: Usd,
    output_cost_per_mtok: Usd,
}

/// Where the builtin layer comes from.
#[derive(Debug, Clone)]
pub enum BuiltinRegistry {
    /// The copy compiled into the crate.
    Embedded,
    File(PathBuf),
}

impl BuiltinRegistry {
    fn label(&self) -> String {
        match self {
            BuiltinRegistry::Embedded => "<embedded model_registry.json>".to_string(),
            BuiltinRegistry::File(p) => p.display().to_string(),
        }
    }

    fn load(&self) -> Result<Vec<ModelPricing>> {
        let text = match self {
            BuiltinRegistry::Embedded => BUILTIN_REGISTRY_JSON.to_string(),
            BuiltinRegistry::File(p) => std::fs::read_to_string(p).map_err(|e| Error::Registry {
                path: p.display().to_string(),
                message: format!("unreadable: {e}"),
            })?,
        };
        parse_builtin(&text, &self.label())
    }
}

/// Parse a builtin registry document, reporting errors with line and column.
pub fn parse_builtin(text: &str, label: &str) -> Result<Vec<ModelPricing>> {
    let map: BTreeMap<String, BuiltinEntry> =
        serde_json::from_str(text).map_err(|e| Error::Registry {
            path: label.to_string(),
            message: format!("line {} column {}: {e}", e.line(), e.column()),
        })?;
    let mut seen = BTreeMap::new();
    let mut out = Vec::with_capacity(map.len());
    for (model_id, e) in map {
        let entry = ModelPricing {
            display_name: e.display_name.unwrap_or_else(|| model_id.clone()),
            model_id,
            provider: e.provider,
            input_cost_per_mtok: e.input_cost_per_mtok,
            output_cost_per_mtok: e.output_cost_per_mtok,
            source: PricingSource::Builtin,
        };
        entry.validate().map_err(|err| Error::Registry {
            path: label.to_string(),
            message: format!("entry {:?}: {err}", entry.model_id),
        })?;
        if let Some(prev) = seen.insert(entry.model_id.to_lowercase(), entry.model_id.clone()) {
            return Err(Error::Registry {
                path: label.to_string(),
                message: format!("duplicate model id {:?} (also {prev:?})", entry.model_id),
            });
        }
        out.push(entry);
    }
    Ok(out)
}

/// An immutable merged view of the registry.
#[derive(Debug, Clone)]
pub struct RegistrySnapshot {
    // Keyed by lowercased model id.
    entries: BTreeMap<String, ModelPricing>,
    loaded_at: Instant,
}

impl RegistrySnapshot {
    /// Merge layers; later overrides win over builtin entries with the same
    /// (case-insensitive) id.
    pub fn merge(builtin: Vec<ModelPricing>, overrides: Vec<ModelPricing>) -> Self {
        let mut entries = BTreeMap::new();
        for e in builtin.into_iter().chain(overrides) {
            entries.insert(e.model_id.to_lowercase(), e);
        }
        RegistrySnapshot {
            entries,
            loaded_at: Instant::now(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &ModelPricing> {
        self.entries.values()
    }

    /// Exact (case-insensitive) id match, else the longest registry id in a
    /// substring relation with the name in either direction (ties go to the
    /// lexicographically smaller id), else unpriced.
    pub fn resolve(&self, model_name: &str) -> PricingResolution {
        let needle = model_name.trim().to_lowercase();
        if needle.is_empty() {
            return PricingResolution::unpriced(model_name);
        }
        if let Some(e) = self.entries.get(&needle) {
            return PricingResolution {
                requested_name: model_name.to_string(),
                entry: Some(e.clone()),
                match_kind: MatchKind::Exact,
            };
        }
        let best = self
            .entries
            .iter()
            .filter(|(id, _)| needle.contains(id.as_str()) || id.contains(needle.as_str()))
            // BTreeMap iterates ids ascending, so keeping the first of equal
            // length gives the lexicographic tie-break.
            .fold(None::<(&String, &ModelPricing)>, |best, cand| match best {
                Some(b) if b.0.chars().count() >= cand.0.chars().count() => Some(b),
                _ => Some(cand),
            });
        match best {
            Some((_, e)) => PricingResolution {
                requested_name: model_name.to_string(),
                entry: Some(e.clone()),
                match_kind: MatchKind::Fuzzy,
            },
            None => PricingResolution::unpriced(model_name),
        }
    }
}

/// Registry service: builtin layer + persisted overrides + TTL cache.
pub struct PricingRegistry {
    builtin: BuiltinRegistry,
    store: Arc<Store>,
    ttl: Duration,
    multipliers: CacheMultipliers,
    snapshot: RwLock<Arc<RegistrySnapshot>>,
}

impl std::fmt::Debug for PricingRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PricingRegistry")
            .field("builtin", &self.builtin)
            .field("ttl", &self.ttl)
            .finish()
    }
}

impl PricingRegistry {
    /// Load and merge both layers. Fails if the builtin layer is unreadable
    /// or malformed.
    pub fn load(builtin: BuiltinRegistry, store: Arc<Store>, ttl: Duration) -> Result<Self> {
        let snapshot = build_snapshot(&builtin, &store)?;
        Ok(PricingRegistry {
            builtin,
            store,
            ttl,
            multipliers: CacheMultipliers::default(),
            snapshot: RwLock::new(Arc::new(snapshot)),
        })
    }

    pub fn from_path(path: impl AsRef<Path>, store: Arc<Store>) -> Result<Self> {
        Self::load(
            BuiltinRegistry::File(path.as_ref().to_path_buf()),
            store,
            DEFAULT_TTL,
        )
    }

    pub fn with_multipliers(mut self, multipliers: CacheMultipliers) -> Self {
        self.multipliers = multipliers;
        self
    }

    pub fn multipliers(&self) -> CacheMultipliers {
        self.multipliers
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    /// Current merged view, reloading first if it has outlived the TTL.
    pub fn snapshot(&self) -> Arc<RegistrySnapshot> {
        let current = self.current();
        if current.loaded_at.elapsed() <= self.ttl {
            return current;
        }
        match build_snapshot(&self.builtin, &self.store) {
            Ok(fresh) => self.swap(fresh),
            Err(e) => {
                warn!(error = %e, "registry reload failed; keeping previous snapshot");
                current
            }
        }
    }

    fn current(&self) -> Arc<RegistrySnapshot> {
        self.snapshot
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    fn swap(&self, fresh: RegistrySnapshot) -> Arc<RegistrySnapshot> {
        let fresh = Arc::new(fresh);
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = fresh.clone();
        fresh
    }

    fn invalidate(&self) -> Result<()> {
        let fresh = build_snapshot(&self.builtin, &self.store)?;
        self.swap(fresh);
        Ok(())
    }

    pub fn resolve(&self, model_name: &str) -> PricingResolution {
        self.snapshot().resolve(model_name)
    }

    pub fn compute_cost(&self, usage: &TokenUsage, resolution: &PricingResolution) -> ExactCost {
        compute_cost(usage, resolution, self.multipliers)
    }

    /// Resolve `model` and price `usage` in one step.
    pub fn price(&self, model: &str, usage: &TokenUsage) -> (PricingResolution, Usd) {
        let resolution = self.resolve(model);
        let cost = self.compute_cost(usage, &resolution).to_usd();
        (resolution, cost)
    }

    /// Merged list sorted by provider then id.
    pub fn list_models(&self) -> Vec<ModelPricing> {
        let mut models: Vec<_> = self.snapshot().entries().cloned().collect();
        models.sort_by(|a, b| {
            (a.provider.as_str(), a.model_id.as_str()).cmp(&(b.provider.as_str(), b.model_id.as_str()))
        });
        models
    }

    pub fn upsert_override(&self, pricing: ModelPricing) -> Result<ModelPricing> {
        let mut pricing = pricing;
        pricing.model_id = pricing.model_id.trim().to_string();
        pricing.validate()?;
        if pricing.display_name.trim().is_empty() {
            pricing.display_name = pricing.model_id.clone();
        }
        pricing.source = PricingSource::Override;
        self.store.write(|tx| {
            tx.execute(
                "INSERT INTO model_pricing (model_id, provider, display_name, input_micros, output_micros, updated_ms)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6)
                 ON CONFLICT(model_id) DO UPDATE SET
                     model_id = excluded.model_id,
                     provider = excluded.provider,
                     display_name = excluded.display_name,
                     input_micros = excluded.input_micros,
                     output_micros = excluded.output_micros,
                     updated_ms = excluded.updated_ms",
                params![
                    pricing.model_id,
                    pricing.provider,
                    pricing.display_name,
                    pricing.input_cost_per_mtok.micros(),
                    pricing.output_cost_per_mtok.micros(),
                    Utc::now().timestamp_millis(),
                ],
            )?;
            Ok(())
        })?;
        self.invalidate()?;
        Ok(pricing)
    }

    /// Remove an override. Returns `false` when none existed.
    pub fn delete_override(&self, model_id: &str) -> Result<bool> {
        let removed = self.store.write(|tx| {
            Ok(tx.execute("DELETE FROM model_pricing WHERE model_id = ?1", [model_id.trim()])?)
        })?;
        if removed > 0 {
            self.invalidate()?;
        }
        Ok(removed > 0)
    }
}

fn build_snapshot(builtin: &BuiltinRegistry, store: &Store) -> Result<RegistrySnapshot> {
    let builtin = builtin.load()?;
    let overrides = load_overrides(store)?;
    Ok(RegistrySnapshot::merge(builtin, overrides))
}

fn load_overrides(store: &Store) -> Result<Vec<ModelPricing>> {
    use rusqlite::types::Value as Sql;

    let rows: Vec<[Sql; 5]> = store.read(|tx| {
        let mut stmt = tx.prepare(
            "SELECT model_id, provider, display_name, input_micros, output_micros
             FROM model_pricing ORDER BY model_id",
        )?;
        let rows = stmt.query_map([], |r| {
            Ok([r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?])
        })?;
        Ok(rows.collect::<rusqlite::Result<Vec<_>>>()?)
    })?;

    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let parsed = match row {
            [Sql::Text(id), Sql::Text(provider), Sql::Text(display), Sql::Integer(i), Sql::Integer(o)] => {
                let p = ModelPricing {
                    model_id: id,
                    provider,
                    display_name: display,
                    input_cost_per_mtok: Usd::from_micros(i),
                    output_cost_per_mtok: Usd::from_micros(o),
                    source: PricingSource::Override,
                };
                p.validate().map(|_| p).map_err(|e| e.to_string())
            }
            other => Err(format!("unexpected column types {other:?}")),
        };
        match parsed {
            Ok(p) => out.push(p),
            Err(e) => warn!(error = %e, "skipping malformed model_pricing row"),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn registry() -> PricingRegistry {
        let store = Arc::new(Store::open_in_memory().unwrap());
        PricingRegistry::load(BuiltinRegistry::Embedded, store, DEFAULT_TTL).unwrap()
    }

    fn pricing(id: &str, i: &str, o: &str) -> ModelPricing {
        ModelPricing {
            model_id: id.into(),
            provider: "custom".into(),
            display_name: id.into(),
            input_cost_per_mtok: i.parse().unwrap(),
            output_cost_per_mtok: o.parse().unwrap(),
            source: PricingSource::Override,
        }
    }

    #[test]
    fn shipped_registry_breadth() {
        let reg = registry();
        let models = reg.list_models();
        assert!(models.len() >= 24);
        let providers: BTreeSet<_> = models.iter().map(|m| m.provider.as_str()).collect();
        assert_eq!(
            providers,
            ["anthropic", "deepseek", "google", "mistral", "ollama", "openai"].into()
        );
        assert!(models
            .iter()
            .filter(|m| m.provider == "ollama")
            .all(|m| m.input_cost_per_mtok == Usd::ZERO && m.output_cost_per_mtok == Usd::ZERO));
    }

    #[test]
    fn override_shadows_and_delete_restores() {
        let reg = registry();
        let builtin = reg.resolve("gpt-4o").entry.unwrap();
        assert_eq!(builtin.input_cost_per_mtok, "2.50".parse().unwrap());

        reg.upsert_override(pricing("gpt-4o", "2.00", "8.00")).unwrap();
        let r = reg.resolve("gpt-4o");
        let e = r.entry.unwrap();
        assert_eq!(e.source, PricingSource::Override);
        assert_eq!(e.input_cost_per_mtok, "2.00".parse().unwrap());
        assert_eq!(e.output_cost_per_mtok, "8.00".parse().unwrap());

        assert!(reg.delete_override("gpt-4o").unwrap());
        let e = reg.resolve("gpt-4o").entry.unwrap();
        assert_eq!(e.source, PricingSource::Builtin);
        assert_eq!(e.input_cost_per_mtok, "2.50".parse().unwrap());
    }

    #[test]
    fn resolution_kinds() {
        let reg = registry();
        let r = reg.resolve("claude-sonnet-4-20250514");
        assert_eq!(r.match_kind, MatchKind::Fuzzy);
        assert_eq!(r.entry.unwrap().model_id, "claude-sonnet-4");

        let r = reg.resolve("gpt-4o");
        assert_eq!(r.match_kind, MatchKind::Exact);

        let r = reg.resolve("totally-unknown-model-x");
        assert_eq!(r.match_kind, MatchKind::Unpriced);
        assert!(r.entry.is_none());

        assert_eq!(reg.resolve("").match_kind, MatchKind::Unpriced);
        assert_eq!(reg.resolve("GPT-4O").match_kind, MatchKind::Exact);
    }

    #[test]
    fn longest_fuzzy_candidate_wins() {
        let reg = registry();
        assert_eq!(
            reg.resolve("claude-sonnet-4-5-20250929").entry.unwrap().model_id,
            "claude-sonnet-4-5"
        );
        assert_eq!(
            reg.resolve("gpt-4o-mini-2024-07-18").entry.unwrap().model_id,
            "gpt-4o-mini"
        );
    }

    #[test]
    fn fuzzy_ties_break_lexicographically() {
        let snap = RegistrySnapshot::merge(
            vec![pricing("bbb", "1", "1"), pricing("aaa", "1", "1")],
            vec![],
        );
        assert_eq!(snap.resolve("aaa-bbb").entry.unwrap().model_id, "aaa");
    }

    #[test]
    fn custom_model_resolves_exactly() {
        let reg = registry();
        reg.upsert_override(pricing("my-finetune", "1.00", "4.00")).unwrap();
        let r = reg.resolve("my-finetune");
        assert_eq!(r.match_kind, MatchKind::Exact);
        assert_eq!(r.entry.unwrap().source, PricingSource::Override);
    }

    #[test]
    fn delete_missing_override_is_false() {
        assert!(!registry().delete_override("never-added").unwrap());
    }

    #[test]
    fn negative_rate_rejected() {
        let reg = registry();
        let err = reg.upsert_override(pricing("x", "-1", "1")).unwrap_err();
        assert!(matches!(err, Error::Invalid { field: "input_cost_per_mtok", .. }));
    }

    #[test]
    fn overrides_survive_restart() {
        let dir = tempfile::tempdir().unwrap();
        let db = dir.path().join("r.db");
        {
            let store = Arc::new(Store::open(&db).unwrap());
            let reg = PricingRegistry::load(BuiltinRegistry::Embedded, store, DEFAULT_TTL).unwrap();
            reg.upsert_override(pricing("my-finetune", "1.00", "4.00")).unwrap();
        }
        let store = Arc::new(Store::open(&db).unwrap());
        let reg = PricingRegistry::load(BuiltinRegistry::Embedded, store, DEFAULT_TTL).unwrap();
        let m = reg
            .list_models()
            .into_iter()
            .find(|m| m.model_id == "my-finetune")
            .unwrap();
        assert_eq!(m.source, PricingSource::Override);
        assert_eq!(m.output_cost_per_mtok, "4.00".parse().unwrap());
    }

    #[test]
    fn malformed_override_rows_are_skipped() {
        let store = Arc::new(Store::open_in_memory().unwrap());
        store
            .write(|tx| {
                tx.execute(
                    "INSERT INTO model_pricing VALUES ('bad', 'p', 'bad', -5, 1, 0)",
                    [],
                )?;
                tx.execute(
                    "INSERT INTO model_pricing VALUES ('worse', 'p', 'w', 'x', 1, 0)",
                    [],
                )?;
                tx.execute(
                    "INSERT INTO model_pricing VALUES ('good', 'p', 'g', 1000000, 2000000, 0)",
                    [],
                )?;
                Ok(())
            })
            .unwrap();
        let reg = PricingRegistry::load(BuiltinRegistry::Embedded, store, DEFAULT_TTL).unwrap();
        assert_eq!(reg.resolve("good").match_kind, MatchKind::Exact);
        assert_eq!(reg.resolve("bad").match_kind, MatchKind::Unpriced);
        assert_eq!(reg.resolve("worse").match_kind, MatchKind::Unpriced);
    }

    #[test]
    fn builtin_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reg.json");
        std::fs::write(&path, "{\n  \"a\": {\"provider\": \"x\",\n  oops}\n}").unwrap();
        let store = Arc::new(Store::open_in_memory().unwrap());
        let err = PricingRegistry::from_path(&path, store.clone()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("reg.json") && msg.contains("line 3"), "{msg}");

        let err = PricingRegistry::from_path(dir.path().join("missing.json"), store).unwrap_err();
        assert!(err.to_string().contains("unreadable"));
    }

    #[test]
    fn ttl_expiry_reloads_builtin_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reg.json");
        let doc = |rate: &str| {
            format!(
                r#"{{"m": {{"provider": "p", "input_cost_per_mtok": {rate}, "output_cost_per_mtok": 1}}}}"#
            )
        };
        std::fs::write(&path, doc("1")).unwrap();
        let store = Arc::new(Store::open_in_memory().unwrap());
        let reg = PricingRegistry::load(
            BuiltinRegistry::File(path.clone()),
            store,
            Duration::from_millis(30),
        )
        .unwrap();
        assert_eq!(reg.resolve("m").entry.unwrap().input_cost_per_mtok, Usd::from_cents(100));
        std::fs::write(&path, doc("2")).unwrap();
        std::thread::sleep(Duration::from_millis(60));
        assert_eq!(reg.resolve("m").entry.unwrap().input_cost_per_mtok, Usd::from_cents(200));
    }

    #[test]
    fn cost_examples() {
        let res = PricingResolution {
            requested_name: "m".into(),
            entry: Some(pricing("m", "3.00", "15.00")),
            match_kind: MatchKind::Exact,
        };
        let m = CacheMultipliers::default();
        assert_eq!(
            compute_cost(&TokenUsage::new(1_000_000, 0), &res, m).to_usd().to_string(),
            "3.000000"
        );
        assert_eq!(
            compute_cost(&TokenUsage::new(250_000, 100_000), &res, m).to_usd().to_string(),
            "2.250000"
        );
        // 4000 cache reads at 0.1x of $3/Mtok = $0.0012
        assert_eq!(
            compute_cost(&TokenUsage::new(0, 0).with_cache(4000, 0), &res, m).to_usd(),
            Usd::from_micros(1200)
        );
        assert_eq!(
            compute_cost(&TokenUsage::new(0, 0).with_cache(0, 1_000_000), &res, m).to_usd(),
            Usd::from_micros(3_750_000)
        );
        let unpriced = PricingResolution::unpriced("zzz");
        assert_eq!(compute_cost(&TokenUsage::new(123, 456), &unpriced, m), ExactCost(0));
    }

    #[test]
    fn half_even_at_the_microdollar() {
        let res = PricingResolution {
            requested_name: "m".into(),
            entry: Some(pricing("m", "0.5", "0")),
            match_kind: MatchKind::Exact,
        };
        let m = CacheMultipliers::default();
        // 1 token at $0.5/Mtok = 0.5 micro -> 0; 3 tokens = 1.5 -> 2.
        assert_eq!(compute_cost(&TokenUsage::new(1, 0), &res, m).to_usd().micros(), 0);
        assert_eq!(compute_cost(&TokenUsage::new(3, 0), &res, m).to_usd().micros(), 2);
        assert_eq!(compute_cost(&TokenUsage::new(5, 0), &res, m).to_usd().micros(), 2);
    }

    #[test]
    fn multipliers_parse() {
        assert_eq!(CacheMultipliers::parse("0.1", "1.25").unwrap(), CacheMultipliers::default());
        assert!(CacheMultipliers::parse("-1", "1").is_err());
    }
}
