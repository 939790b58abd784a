//! Service configuration from environment variables.

use std::path::PathBuf;
use std::time::Duration;

use tokenledger_core::gateway::{Credentials, DEFAULT_OLLAMA_URL};
use tokenledger_core::pricing::{BuiltinRegistry, CacheMultipliers};
use tokenledger_core::{Error, Result};

pub const DEFAULT_DB: &str = "./tokenledger.db";
pub const DEFAULT_REGISTRY: &str = "./model_registry.json";
pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_TTL_SECS: u64 = 60;
pub const DEFAULT_STATIC_DIR: &str = "./web-ui/dist";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub db_path: PathBuf,
    pub registry: BuiltinRegistry,
    pub port: u16,
    pub cache_ttl: Duration,
    pub multipliers: CacheMultipliers,
    pub credentials: Credentials,
    pub static_dir: PathBuf,
    /// `None` means the importer's default (`~/.claude/projects/`).
    pub import_root: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn from_env() -> Result<Self> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    /// Build from an arbitrary key lookup. Blank values count as unset.
    ///
    /// The builtin registry is read from `TOKENLEDGER_REGISTRY` when set (an
    /// unreadable path is an error), else from `./model_registry.json` when
    /// that file exists, else from the copy compiled into the binary.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let get = |k: &str| lookup(k).map(|v| v.trim().to_string()).filter(|v| !v.is_empty());

        let port = match get("TOKENLEDGER_PORT") {
            None => DEFAULT_PORT,
            Some(p) => match p.parse::<u16>() {
                Ok(n) if n >= 1 => n,
                _ => return Err(Error::invalid("TOKENLEDGER_PORT", format!("{p:?} is not in 1..=65535"))),
            },
        };
        let ttl_secs = match get("TOKENLEDGER_CACHE_TTL_SECS") {
            None => DEFAULT_TTL_SECS,
            Some(t) => match t.parse::<u64>() {
                Ok(n) if n > 0 => n,
                _ => return Err(Error::invalid("TOKENLEDGER_CACHE_TTL_SECS", format!("{t:?} is not a positive integer"))),
            },
        };
        let defaults = CacheMultipliers::default();
        let multipliers = CacheMultipliers::parse(
            &get("TOKENLEDGER_CACHE_READ_MULTIPLIER").unwrap_or_else(|| ppm_str(defaults.read_ppm)),
            &get("TOKENLEDGER_CACHE_CREATION_MULTIPLIER").unwrap_or_else(|| ppm_str(defaults.creation_ppm)),
        )?;
        let registry = match get("TOKENLEDGER_REGISTRY") {
            Some(p) => BuiltinRegistry::File(PathBuf::from(p)),
            None if std::path::Path::new(DEFAULT_REGISTRY).is_file() => {
                BuiltinRegistry::File(PathBuf::from(DEFAULT_REGISTRY))
            }
            None => BuiltinRegistry::Embedded,
        };

        Ok(ServiceConfig {
            db_path: PathBuf::from(get("TOKENLEDGER_DB").unwrap_or_else(|| DEFAULT_DB.into())),
            registry,
            port,
            cache_ttl: Duration::from_secs(ttl_secs),
            multipliers,
            credentials: Credentials {
                anthropic_api_key: get("ANTHROPIC_API_KEY"),
                google_api_key: get("GOOGLE_API_KEY"),
                ollama_base_url: get("OLLAMA_BASE_URL").unwrap_or_else(|| DEFAULT_OLLAMA_URL.into()),
            },
            static_dir: PathBuf::from(get("TOKENLEDGER_STATIC_DIR").unwrap_or_else(|| DEFAULT_STATIC_DIR.into())),
            import_root: get("TOKENLEDGER_IMPORT_ROOT").map(PathBuf::from),
        })
    }
}

fn ppm_str(ppm: u64) -> String {
    format!("{}.{:06}", ppm / 1_000_000, ppm % 1_000_000)
}
