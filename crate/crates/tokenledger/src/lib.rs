//! HTTP service and command-line front end for `tokenledger-core`.

pub mod api;
pub mod cli;
pub mod config;
pub mod transport;

use std::sync::Arc;

use tokenledger_core::gateway::{Gateway, Transport};
use tokenledger_core::importer::Importer;
use tokenledger_core::intelligence::RuleSet;
use tokenledger_core::pricing::PricingRegistry;
use tokenledger_core::{Clock, Store};

pub use api::{router, AppState};
pub use config::ServiceConfig;

/// Open the store and registry and wire up the shared state.
pub fn build_state(
    config: &ServiceConfig,
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
) -> tokenledger_core::Result<AppState> {
    let store = Arc::new(Store::open(&config.db_path)?);
    state_for_store(config, store, transport, clock)
}

pub fn state_for_store(
    config: &ServiceConfig,
    store: Arc<Store>,
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
) -> tokenledger_core::Result<AppState> {
    let registry = Arc::new(
        PricingRegistry::load(config.registry.clone(), store.clone(), config.cache_ttl)?
            .with_multipliers(config.multipliers),
    );
    let gateway = Arc::new(Gateway::new(
        store.clone(),
        registry.clone(),
        transport,
        config.credentials.clone(),
    ));
    Ok(AppState {
        store,
        registry,
        gateway,
        importer: Arc::new(Importer::new()),
        rules: Arc::new(RuleSet::builtin()),
        clock,
        import_root: config.import_root.clone(),
    })
}

/// Bind and serve until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let transport = Arc::new(transport::ReqwestTransport::new()?);
    let state = build_state(&config, transport, Arc::new(tokenledger_core::SystemClock))?;
    let app = router(state, Some(config.static_dir.clone()));
    let addr = std::net::SocketAddr::from(([127, 0, 0, 1], config.port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {addr}: {e}"))?;
    tracing::info!(%addr, db = %config.db_path.display(), "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
