//! HTTP routes. Every response body is JSON; failures use the envelope
//! `{"error": <kind>, "detail": <message>}`.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, Path, Query, State};
use axum::http::Uri;
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::Router;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::trace::TraceLayer;

use tokenledger_core::analytics::{cost_summary, record_manual_cost, ManualCostEntry};
use tokenledger_core::gateway::Gateway;
use tokenledger_core::importer::{default_root, Importer};
use tokenledger_core::intelligence::{build_digest, generate_ai_summary, load_digest, save_digest, RuleSet};
use tokenledger_core::money::Usd;
use tokenledger_core::pricing::{ModelPricing, PricingRegistry, PricingSource};
use tokenledger_core::reports::{generate_report, ReportRequest, ReportType};
use tokenledger_core::{Clock, Error, Period, Provider, Store};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub registry: Arc<PricingRegistry>,
    pub gateway: Arc<Gateway>,
    pub importer: Arc<Importer>,
    pub rules: Arc<RuleSet>,
    pub clock: Arc<dyn Clock>,
    pub import_root: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    detail: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, detail: impl Into<String>) -> Self {
        ApiError { status, kind, detail: Some(detail.into()) }
    }

    fn bad_request(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", detail)
    }

    fn not_found(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", detail)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let detail = e.to_string();
        match e {
            Error::Invalid { .. } | Error::Io { .. } => Self::bad_request(detail),
            Error::NotFound(_) => Self::not_found(detail),
            Error::ImportInFlight => Self::new(StatusCode::CONFLICT, "import_in_flight", detail),
            Error::Gateway(_) => Self::new(StatusCode::BAD_GATEWAY, "upstream_error", detail),
            Error::Storage(_) | Error::Registry { .. } => {
                tracing::error!(error = %detail, "internal error");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", detail)
            }
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::bad_request(r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::bad_request(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.kind });
        if let Some(d) = self.detail {
            body["detail"] = Value::String(d);
        }
        (self.status, axum::Json(body)).into_response()
    }
}

/// `Json` whose rejections use the error envelope.
pub struct Json<T>(pub T);

impl<T, S> FromRequest<S> for Json<T>
where
    axum::Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: axum::extract::Request, state: &S) -> Result<Self, ApiError> {
        let axum::Json(v) = axum::Json::<T>::from_request(req, state).await?;
        Ok(Json(v))
    }
}

impl<T: Serialize> IntoResponse for Json<T> {
    fn into_response(self) -> Response {
        axum::Json(self.0).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Run store work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> tokenledger_core::Result<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", e.to_string()))?
        .map_err(ApiError::from)
}

fn parse_body<T: serde::de::DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn list_models(State(s): State<AppState>) -> ApiResult<Vec<ModelPricing>> {
    Ok(Json(blocking(move || Ok(s.registry.list_models())).await?))
}

#[derive(Debug, Deserialize)]
struct ModelInput {
    model_id: String,
    #[serde(default)]
    provider: String,
    #[serde(default)]
    display_name: Option<String>,
    input_cost_per_mtok: Usd,
    output_cost_per_mtok: Usd,
}

async fn upsert_model(
    State(s): State<AppState>,
    Json(input): Json<ModelInput>,
) -> Result<(StatusCode, Json<ModelPricing>), ApiError> {
    let pricing = ModelPricing {
        display_name: input.display_name.unwrap_or_else(|| input.model_id.clone()),
        model_id: input.model_id,
        provider: input.provider,
        input_cost_per_mtok: input.input_cost_per_mtok,
        output_cost_per_mtok: input.output_cost_per_mtok,
        source: PricingSource::Override,
    };
    let stored = blocking(move || s.registry.upsert_override(pricing)).await?;
    Ok((StatusCode::CREATED, Json(stored)))
}

async fn delete_model(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Value> {
    let key = id.clone();
    if blocking(move || s.registry.delete_override(&key)).await? {
        Ok(Json(json!({ "deleted": id })))
    } else {
        Err(ApiError::not_found(format!("no override for model {id:?}")))
    }
}

#[derive(Debug, Deserialize)]
struct CostsQuery {
    period: Option<String>,
}

async fn costs(
    State(s): State<AppState>,
    query: Result<Query<CostsQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = query?;
    let period: Period = match q.period.as_deref() {
        None | Some("") => Period::Days30,
        Some(p) => p.parse()?,
    };
    let now = s.clock.now();
    let summary = blocking(move || cost_summary(&s.store, period, now)).await?;
    Ok(Json(summary).into_response())
}

#[derive(Debug, Deserialize)]
struct ManualInput {
    label: String,
    cost_usd: Usd,
    /// `YYYY-MM-DD`; defaults to today (UTC).
    #[serde(default)]
    date: Option<NaiveDate>,
    #[serde(default)]
    note: Option<String>,
}

async fn add_manual_cost(
    State(s): State<AppState>,
    Json(input): Json<ManualInput>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let entry = ManualCostEntry {
        label: input.label,
        cost_usd: input.cost_usd,
        utc_date: input.date.unwrap_or_else(|| s.clock.now().date_naive()),
        note: input.note,
    };
    let id = blocking(move || record_manual_cost(&s.store, &entry)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

#[derive(Debug, Default, Deserialize)]
struct ImportInput {
    #[serde(default)]
    root: Option<PathBuf>,
    #[serde(default)]
    dry_run: bool,
}

async fn import_claude_code(State(s): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let input: ImportInput = parse_body(&body)?;
    let root = input
        .root
        .or_else(|| s.import_root.clone())
        .unwrap_or_else(default_root);
    let result = blocking(move || s.importer.run(&s.store, &s.registry, &root, input.dry_run)).await?;
    Ok(Json(result).into_response())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Md,
    Html,
    #[default]
    Both,
}

#[derive(Debug, Deserialize)]
struct ReportInput {
    report_type: ReportType,
    #[serde(default)]
    period: Option<Period>,
    #[serde(default)]
    format: Format,
}

#[derive(Debug, Serialize)]
struct ReportOutput {
    report_type: ReportType,
    generated_at: chrono::DateTime<chrono::Utc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    markdown: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    html: Option<String>,
}

async fn generate(State(s): State<AppState>, Json(input): Json<ReportInput>) -> ApiResult<ReportOutput> {
    let req = ReportRequest { report_type: input.report_type, period: input.period };
    let now = s.clock.now();
    let doc = blocking(move || generate_report(&s.store, req, now)).await?;
    Ok(Json(ReportOutput {
        report_type: doc.report_type,
        generated_at: doc.generated_at,
        markdown: (input.format != Format::Html).then_some(doc.markdown),
        html: (input.format != Format::Md).then_some(doc.html),
    }))
}

#[derive(Debug, Deserialize)]
struct SummaryInput {
    provider: Provider,
    model: String,
    /// Classify these comments and summarize them. When absent, the stored
    /// digest is summarized.
    #[serde(default)]
    comments: Option<Vec<String>>,
}

async fn intelligence_summary(State(s): State<AppState>, Json(input): Json<SummaryInput>) -> ApiResult<Value> {
    let mut digest = match input.comments {
        Some(comments) => build_digest(&s.rules, &comments),
        None => {
            let store = s.store.clone();
            blocking(move || load_digest(&store))
                .await?
                .ok_or_else(|| Error::invalid("digest", "nothing to summarize"))?
        }
    };
    let narrative = generate_ai_summary(&s.gateway, &digest, input.provider, &input.model).await?;
    digest.narrative = Some(narrative.clone());
    let store = s.store.clone();
    blocking(move || save_digest(&store, &digest)).await?;
    Ok(Json(json!({ "narrative": narrative })))
}

async fn api_not_found() -> ApiError {
    ApiError::not_found("no such route")
}

const PLACEHOLDER_PAGE: &str = "<!DOCTYPE html>\n<html lang=\"en\"><head><meta charset=\"utf-8\">\
<title>tokenledger</title></head><body><h1>tokenledger</h1>\
<p>The API is running. The dashboard bundle was not found; build the web UI \
and set <code>TOKENLEDGER_STATIC_DIR</code> to its output directory.</p></body></html>\n";

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER_PAGE)
}

fn content_type(path: &std::path::Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "json" | "map" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        "woff2" => "font/woff2",
        _ => "application/octet-stream",
    }
}

/// Serve a file from the UI bundle; unknown paths get `index.html` so
/// client-side routes resolve.
async fn serve_static(dir: PathBuf, uri: Uri) -> Response {
    let rel = uri.path().trim_start_matches('/');
    let safe = !rel.split('/').any(|seg| seg == ".." || seg.contains('\\'));
    let candidate = dir.join(rel);
    let path = if safe && !rel.is_empty() && candidate.is_file() {
        candidate
    } else {
        dir.join("index.html")
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => ApiError::not_found("no such file").into_response(),
    }
}

fn is_local_origin(origin: &HeaderValue) -> bool {
    let Ok(o) = origin.to_str() else { return false };
    let Some(rest) = o.strip_prefix("http://").or_else(|| o.strip_prefix("https://")) else {
        return false;
    };
    let host = rest.rsplit_once(':').map_or(rest, |(h, port)| {
        if port.chars().all(|c| c.is_ascii_digit()) { h } else { rest }
    });
    matches!(host, "localhost" | "127.0.0.1" | "[::1]")
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/ai/models", get(list_models).post(upsert_model))
        .route("/ai/models/{id}", delete(delete_model))
        .route("/ai/costs", get(costs))
        .route("/ai/costs/manual", post(add_manual_cost))
        .route("/ai/import/claude-code", post(import_claude_code))
        .route("/reports/generate", post(generate))
        .route("/intelligence/summary", post(intelligence_summary))
        .fallback(api_not_found);

    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::predicate(|origin, _| is_local_origin(origin)))
        .allow_methods([Method::GET, Method::POST, Method::DELETE])
        .allow_headers([header::CONTENT_TYPE]);

    let app = Router::new().route("/health", get(health)).nest("/api", api);
    let app = match static_dir.filter(|d| d.join("index.html").is_file()) {
        Some(dir) => app.fallback(move |uri: Uri| serve_static(dir.clone(), uri)),
        None => app.route("/", get(placeholder)),
    };
    app.layer(cors).layer(TraceLayer::new_for_http()).with_state(state)
}
