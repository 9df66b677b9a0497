use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{MatchedPath, Path, Query, Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use oa_core::cascade::{CascadeError, RecommendationSlate, Recommender};
use oa_core::embedding::{segment_and_pool, top_k_similar, EmbeddingError};
use oa_core::events::{engagement_score, EventError, InteractionEvent};
use oa_core::generation::{
    assemble, generate, optimize_tokens, prompt_clusters, GenError, PromptSources, TokenCounter, DEFAULT_ROLE,
};
use oa_core::parser::{autofill, extract_tech_keywords, parse_oa, KeywordDoc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ApiError;
use crate::{AppState, OaRecord};

type Shared = State<Arc<AppState>>;
type ApiResult<T> = Result<Json<T>, ApiError>;
type Params = Result<Query<HashMap<String, String>>, QueryRejection>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/oa", post(upload_oa))
        .route("/v1/recommendations", get(recommendations))
        .route("/v1/templates/search", get(search_templates))
        .route("/v1/templates/{id}/fill", post(fill_template))
        .route("/v1/generate", post(generate_remarks))
        .route("/v1/prompts/{id}", get(get_prompt))
        .route("/v1/events", post(log_event))
        .route("/v1/engagement", get(engagement))
        .route("/v1/metrics", get(metrics))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(middleware::from_fn_with_state(state.clone(), guard))
        .with_state(state)
}

/// API-key check and per-route request counting.
async fn guard(State(state): Shared, req: Request, next: Next) -> Response {
    if let Some(key) = &state.api_key {
        let given = req.headers().get("x-api-key").and_then(|v| v.to_str().ok());
        if given != Some(key.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong x-api-key").into_response();
        }
    }
    let route = req
        .extensions()
        .get::<MatchedPath>()
        .map_or_else(|| "unmatched".to_string(), |p| p.as_str().to_string());
    *state.requests.lock().unwrap().entry(route).or_insert(0) += 1;
    next.run(req).await
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such route")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this route")
}

/// Decodes a JSON body, naming the offending field when serde reports one.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        let msg = e.to_string();
        let err = ApiError::bad_request(format!("malformed body: {msg}"));
        match msg.split('`').nth(1) {
            Some(field) if msg.contains("field") => err.field(field),
            _ => err,
        }
    })
}

fn params(q: Params) -> Result<HashMap<String, String>, ApiError> {
    q.map(|Query(m)| m).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn required<'a>(p: &'a HashMap<String, String>, name: &str) -> Result<&'a str, ApiError> {
    match p.get(name).map(|s| s.trim()) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(ApiError::bad_request(format!("missing query parameter {name}")).field(name)),
    }
}

fn optional<T: std::str::FromStr>(p: &HashMap<String, String>, name: &str) -> Result<Option<T>, ApiError> {
    p.get(name)
        .map(|v| v.trim().parse().map_err(|_| ApiError::bad_request(format!("cannot parse {name}={v}")).field(name)))
        .transpose()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

fn hex_digest(text: &str) -> String {
    Sha256::digest(text.as_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn embedding_error(e: EmbeddingError) -> ApiError {
    match e {
        EmbeddingError::EmptyText => ApiError::unprocessable("empty_text", "text has no content to embed"),
        e if e.retryable() => ApiError::new(StatusCode::BAD_GATEWAY, "embedding_backend", e.to_string()).retryable(true),
        e => ApiError::internal(e.to_string()),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OaUpload {
    text: String,
    #[serde(default)]
    oa_id: Option<String>,
    /// Description and claims of the application under examination.
    #[serde(default)]
    current: Option<KeywordDoc>,
    #[serde(default)]
    prior_art: Vec<KeywordDoc>,
}

async fn upload_oa(State(state): Shared, body: Bytes) -> ApiResult<OaRecord> {
    let up: OaUpload = parse_body(&body)?;
    if up.text.trim().is_empty() {
        return Err(ApiError::bad_request("text must not be empty").field("text"));
    }
    let oa_id = match up.oa_id {
        Some(id) if id.trim().is_empty() => return Err(ApiError::bad_request("oa_id must not be empty").field("oa_id")),
        Some(id) => id,
        None => format!("oa-{}", hex_digest(&up.text)),
    };
    let current = up.current.unwrap_or_else(|| KeywordDoc::new(up.text.clone()));
    let record = OaRecord {
        oa_id: oa_id.clone(),
        biblio: parse_oa(&up.text),
        keywords: extract_tech_keywords(&current, &up.prior_art, &state.keyword_config),
        text: up.text,
    };
    state.oas.write().unwrap().insert(oa_id, record.clone());
    Ok(Json(record))
}

fn stored_oa(state: &AppState, oa_id: &str) -> Result<OaRecord, ApiError> {
    state
        .oas
        .read()
        .unwrap()
        .get(oa_id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("unknown oa_id {oa_id}")).field("oa_id"))
}

#[derive(Debug, Serialize)]
struct SlateResponse {
    oa_id: String,
    user: String,
    #[serde(flatten)]
    slate: RecommendationSlate,
}

async fn recommendations(State(state): Shared, q: Params) -> ApiResult<SlateResponse> {
    let p = params(q)?;
    let oa = stored_oa(&state, required(&p, "oa_id")?)?;
    let user = required(&p, "user")?.to_string();
    let k = optional(&p, "k")?.unwrap_or(state.config.recommend.k);
    let w = optional(&p, "w")?.unwrap_or(state.config.recommend.blend_weight);
    let st = state.clone();
    let u = user.clone();
    let slate = blocking(move || {
        let rec = Recommender {
            provider: &*st.stores.provider,
            store: &st.stores.store,
            topic_models: &st.stores.topic_models,
            topic_templates: &st.stores.topic_templates,
        };
        rec.recommend(&oa.text, &u, k, w).map_err(|e| match e {
            CascadeError::InvalidArgument(m) => ApiError::bad_request(m),
            CascadeError::Embedding(e) => embedding_error(e),
        })
    })
    .await?;
    Ok(Json(SlateResponse { oa_id: oa.oa_id, user, slate }))
}

#[derive(Debug, Serialize)]
struct SearchMatch {
    template_id: String,
    topic_id: String,
    similarity: f64,
    preview: String,
}

#[derive(Debug, Serialize)]
struct SearchResponse {
    query: String,
    matches: Vec<SearchMatch>,
}

const PREVIEW_CHARS: usize = 160;

async fn search_templates(State(state): Shared, q: Params) -> ApiResult<SearchResponse> {
    let p = params(q)?;
    let query = required(&p, "q")?.to_string();
    let k = optional(&p, "k")?.unwrap_or(state.config.recommend.k);
    if k == 0 {
        return Err(ApiError::bad_request("k must be >= 1").field("k"));
    }
    let st = state.clone();
    let qq = query.clone();
    let matches = blocking(move || {
        let provider = &*st.stores.provider;
        let emb = segment_and_pool(provider, &qq, provider.token_limit()).map_err(embedding_error)?.embedding;
        let cb = top_k_similar(&emb, &st.stores.store, k).map_err(embedding_error)?;
        Ok(cb
            .tuples
            .into_iter()
            .map(|t| SearchMatch {
                preview: st
                    .stores
                    .templates
                    .get(&t.template_id)
                    .map(|r| r.body.chars().take(PREVIEW_CHARS).collect())
                    .unwrap_or_default(),
                template_id: t.template_id,
                topic_id: t.topic_id,
                similarity: t.similarity,
            })
            .collect())
    })
    .await?;
    Ok(Json(SearchResponse { query, matches }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FillRequest {
    #[serde(default)]
    oa_id: Option<String>,
    /// OA text to parse when no stored OA is referenced.
    #[serde(default)]
    text: Option<String>,
}

fn oa_context(state: &AppState, oa_id: Option<&str>, text: Option<&str>) -> Result<Option<OaRecord>, ApiError> {
    match (oa_id, text) {
        (Some(id), _) => stored_oa(state, id).map(Some),
        (None, Some(t)) => Ok(Some(OaRecord {
            oa_id: String::new(),
            biblio: parse_oa(t),
            keywords: extract_tech_keywords(&KeywordDoc::new(t), &[], &state.keyword_config),
            text: t.to_string(),
        })),
        (None, None) => Ok(None),
    }
}

async fn fill_template(State(state): Shared, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let req: FillRequest = if body.is_empty() { FillRequest::default() } else { parse_body(&body)? };
    let template = state
        .stores
        .templates
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown template {id}")))?;
    let oa = oa_context(&state, req.oa_id.as_deref(), req.text.as_deref())?;
    let (biblio, keywords) = oa.map(|o| (o.biblio, o.keywords)).unwrap_or_default();
    let filled = autofill(&template.body, &biblio, &keywords)
        .map_err(|e| ApiError::unprocessable("invalid_template", e.to_string()))?;
    let mut out = serde_json::to_value(&filled).map_err(|e| ApiError::internal(e.to_string()))?;
    out["template_id"] = serde_json::Value::String(id);
    Ok(Json(out).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateRequest {
    #[serde(default)]
    oa_id: Option<String>,
    #[serde(default)]
    draft: String,
    #[serde(default)]
    template_ids: Vec<String>,
    /// Attorney-written templates used as-is.
    #[serde(default)]
    templates: Vec<String>,
    #[serde(default)]
    budget: Option<usize>,
}

#[derive(Debug, Serialize)]
struct GenerateResponse {
    text: String,
    backend: String,
    prompt_tokens: usize,
    completion_tokens: usize,
    prompt_id: String,
    prompt_ref: String,
    budget: usize,
    bundle_tokens: usize,
    dropped_segments: usize,
    duplicates_removed: usize,
    trimmed: bool,
}

fn gen_error(e: GenError) -> ApiError {
    match e {
        GenError::DraftRequired => ApiError::bad_request(e.to_string()).field("draft"),
        GenError::BudgetTooSmall { .. } => ApiError::unprocessable("budget_too_small", e.to_string()).field("budget"),
        GenError::OverLimit { .. } => ApiError::unprocessable("over_limit", e.to_string()),
        GenError::Remote { retryable, .. } => {
            ApiError::new(StatusCode::BAD_GATEWAY, "generation_backend", e.to_string()).retryable(retryable)
        }
        GenError::RemoteDisabled => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "remote_disabled", e.to_string()),
        e => ApiError::bad_request(e.to_string()),
    }
}

async fn generate_remarks(State(state): Shared, body: Bytes) -> ApiResult<GenerateResponse> {
    let req: GenerateRequest = parse_body(&body)?;
    if req.draft.trim().is_empty() {
        return Err(ApiError::bad_request("draft required").field("draft"));
    }
    let oa = oa_context(&state, req.oa_id.as_deref(), None)?;
    let gen_cfg = &state.config.generation;
    let mut template_texts = Vec::new();
    for id in &req.template_ids {
        let t = state
            .stores
            .templates
            .get(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown template {id}")).field("template_ids"))?;
        let body = match &oa {
            Some(o) => autofill(&t.body, &o.biblio, &o.keywords)
                .map_err(|e| ApiError::unprocessable("invalid_template", e.to_string()))?
                .body,
            None => t.body.clone(),
        };
        template_texts.push(body);
    }
    template_texts.extend(req.templates.iter().cloned());

    let role = gen_cfg.role.clone().unwrap_or_else(|| DEFAULT_ROLE.to_string());
    let clusters = prompt_clusters(&PromptSources {
        role: &role,
        draft: &req.draft,
        templates: template_texts,
        oa: oa.as_ref().map(|o| (&o.biblio, &o.keywords)),
        external: &state.stores.external,
        keyword_top_n: state.config.keywords.top_n,
        relevant_top_n: gen_cfg.relevant_top_n,
        priorities: gen_cfg.priorities,
    });
    let counter = TokenCounter { ratio: gen_cfg.token_ratio };
    let budget = req.budget.unwrap_or(gen_cfg.budget);
    let bundle = optimize_tokens(assemble(&clusters).map_err(gen_error)?, budget, &counter).map_err(gen_error)?;

    let backend = state.backend.clone();
    let b = bundle.clone();
    let generation = blocking(move || generate(&b, &*backend, &counter).map_err(gen_error)).await?;

    let prompt_id = hex_digest(&generation.prompt);
    if let Some(dir) = &state.audit_dir {
        let saved = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join(format!("{prompt_id}.txt")), &generation.prompt));
        if let Err(e) = saved {
            log::warn!("prompt {prompt_id} not written to audit dir: {e}");
        }
    }
    state.prompts.write().unwrap().insert(prompt_id.clone(), generation.prompt.clone());
    Ok(Json(GenerateResponse {
        text: generation.text,
        backend: generation.backend_name,
        prompt_tokens: generation.token_usage.prompt,
        completion_tokens: generation.token_usage.completion,
        prompt_ref: format!("/v1/prompts/{prompt_id}"),
        prompt_id,
        budget,
        bundle_tokens: bundle.token_count,
        dropped_segments: bundle.dropped.len(),
        duplicates_removed: bundle.duplicates_removed,
        trimmed: bundle.trimmed,
    }))
}

async fn get_prompt(State(state): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let prompt = state
        .prompts
        .read()
        .unwrap()
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("unknown prompt {id}")))?;
    Ok(Json(serde_json::json!({ "prompt_id": id, "prompt": prompt })).into_response())
}

async fn log_event(State(state): Shared, body: Bytes) -> Result<Response, ApiError> {
    let event: InteractionEvent = parse_body(&body)?;
    let ack = state.events.lock().unwrap().append(event).map_err(|e| match e {
        EventError::Invalid { field, .. } => ApiError::bad_request(e.to_string()).field(field),
        e => ApiError::internal(e.to_string()),
    })?;
    Ok(Json(ack).into_response())
}

fn valid_period(p: &str) -> bool {
    let b = p.as_bytes();
    b.len() == 7
        && b[4] == b'-'
        && p[..4].bytes().all(|c| c.is_ascii_digit())
        && matches!(p[5..].parse::<u32>(), Ok(1..=12))
}

async fn engagement(State(state): Shared, q: Params) -> Result<Response, ApiError> {
    let p = params(q)?;
    let user = required(&p, "user")?;
    let period = required(&p, "period")?;
    if !valid_period(period) {
        return Err(ApiError::bad_request("period must be YYYY-MM").field("period"));
    }
    let log = state.events.lock().unwrap();
    let score = engagement_score(log.events(), user, period, &state.config.events.weights);
    Ok(Json(score).into_response())
}

#[derive(Debug, Serialize)]
struct Metrics {
    requests: BTreeMap<String, u64>,
    events: BTreeMap<String, usize>,
    events_total: usize,
    oas: usize,
    templates: usize,
    topics_with_models: usize,
    prompts: usize,
}

async fn metrics(State(state): Shared) -> Json<Metrics> {
    let log = state.events.lock().unwrap();
    Json(Metrics {
        requests: state.requests.lock().unwrap().clone(),
        events: log.counts().into_iter().map(|(k, n)| (format!("{k:?}"), n)).collect(),
        events_total: log.len(),
        oas: state.oas.read().unwrap().len(),
        templates: state.stores.templates.len(),
        topics_with_models: state.stores.topic_models.len(),
        prompts: state.prompts.read().unwrap().len(),
    })
}
