//! HTTP JSON API over the slicewise audit engine.
//!
//! Each uploaded dataset lives in its own in-memory session keyed by a
//! random id. Sessions are dropped after a configurable idle period.

mod error;
pub mod payload;
pub mod session;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use slicewise_core::metrics::ACCURACY;
use slicewise_core::subgroups::DEFAULT_MIN_SIZE;
use slicewise_core::{
    counterfactual_neighbors, filter_by_size, find_similar, generate_product,
    rank_suggestions_ordered, Audit, ClusterConfig, ExportDocument, IngestConfig,
    MaterializedGroup, MetricRegistry, SimilarQuery, SortOrder, SubgroupKind,
};

pub use error::{ApiError, ApiResult};
use payload::*;
use session::{PinState, Session, SessionStore};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub idle_timeout: Duration,
    pub max_upload_bytes: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            idle_timeout: Duration::from_secs(60 * 60),
            max_upload_bytes: 512 * 1024 * 1024,
        }
    }
}

#[derive(Default)]
pub struct AppState {
    pub sessions: SessionStore,
    pub config: ServerConfig,
}

impl AppState {
    pub fn new(config: ServerConfig) -> Self {
        Self {
            sessions: SessionStore::default(),
            config,
        }
    }
}

type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_upload_bytes;
    Router::new()
        .route("/metrics", get(list_metrics))
        .route("/datasets", post(upload))
        .route("/datasets/{id}", get(dataset_summary))
        .route("/datasets/{id}/features", get(features))
        .route(
            "/datasets/{id}/groups",
            post(create_groups).get(list_groups),
        )
        .route("/datasets/{id}/suggested", get(suggested))
        .route("/datasets/{id}/groups/{gid}/similar", get(similar))
        .route("/datasets/{id}/detail", get(detail))
        .route("/datasets/{id}/state", get(get_state).post(set_state))
        .route("/datasets/{id}/export", post(export))
        .route("/datasets/{id}/cluster", post(recluster))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Binds `addr` and serves until the process exits, evicting idle sessions
/// in the background.
pub async fn serve(addr: SocketAddr, config: ServerConfig) -> std::io::Result<()> {
    let state = Arc::new(AppState::new(config));
    let sweeper = state.clone();
    let every =
        (sweeper.config.idle_timeout / 4).clamp(Duration::from_secs(1), Duration::from_secs(60));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        loop {
            tick.tick().await;
            let n = sweeper
                .sessions
                .evict_idle(sweeper.config.idle_timeout, Instant::now());
            if n > 0 {
                tracing::info!(evicted = n, "dropped idle sessions");
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state)).await
}

fn metric_list(registry: &MetricRegistry, raw: Option<&str>) -> ApiResult<Vec<String>> {
    match raw.map(str::trim).filter(|s| !s.is_empty()) {
        None => Ok(registry.ids().map(String::from).collect()),
        Some(raw) => raw
            .split(',')
            .map(|m| {
                let m = m.trim();
                registry.check(m)?;
                Ok(m.to_string())
            })
            .collect(),
    }
}

fn checked_metrics(registry: &MetricRegistry, ids: Option<Vec<String>>) -> ApiResult<Vec<String>> {
    match ids {
        None => Ok(registry.ids().map(String::from).collect()),
        Some(ids) => {
            for m in &ids {
                registry.check(m)?;
            }
            Ok(ids)
        }
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn list_metrics() -> Json<Vec<String>> {
    Json(MetricRegistry::standard().ids().map(String::from).collect())
}

async fn upload(State(state): Shared, mut form: Multipart) -> ApiResult<Json<DatasetSummary>> {
    let mut file = None;
    let mut ingest: Option<IngestConfig> = None;
    let mut cluster = ClusterConfig::default();
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::BadRequest(e.to_string()))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::BadRequest(e.to_string()))?;
        match name.as_str() {
            "file" => file = Some(bytes),
            "config" => {
                ingest = Some(
                    serde_json::from_slice(&bytes)
                        .map_err(|e| ApiError::BadRequest(format!("config: {e}")))?,
                )
            }
            "cluster" => {
                cluster = serde_json::from_slice(&bytes)
                    .map_err(|e| ApiError::BadRequest(format!("cluster: {e}")))?
            }
            other => {
                return Err(ApiError::BadRequest(format!(
                    "unexpected form field `{other}`"
                )))
            }
        }
    }
    let file = file.ok_or_else(|| ApiError::BadRequest("missing `file` field".into()))?;
    let ingest = ingest.ok_or_else(|| ApiError::BadRequest("missing `config` field".into()))?;
    ingest.validate()?;
    cluster.validate()?;

    let audit = blocking(move || {
        Audit::load(&file[..], &ingest, &cluster, MetricRegistry::standard())
            .map_err(ApiError::from)
    })
    .await?;
    let id = uuid::Uuid::new_v4().to_string();
    let summary = DatasetSummary::new(&id, &audit);
    state.sessions.insert(Session::new(id, audit));
    tracing::info!(dataset = %summary.dataset_id, rows = summary.row_count, "dataset loaded");
    Ok(Json(summary))
}

async fn dataset_summary(
    State(state): Shared,
    Path(id): Path<String>,
) -> ApiResult<Json<DatasetSummary>> {
    let session = state.sessions.get(&id)?;
    Ok(Json(DatasetSummary::new(&id, &session.audit())))
}

async fn features(
    State(state): Shared,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<FeatureSummary>>> {
    let session = state.sessions.get(&id)?;
    Ok(Json(feature_summaries(&session.audit())))
}

#[derive(Debug, Deserialize)]
struct CreateGroups {
    selection: BTreeMap<String, Vec<String>>,
    metrics: Option<Vec<String>>,
}

async fn create_groups(
    State(state): Shared,
    Path(id): Path<String>,
    Json(body): Json<CreateGroups>,
) -> ApiResult<Json<GroupsResponse>> {
    let session = state.sessions.get(&id)?;
    let audit = session.audit();
    let metrics = checked_metrics(&audit.registry, body.metrics)?;
    let selection: Vec<(String, Vec<String>)> = body.selection.into_iter().collect();
    let specs = generate_product(&audit.schema, &selection)?;
    let built = specs.iter().map(|s| audit.materialize(s)).collect();
    let stored = session.add_groups(built);
    Ok(Json(GroupsResponse {
        groups: stored
            .iter()
            .map(|g| GroupSummary::new(g, &audit.schema, &metrics))
            .collect(),
        dataset_averages: audit.dataset_averages().select(&metrics),
    }))
}

#[derive(Debug, Deserialize)]
struct ListQuery {
    metrics: Option<String>,
    min_size: Option<u64>,
}

async fn list_groups(
    State(state): Shared,
    Path(id): Path<String>,
    Query(q): Query<ListQuery>,
) -> ApiResult<Json<GroupsResponse>> {
    let session = state.sessions.get(&id)?;
    let audit = session.audit();
    let metrics = metric_list(&audit.registry, q.metrics.as_deref())?;
    let groups = filter_by_size(session.user_groups(), q.min_size.unwrap_or(0));
    Ok(Json(GroupsResponse {
        groups: groups
            .iter()
            .map(|g| GroupSummary::new(g, &audit.schema, &metrics))
            .collect(),
        dataset_averages: audit.dataset_averages().select(&metrics),
    }))
}

#[derive(Debug, Deserialize)]
struct SuggestedQuery {
    sort: Option<String>,
    order: Option<SortOrder>,
    min_size: Option<u64>,
    limit: Option<usize>,
    metrics: Option<String>,
}

async fn suggested(
    State(state): Shared,
    Path(id): Path<String>,
    Query(q): Query<SuggestedQuery>,
) -> ApiResult<Json<SuggestedResponse>> {
    let session = state.sessions.get(&id)?;
    let audit = session.audit();
    let sort = q.sort.unwrap_or_else(|| ACCURACY.to_string());
    let min_size = q.min_size.unwrap_or(DEFAULT_MIN_SIZE);
    let metrics = metric_list(&audit.registry, q.metrics.as_deref())?;
    let order = q.order.unwrap_or_default();
    let mut ranked = rank_suggestions_ordered(
        audit.suggestions.groups.iter().collect(),
        &sort,
        order,
        min_size,
        &audit.registry,
    )?;
    if let Some(limit) = q.limit {
        ranked.truncate(limit);
    }
    Ok(Json(SuggestedResponse {
        groups: ranked
            .iter()
            .map(|g| SuggestionCard::new(g, &audit.schema, &metrics))
            .collect(),
        sort,
        order,
        min_size,
        dataset_averages: audit.dataset_averages().select(&metrics),
    }))
}

#[derive(Debug, Deserialize)]
struct SimilarParams {
    sort: Option<String>,
    min_size: Option<u64>,
    limit: Option<usize>,
    radius: Option<usize>,
    metric: Option<String>,
    metrics: Option<String>,
}

async fn similar(
    State(state): Shared,
    Path((id, gid)): Path<(String, String)>,
    Query(q): Query<SimilarParams>,
) -> ApiResult<Json<SimilarResponse>> {
    let session = state.sessions.get(&id)?;
    let audit = session.audit();
    let metrics = metric_list(&audit.registry, q.metrics.as_deref())?;
    let source = session.find_group(&gid)?;
    let universe = session.universe();
    let results = find_similar(
        &SimilarQuery {
            source: &gid,
            sort_metric: q.sort.as_deref(),
            min_size: q.min_size.unwrap_or(DEFAULT_MIN_SIZE),
            limit: q.limit,
        },
        &universe,
        &audit.schema,
        &audit.registry,
    )?;
    let by_id: HashMap<&str, &MaterializedGroup> =
        universe.iter().map(|g| (g.id(), &**g)).collect();
    let similar = results
        .into_iter()
        .map(|r| SimilarEntry {
            group: GroupSummary::new(by_id[r.candidate.as_str()], &audit.schema, &metrics),
            distance: r.distance,
            per_feature: r.per_feature,
            most_divergent_feature: r.most_divergent_feature,
            counterfactual_delta: r.counterfactual_delta,
        })
        .collect();

    let counterfactuals = match source.spec.kind() {
        SubgroupKind::Predicate => {
            let radius = q.radius.unwrap_or(1);
            let metric = q.metric.or(q.sort).unwrap_or_else(|| ACCURACY.to_string());
            let neighbors = counterfactual_neighbors(
                &source.spec,
                radius,
                &metric,
                &audit.table,
                &audit.schema,
                &audit.registry,
            )?;
            Some(Counterfactuals {
                neighbors: neighbors
                    .iter()
                    .map(|n| CounterfactualEntry::new(n, &audit.schema, &metrics))
                    .collect(),
                metric,
                radius,
            })
        }
        SubgroupKind::Cluster => None,
    };
    Ok(Json(SimilarResponse {
        source: GroupSummary::new(&source, &audit.schema, &metrics),
        similar,
        counterfactuals,
    }))
}

#[derive(Debug, Deserialize)]
struct DetailQuery {
    pinned: Option<String>,
    hovered: Option<String>,
    metrics: Option<String>,
}

async fn detail(
    State(state): Shared,
    Path(id): Path<String>,
    Query(q): Query<DetailQuery>,
) -> ApiResult<Json<DetailResponse>> {
    let session = state.sessions.get(&id)?;
    let audit = session.audit();
    let metrics = metric_list(&audit.registry, q.metrics.as_deref())?;
    let pins = if q.pinned.is_some() || q.hovered.is_some() {
        PinState {
            pinned: q.pinned,
            hovered: q.hovered,
        }
    } else {
        session.pins()
    };
    let view = |gid: Option<String>| -> ApiResult<Option<GroupDetail>> {
        gid.map(|g| {
            session
                .find_group(&g)
                .map(|g| GroupDetail::new(&g, &audit.schema, &metrics))
        })
        .transpose()
    };
    Ok(Json(DetailResponse {
        pinned: view(pins.pinned)?,
        hovered: view(pins.hovered)?,
        dataset_averages: audit.dataset_averages().select(&metrics),
    }))
}

async fn get_state(State(state): Shared, Path(id): Path<String>) -> ApiResult<Json<PinState>> {
    Ok(Json(state.sessions.get(&id)?.pins()))
}

async fn set_state(
    State(state): Shared,
    Path(id): Path<String>,
    Json(pins): Json<PinState>,
) -> ApiResult<Json<PinState>> {
    Ok(Json(state.sessions.get(&id)?.set_pins(pins)?))
}

#[derive(Debug, Default, Deserialize)]
struct ExportRequest {
    ids: Option<Vec<String>>,
}

async fn export(
    State(state): Shared,
    Path(id): Path<String>,
    body: Option<Json<ExportRequest>>,
) -> ApiResult<Json<ExportDocument>> {
    let session = state.sessions.get(&id)?;
    let audit = session.audit();
    let ids = match body.and_then(|Json(b)| b.ids) {
        Some(ids) => ids,
        None => {
            let pins = session.pins();
            let mut ids: Vec<String> = pins.pinned.into_iter().collect();
            ids.extend(pins.hovered.filter(|h| !ids.contains(h)));
            ids
        }
    };
    let groups = ids
        .iter()
        .map(|g| session.find_group(g))
        .collect::<ApiResult<Vec<_>>>()?;
    Ok(Json(ExportDocument::new(
        id,
        groups.iter().map(|g| &**g),
        &audit.schema,
    )))
}

async fn recluster(
    State(state): Shared,
    Path(id): Path<String>,
    Json(config): Json<ClusterConfig>,
) -> ApiResult<Json<ClusterSummary>> {
    let session = state.sessions.get(&id)?;
    config.validate()?;
    let audit = session.audit();
    let suggestions = blocking(move || audit.recluster(&config).map_err(ApiError::from)).await?;
    let summary = ClusterSummary::new(&suggestions);
    session.replace_suggestions(suggestions);
    session.drop_stale_pins();
    Ok(Json(summary))
}
