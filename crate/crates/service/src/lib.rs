//! HTTP API over a lithoquery data directory.
//!
//! | method | path | body / query | answer |
//! |---|---|---|---|
//! | GET | `/health` | | `{"status":"ok"}` |
//! | GET | `/providers` | | embedding provider ids |
//! | GET, POST | `/projects` | `{project_id?, name?, settings?}` | project |
//! | GET | `/projects/{pid}` | | project |
//! | GET, POST | `/projects/{pid}/datasets` | ingest request | dataset refs / job |
//! | POST | `/projects/{pid}/datasets/derive` | `{dataset_id, op, focus_area?}` | dataset ref |
//! | POST | `/projects/{pid}/queries` | query request | `{layer_id, histogram, excluded_count, …}` |
//! | GET | `/projects/{pid}/layers` | | layer manifests |
//! | POST | `/projects/{pid}/contact` | `{layer_ids, r1, r2}` | contact layer |
//! | POST | `/projects/{pid}/evaluate/sites` | sites request | recall curves |
//! | POST | `/projects/{pid}/evaluate/tracts` | `{pred_layer_id, truth}` | area metrics |
//! | POST | `/projects/{pid}/gridsearch` | grid request | job |
//! | GET, POST | `/projects/{pid}/focus-areas` | `{name, ring}` or GeoJSON | focus areas |
//! | GET | `/layers/{id}` | | manifest |
//! | GET | `/layers/{id}/geojson` | | WGS84 FeatureCollection |
//! | GET | `/layers/{id}/histogram` | `bins` | score histogram |
//! | GET | `/layers/{id}/export` | `format=geojson`, `score_min`, `score_max` | filtered FeatureCollection |
//! | GET | `/jobs/{id}` | | `{status, progress, result_ref, error}` |
//! | GET | `/results/{id}` | | job result |
//! | GET | `/deposit-models` | | all models |
//! | GET, PUT | `/deposit-models/{type}` | model | model |
//! | POST | `/deposit-models/validate` | model | diagnostics |
//! | POST | `/deposit-models/summarize` | `{deposit_type, document, save?}` | model |
//!
//! Mutating requests accept a `request_id` body field or an
//! `Idempotency-Key` header; a replay returns the stored result.

mod error;
mod jobs;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use geo_types::Coord;
use lithoquery::config::Config;
use lithoquery::depositmodel::DepositModel;
use lithoquery::geodata::FocusArea;
use lithoquery::project::ProjectSettings;
use lithoquery::workspace::{
    ContactRequest, DeriveRequest, EvalSitesRequest, EvalTractsRequest, GridSearchRequest,
    IngestRequest, QueryRequest, ScoreFilter, SummarizeRequest, Workspace,
};
use serde::{Deserialize, Serialize};

pub use error::{status_of, ApiError};
pub use jobs::{JobError, JobRecord, JobRunner, JobStatus};

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
pub struct AppState {
    ws: Arc<Workspace>,
    jobs: Arc<JobRunner>,
}

impl AppState {
    pub fn new(ws: Workspace) -> lithoquery::Result<Self> {
        let max_jobs = ws.config().max_jobs;
        let ws = Arc::new(ws);
        Ok(AppState {
            jobs: Arc::new(JobRunner::new(ws.clone(), max_jobs)?),
            ws,
        })
    }

    pub fn workspace(&self) -> &Workspace {
        &self.ws
    }

    /// Run blocking workspace code off the async executor.
    async fn run<T, F>(&self, f: F) -> ApiResult<T>
    where
        T: Send + 'static,
        F: FnOnce(&Workspace) -> lithoquery::Result<T> + Send + 'static,
    {
        let ws = self.ws.clone();
        tokio::task::spawn_blocking(move || f(&ws))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
            .map_err(ApiError::from)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(serde_json::json!({"status": "ok"})) }))
        .route("/providers", get(providers))
        .route("/projects", get(list_projects).post(create_project))
        .route("/projects/{pid}", get(get_project))
        .route("/projects/{pid}/datasets", get(list_datasets).post(ingest))
        .route("/projects/{pid}/datasets/derive", post(derive))
        .route("/projects/{pid}/queries", post(query))
        .route("/projects/{pid}/layers", get(list_layers))
        .route("/projects/{pid}/contact", post(contact))
        .route("/projects/{pid}/evaluate/sites", post(eval_sites))
        .route("/projects/{pid}/evaluate/tracts", post(eval_tracts))
        .route("/projects/{pid}/gridsearch", post(gridsearch))
        .route("/projects/{pid}/focus-areas", get(list_focus).post(save_focus))
        .route("/layers/{id}", get(layer))
        .route("/layers/{id}/geojson", get(layer_geojson))
        .route("/layers/{id}/histogram", get(histogram))
        .route("/layers/{id}/export", get(export))
        .route("/jobs/{id}", get(job))
        .route("/results/{id}", get(job_result))
        .route("/deposit-models", get(list_models))
        .route("/deposit-models/validate", post(validate_model))
        .route("/deposit-models/summarize", post(summarize))
        .route("/deposit-models/{kind}", get(get_model).put(put_model))
        .with_state(state)
}

/// Bind and serve until Ctrl-C.
pub async fn serve(config: Config) -> lithoquery::Result<()> {
    let addr: SocketAddr = format!("{}:{}", config.bind_address, config.port)
        .parse()
        .map_err(|e| lithoquery::Error::Config(format!("bind address: {e}")))?;
    let state = AppState::new(Workspace::new(config)?)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| lithoquery::Error::io(addr.to_string(), e))?;
    tracing::info!(%addr, "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| lithoquery::Error::io(addr.to_string(), e))
}

fn body<T>(b: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    Ok(b?.0)
}

/// Body field wins; otherwise the `Idempotency-Key` header.
fn request_id(headers: &HeaderMap, from_body: Option<String>) -> ApiResult<Option<String>> {
    if from_body.is_some() {
        return Ok(from_body);
    }
    match headers.get("idempotency-key") {
        None => Ok(None),
        Some(v) => v
            .to_str()
            .map(|s| Some(s.trim().to_string()))
            .map_err(|_| ApiError::bad_request("Idempotency-Key is not text")),
    }
}

async fn providers(State(s): State<AppState>) -> Json<Vec<String>> {
    Json(s.ws.config().provider_ids())
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct NewProject {
    project_id: Option<String>,
    name: Option<String>,
    settings: ProjectSettings,
}

async fn create_project(State(s): State<AppState>, b: Result<Json<NewProject>, JsonRejection>) -> ApiResult<Response> {
    let req = body(b)?;
    let p = s
        .run(move |ws| {
            let name = req.name.clone().unwrap_or_default();
            match &req.project_id {
                Some(id) => ws.store().create_project_with_id(id, &name, req.settings),
                None => ws.store().create_project(&name, req.settings),
            }
        })
        .await?;
    Ok((StatusCode::CREATED, Json(p)).into_response())
}

async fn list_projects(State(s): State<AppState>) -> ApiResult<Response> {
    Ok(Json(s.run(|ws| ws.store().projects()).await?).into_response())
}

async fn get_project(State(s): State<AppState>, Path(pid): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.run(move |ws| ws.store().project(&pid)).await?).into_response())
}

async fn list_datasets(State(s): State<AppState>, Path(pid): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.run(move |ws| ws.datasets(&pid)).await?).into_response())
}

#[derive(Serialize, Deserialize)]
struct JobAccepted {
    job_id: String,
    status_url: String,
}

/// Queue `work` as a job. With a request id the job is created once and
/// replays return the same job.
async fn submit_job<R>(
    s: AppState,
    kind: &'static str,
    pid: String,
    rid: Option<String>,
    req: R,
    work: fn(&Workspace, &str, &R) -> lithoquery::Result<serde_json::Value>,
) -> ApiResult<Response>
where
    R: Send + Sync + 'static,
{
    let jobs = s.jobs.clone();
    let handle = tokio::runtime::Handle::current();
    let accepted = s
        .run(move |ws| {
            ws.store().project(&pid)?;
            let key = rid.map(|r| format!("job-{r}"));
            ws.store().idempotent(&pid, key.as_deref(), || {
                let _guard = handle.enter();
                let job_pid = pid.clone();
                let rec = jobs.submit(kind, &pid, Box::new(move |ws| work(ws, &job_pid, &req)))?;
                Ok(JobAccepted {
                    status_url: format!("/jobs/{}", rec.job_id),
                    job_id: rec.job_id,
                })
            })
        })
        .await?;
    Ok((StatusCode::ACCEPTED, Json(accepted)).into_response())
}

async fn ingest(
    State(s): State<AppState>,
    Path(pid): Path<String>,
    headers: HeaderMap,
    b: Result<Json<IngestRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let mut req = body(b)?;
    let rid = request_id(&headers, req.request_id.take())?;
    submit_job(s, "ingest", pid, rid, req, |ws, pid, req| {
        Ok(serde_json::to_value(ws.ingest(pid, req)?)?)
    })
    .await
}

async fn gridsearch(
    State(s): State<AppState>,
    Path(pid): Path<String>,
    headers: HeaderMap,
    b: Result<Json<GridSearchRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let req = body(b)?;
    let rid = request_id(&headers, None)?;
    submit_job(s, "gridsearch", pid, rid, req, |ws, _, req| {
        Ok(serde_json::to_value(ws.grid_search(req)?)?)
    })
    .await
}

async fn derive(
    State(s): State<AppState>,
    Path(pid): Path<String>,
    headers: HeaderMap,
    b: Result<Json<DeriveRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let mut req = body(b)?;
    req.request_id = request_id(&headers, req.request_id.take())?;
    Ok(Json(s.run(move |ws| ws.derive(&pid, &req)).await?).into_response())
}

async fn query(
    State(s): State<AppState>,
    Path(pid): Path<String>,
    headers: HeaderMap,
    b: Result<Json<QueryRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let mut req = body(b)?;
    req.request_id = request_id(&headers, req.request_id.take())?;
    Ok(Json(s.run(move |ws| ws.query(&pid, &req)).await?).into_response())
}

async fn list_layers(State(s): State<AppState>, Path(pid): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.run(move |ws| ws.layers(&pid)).await?).into_response())
}

async fn contact(
    State(s): State<AppState>,
    Path(pid): Path<String>,
    headers: HeaderMap,
    b: Result<Json<ContactRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let mut req = body(b)?;
    req.request_id = request_id(&headers, req.request_id.take())?;
    Ok(Json(s.run(move |ws| ws.contact(&pid, &req)).await?).into_response())
}

async fn eval_sites(
    State(s): State<AppState>,
    Path(pid): Path<String>,
    b: Result<Json<EvalSitesRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let req = body(b)?;
    let out = s
        .run(move |ws| {
            ws.store().project(&pid)?;
            ws.eval_sites(&req)
        })
        .await?;
    Ok(Json(out).into_response())
}

async fn eval_tracts(
    State(s): State<AppState>,
    Path(pid): Path<String>,
    b: Result<Json<EvalTractsRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let req = body(b)?;
    let out = s
        .run(move |ws| {
            ws.store().project(&pid)?;
            ws.eval_tracts(&req)
        })
        .await?;
    Ok(Json(out).into_response())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FocusBody {
    Ring {
        name: String,
        ring: Vec<[f64; 2]>,
        #[serde(default)]
        request_id: Option<String>,
    },
    GeoJson(serde_json::Value),
}

async fn save_focus(
    State(s): State<AppState>,
    Path(pid): Path<String>,
    headers: HeaderMap,
    b: Result<Json<FocusBody>, JsonRejection>,
) -> ApiResult<Response> {
    let (area, rid) = match body(b)? {
        FocusBody::Ring { name, ring, request_id } => {
            let ring = ring.into_iter().map(|[x, y]| Coord { x, y }).collect();
            (FocusArea::new(name, ring)?, request_id)
        }
        FocusBody::GeoJson(v) => (FocusArea::from_geojson(&v.to_string(), "focus area")?, None),
    };
    let rid = request_id(&headers, rid)?;
    let saved = s.run(move |ws| ws.save_focus_area(&pid, &area, rid.as_deref())).await?;
    Ok((StatusCode::CREATED, Json(saved)).into_response())
}

async fn list_focus(State(s): State<AppState>, Path(pid): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.run(move |ws| ws.focus_areas(&pid)).await?).into_response())
}

async fn layer(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.run(move |ws| ws.layer(&id)).await?).into_response())
}

fn geojson_response(text: String, filename: Option<&str>) -> Response {
    let mut resp = (
        [(header::CONTENT_TYPE, "application/geo+json")],
        text,
    )
        .into_response();
    if let Some(name) = filename {
        if let Ok(v) = format!("attachment; filename=\"{name}.geojson\"").parse() {
            resp.headers_mut().insert(header::CONTENT_DISPOSITION, v);
        }
    }
    resp
}

async fn layer_geojson(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let text = s.run(move |ws| ws.store().layer_geojson_text(&id)).await?;
    Ok(geojson_response(text, None))
}

#[derive(Deserialize)]
struct Bins {
    bins: Option<usize>,
}

async fn histogram(
    State(s): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<Bins>, QueryRejection>,
) -> ApiResult<Response> {
    let bins = q?.0.bins;
    Ok(Json(s.run(move |ws| ws.histogram(&id, bins)).await?).into_response())
}

#[derive(Deserialize)]
struct ExportQuery {
    format: Option<String>,
    score_min: Option<f64>,
    score_max: Option<f64>,
}

async fn export(
    State(s): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<ExportQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let q = q?.0;
    if let Some(f) = q.format.as_deref() {
        if !f.eq_ignore_ascii_case("geojson") {
            return Err(ApiError::bad_request(format!("unsupported export format {f:?}")));
        }
    }
    let filter = ScoreFilter {
        score_min: q.score_min,
        score_max: q.score_max,
    };
    let name = id.clone();
    let fc = s.run(move |ws| ws.export(&id, filter)).await?;
    let text = serde_json::to_string(&fc).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(geojson_response(text, Some(&name)))
}

async fn job(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let jobs = s.jobs.clone();
    Ok(Json(s.run(move |_| jobs.get(&id)).await?).into_response())
}

async fn job_result(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let jobs = s.jobs.clone();
    Ok(Json(s.run(move |_| jobs.result(&id)).await?).into_response())
}

async fn list_models(State(s): State<AppState>) -> ApiResult<Response> {
    Ok(Json(s.run(|ws| ws.models()).await?).into_response())
}

async fn get_model(State(s): State<AppState>, Path(kind): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.run(move |ws| ws.model(&kind)).await?).into_response())
}

async fn put_model(
    State(s): State<AppState>,
    Path(kind): Path<String>,
    b: Result<Json<DepositModel>, JsonRejection>,
) -> ApiResult<Response> {
    let model = body(b)?;
    if lithoquery::depositmodel::slug(&model.deposit_type) != lithoquery::depositmodel::slug(&kind) {
        return Err(ApiError::bad_request(format!(
            "body describes {:?}, path names {kind:?}",
            model.deposit_type
        )));
    }
    Ok(Json(s.run(move |ws| ws.put_model(model)).await?).into_response())
}

async fn validate_model(State(s): State<AppState>, b: Result<Json<DepositModel>, JsonRejection>) -> ApiResult<Response> {
    let model = body(b)?;
    Ok(Json(s.ws.validate_model(&model)).into_response())
}

async fn summarize(State(s): State<AppState>, b: Result<Json<SummarizeRequest>, JsonRejection>) -> ApiResult<Response> {
    let req = body(b)?;
    Ok(Json(s.run(move |ws| ws.summarize(&req)).await?).into_response())
}
