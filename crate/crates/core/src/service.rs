//! JSON-over-HTTP survey service.
//!
//! State lives in one directory: `corpus.tsv` (the scored corpus),
//! `iteration-N.sample.json`, an append-only `iteration-N.ratings.csv` per
//! iteration, and `iteration-N.trace.tsv` once iteration N is advanced. The
//! latest iteration is open for ratings; earlier ones are closed.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cli::load_scored;
use crate::config::RunConfig;
use crate::error::{read_to_string, Error, Result};
use crate::optimize::{self, Strategy};
use crate::reliability::{RatingMatrix, RatingValue};
use crate::scoring::{rescore, ScoredConcept, Weights};
use crate::survey::{self, AdvanceOptions, AgreementSettings, SurveySample};

const CORPUS_FILE: &str = "corpus.tsv";

fn sample_path(dir: &Path, n: u32) -> PathBuf {
    dir.join(format!("iteration-{n}.sample.json"))
}

fn ratings_path(dir: &Path, n: u32) -> PathBuf {
    dir.join(format!("iteration-{n}.ratings.csv"))
}

fn trace_path(dir: &Path, n: u32) -> PathBuf {
    dir.join(format!("iteration-{n}.trace.tsv"))
}

struct Iteration {
    sample: SurveySample,
    ratings: RatingMatrix,
    raw: HashMap<(String, String), Option<RatingValue>>,
    log: File,
}

impl Iteration {
    fn open(dir: &Path, sample: SurveySample) -> Result<Self> {
        let path = ratings_path(dir, sample.iteration);
        let known: HashSet<String> = sample.cuis().map(str::to_owned).collect();
        let ingest = if path.exists() {
            survey::ingest_ratings(&read_to_string(&path)?, Some(&known))?
        } else {
            survey::RatingsIngest::default()
        };
        let raw = ingest
            .records
            .into_iter()
            .map(|r| ((r.rater_id, r.cui), r.value))
            .collect();
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Iteration {
            sample,
            ratings: ingest.matrix,
            raw,
            log,
        })
    }

    fn record(&mut self, path: &Path, rater: &str, cui: &str, value: Option<RatingValue>) -> Result<()> {
        let level = value.map(|v| v.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(&mut self.log);
        w.write_record([rater, cui, level.as_str()])
            .and_then(|_| w.flush().map_err(csv::Error::from))
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        drop(w);
        let bucket = value.map(RatingValue::bucket).transpose()?;
        self.ratings.set(rater, cui, bucket);
        self.raw.insert((rater.to_owned(), cui.to_owned()), value);
        Ok(())
    }
}

struct Store {
    dir: PathBuf,
    corpus: Vec<ScoredConcept>,
    iterations: BTreeMap<u32, Iteration>,
}

impl Store {
    fn latest(&self) -> u32 {
        *self.iterations.keys().next_back().expect("at least one iteration")
    }

    fn iteration(&self, n: u32) -> std::result::Result<&Iteration, ApiError> {
        self.iterations
            .get(&n)
            .ok_or_else(|| ApiError::not_found(format!("no iteration {n}")))
    }

    fn scored_under(&self, weights: Weights) -> Vec<ScoredConcept> {
        let mut s = self.corpus.clone();
        rescore(&mut s, weights);
        s
    }
}

pub struct AppState {
    store: Mutex<Store>,
    settings: AgreementSettings,
    pool_size: usize,
    seed: u64,
}

impl AppState {
    /// Opens (or initializes) the state directory. A fresh directory gets a
    /// copy of the scored corpus and an iteration-1 sample under the
    /// configured weights.
    pub fn open(cfg: &RunConfig) -> Result<Arc<Self>> {
        let dir = cfg
            .state_dir
            .clone()
            .ok_or_else(|| Error::InvalidArgument("serve needs a state directory".into()))?;
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let corpus_path = dir.join(CORPUS_FILE);
        if !corpus_path.exists() {
            let source = cfg.scored.as_deref().ok_or_else(|| {
                Error::InvalidArgument("a new state directory needs a scored corpus".into())
            })?;
            fs::copy(source, &corpus_path).map_err(|e| Error::io(source, e))?;
        }
        let corpus = load_scored(&corpus_path, cfg.weights)?;

        let mut iterations = BTreeMap::new();
        for n in 1.. {
            let path = sample_path(&dir, n);
            if !path.exists() {
                break;
            }
            let sample = SurveySample::from_json(&read_to_string(&path)?)?;
            iterations.insert(n, Iteration::open(&dir, sample)?);
        }
        if iterations.is_empty() {
            let sample = survey::sample_survey(&corpus, cfg.pool_size, cfg.seed, 1, cfg.weights)?;
            write(&sample_path(&dir, 1), &sample.to_json()?)?;
            iterations.insert(1, Iteration::open(&dir, sample)?);
        }
        Ok(Arc::new(AppState {
            store: Mutex::new(Store {
                dir,
                corpus,
                iterations,
            }),
            settings: AgreementSettings {
                mode: cfg.bucket_mode,
                scope: cfg.bucket_scope,
                level: cfg.level,
            },
            pool_size: cfg.pool_size,
            seed: cfg.seed,
        }))
    }

    fn lock(&self) -> MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidArgument(_) | Error::Record { .. } | Error::Json(_) => StatusCode::BAD_REQUEST,
            Error::NoOverlap | Error::Degenerate(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> std::result::Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct IterationSummary {
    iteration: u32,
    status: &'static str,
    weights: Weights,
    items: usize,
    raters: usize,
    ratings: usize,
}

async fn list_iterations(State(state): State<Arc<AppState>>) -> Json<Vec<IterationSummary>> {
    let store = state.lock();
    let latest = store.latest();
    Json(
        store
            .iterations
            .iter()
            .map(|(&n, it)| IterationSummary {
                iteration: n,
                status: if n == latest { "open" } else { "closed" },
                weights: it.sample.weights,
                items: it.sample.items.len(),
                raters: it.ratings.raters().len(),
                ratings: it.ratings.rating_count(),
            })
            .collect(),
    )
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct SurveyQuery {
    rater_id: Option<String>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct SurveyTerm {
    cui: String,
    term: String,
    /// This rater's stored answer, when a rater was named.
    #[serde(skip_serializing_if = "Option::is_none")]
    level: Option<RatingValue>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct SurveyPayload {
    iteration: u32,
    open: bool,
    labels: [&'static str; 5],
    terms: Vec<SurveyTerm>,
}

async fn get_survey(
    State(state): State<Arc<AppState>>,
    UrlPath(n): UrlPath<u32>,
    Query(q): Query<SurveyQuery>,
) -> ApiResult<SurveyPayload> {
    let store = state.lock();
    let it = store.iteration(n)?;
    let terms = it
        .sample
        .items
        .iter()
        .map(|item| SurveyTerm {
            cui: item.cui.clone(),
            term: item.term.clone(),
            level: q
                .rater_id
                .as_ref()
                .and_then(|r| it.raw.get(&(r.clone(), item.cui.clone())).copied().flatten()),
        })
        .collect();
    Ok(Json(SurveyPayload {
        iteration: n,
        open: n == store.latest(),
        labels: crate::reliability::LEVEL_LABELS,
        terms,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RatingBody {
    iteration: u32,
    rater_id: String,
    cui: String,
    /// 1-5, a bucket label, or null to clear.
    level: Value,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct RatingAck {
    iteration: u32,
    rater_id: String,
    cui: String,
    level: Option<RatingValue>,
    bucket: Option<crate::scoring::Bucket>,
}

fn rating_value(v: &Value) -> std::result::Result<Option<RatingValue>, ApiError> {
    let value = match v {
        Value::Null => return Ok(None),
        Value::Number(n) => {
            let level = n
                .as_u64()
                .and_then(|l| u8::try_from(l).ok())
                .ok_or_else(|| ApiError::bad_request(format!("bad level {n}")))?;
            RatingValue::Level(level)
        }
        Value::String(s) => s.parse()?,
        other => return Err(ApiError::bad_request(format!("bad level {other}"))),
    };
    value.bucket()?;
    Ok(Some(value))
}

async fn post_rating(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<RatingAck> {
    let body: RatingBody = parse_body(&body)?;
    let value = rating_value(&body.level)?;
    let rater = body.rater_id.trim();
    if rater.is_empty() || rater.contains([',', '\n', '\r', '"']) {
        return Err(ApiError::bad_request("raterId must be non-empty without commas, quotes or newlines"));
    }
    let mut store = state.lock();
    let latest = store.latest();
    let dir = store.dir.clone();
    let it = store
        .iterations
        .get_mut(&body.iteration)
        .ok_or_else(|| ApiError::not_found(format!("no iteration {}", body.iteration)))?;
    if body.iteration != latest {
        return Err(ApiError::conflict(format!("iteration {} is closed", body.iteration)));
    }
    if !it.sample.contains(&body.cui) {
        return Err(ApiError::bad_request(format!(
            "{} is not in iteration {}",
            body.cui, body.iteration
        )));
    }
    let path = ratings_path(&dir, body.iteration);
    it.record(&path, rater, &body.cui, value)?;
    Ok(Json(RatingAck {
        iteration: body.iteration,
        rater_id: rater.to_owned(),
        cui: body.cui,
        level: value,
        bucket: value.map(RatingValue::bucket).transpose()?,
    }))
}

async fn get_report(
    State(state): State<Arc<AppState>>,
    UrlPath(n): UrlPath<u32>,
) -> ApiResult<survey::IterationReport> {
    let store = state.lock();
    let it = store.iteration(n)?;
    if it.ratings.rating_count() == 0 {
        return Err(ApiError::conflict(format!("iteration {n} has no ratings yet")));
    }
    let scored = store.scored_under(it.sample.weights);
    Ok(Json(survey::iteration_report(
        &it.sample,
        &it.ratings,
        &scored,
        &state.settings,
    )?))
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct AdvanceBody {
    strategy: Option<String>,
    budget: Option<usize>,
    seed: Option<u64>,
    reference_rater: Option<String>,
    grid_step: Option<u32>,
    init_points: Option<usize>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct AdvanceResult {
    iteration: u32,
    previous_iteration: u32,
    reference_rater: String,
    strategy: Strategy,
    evaluations: usize,
    previous_weights: Weights,
    previous_objective: f64,
    weights: Weights,
    objective: f64,
}

fn advance_locked(state: &AppState, body: AdvanceBody) -> std::result::Result<AdvanceResult, ApiError> {
    let strategy: Strategy = match &body.strategy {
        Some(s) => s.parse()?,
        None => Strategy::Smbo,
    };
    let mut store = state.lock();
    let n = store.latest();
    let it = store.iteration(n)?;
    if it.ratings.rating_count() == 0 {
        return Err(ApiError::conflict(format!("iteration {n} has no ratings to fit")));
    }
    let opts = AdvanceOptions {
        strategy,
        budget: body.budget.unwrap_or(optimize::DEFAULT_BUDGET),
        seed: body.seed.unwrap_or(state.seed),
        grid_step: body.grid_step.unwrap_or(optimize::DEFAULT_GRID_STEP),
        init_points: body.init_points.unwrap_or(optimize::DEFAULT_INIT_POINTS),
        pool_size: state.pool_size,
        reference_rater: body.reference_rater,
        agreement: state.settings,
    };
    let scored = store.scored_under(it.sample.weights);
    let out = survey::advance(&scored, &it.sample, &it.ratings, &opts)?;

    let dir = store.dir.clone();
    write(&trace_path(&dir, n), &out.trace.to_text())?;
    write(&sample_path(&dir, n + 1), &out.next_sample.to_json()?)?;
    let next = Iteration::open(&dir, out.next_sample)?;
    store.iterations.insert(n + 1, next);
    Ok(AdvanceResult {
        iteration: n + 1,
        previous_iteration: n,
        reference_rater: out.reference_rater,
        strategy,
        evaluations: out.trace.evaluations.len(),
        previous_weights: out.previous_weights,
        previous_objective: out.previous_value,
        weights: out.weights,
        objective: out.value,
    })
}

async fn post_advance(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<AdvanceResult> {
    let body: AdvanceBody = if body.is_empty() {
        AdvanceBody::default()
    } else {
        parse_body(&body)?
    };
    let result = tokio::task::spawn_blocking(move || advance_locked(&state, body))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(result))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/iterations", get(list_iterations))
        .route("/api/survey/{iteration}", get(get_survey))
        .route("/api/ratings", post(post_rating))
        .route("/api/report/{iteration}", get(get_report))
        .route("/api/advance", post(post_advance))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, port: u16) -> Result<()> {
    let addr = std::net::SocketAddr::from(([127, 0, 0, 1], port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(format!("bind {addr}"), e))?;
    log::info!("listening on http://{addr}");
    axum::serve(listener, router(state))
        .await
        .map_err(|e| Error::io("http server", e))
}
