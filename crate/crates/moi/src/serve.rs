//! Read-only HTTP API over a run directory, plus what-if attenuation.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use moi_core::community::Partition;
use moi_core::interventions::{whatif, EvalMetric, WhatIfContext, WhatIfOutcome};
use moi_core::synthetic::linear_shap;
use moi_core::Matrix;
use serde::Deserialize;

use crate::artifacts::json_bytes;
use crate::config::Config;
use crate::error::{MoiError, Result};
use crate::formats::{read_bytes, read_labels, read_moiws, read_table};
use crate::model::StoredModel;
use crate::report::{graph_payload, ModulesFile};
use crate::run::{CONSENSUS, DATA, GRAPH, LABELS, MODEL, MODULES, REPORT, STABILITY};

struct WhatIfData {
    model: StoredModel,
    x: Matrix,
    y: Option<Vec<f64>>,
    group: Vec<String>,
    partition: Partition,
    metric: EvalMetric,
    threshold: f64,
}

pub struct ServeState {
    report: Vec<u8>,
    graph: Vec<u8>,
    consensus: Option<Vec<u8>>,
    stability: Option<Vec<u8>>,
    whatif: std::result::Result<WhatIfData, String>,
}

fn optional(path: &Path) -> Result<Option<Vec<u8>>> {
    if path.exists() {
        read_bytes(path).map(Some)
    } else {
        Ok(None)
    }
}

impl ServeState {
    pub fn load(dir: &Path) -> Result<Self> {
        let report = read_bytes(&dir.join(REPORT))?;
        let modules_path = dir.join(MODULES);
        let modules: ModulesFile =
            serde_json::from_slice(&read_bytes(&modules_path)?).map_err(|e| MoiError::format(&modules_path, e.to_string()))?;
        let partition = modules.partition()?;
        let g = read_moiws(&dir.join(GRAPH))?;
        let graph = json_bytes(&graph_payload(&g, &modules.feature_names, &partition)?)?;
        let cfg_path = dir.join(crate::artifacts::CONFIG_SNAPSHOT);
        let cfg = if cfg_path.exists() { Config::load(&cfg_path)? } else { Config::default() };
        let whatif = Self::load_whatif(dir, &cfg, partition)?;
        if let Err(reason) = &whatif {
            log::info!("whatif disabled: {reason}");
        }
        Ok(Self {
            report,
            graph,
            consensus: optional(&dir.join(CONSENSUS))?,
            stability: optional(&dir.join(STABILITY))?,
            whatif,
        })
    }

    fn load_whatif(dir: &Path, cfg: &Config, partition: Partition) -> Result<std::result::Result<WhatIfData, String>> {
        let (model_path, data_path, labels_path) = (dir.join(MODEL), dir.join(DATA), dir.join(LABELS));
        if !model_path.exists() {
            return Ok(Err("no stored model: whatif needs a built-in model (ridge or tree ensemble) saved with the run".into()));
        }
        if !data_path.exists() {
            return Ok(Err("no stored dataset: whatif needs X.csv saved with the run".into()));
        }
        if !labels_path.exists() {
            return Ok(Err("no stored label table: whatif needs group labels saved with the run".into()));
        }
        let model = StoredModel::load(&model_path)?;
        let data = read_table(&data_path)?;
        if data.values.cols() != partition.d() {
            return Err(MoiError::Data(format!("X.csv has {} columns, modules cover {}", data.values.cols(), partition.d())));
        }
        let table = read_labels(&labels_path)?;
        let ids: Vec<String> = data.ids.clone().unwrap_or_else(|| (0..data.values.rows()).map(|i| i.to_string()).collect());
        let aligned = table.align(&ids)?;
        let metric = if cfg.ablation.metric.needs_labels() && aligned.y.is_none() {
            EvalMetric::MeanPrediction
        } else {
            cfg.ablation.metric
        };
        Ok(Ok(WhatIfData {
            model,
            x: data.values,
            y: aligned.y,
            group: aligned.group,
            partition,
            metric,
            threshold: cfg.fairness.decision_threshold,
        }))
    }

    /// Runs a what-if query; `Ok(Err(reason))` when the run has no model or data.
    pub fn whatif(&self, module_id: usize, delta: f64) -> Result<std::result::Result<WhatIfOutcome, String>> {
        let data = match &self.whatif {
            Ok(d) => d,
            Err(reason) => return Ok(Err(reason.clone())),
        };
        if !(0.0..=1.0).contains(&delta) {
            return Err(MoiError::Usage(format!("delta must lie in [0, 1], found {delta}")));
        }
        let attribute = |x: &Matrix| -> moi_core::Result<Matrix> {
            match &data.model {
                StoredModel::Ridge(m) => linear_shap(m, x, &data.x),
                StoredModel::TreeEnsemble(_) => unreachable!("attribution only wired for ridge"),
            }
        };
        let ctx = WhatIfContext {
            model: &data.model,
            x: &data.x,
            y: data.y.as_deref(),
            group: &data.group,
            partition: &data.partition,
            metric: data.metric,
            decision_threshold: data.threshold,
            attribute: matches!(data.model, StoredModel::Ridge(_)).then_some(&attribute as _),
        };
        whatif(&ctx, module_id, delta).map(Ok).map_err(|e| MoiError::Usage(e.to_string()))
    }
}

fn json(bytes: &[u8]) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes.to_vec()).into_response()
}

fn error(status: StatusCode, message: &str) -> Response {
    let body = serde_json::json!({ "error": message });
    (status, [(header::CONTENT_TYPE, "application/json")], body.to_string()).into_response()
}

async fn report(State(s): State<Arc<ServeState>>) -> Response {
    json(&s.report)
}

async fn graph(State(s): State<Arc<ServeState>>) -> Response {
    json(&s.graph)
}

async fn consensus(State(s): State<Arc<ServeState>>) -> Response {
    match &s.consensus {
        Some(b) => json(b),
        None => error(StatusCode::NOT_FOUND, "run has no consensus matrix (stability was not computed)"),
    }
}

async fn stability(State(s): State<Arc<ServeState>>) -> Response {
    match &s.stability {
        Some(b) => json(b),
        None => error(StatusCode::NOT_FOUND, "run has no stability report"),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    pub module_id: usize,
    pub delta: f64,
}

async fn whatif_handler(State(s): State<Arc<ServeState>>, Json(req): Json<WhatIfRequest>) -> Response {
    log::info!("POST /api/whatif module={} delta={}", req.module_id, req.delta);
    let out = tokio::task::spawn_blocking(move || s.whatif(req.module_id, req.delta)).await;
    match out {
        Ok(Ok(Ok(outcome))) => match json_bytes(&outcome) {
            Ok(b) => json(&b),
            Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string()),
        },
        Ok(Ok(Err(reason))) => error(StatusCode::CONFLICT, &reason),
        Ok(Err(e)) => error(StatusCode::BAD_REQUEST, &e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string()),
    }
}

pub fn router(state: Arc<ServeState>) -> Router {
    Router::new()
        .route("/api/report", get(report))
        .route("/api/graph", get(graph))
        .route("/api/consensus", get(consensus))
        .route("/api/stability", get(stability))
        .route("/api/whatif", post(whatif_handler))
        .with_state(state)
}

/// Serves `dir` on `addr` until the process exits.
pub fn serve(dir: &Path, addr: SocketAddr) -> Result<()> {
    let listener = std::net::TcpListener::bind(addr).map_err(|e| MoiError::Usage(format!("bind {addr}: {e}")))?;
    serve_listener(dir, listener)
}

/// Serves `dir` on an already bound listener.
pub fn serve_listener(dir: &Path, listener: std::net::TcpListener) -> Result<()> {
    let state = Arc::new(ServeState::load(dir)?);
    listener.set_nonblocking(true).map_err(|e| MoiError::io(dir, e))?;
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| MoiError::io(dir, e))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener).map_err(|e| MoiError::io(dir, e))?;
        if let Ok(addr) = listener.local_addr() {
            log::info!("serving {} on {}", dir.display(), addr);
        }
        axum::serve(listener, router(state)).await.map_err(|e| MoiError::Data(e.to_string()))
    })
}
