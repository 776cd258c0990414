use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use objdisc_core::dataset::{make_split, Dataset, DatasetSplit, MatchConfig};
use objdisc_core::engine::{
    Checkpoint, DiscoverySession, EngineConfig, IterationRecord, OracleAnswer, SessionStatus,
};
use objdisc_core::evaluation::{discovery_report, label_report, EvaluationReport, TruthTable};
use objdisc_core::experiment::{filter_training_ids, train_filter, FilterTraining};
use objdisc_core::svm::{BinarySvmModel, ModelFile};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, OwnedMutexGuard, RwLock};

use crate::error::{ApiError, ApiResult};
use crate::views::{proposal_view, AdvanceResponse, LabelRequest, LabelResponse, ProposalView};

const SESSION_FILE: &str = "session.json";
const CHECKPOINT_FILE: &str = "checkpoint.json";
const HISTORY_FILE: &str = "history.jsonl";
const IDEMPOTENCY_FILE: &str = "idempotency.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    pub class_holdout_frac: f64,
    pub refill_frac: f64,
    pub seed: u64,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams {
            class_holdout_frac: 0.5,
            refill_frac: 0.4,
            seed: 0,
        }
    }
}

/// Body of `POST /sessions`. Relative paths resolve against the data directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub candidates: PathBuf,
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
    /// Split file; when absent a split is drawn with `split_params`.
    #[serde(default)]
    pub split: Option<PathBuf>,
    #[serde(default)]
    pub split_params: SplitParams,
    #[serde(default)]
    pub config: EngineConfig,
    /// Pretrained filter model; when absent and the filter is enabled, one is
    /// trained with `filter_training`.
    #[serde(default)]
    pub filter_model: Option<PathBuf>,
    #[serde(default)]
    pub filter_training: FilterTraining,
    #[serde(default)]
    pub match_config: MatchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHandle {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub config: EngineConfig,
    pub status: SessionStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SessionMeta {
    handle: SessionHandle,
    request: CreateSessionRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Replay {
    fingerprint: String,
    body: serde_json::Value,
}

pub(crate) struct Entry {
    meta: SessionMeta,
    session: DiscoverySession,
    truth: Option<Arc<TruthTable>>,
    replays: BTreeMap<String, Replay>,
    dir: PathBuf,
}

struct Inner {
    data_dir: PathBuf,
    crops_dir: PathBuf,
    sessions_dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    datasets: std::sync::Mutex<HashMap<String, Arc<Dataset>>>,
}

/// Shared server state: the session registry and a dataset cache.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn atomic_write(path: &Path, bytes: &[u8]) -> ApiResult<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|e| ApiError::internal(format!("writing {}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> ApiResult<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v).map_err(|e| ApiError::internal(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

impl Entry {
    fn persist(&mut self) -> ApiResult<()> {
        self.meta.handle.status = self.session.status();
        let cp = self.session.checkpoint();
        atomic_write(&self.dir.join(CHECKPOINT_FILE), cp.to_json()?.as_bytes())?;
        let mut history = Vec::new();
        for r in &cp.state.history {
            serde_json::to_writer(&mut history, r).map_err(|e| ApiError::internal(e.to_string()))?;
            history.push(b'\n');
        }
        atomic_write(&self.dir.join(HISTORY_FILE), &history)?;
        atomic_write(&self.dir.join(IDEMPOTENCY_FILE), &to_json(&self.replays)?)?;
        atomic_write(&self.dir.join(SESSION_FILE), &to_json(&self.meta)?)
    }

    /// Stored response for `key`, or an error if the key was used for a
    /// different request.
    fn replay(&self, key: &Option<String>, fingerprint: &str) -> ApiResult<Option<serde_json::Value>> {
        let Some(key) = key else { return Ok(None) };
        match self.replays.get(key) {
            Some(r) if r.fingerprint == fingerprint => Ok(Some(r.body.clone())),
            Some(_) => Err(ApiError::new(
                axum::http::StatusCode::UNPROCESSABLE_ENTITY,
                "idempotency_key_reused",
                format!("idempotency key {key} was used for a different request"),
            )),
            None => Ok(None),
        }
    }

    fn remember(&mut self, key: Option<String>, fingerprint: String, body: &serde_json::Value) {
        if let Some(key) = key {
            self.replays.insert(
                key,
                Replay {
                    fingerprint,
                    body: body.clone(),
                },
            );
        }
    }

    pub(crate) fn handle(&self) -> &SessionHandle {
        &self.meta.handle
    }

    pub(crate) fn checkpoint_json(&self) -> ApiResult<String> {
        Ok(self.session.checkpoint().to_json()?)
    }

    pub(crate) fn current(&self, crops_dir: &Path) -> ApiResult<ProposalView> {
        let pending = self.session.pending().ok_or_else(|| {
            ApiError::conflict("no_pending_proposal", "session is not awaiting a label")
        })?;
        proposal_view(&self.session, pending, crops_dir)
    }

    pub(crate) fn advance(&mut self, key: Option<String>, crops_dir: &Path) -> ApiResult<serde_json::Value> {
        let fingerprint = "advance".to_string();
        if let Some(body) = self.replay(&key, &fingerprint)? {
            return Ok(body);
        }
        let response = match self.session.prepare()? {
            Some(_) => AdvanceResponse::AwaitingLabel {
                proposal: Box::new(self.current(crops_dir)?),
            },
            None => AdvanceResponse::Finished {
                iterations: self.session.state().history.len(),
                n_discovered: self.session.state().discovered.len(),
            },
        };
        let body = serde_json::to_value(&response).map_err(|e| ApiError::internal(e.to_string()))?;
        self.remember(key, fingerprint, &body);
        self.persist()?;
        Ok(body)
    }

    pub(crate) fn label(&mut self, req: LabelRequest, key: Option<String>) -> ApiResult<serde_json::Value> {
        let key = key.or_else(|| req.idempotency_key.clone());
        let fingerprint = format!("label:{}:{}", req.proposal_id, req.label);
        if let Some(body) = self.replay(&key, &fingerprint)? {
            return Ok(body);
        }
        let answer = OracleAnswer::parse(&req.label)
            .map_err(|e| ApiError::bad_request("invalid_label", e.to_string()))?;
        let record: IterationRecord = self.session.submit(&req.proposal_id, answer)?.clone();
        let state = self.session.state();
        let response = LabelResponse {
            status: state.status,
            pool_size: state.unlabeled_pool.len(),
            n_discovered: state.discovered.len(),
            record,
        };
        let body = serde_json::to_value(&response).map_err(|e| ApiError::internal(e.to_string()))?;
        self.remember(key, fingerprint, &body);
        self.persist()?;
        Ok(body)
    }

    pub(crate) fn report(&mut self) -> ApiResult<EvaluationReport> {
        let state = self.session.state();
        let ds = self.session.dataset();
        if !ds.is_annotated() || ds.ground_truth().is_empty() {
            return Ok(label_report(&state.history)?);
        }
        let truth = match &self.truth {
            Some(t) => Arc::clone(t),
            None => {
                let t = Arc::new(TruthTable::from_dataset(ds, &state.initial_pool, &self.meta.request.match_config)?);
                self.truth = Some(Arc::clone(&t));
                t
            }
        };
        Ok(discovery_report(&state.history, &truth)?)
    }
}

impl AppState {
    /// Open the data directory, reloading every stored session.
    pub fn open(data_dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let data_dir = data_dir.into();
        let sessions_dir = data_dir.join("sessions");
        std::fs::create_dir_all(&sessions_dir)?;
        let state = AppState {
            inner: Arc::new(Inner {
                crops_dir: data_dir.join("crops"),
                data_dir,
                sessions_dir,
                sessions: RwLock::new(HashMap::new()),
                datasets: std::sync::Mutex::new(HashMap::new()),
            }),
        };
        let mut loaded = HashMap::new();
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(&state.inner.sessions_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            match state.load_entry(&dir) {
                Ok(entry) => {
                    let id = entry.meta.handle.session_id.clone();
                    loaded.insert(id, Arc::new(Mutex::new(entry)));
                }
                Err(e) => tracing::warn!("skipping session {}: {e}", dir.display()),
            }
        }
        tracing::info!("loaded {} sessions", loaded.len());
        *state.inner.sessions.try_write().expect("fresh lock") = loaded;
        Ok(state)
    }

    pub fn data_dir(&self) -> &Path {
        &self.inner.data_dir
    }

    pub fn crops_dir(&self) -> &Path {
        &self.inner.crops_dir
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.inner.data_dir.join(p)
        }
    }

    fn dataset(&self, req: &CreateSessionRequest) -> ApiResult<Arc<Dataset>> {
        let cands = self.resolve(&req.candidates);
        let gt = req.ground_truth.as_ref().map(|p| self.resolve(p));
        for p in std::iter::once(&cands).chain(gt.as_ref()) {
            if !p.is_file() {
                return Err(ApiError::not_found(
                    "dataset_not_found",
                    format!("{} does not exist", p.display()),
                ));
            }
        }
        let key = serde_json::to_string(&(&cands, &gt, &req.match_config))
            .map_err(|e| ApiError::internal(e.to_string()))?;
        if let Some(ds) = self.inner.datasets.lock().expect("dataset cache").get(&key) {
            return Ok(Arc::clone(ds));
        }
        let ds = Arc::new(Dataset::load(&cands, gt.as_deref(), &req.match_config)?);
        self.inner
            .datasets
            .lock()
            .expect("dataset cache")
            .insert(key, Arc::clone(&ds));
        Ok(ds)
    }

    fn load_entry(&self, dir: &Path) -> Result<Entry, String> {
        let meta: SessionMeta = read_json(&dir.join(SESSION_FILE))?;
        let cp = Checkpoint::read(dir.join(CHECKPOINT_FILE)).map_err(|e| e.to_string())?;
        let replays = if dir.join(IDEMPOTENCY_FILE).is_file() {
            read_json(&dir.join(IDEMPOTENCY_FILE))?
        } else {
            BTreeMap::new()
        };
        let ds = self.dataset(&meta.request).map_err(|e| e.to_string())?;
        let session = DiscoverySession::resume(ds, cp.state).map_err(|e| e.to_string())?;
        Ok(Entry {
            meta,
            session,
            truth: None,
            replays,
            dir: dir.to_path_buf(),
        })
    }

    fn filter_model(
        &self,
        req: &CreateSessionRequest,
        ds: &Dataset,
        split: &DatasetSplit,
    ) -> ApiResult<Option<BinarySvmModel>> {
        if let Some(path) = &req.filter_model {
            let path = self.resolve(path);
            if !path.is_file() {
                return Err(ApiError::not_found(
                    "model_not_found",
                    format!("{} does not exist", path.display()),
                ));
            }
            let file = ModelFile::read(&path)?;
            let model = file
                .binary()
                .cloned()
                .ok_or_else(|| ApiError::bad_request("invalid_model", "filter model must be a binary SVM"))?;
            let expected = if req.config.use_scene_features {
                ds.candidates()
                    .first()
                    .map_or(ds.dim(), |c| ds.dim() + c.scene_features.as_ref().map_or(0, Vec::len))
            } else {
                ds.dim()
            };
            if model.dim != expected {
                return Err(ApiError::bad_request(
                    "dimension_mismatch",
                    format!("filter model expects {} features, dataset has {expected}", model.dim),
                ));
            }
            return Ok(Some(model));
        }
        if !req.config.use_filter {
            return Ok(None);
        }
        if !ds.is_annotated() {
            return Err(ApiError::bad_request(
                "invalid_config",
                "the filter needs a model file or an annotated dataset to train on",
            ));
        }
        let ids = filter_training_ids(ds, split, 1.0, req.config.seed);
        let (model, _) = train_filter(ds, &ids, req.config.use_scene_features, &req.filter_training)?;
        Ok(Some(model))
    }

    fn prepare_entry(&self, req: CreateSessionRequest) -> ApiResult<(SessionHandle, Entry)> {
        req.config
            .validate()
            .map_err(|e| ApiError::bad_request("invalid_config", e.to_string()))?;
        let ds = self.dataset(&req)?;
        let split = match &req.split {
            Some(p) => {
                let p = self.resolve(p);
                if !p.is_file() {
                    return Err(ApiError::not_found(
                        "split_not_found",
                        format!("{} does not exist", p.display()),
                    ));
                }
                DatasetSplit::read(&p)?
            }
            None => make_split(
                ds.candidates(),
                req.split_params.class_holdout_frac,
                req.split_params.refill_frac,
                req.split_params.seed,
            )?,
        };
        let filter = self.filter_model(&req, &ds, &split)?;
        let session = DiscoverySession::new(Arc::clone(&ds), &split, req.config.clone(), filter.as_ref())?;

        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let dir = self.inner.sessions_dir.join(&session_id);
        std::fs::create_dir_all(&dir).map_err(|e| ApiError::internal(e.to_string()))?;
        let handle = SessionHandle {
            session_id: session_id.clone(),
            created_at: Utc::now(),
            config: req.config.clone(),
            status: session.status(),
        };
        let mut entry = Entry {
            meta: SessionMeta {
                handle: handle.clone(),
                request: req,
            },
            session,
            truth: None,
            replays: BTreeMap::new(),
            dir,
        };
        entry.persist()?;
        Ok((handle, entry))
    }

    pub(crate) async fn create(&self, req: CreateSessionRequest) -> ApiResult<SessionHandle> {
        let this = self.clone();
        let (handle, entry) = tokio::task::spawn_blocking(move || this.prepare_entry(req))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??;
        self.inner
            .sessions
            .write()
            .await
            .insert(handle.session_id.clone(), Arc::new(Mutex::new(entry)));
        Ok(handle)
    }

    pub(crate) async fn entry(&self, id: &str) -> ApiResult<OwnedMutexGuard<Entry>> {
        let e = self
            .inner
            .sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session_not_found", format!("no session {id}")))?;
        Ok(e.lock_owned().await)
    }

    pub(crate) async fn handles(&self) -> Vec<SessionHandle> {
        let entries: Vec<Arc<Mutex<Entry>>> = self.inner.sessions.read().await.values().cloned().collect();
        let mut out = Vec::with_capacity(entries.len());
        for e in entries {
            out.push(e.lock().await.handle().clone());
        }
        out.sort_by(|a, b| (a.created_at, &a.session_id).cmp(&(b.created_at, &b.session_id)));
        out
    }
}
