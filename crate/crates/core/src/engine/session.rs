use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::proposal::propose_from_points;
use super::refill::draw_refill;
use super::selection::{mean_std, select_scores};
use super::{ClusterProposal, EasinessConfig, EngineConfig, Oracle, OracleAnswer, SelectionReport};
use crate::dataset::{concat_scene_features, Dataset, DatasetSplit};
use crate::numerics::{pca_fit, pca_transform, PcaModel, PcaStatus};
use crate::svm::{predict_binary, predict_one_class, train_one_class, BinarySvmModel, KernelParams};
use crate::{Error, Result, NO_OBJECT};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Running,
    AwaitingLabel,
    Finished,
}

/// Seed and stream position of the session's ChaCha8 generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: u128,
}

impl RngState {
    fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// What the false-object filter did to the initial pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub sigma: f64,
    pub c: f64,
    pub n_input: usize,
    pub n_kept: usize,
    pub removed_ids: Vec<String>,
}

/// An iteration stopped at the labeling point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingIteration {
    pub proposal_id: String,
    pub selection: SelectionReport,
    pub refill_ids: Vec<String>,
    pub proposal: ClusterProposal,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRecord {
    pub attempted: bool,
    pub sigma: Option<f64>,
    /// Remaining easy samples offered to the one-class model.
    pub n_candidates: usize,
    pub expanded_ids: Vec<String>,
    pub note: Option<String>,
}

/// One completed iteration, as written to the history log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub iteration: usize,
    pub proposal_id: String,
    pub selection: SelectionReport,
    pub refill_ids: Vec<String>,
    pub proposal: ClusterProposal,
    pub answer: OracleAnswer,
    pub labeled_ids: Vec<String>,
    pub expansion: ExpansionRecord,
    pub pool_size: usize,
    pub n_discovered: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Everything needed to continue a session, given the dataset it runs on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoverySessionState {
    pub config: EngineConfig,
    /// Easiness weights with `omega2` resolved.
    pub easiness: EasinessConfig,
    /// Objectness spread of the pool at session start.
    pub sigma0: f64,
    /// The split's unlabeled pool, before filtering; the evaluation universe.
    pub initial_pool: Vec<String>,
    pub unlabeled_pool: Vec<String>,
    pub refill_bag: BTreeMap<String, Vec<String>>,
    pub discovered: BTreeMap<String, String>,
    pub t: usize,
    pub history: Vec<IterationRecord>,
    pub rng_state: RngState,
    pub status: SessionStatus,
    pub pending: Option<PendingIteration>,
    pub filter: Option<FilterRecord>,
    pub pca: Option<PcaModel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Versioned checkpoint document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub state: DiscoverySessionState,
}

impl Checkpoint {
    pub fn new(state: DiscoverySessionState) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            state,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(text)?;
        if cp.format_version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint version {}",
                cp.format_version
            )));
        }
        Ok(cp)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Write through a temporary file and rename, so readers never see a
    /// partial checkpoint.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, self.to_json()?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

pub fn write_history_jsonl(records: &[IterationRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_history_jsonl(path: impl AsRef<Path>) -> Result<Vec<IterationRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Working feature rows (after scene concatenation and PCA) by candidate id.
struct FeatureStore {
    index: HashMap<String, usize>,
    rows: Array2<f64>,
    objectness: Vec<f64>,
}

impl FeatureStore {
    fn row_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::invalid(format!("candidate {id} is not part of the session")))
    }

    fn matrix<S: AsRef<str>>(&self, ids: &[S]) -> Result<Array2<f64>> {
        let rows: Vec<usize> = ids.iter().map(|id| self.row_of(id.as_ref())).collect::<Result<_>>()?;
        Ok(self.rows.select(Axis(0), &rows))
    }
}

fn base_rows(dataset: &Dataset, ids: &[String], scene: bool) -> Result<Array2<f64>> {
    if !scene {
        return dataset.feature_matrix(ids);
    }
    let mut rows = Vec::with_capacity(ids.len());
    for id in ids {
        let c = dataset
            .get(id)
            .ok_or_else(|| Error::invalid(format!("unknown candidate {id}")))?;
        let s = c
            .scene_features
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("candidate {id} has no scene_features")))?;
        rows.push(concat_scene_features(c, s)?.features);
    }
    let dim = rows.first().map_or(dataset.dim(), Vec::len);
    Ok(Array2::from_shape_fn((rows.len(), dim), |(i, d)| rows[i][d]))
}

/// A discovery session bound to its dataset.
pub struct DiscoverySession {
    dataset: Arc<Dataset>,
    store: FeatureStore,
    rng: ChaCha8Rng,
    state: DiscoverySessionState,
}

impl DiscoverySession {
    /// Start a session on `split`. When the configuration enables the
    /// filter, `filter` must be given; it is applied once to the pool.
    pub fn new(
        dataset: Arc<Dataset>,
        split: &DatasetSplit,
        config: EngineConfig,
        filter: Option<&BinarySvmModel>,
    ) -> Result<Self> {
        config.validate()?;
        split.check(&dataset)?;
        let mut notes = Vec::new();

        let mut refill_bag: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for id in &split.refill_bag_ids {
            let cls = dataset
                .get(id)
                .and_then(|c| c.gt_class.clone())
                .ok_or_else(|| Error::invalid(format!("refill candidate {id} is unannotated")))?;
            if cls == NO_OBJECT {
                return Err(Error::invalid(format!("refill candidate {id} is labeled {NO_OBJECT}")));
            }
            refill_bag.entry(cls).or_default().push(id.clone());
        }
        let bag_ids: Vec<String> = split.refill_bag_ids.clone();
        let initial_pool = split.unlabeled_pool_ids.clone();
        let mut all_ids = bag_ids.clone();
        all_ids.extend(initial_pool.iter().cloned());
        let base = base_rows(&dataset, &all_ids, config.use_scene_features)?;
        let n_bag = bag_ids.len();

        let mut pool = initial_pool.clone();
        let mut filter_record = None;
        if config.use_filter {
            let model = filter.ok_or_else(|| Error::invalid("filter enabled but no filter model given"))?;
            if model.dim != base.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: base.ncols(),
                    got: model.dim,
                });
            }
            let pool_rows = base.slice(ndarray::s![n_bag.., ..]);
            let (labels, _) = if pool_rows.nrows() > 0 {
                predict_binary(model, pool_rows)?
            } else {
                (Vec::new(), Vec::new())
            };
            let mut kept = Vec::new();
            let mut removed = Vec::new();
            for (id, l) in initial_pool.iter().zip(labels) {
                if l > 0 {
                    kept.push(id.clone());
                } else {
                    removed.push(id.clone());
                }
            }
            filter_record = Some(FilterRecord {
                sigma: model.kernel.sigma,
                c: model.c,
                n_input: initial_pool.len(),
                n_kept: kept.len(),
                removed_ids: removed,
            });
            pool = kept;
        }

        let mut pca = None;
        if config.use_pca {
            let mut fit_ids: Vec<usize> = (0..n_bag).collect();
            let pool_set: HashSet<&String> = pool.iter().collect();
            fit_ids.extend(
                initial_pool
                    .iter()
                    .enumerate()
                    .filter(|(_, id)| pool_set.contains(id))
                    .map(|(i, _)| n_bag + i),
            );
            if fit_ids.len() < 2 {
                notes.push("PCA skipped: fewer than 2 points".to_string());
            } else {
                let model = pca_fit(base.select(Axis(0), &fit_ids).view(), config.pca_target())?;
                if model.status == PcaStatus::ZeroVariance {
                    notes.push("PCA skipped: features have zero variance".to_string());
                } else {
                    pca = Some(model);
                }
            }
        }

        let pool_scores: Vec<f64> = pool
            .iter()
            .map(|id| dataset.get(id).map_or(0.0, |c| c.objectness))
            .collect();
        let sigma0 = if pool_scores.is_empty() {
            0.0
        } else {
            mean_std(&pool_scores).1
        };
        let easiness = EasinessConfig {
            omega1: config.omega1,
            omega2: config.omega2.unwrap_or(0.05 * sigma0),
        };

        let state = DiscoverySessionState {
            rng_state: RngState {
                seed: config.seed,
                word_pos: 0,
            },
            config,
            easiness,
            sigma0,
            initial_pool,
            unlabeled_pool: pool,
            refill_bag,
            discovered: BTreeMap::new(),
            t: 0,
            history: Vec::new(),
            status: SessionStatus::Running,
            pending: None,
            filter: filter_record,
            pca,
            notes,
        };
        Self::resume(dataset, state)
    }

    /// Rebuild a session from a saved state on the same dataset.
    pub fn resume(dataset: Arc<Dataset>, state: DiscoverySessionState) -> Result<Self> {
        let mut ids: Vec<String> = state.refill_bag.values().flatten().cloned().collect();
        let mut seen: HashSet<String> = ids.iter().cloned().collect();
        for id in &state.initial_pool {
            if seen.insert(id.clone()) {
                ids.push(id.clone());
            }
        }
        for id in state.discovered.keys() {
            if seen.insert(id.clone()) {
                ids.push(id.clone());
            }
        }
        let base = base_rows(&dataset, &ids, state.config.use_scene_features)?;
        let rows = match &state.pca {
            Some(model) => pca_transform(model, base.view())?,
            None => base,
        };
        let objectness = ids
            .iter()
            .map(|id| dataset.get(id).map_or(0.0, |c| c.objectness))
            .collect();
        let index = ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect();
        Ok(DiscoverySession {
            rng: state.rng_state.restore(),
            dataset,
            store: FeatureStore {
                index,
                rows,
                objectness,
            },
            state,
        })
    }

    pub fn state(&self) -> &DiscoverySessionState {
        &self.state
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn status(&self) -> SessionStatus {
        self.state.status
    }

    pub fn pending(&self) -> Option<&PendingIteration> {
        self.state.pending.as_ref()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.state.clone())
    }

    /// Features the engine clusters on, one row per id.
    pub fn working_features<S: AsRef<str>>(&self, ids: &[S]) -> Result<Array2<f64>> {
        self.store.matrix(ids)
    }

    fn finish(&mut self) {
        self.state.status = SessionStatus::Finished;
        self.state.pending = None;
    }

    /// Run the next iteration up to the labeling point. Returns `None` once
    /// the session is finished.
    pub fn prepare(&mut self) -> Result<Option<&PendingIteration>> {
        match self.state.status {
            SessionStatus::Finished => return Ok(None),
            SessionStatus::AwaitingLabel => {
                return Err(Error::State("session is awaiting a label".into()));
            }
            SessionStatus::Running => {}
        }
        if self.state.t >= self.state.config.max_iterations || self.state.unlabeled_pool.is_empty() {
            self.finish();
            return Ok(None);
        }
        let pool = &self.state.unlabeled_pool;
        let scores: Vec<f64> = pool
            .iter()
            .map(|id| self.store.row_of(id).map(|r| self.store.objectness[r]))
            .collect::<Result<_>>()?;
        let selection = select_scores(pool, &scores, self.state.t + 1, &self.state.easiness)?;
        if selection.m == 0 {
            self.finish();
            return Ok(None);
        }
        let refill_ids = if self.state.config.refill_pct > 0.0 {
            draw_refill(
                &self.state.refill_bag,
                selection.m,
                self.state.config.refill_pct,
                &mut self.rng,
            )
        } else {
            Vec::new()
        };
        self.state.rng_state.word_pos = self.rng.get_word_pos();

        let mut all = selection.selected_ids.clone();
        all.extend(refill_ids.iter().cloned());
        let points = self.store.matrix(&all)?;
        let proposal = propose_from_points(
            &selection.selected_ids,
            &refill_ids,
            points.view(),
            self.state.config.k_clusters,
        )?;
        self.state.pending = Some(PendingIteration {
            proposal_id: format!("p{:04}", self.state.t + 1),
            selection,
            refill_ids,
            proposal,
        });
        self.state.status = SessionStatus::AwaitingLabel;
        Ok(self.state.pending.as_ref())
    }

    /// Apply an answer to the pending proposal and run the expansion.
    pub fn submit(&mut self, proposal_id: &str, answer: OracleAnswer) -> Result<&IterationRecord> {
        if self.state.status != SessionStatus::AwaitingLabel {
            return Err(Error::State("no proposal is awaiting a label".into()));
        }
        let pending = self.state.pending.as_ref().expect("awaiting label implies a pending proposal");
        if pending.proposal_id != proposal_id {
            return Err(Error::StaleProposal(format!(
                "proposal {proposal_id} is not the current proposal {}",
                pending.proposal_id
            )));
        }
        let pending = self.state.pending.take().expect("checked above");
        let members = pending.proposal.cluster_members.clone();
        let pool_set: HashSet<&String> = self.state.unlabeled_pool.iter().collect();
        if let Some(id) = members.iter().find(|id| !pool_set.contains(id)) {
            self.state.pending = Some(pending.clone());
            return Err(Error::StaleProposal(format!("member {id} already left the pool")));
        }

        let mut labeled_ids = Vec::new();
        let mut expansion = ExpansionRecord::default();
        let mut warnings = Vec::new();
        if pending.proposal.k_clamped {
            warnings.push(format!(
                "k clamped from {} to {}",
                self.state.config.k_clusters, pending.proposal.k
            ));
        }
        if let Some(label) = answer.label() {
            self.assign(&members, label);
            labeled_ids = members.clone();
            if label == NO_OBJECT {
                expansion.note = Some("no expansion for no_object".into());
            } else if !self.state.config.expansion {
                expansion.note = Some("expansion disabled".into());
            } else {
                expansion = self.expand(&members, &pending.selection.selected_ids, label);
            }
        } else {
            expansion.note = Some("skipped".into());
        }

        self.state.t += 1;
        let record = IterationRecord {
            iteration: self.state.t,
            proposal_id: pending.proposal_id,
            selection: pending.selection,
            refill_ids: pending.refill_ids,
            proposal: pending.proposal,
            answer,
            labeled_ids,
            expansion,
            pool_size: self.state.unlabeled_pool.len(),
            n_discovered: self.state.discovered.len(),
            warnings,
        };
        self.state.history.push(record);
        if self.state.t >= self.state.config.max_iterations || self.state.unlabeled_pool.is_empty() {
            self.state.status = SessionStatus::Finished;
        } else {
            self.state.status = SessionStatus::Running;
        }
        Ok(self.state.history.last().expect("just pushed"))
    }

    /// Label `ids`, take them out of the pool, and add object labels to the bag.
    fn assign(&mut self, ids: &[String], label: &str) {
        let leaving: HashSet<&String> = ids.iter().collect();
        self.state.unlabeled_pool.retain(|id| !leaving.contains(id));
        for id in ids {
            self.state.discovered.insert(id.clone(), label.to_string());
        }
        if label != NO_OBJECT {
            self.state
                .refill_bag
                .entry(label.to_string())
                .or_default()
                .extend(ids.iter().cloned());
        }
    }

    fn expand(&mut self, members: &[String], easy: &[String], label: &str) -> ExpansionRecord {
        let mut rec = ExpansionRecord::default();
        if members.len() < 2 {
            rec.note = Some("fewer than 2 labeled members".into());
            return rec;
        }
        let in_pool: HashSet<&String> = self.state.unlabeled_pool.iter().collect();
        let remaining: Vec<String> = easy.iter().filter(|id| in_pool.contains(id)).cloned().collect();
        rec.n_candidates = remaining.len();
        if remaining.is_empty() {
            rec.note = Some("no remaining easy samples".into());
            return rec;
        }
        let outcome = (|| -> Result<(f64, Vec<String>)> {
            let train = self.store.matrix(members)?;
            let sigma = self
                .state
                .config
                .expansion_sigma
                .or_else(|| self.state.filter.as_ref().map(|f| f.sigma))
                .unwrap_or_else(|| median_pairwise_distance(&train));
            let model = train_one_class(train.view(), self.state.config.nu, KernelParams::new(sigma)?)?;
            let (inside, _) = predict_one_class(&model, self.store.matrix(&remaining)?.view())?;
            let expanded = remaining
                .iter()
                .zip(inside)
                .filter(|(_, i)| *i)
                .map(|(id, _)| id.clone())
                .collect();
            Ok((sigma, expanded))
        })();
        rec.attempted = true;
        match outcome {
            Ok((sigma, expanded)) => {
                rec.sigma = Some(sigma);
                self.assign(&expanded, label);
                rec.expanded_ids = expanded;
            }
            Err(e) => rec.note = Some(format!("expansion failed: {e}")),
        }
        rec
    }

    /// One iteration with `oracle`. Stops at the labeling point when the
    /// oracle defers.
    pub fn step(&mut self, oracle: &mut dyn Oracle) -> Result<SessionStatus> {
        let dataset = Arc::clone(&self.dataset);
        let Some(pending) = self.prepare()? else {
            return Ok(SessionStatus::Finished);
        };
        let id = pending.proposal_id.clone();
        match oracle.answer(&pending.proposal, &dataset)? {
            Some(answer) => {
                self.submit(&id, answer)?;
                Ok(self.state.status)
            }
            None => Ok(SessionStatus::AwaitingLabel),
        }
    }

    /// Iterate until finished, or until the oracle defers.
    pub fn run(&mut self, oracle: &mut dyn Oracle) -> Result<&BTreeMap<String, String>> {
        loop {
            match self.step(oracle)? {
                SessionStatus::Running => continue,
                _ => return Ok(&self.state.discovered),
            }
        }
    }
}

/// Median of the pairwise distances between rows; 1 when all rows coincide.
fn median_pairwise_distance(x: &Array2<f64>) -> f64 {
    let n = x.nrows();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let sq: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d.push(sq.sqrt());
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let m = match d.len() {
        0 => 0.0,
        l if l % 2 == 1 => d[l / 2],
        l => 0.5 * (d[l / 2 - 1] + d[l / 2]),
    };
    if m > 0.0 {
        m
    } else {
        1.0
    }
}
