//! Seeded batch runs of the discovery loop with a simulated oracle.
//!
//! One master seed fans out into named sub-seeds per run (split, session,
//! folds), so every run is reproducible on its own and the whole batch is a
//! pure function of the dataset and [`ExperimentConfig`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{make_split, Dataset, DatasetSplit};
use crate::engine::{DiscoverySession, DiscoverySessionState, EngineConfig, MajorityVoteOracle};
use crate::evaluation::{aggregate_reports, discovery_report, AggregateReport, EvaluationReport, TruthTable};
use crate::svm::{grid_search_cv, train_binary_svm, BinarySvmModel, GridSearchConfig, GridSearchResult, KernelParams};
use crate::{Error, Result, NO_OBJECT};

/// Feature and pipeline combinations compared in the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setting {
    /// Object features, no refill, no filter.
    S2,
    /// Refill.
    S3,
    /// Refill, object features concatenated with scene features.
    S4,
    /// Refill and the false-object filter.
    S5,
    /// Refill, filter and PCA.
    S6,
}

impl Setting {
    pub const ALL: [Setting; 5] = [Setting::S2, Setting::S3, Setting::S4, Setting::S5, Setting::S6];

    /// Overwrite the setting-controlled flags of `base`. Refill keeps the
    /// base percentage unless the setting disables it.
    pub fn apply(self, base: &EngineConfig) -> EngineConfig {
        let mut cfg = base.clone();
        cfg.use_scene_features = self == Setting::S4;
        cfg.use_filter = matches!(self, Setting::S5 | Setting::S6);
        cfg.use_pca = self == Setting::S6;
        if self == Setting::S2 {
            cfg.refill_pct = 0.0;
        }
        cfg
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S2" => Ok(Setting::S2),
            "S3" => Ok(Setting::S3),
            "S4" => Ok(Setting::S4),
            "S5" => Ok(Setting::S5),
            "S6" => Ok(Setting::S6),
            other => Err(Error::invalid(format!("unknown setting {other}; expected S2..S6"))),
        }
    }
}

/// How the filter model of a run is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FilterTraining {
    /// Train with fixed parameters.
    Fixed { sigma: f64, c: f64 },
    /// Pick parameters by nested cross-validation. The fold seed is replaced
    /// by the run's sub-seed.
    GridSearch(GridSearchConfig),
    /// Use a pretrained model for every run.
    Pretrained(BinarySvmModel),
}

impl Default for FilterTraining {
    fn default() -> Self {
        FilterTraining::Fixed { sigma: 100.0, c: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub setting: Setting,
    pub engine: EngineConfig,
    pub class_holdout_frac: f64,
    pub refill_frac: f64,
    pub runs: usize,
    pub seed: u64,
    pub filter: FilterTraining,
    /// Ceiling on the negatives sampled for filter training, as a multiple of
    /// the positives.
    pub filter_negative_ratio: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            setting: Setting::S3,
            engine: EngineConfig::default(),
            class_holdout_frac: 0.5,
            refill_frac: 0.4,
            runs: 5,
            seed: 0,
            filter: FilterTraining::default(),
            filter_negative_ratio: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::invalid("runs must be at least 1"));
        }
        if !(self.filter_negative_ratio > 0.0 && self.filter_negative_ratio.is_finite()) {
            return Err(Error::invalid("filter_negative_ratio must be positive"));
        }
        self.setting.apply(&self.engine).validate()
    }
}

/// Sub-seeds of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub split: u64,
    pub session: u64,
    pub folds: u64,
}

impl RunSeeds {
    /// Derived from one ChaCha8 stream per run index, so runs never share
    /// seeds and adding runs leaves earlier ones unchanged.
    pub fn derive(master: u64, run: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master);
        rng.set_stream(run as u64);
        RunSeeds {
            split: rng.next_u64(),
            session: rng.next_u64(),
            folds: rng.next_u64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterTrainingRecord {
    pub n_positive: usize,
    pub n_negative: usize,
    pub sigma: f64,
    pub c: f64,
    pub grid: Option<GridSearchResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub run_id: String,
    pub seeds: RunSeeds,
    pub split: DatasetSplit,
    pub filter_training: Option<FilterTrainingRecord>,
    /// `no_object` share of the pool before and after filtering.
    pub pool_no_fraction_initial: f64,
    pub pool_no_fraction_filtered: f64,
    pub state: DiscoverySessionState,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub runs: Vec<RunOutput>,
    pub aggregate: AggregateReport,
}

/// Training rows and `+1` object / `-1` no-object labels for `ids`.
pub fn filter_training_set<S: AsRef<str>>(
    dataset: &Dataset,
    ids: &[S],
    scene: bool,
) -> Result<(Array2<f64>, Vec<i8>)> {
    let mut y = Vec::with_capacity(ids.len());
    for id in ids {
        let c = dataset
            .get(id.as_ref())
            .ok_or_else(|| Error::invalid(format!("unknown candidate {}", id.as_ref())))?;
        let cls = c
            .gt_class
            .as_deref()
            .ok_or_else(|| Error::invalid(format!("candidate {} is not annotated", c.id)))?;
        y.push(if cls == NO_OBJECT { -1 } else { 1 });
    }
    let x = if scene {
        dataset.with_scene_features()?.feature_matrix(ids)?
    } else {
        dataset.feature_matrix(ids)?
    };
    Ok((x, y))
}

/// Train the object / no-object filter on `ids`, either with fixed
/// parameters or with the cross-validated winner refit on all of `ids`.
pub fn train_filter<S: AsRef<str>>(
    dataset: &Dataset,
    ids: &[S],
    scene: bool,
    training: &FilterTraining,
) -> Result<(BinarySvmModel, FilterTrainingRecord)> {
    let (x, y) = filter_training_set(dataset, ids, scene)?;
    let n_positive = y.iter().filter(|&&l| l > 0).count();
    let n_negative = y.len() - n_positive;
    let (sigma, c, grid, tol) = match training {
        FilterTraining::Fixed { sigma, c } => (*sigma, *c, None, crate::svm::DEFAULT_TOL),
        FilterTraining::GridSearch(cfg) => {
            let res = grid_search_cv(x.view(), &y, cfg)?;
            (res.best_sigma, res.best_c, Some(res), cfg.tol)
        }
        FilterTraining::Pretrained(model) => {
            let record = FilterTrainingRecord {
                n_positive: 0,
                n_negative: 0,
                sigma: model.kernel.sigma,
                c: model.c,
                grid: None,
            };
            return Ok((model.clone(), record));
        }
    };
    let model = train_binary_svm(x.view(), &y, c, KernelParams::new(sigma)?, tol)?;
    Ok((
        model,
        FilterTrainingRecord {
            n_positive,
            n_negative,
            sigma,
            c,
            grid,
        },
    ))
}

fn no_fraction(dataset: &Dataset, ids: &[String]) -> f64 {
    if ids.is_empty() {
        return 0.0;
    }
    let no = ids
        .iter()
        .filter(|id| dataset.get(id).is_some_and(|c| c.is_no_object()))
        .count();
    no as f64 / ids.len() as f64
}

/// The filter sees the refill bag as positives and a seeded sample of the
/// pool's `no_object` candidates as negatives.
pub fn filter_training_ids(dataset: &Dataset, split: &DatasetSplit, ratio: f64, seed: u64) -> Vec<String> {
    let negatives: Vec<&String> = split
        .unlabeled_pool_ids
        .iter()
        .filter(|id| dataset.get(id).is_some_and(|c| c.is_no_object()))
        .collect();
    let want = ((split.refill_bag_ids.len() as f64 * ratio).round() as usize).min(negatives.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, negatives.len(), want).into_vec();
    picked.sort_unstable();
    let mut ids = split.refill_bag_ids.clone();
    ids.extend(picked.into_iter().map(|i| negatives[i].clone()));
    ids
}

/// One seeded run: split, optional filter training, session with the
/// majority-vote oracle, report.
pub fn run_once(dataset: &Arc<Dataset>, cfg: &ExperimentConfig, run: usize) -> Result<RunOutput> {
    let seeds = RunSeeds::derive(cfg.seed, run);
    let mut engine = cfg.setting.apply(&cfg.engine);
    engine.seed = seeds.session;
    let split = make_split(dataset.candidates(), cfg.class_holdout_frac, cfg.refill_frac, seeds.split)?;

    let mut filter = None;
    if engine.use_filter {
        let training = match &cfg.filter {
            FilterTraining::GridSearch(g) => FilterTraining::GridSearch(GridSearchConfig {
                seed: seeds.folds,
                ..g.clone()
            }),
            other => other.clone(),
        };
        let ids = filter_training_ids(dataset, &split, cfg.filter_negative_ratio, seeds.folds);
        filter = Some(train_filter(dataset, &ids, engine.use_scene_features, &training)?);
    }

    let mut session = DiscoverySession::new(
        Arc::clone(dataset),
        &split,
        engine,
        filter.as_ref().map(|(m, _)| m),
    )?;
    let pool_no_fraction_filtered = no_fraction(dataset, &session.state().unlabeled_pool);
    session.run(&mut MajorityVoteOracle)?;
    let state = session.state().clone();
    let truth = TruthTable::from_dataset(dataset, &state.initial_pool, &Default::default())?;
    let report = discovery_report(&state.history, &truth)?;
    Ok(RunOutput {
        run_id: format!("run-{run:03}"),
        seeds,
        pool_no_fraction_initial: no_fraction(dataset, &state.initial_pool),
        pool_no_fraction_filtered,
        split,
        filter_training: filter.map(|(_, r)| r),
        state,
        report,
    })
}

/// All runs of `cfg`, in parallel, reduced in run-id order.
pub fn run_experiment(dataset: &Arc<Dataset>, cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    if !dataset.is_annotated() {
        return Err(Error::invalid("experiments need an annotated dataset"));
    }
    if cfg.setting == Setting::S4 && dataset.candidates().iter().any(|c| c.scene_features.is_none()) {
        return Err(Error::invalid("setting S4 needs scene_features on every candidate"));
    }
    let runs: Vec<RunOutput> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| run_once(dataset, cfg, r))
        .collect::<Result<_>>()?;
    let pairs: Vec<(String, EvaluationReport)> =
        runs.iter().map(|r| (r.run_id.clone(), r.report.clone())).collect();
    let aggregate = aggregate_reports(&pairs)?;
    Ok(ExperimentOutput {
        config: cfg.clone(),
        runs,
        aggregate,
    })
}
