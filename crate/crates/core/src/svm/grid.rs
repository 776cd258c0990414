use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::binary::solve_dual;
use super::{check_finite, KernelParams, SolverStatus, DEFAULT_TOL};
use crate::numerics::pairwise_sq_distances;
use crate::{Error, Result};

pub const DEFAULT_GRID: [f64; 6] = [0.1, 0.5, 3.0, 10.0, 100.0, 1000.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSearchConfig {
    pub sigma_grid: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for GridSearchConfig {
    fn default() -> Self {
        GridSearchConfig {
            sigma_grid: DEFAULT_GRID.to_vec(),
            c_grid: DEFAULT_GRID.to_vec(),
            outer_folds: 5,
            inner_folds: 5,
            seed: 0,
            tol: DEFAULT_TOL,
        }
    }
}

impl GridSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_grid.is_empty() || self.c_grid.is_empty() {
            return Err(Error::invalid("parameter grids must be non-empty"));
        }
        if self
            .sigma_grid
            .iter()
            .chain(&self.c_grid)
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(Error::invalid("grid values must be positive and finite"));
        }
        if self.outer_folds < 2 || self.inner_folds < 2 {
            return Err(Error::invalid("fold counts must be at least 2"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("KKT tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub sigma: f64,
    pub c: f64,
    /// Mean balanced accuracy over the inner folds.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterFold {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub inner_scores: Vec<CellScore>,
    pub best_sigma: f64,
    pub best_c: f64,
    /// Balanced accuracy of the inner winner on this fold's test part.
    pub test_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_sigma: f64,
    pub best_c: f64,
    /// Mean outer test score.
    pub cv_score: f64,
    pub outer: Vec<OuterFold>,
    /// Any training run that stopped at the iteration cap.
    pub hit_iteration_cap: bool,
}

/// Mean of sensitivity (on +1) and specificity (on −1).
pub fn balanced_accuracy(truth: &[i8], pred: &[i8]) -> f64 {
    let mut tp = 0usize;
    let mut pos = 0usize;
    let mut tn = 0usize;
    let mut neg = 0usize;
    for (&t, &p) in truth.iter().zip(pred) {
        if t > 0 {
            pos += 1;
            tp += usize::from(p > 0);
        } else {
            neg += 1;
            tn += usize::from(p <= 0);
        }
    }
    let rate = |hit: usize, total: usize| if total == 0 { 0.0 } else { hit as f64 / total as f64 };
    match (pos, neg) {
        (0, _) => rate(tn, neg),
        (_, 0) => rate(tp, pos),
        _ => 0.5 * (rate(tp, pos) + rate(tn, neg)),
    }
}

/// Split positions `0..y.len()` into `k` folds; each class is shuffled with
/// the seed and dealt round-robin. Every fold receives both classes.
pub fn stratified_folds(y: &[i8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid("fold count must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    for class in [1i8, -1] {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if members.len() < k {
            return Err(Error::FoldInfeasible(format!(
                "class {class:+} has {} samples for {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (pos, idx) in members.into_iter().enumerate() {
            folds[pos % k].push(idx);
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

struct Subproblem<'a> {
    sq: &'a Array2<f64>,
    y: &'a [i8],
    tol: f64,
    capped: bool,
}

impl Subproblem<'_> {
    fn score(&mut self, train: &[usize], test: &[usize], sigma: f64, c: f64) -> f64 {
        let kernel = KernelParams { sigma };
        let yf: Vec<f64> = train.iter().map(|&i| self.y[i] as f64).collect();
        let sq = self.sq;
        let (alpha, bias, status, _) =
            solve_dual(train.len(), |a, b| sq[[train[a], train[b]]], &yf, c, kernel, self.tol);
        self.capped |= status == SolverStatus::MaxIterations;
        let pred: Vec<i8> = test
            .iter()
            .map(|&t| {
                let f: f64 = train
                    .iter()
                    .zip(&alpha)
                    .zip(&yf)
                    .filter(|((_, a), _)| **a > 0.0)
                    .map(|((&i, a), y)| a * y * kernel.from_sq_distance(sq[[i, t]]))
                    .sum::<f64>()
                    + bias;
                if f >= 0.0 {
                    1
                } else {
                    -1
                }
            })
            .collect();
        let truth: Vec<i8> = test.iter().map(|&t| self.y[t]).collect();
        balanced_accuracy(&truth, &pred)
    }
}

fn complement(folds: &[Vec<usize>], skip: usize) -> Vec<usize> {
    let mut out: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(f, _)| *f != skip)
        .flat_map(|(_, v)| v.iter().copied())
        .collect();
    out.sort_unstable();
    out
}

/// Nested stratified cross-validation over a σ-major grid of `(σ, C)`.
///
/// Each outer fold selects the cell with the best mean inner balanced
/// accuracy (first cell wins ties); the returned parameters are the modal
/// selection across outer folds, again first cell on ties.
pub fn grid_search_cv(
    x: ArrayView2<'_, f64>,
    y: &[i8],
    cfg: &GridSearchConfig,
) -> Result<GridSearchResult> {
    cfg.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if y.iter().any(|&l| l != 1 && l != -1) {
        return Err(Error::invalid("binary labels must be +1 or -1"));
    }
    check_finite(x)?;
    let outer_folds = stratified_folds(y, cfg.outer_folds, cfg.seed)?;
    let sq = pairwise_sq_distances(x)?;
    let cells: Vec<(f64, f64)> = cfg
        .sigma_grid
        .iter()
        .flat_map(|&s| cfg.c_grid.iter().map(move |&c| (s, c)))
        .collect();

    let mut sub = Subproblem {
        sq: &sq,
        y,
        tol: cfg.tol,
        capped: false,
    };
    let mut outer = Vec::with_capacity(outer_folds.len());
    let mut votes = vec![0usize; cells.len()];
    for (f, test) in outer_folds.iter().enumerate() {
        let train = complement(&outer_folds, f);
        let train_y: Vec<i8> = train.iter().map(|&i| y[i]).collect();
        let inner_seed = cfg.seed.wrapping_add(1 + f as u64);
        let inner_local = stratified_folds(&train_y, cfg.inner_folds, inner_seed)?;
        let inner: Vec<Vec<usize>> = inner_local
            .iter()
            .map(|fold| fold.iter().map(|&p| train[p]).collect())
            .collect();

        let mut inner_scores = Vec::with_capacity(cells.len());
        let mut best = 0usize;
        for (ci, &(sigma, c)) in cells.iter().enumerate() {
            let mut total = 0.0;
            for (g, inner_test) in inner.iter().enumerate() {
                let inner_train = complement(&inner, g);
                total += sub.score(&inner_train, inner_test, sigma, c);
            }
            let score = total / inner.len() as f64;
            if score > inner_scores.get(best).map_or(f64::NEG_INFINITY, |b: &CellScore| b.score) {
                best = ci;
            }
            inner_scores.push(CellScore { sigma, c, score });
        }
        votes[best] += 1;
        let (best_sigma, best_c) = cells[best];
        let test_score = sub.score(&train, test, best_sigma, best_c);
        outer.push(OuterFold {
            fold: f,
            test_indices: test.clone(),
            inner_scores,
            best_sigma,
            best_c,
            test_score,
        });
    }

    let mut modal = 0usize;
    for (ci, &v) in votes.iter().enumerate() {
        if v > votes[modal] {
            modal = ci;
        }
    }
    let cv_score = outer.iter().map(|o| o.test_score).sum::<f64>() / outer.len() as f64;
    Ok(GridSearchResult {
        best_sigma: cells[modal].0,
        best_c: cells[modal].1,
        cv_score,
        outer,
        hit_iteration_cap: sub.capped,
    })
}
