use serde::{Deserialize, Serialize};

use super::EasinessConfig;
use crate::dataset::Candidate;
use crate::{Error, Result};

/// Outcome of one easiest-first selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub mu: f64,
    /// Population standard deviation of the pool's objectness.
    pub sigma: f64,
    pub threshold: f64,
    pub t: usize,
    pub omega1: f64,
    pub omega2: f64,
    pub selected_ids: Vec<String>,
    /// Number of easy samples.
    pub m: usize,
}

/// Candidates whose objectness is strictly above `μ + ω₁σ − ω₂t`.
pub fn select_easiest(pool: &[Candidate], t: usize, cfg: &EasinessConfig) -> Result<SelectionReport> {
    let ids: Vec<&str> = pool.iter().map(|c| c.id.as_str()).collect();
    let scores: Vec<f64> = pool.iter().map(|c| c.objectness).collect();
    select_scores(&ids, &scores, t, cfg)
}

pub(crate) fn select_scores<S: AsRef<str>>(
    ids: &[S],
    scores: &[f64],
    t: usize,
    cfg: &EasinessConfig,
) -> Result<SelectionReport> {
    if scores.is_empty() {
        return Err(Error::invalid("selection needs a non-empty pool"));
    }
    if ids.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: ids.len(),
            got: scores.len(),
        });
    }
    cfg.validate()?;
    let (mu, sigma) = mean_std(scores);
    let threshold = mu + cfg.omega1 * sigma - cfg.omega2 * t as f64;
    let selected_ids: Vec<String> = ids
        .iter()
        .zip(scores)
        .filter(|(_, &s)| s > threshold)
        .map(|(id, _)| id.as_ref().to_string())
        .collect();
    Ok(SelectionReport {
        mu,
        sigma,
        threshold,
        t,
        omega1: cfg.omega1,
        omega2: cfg.omega2,
        m: selected_ids.len(),
        selected_ids,
    })
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mu = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    (mu, var.sqrt())
}
