use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::smo::{self, Problem, QMatrix, SolverStatus};
use super::{check_dim, check_finite, KernelParams, DEFAULT_TOL};
use crate::{Error, Result};

/// ν-one-class SVM with coefficients normalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneClassSvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub kernel: KernelParams,
    pub nu: f64,
    pub dim: usize,
    /// Number of training rows; the per-coefficient bound is `1 / (ν n)`.
    pub n_train: usize,
    pub status: SolverStatus,
    pub iterations: usize,
}

impl OneClassSvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.score(x) - self.rho
    }

    fn score(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.alphas)
            .map(|(sv, a)| a * self.kernel.eval(sv, x))
            .sum()
    }
}

pub fn train_one_class(x: ArrayView2<'_, f64>, nu: f64, kernel: KernelParams) -> Result<OneClassSvmModel> {
    train_one_class_with_tol(x, nu, kernel, DEFAULT_TOL)
}

/// Solves the dual in the scaled form `0 <= a_i <= 1, Σ a_i = ν n`, then
/// divides by `ν n`. The offset is the smallest training score among points
/// below the upper bound, so at most `ν n` points lie strictly outside.
pub fn train_one_class_with_tol(
    x: ArrayView2<'_, f64>,
    nu: f64,
    kernel: KernelParams,
    tol: f64,
) -> Result<OneClassSvmModel> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::invalid(format!("one-class SVM needs at least 2 points, got {n}")));
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::invalid(format!("nu must lie in (0, 1], got {nu}")));
    }
    check_finite(x)?;
    kernel.validate()?;

    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let q = QMatrix::from_fn(n, |i, j| kernel.eval(&rows[i], &rows[j]));
    let total = nu * n as f64;
    let mut alpha0 = vec![0.0; n];
    let full = (total.floor() as usize).min(n);
    alpha0[..full].iter_mut().for_each(|a| *a = 1.0);
    if full < n {
        alpha0[full] = total - full as f64;
    }
    let y = vec![1.0; n];
    let upper = vec![1.0; n];
    let p = vec![0.0; n];
    let sol = smo::solve(Problem {
        q: &q,
        p: &p,
        y: &y,
        upper: &upper,
        alpha0,
        tol,
        max_iter: smo::DEFAULT_MAX_ITER,
    });

    let mut support_vectors = Vec::new();
    let mut alphas = Vec::new();
    let mut below_upper = Vec::new();
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(rows[i].clone());
            alphas.push((a / total).min(1.0 / total));
        }
        if a < 1.0 {
            below_upper.push(i);
        }
    }
    let mut model = OneClassSvmModel {
        support_vectors,
        alphas,
        rho: 0.0,
        kernel,
        nu,
        dim: x.ncols(),
        n_train: n,
        status: sol.status,
        iterations: sol.iterations,
    };
    let scores: Vec<f64> = rows.iter().map(|r| model.score(r)).collect();
    model.rho = if below_upper.is_empty() {
        scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    } else {
        below_upper.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min)
    };
    Ok(model)
}

/// Inside iff the decision value is non-negative.
pub fn predict_one_class(model: &OneClassSvmModel, x: ArrayView2<'_, f64>) -> Result<(Vec<bool>, Vec<f64>)> {
    check_dim(model.dim, x)?;
    let values: Vec<f64> = x.rows().into_iter().map(|r| model.decision(&r.to_vec())).collect();
    let inside = values.iter().map(|&v| v >= 0.0).collect();
    Ok((inside, values))
}
