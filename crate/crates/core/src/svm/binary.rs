use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::smo::{self, Problem, QMatrix, SolverStatus};
use super::{check_dim, check_finite, KernelParams};
use crate::{Error, Result};

/// Trained C-SVC. `alphas` hold the signed coefficients `α_i y_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    /// Training row of each support vector.
    #[serde(default)]
    pub support_indices: Vec<usize>,
    pub bias: f64,
    pub kernel: KernelParams,
    pub c: f64,
    pub dim: usize,
    pub status: SolverStatus,
    pub iterations: usize,
}

impl BinarySvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.alphas)
            .map(|(sv, a)| a * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }

    /// Unsigned dual variable of each of the `n` training points.
    pub fn dual_coefficients(&self, n: usize) -> Vec<f64> {
        let mut dual = vec![0.0; n];
        for (&i, a) in self.support_indices.iter().zip(&self.alphas) {
            if i < n {
                dual[i] = a.abs();
            }
        }
        dual
    }
}


fn check_labels(y: &[i8]) -> Result<()> {
    if y.iter().any(|&l| l != 1 && l != -1) {
        return Err(Error::invalid("binary labels must be +1 or -1"));
    }
    if !(y.contains(&1) && y.contains(&-1)) {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Solve the C-SVC dual for points given through their pairwise squared distances.
pub(crate) fn solve_dual(
    n: usize,
    sq_dist: impl Fn(usize, usize) -> f64,
    y: &[f64],
    c: f64,
    kernel: KernelParams,
    tol: f64,
) -> (Vec<f64>, f64, SolverStatus, usize) {
    let q = QMatrix::from_fn(n, |i, j| y[i] * y[j] * kernel.from_sq_distance(sq_dist(i, j)));
    let p = vec![-1.0; n];
    let upper = vec![c; n];
    let sol = smo::solve(Problem {
        q: &q,
        p: &p,
        y,
        upper: &upper,
        alpha0: vec![0.0; n],
        tol,
        max_iter: smo::DEFAULT_MAX_ITER,
    });
    let rho = smo::offset(&sol, y, &upper);
    (sol.alpha, -rho, sol.status, sol.iterations)
}

/// Train an RBF C-SVC with SMO until the maximal KKT violation is at most `tol`.
pub fn train_binary_svm(
    x: ArrayView2<'_, f64>,
    y: &[i8],
    c: f64,
    kernel: KernelParams,
    tol: f64,
) -> Result<BinarySvmModel> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    check_labels(y)?;
    check_finite(x)?;
    kernel.validate()?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("box constraint C must be positive, got {c}")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("KKT tolerance must be positive"));
    }
    let yf: Vec<f64> = y.iter().map(|&l| l as f64).collect();
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let sq = |i: usize, j: usize| -> f64 {
        rows[i]
            .iter()
            .zip(&rows[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    let (dual, bias, status, iterations) = solve_dual(rows.len(), sq, &yf, c, kernel, tol);

    let mut support_vectors = Vec::new();
    let mut alphas = Vec::new();
    let mut support_indices = Vec::new();
    for (i, &a) in dual.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(rows[i].clone());
            alphas.push(a * yf[i]);
            support_indices.push(i);
        }
    }
    Ok(BinarySvmModel {
        support_vectors,
        alphas,
        support_indices,
        bias,
        kernel,
        c,
        dim: x.ncols(),
        status,
        iterations,
    })
}

/// Predicted labels (exact zeros map to +1) and decision values.
pub fn predict_binary(model: &BinarySvmModel, x: ArrayView2<'_, f64>) -> Result<(Vec<i8>, Vec<f64>)> {
    check_dim(model.dim, x)?;
    let values: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| model.decision(&r.to_vec()))
        .collect();
    let labels = values.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect();
    Ok((labels, values))
}
