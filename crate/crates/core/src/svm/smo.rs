//! Sequential minimal optimization for box-constrained quadratic programs
//!
//! ```text
//! min  0.5 * a' Q a + p' a
//! s.t. y' a = const,  0 <= a_i <= upper_i
//! ```
//!
//! with `y_i` in {+1, -1}. Working pairs are chosen as the maximal violating
//! pair; the first index wins ties so runs are reproducible.

use serde::{Deserialize, Serialize};

pub(crate) const DEFAULT_MAX_ITER: usize = 100_000;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    /// Iteration cap reached; the model is the last iterate.
    MaxIterations,
}

/// Dense symmetric matrix with the labels already folded in (`Q_ij = y_i y_j K_ij`).
pub(crate) struct QMatrix {
    n: usize,
    data: Vec<f64>,
}

impl QMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        QMatrix { n, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

pub(crate) struct Problem<'a> {
    pub q: &'a QMatrix,
    pub p: &'a [f64],
    pub y: &'a [f64],
    pub upper: &'a [f64],
    pub alpha0: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

pub(crate) struct Solution {
    pub alpha: Vec<f64>,
    /// Gradient `Q a + p`, recomputed from scratch at the end.
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub status: SolverStatus,
}

impl Solution {
    pub fn at_upper(&self, i: usize, upper: &[f64]) -> bool {
        self.alpha[i] >= upper[i]
    }

    pub fn at_lower(&self, i: usize) -> bool {
        self.alpha[i] <= 0.0
    }
}

pub(crate) fn solve(prob: Problem<'_>) -> Solution {
    let Problem {
        q,
        p,
        y,
        upper,
        mut alpha0,
        tol,
        max_iter,
    } = prob;
    let n = q.n;
    let alpha = &mut alpha0;
    let mut grad: Vec<f64> = p.to_vec();
    for (i, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            for (g, qv) in grad.iter_mut().zip(q.row(i)) {
                *g += qv * a;
            }
        }
    }

    let in_up = |a: f64, yi: f64, ub: f64| if yi > 0.0 { a < ub } else { a > 0.0 };
    let in_low = |a: f64, yi: f64, ub: f64| if yi > 0.0 { a > 0.0 } else { a < ub };

    let mut iterations = 0;
    let mut status = SolverStatus::Converged;
    loop {
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t], upper[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(alpha[t], y[t], upper[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin <= tol {
            break;
        }
        if iterations >= max_iter {
            status = SolverStatus::MaxIterations;
            break;
        }
        iterations += 1;

        let qi = q.row(i);
        let qj = q.row(j);
        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let quad = (qi[i] + qj[j] + 2.0 * qi[j]).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > ci - cj {
                if ai > ci {
                    ai = ci;
                    aj = ci - diff;
                }
            } else if aj > cj {
                aj = cj;
                ai = cj + diff;
            }
        } else {
            let quad = (qi[i] + qj[j] - 2.0 * qi[j]).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > ci {
                if ai > ci {
                    ai = ci;
                    aj = sum - ci;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > cj {
                if aj > cj {
                    aj = cj;
                    ai = sum - cj;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;

        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..n {
            grad[t] += qi[t] * di + qj[t] * dj;
        }
    }

    // drop accumulated drift before the offset is derived from the gradient
    let mut grad = p.to_vec();
    for (i, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            for (g, qv) in grad.iter_mut().zip(q.row(i)) {
                *g += qv * a;
            }
        }
    }
    Solution {
        alpha: alpha0,
        grad,
        iterations,
        status,
    }
}

/// Offset `r` of the decision function `sum a_j y_j K(x_j, x) - r`: the mean of
/// `y_i G_i` over free variables, or the midpoint of the feasible interval.
pub(crate) fn offset(sol: &Solution, y: &[f64], upper: &[f64]) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for i in 0..sol.alpha.len() {
        let yg = y[i] * sol.grad[i];
        if sol.at_upper(i, upper) {
            if y[i] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if sol.at_lower(i) {
            if y[i] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else {
        lb
    }
}
