use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaTarget {
    /// Smallest count whose cumulative explained variance reaches this ratio.
    Variance(f64),
    Components(usize),
}

impl Default for PcaTarget {
    fn default() -> Self {
        PcaTarget::Variance(0.95)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaStatus {
    Ok,
    /// The data had no variance; the model keeps no components.
    ZeroVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// One orthonormal component per row, `r x D`.
    pub components: Array2<f64>,
    /// Variance along each kept component, descending.
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    pub status: PcaStatus,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn explained_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| if self.total_variance > 0.0 { v / self.total_variance } else { 0.0 })
            .collect()
    }

    /// Map projected coordinates back into the input space.
    pub fn reconstruct(&self, projected: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if projected.ncols() != self.n_components() {
            return Err(Error::DimensionMismatch {
                expected: self.n_components(),
                got: projected.ncols(),
            });
        }
        Ok(projected.dot(&self.components) + &self.mean)
    }
}

/// Fit PCA by eigendecomposition of the sample covariance (`1 / (n - 1)`).
///
/// Each component's largest-magnitude entry is made positive.
pub fn pca_fit(points: ArrayView2<'_, f64>, target: PcaTarget) -> Result<PcaModel> {
    let (n, d) = points.dim();
    if n < 2 {
        return Err(Error::invalid(format!("PCA needs at least 2 points, got {n}")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("PCA input"));
    }
    match target {
        PcaTarget::Variance(t) if !(t > 0.0 && t <= 1.0) => {
            return Err(Error::invalid(format!("variance target {t} outside (0, 1]")))
        }
        PcaTarget::Components(r) if r > d => {
            return Err(Error::invalid(format!("{r} components requested for dimension {d}")))
        }
        _ => {}
    }

    let mean = points.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &points - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let total_variance: f64 = cov.diag().sum();

    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });

    let (r, status) = if total_variance <= 0.0 {
        (0, PcaStatus::ZeroVariance)
    } else {
        let r = match target {
            PcaTarget::Components(r) => r,
            PcaTarget::Variance(t) => {
                let mut cum = 0.0;
                let mut r = d;
                for (idx, &o) in order.iter().enumerate() {
                    cum += eig.eigenvalues[o].max(0.0);
                    if cum / total_variance >= t - 1e-12 {
                        r = idx + 1;
                        break;
                    }
                }
                r
            }
        };
        (r, PcaStatus::Ok)
    };

    let mut components = Array2::zeros((r, d));
    let mut explained_variance = Vec::with_capacity(r);
    for (row, &o) in order.iter().take(r).enumerate() {
        let v = eig.eigenvectors.column(o);
        let pivot = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, x)| if x.abs() > best.1.abs() { (i, *x) } else { best });
        let sign = if pivot.1 < 0.0 { -1.0 } else { 1.0 };
        for (c, x) in v.iter().enumerate() {
            components[[row, c]] = sign * x;
        }
        explained_variance.push(eig.eigenvalues[o].max(0.0));
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        total_variance,
        status,
    })
}

/// Project centered points onto the model's components.
pub fn pca_transform(model: &PcaModel, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if points.ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: points.ncols(),
        });
    }
    Ok((&points - &model.mean).dot(&model.components.t()))
}
