//! RBF-kernel support vector machines trained with SMO.
//!
//! [`train_binary_svm`] fits the C-SVC used as the "Object" / "No Object"
//! filter; [`train_one_class`] fits the ν-one-class model used to expand a
//! freshly labeled cluster. [`grid_search_cv`] selects `(σ, C)` by nested,
//! stratified cross-validation on balanced accuracy.

mod binary;
mod filter;
mod grid;
mod model_file;
mod one_class;
mod smo;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use binary::{predict_binary, train_binary_svm, BinarySvmModel};
pub use filter::{filter_no_objects, FilterOutcome};
pub use grid::{
    balanced_accuracy, grid_search_cv, stratified_folds, CellScore, GridSearchConfig,
    GridSearchResult, OuterFold,
};
pub use model_file::{ModelFile, SvmModel, MODEL_FORMAT_VERSION};
pub use one_class::{predict_one_class, train_one_class, OneClassSvmModel};
pub use smo::SolverStatus;

/// Default KKT tolerance.
pub const DEFAULT_TOL: f64 = 1e-3;

/// RBF kernel `K(x, y) = exp(-||x - y||^2 / (2 σ^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub sigma: f64,
}

impl KernelParams {
    pub fn new(sigma: f64) -> Result<Self> {
        let k = KernelParams { sigma };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("RBF sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    #[inline]
    pub fn from_sq_distance(&self, sq: f64) -> f64 {
        (-sq / (2.0 * self.sigma * self.sigma)).exp()
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.from_sq_distance(sq)
    }
}

pub(crate) fn check_finite(x: ArrayView2<'_, f64>) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("features"));
    }
    Ok(())
}

pub(crate) fn check_dim(expected: usize, x: ArrayView2<'_, f64>) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.ncols(),
        });
    }
    Ok(())
}
