//! Semi-supervised object discovery over precomputed object candidates.
//!
//! The crate is organised bottom-up:
//!
//! * [`dataset`] holds the candidate / ground-truth data model, overlap-score
//!   matching, experimental splits and a synthetic generator.
//! * [`numerics`] provides distance matrices, Ward agglomerative clustering,
//!   silhouette coefficients with eligibility masks, and PCA.
//! * [`svm`] is an RBF-kernel SMO solver for the binary "Object" / "No Object"
//!   filter and the ν-one-class expander, plus nested cross-validated grid search.
//! * [`engine`] runs the iterative easiest-first discovery loop over a
//!   serializable session state.
//! * [`evaluation`] computes macro F-measure, detection statistics and
//!   per-iteration discovery reports.
//! * [`experiment`] wires everything into seeded, repeatable batch runs.

pub mod dataset;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod numerics;
pub mod svm;

pub use error::{Error, Result};

/// Reserved class name for candidates that match no ground-truth object.
pub const NO_OBJECT: &str = "no_object";
