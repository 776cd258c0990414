//! The iterative discovery loop.
//!
//! Each iteration selects the easiest candidates by objectness, mixes in
//! labeled samples from the refill bag, clusters the union with Ward, and
//! proposes the cluster with the best silhouette over its unlabeled members.
//! An [`Oracle`] (simulated or human) labels the proposal, and a one-class SVM
//! trained on the labeled members pulls in look-alike easy samples.

mod oracle;
mod proposal;
mod refill;
mod selection;
mod session;

use serde::{Deserialize, Serialize};

use crate::numerics::PcaTarget;
use crate::{Error, Result};

pub use oracle::{majority_vote, MajorityVoteOracle, Oracle, OracleAnswer, SKIP};
pub use proposal::{propose_best_cluster, propose_from_points, ClusterProposal, ClusterSummary};
pub use refill::draw_refill;
pub use selection::{select_easiest, SelectionReport};
pub use session::{
    read_history_jsonl, write_history_jsonl, Checkpoint, DiscoverySession, DiscoverySessionState,
    ExpansionRecord, FilterRecord, IterationRecord, PendingIteration, RngState, SessionStatus,
    CHECKPOINT_VERSION,
};

/// Weights of the easiness threshold `μ + ω₁σ − ω₂t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EasinessConfig {
    pub omega1: f64,
    pub omega2: f64,
}

impl EasinessConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.omega1.is_finite() {
            return Err(Error::invalid("omega1 must be finite"));
        }
        if !(self.omega2 >= 0.0 && self.omega2.is_finite()) {
            return Err(Error::invalid(format!("omega2 must be >= 0, got {}", self.omega2)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub omega1: f64,
    /// `None` resolves to `0.05 σ₀`, with `σ₀` the objectness spread of the
    /// initial pool.
    pub omega2: Option<f64>,
    pub k_clusters: usize,
    pub refill_pct: f64,
    pub nu: f64,
    /// One-class kernel width; `None` reuses the filter's σ, or the median
    /// pairwise distance of the labeled cluster when no filter is in use.
    pub expansion_sigma: Option<f64>,
    pub expansion: bool,
    pub max_iterations: usize,
    pub use_filter: bool,
    pub use_pca: bool,
    pub pca_variance: f64,
    pub use_scene_features: bool,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            omega1: 0.5,
            omega2: None,
            k_clusters: 15,
            refill_pct: 0.25,
            nu: 0.1,
            expansion_sigma: None,
            expansion: true,
            max_iterations: 100,
            use_filter: false,
            use_pca: false,
            pca_variance: 0.95,
            use_scene_features: false,
            seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_clusters < 2 {
            return Err(Error::invalid("k_clusters must be at least 2"));
        }
        if !(self.refill_pct >= 0.0 && self.refill_pct.is_finite()) {
            return Err(Error::invalid("refill_pct must be >= 0"));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::invalid(format!("nu must lie in (0, 1], got {}", self.nu)));
        }
        if let Some(s) = self.expansion_sigma {
            crate::svm::KernelParams::new(s)?;
        }
        if self.max_iterations < 1 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.pca_variance > 0.0 && self.pca_variance <= 1.0) {
            return Err(Error::invalid("pca_variance must lie in (0, 1]"));
        }
        EasinessConfig {
            omega1: self.omega1,
            omega2: self.omega2.unwrap_or(0.0),
        }
        .validate()
    }

    pub(crate) fn pca_target(&self) -> PcaTarget {
        PcaTarget::Variance(self.pca_variance)
    }
}
