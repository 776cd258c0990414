//! Distance kernels, Ward agglomerative clustering, silhouette scoring and PCA.

mod distance;
mod pca;
mod silhouette;
mod ward;

use serde::{Deserialize, Serialize};

pub use distance::{pairwise_distances, pairwise_sq_distances};
pub use pca::{pca_fit, pca_transform, PcaModel, PcaStatus, PcaTarget};
pub use silhouette::{silhouette, silhouette_from_distances, SilhouetteReport};
pub use ward::{ward_cluster, ward_cluster_from_sq_distances, ward_linkage, Merge};

/// Flat partition of `n` points into `k` non-empty clusters.
///
/// Cluster indices are ordered by the smallest point index they contain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl ClusterAssignment {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}
