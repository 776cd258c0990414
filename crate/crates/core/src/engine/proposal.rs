use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::Candidate;
use crate::numerics::{pairwise_sq_distances, silhouette_from_distances, ward_cluster_from_sq_distances, ClusterAssignment};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub index: usize,
    pub n_unlabeled: usize,
    pub n_refill: usize,
    /// Mean silhouette over unlabeled members; `None` for refill-only clusters.
    pub silhouette_mean: Option<f64>,
}

/// The cluster offered to the oracle in one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProposal {
    pub cluster_index: usize,
    /// Unlabeled (easy) members; only these receive the oracle's label.
    pub cluster_members: Vec<String>,
    pub refill_members: Vec<String>,
    pub silhouette_mean: f64,
    /// Cluster count actually used.
    pub k: usize,
    /// Set when fewer points than the requested `k` were available.
    pub k_clamped: bool,
    pub all_clusters: Vec<ClusterSummary>,
    /// Cluster of every clustered point: easy samples first, then refill.
    pub labels: Vec<usize>,
}

/// Cluster easy and refill candidates together and pick the best cluster.
pub fn propose_best_cluster(easy: &[Candidate], refill: &[Candidate], k: usize) -> Result<ClusterProposal> {
    let all: Vec<&Candidate> = easy.iter().chain(refill).collect();
    let dim = all.first().map_or(0, |c| c.features.len());
    if let Some(c) = all.iter().find(|c| c.features.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: c.features.len(),
        });
    }
    let points = Array2::from_shape_fn((all.len(), dim), |(i, d)| all[i].features[d]);
    let easy_ids: Vec<String> = easy.iter().map(|c| c.id.clone()).collect();
    let refill_ids: Vec<String> = refill.iter().map(|c| c.id.clone()).collect();
    propose_from_points(&easy_ids, &refill_ids, points.view(), k)
}

/// Same as [`propose_best_cluster`] on a feature matrix whose rows are the
/// easy samples followed by the refill samples.
///
/// The winner has the highest mean silhouette over its unlabeled members;
/// ties go to more unlabeled members, then to the smaller cluster index.
pub fn propose_from_points(
    easy_ids: &[String],
    refill_ids: &[String],
    points: ArrayView2<'_, f64>,
    k: usize,
) -> Result<ClusterProposal> {
    let n_easy = easy_ids.len();
    let n = n_easy + refill_ids.len();
    if n_easy == 0 {
        return Err(Error::invalid("a proposal needs at least one easy sample"));
    }
    if points.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: points.nrows(),
        });
    }
    if k < 1 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let k_eff = k.min(n);
    let k_clamped = k_eff < k;

    if n == 1 || k_eff == 1 {
        let assign = ClusterAssignment {
            labels: vec![0; n],
            k: 1,
        };
        return Ok(build(easy_ids, refill_ids, &assign, vec![Some(0.0)], 0, k_clamped));
    }

    let sq = pairwise_sq_distances(points)?;
    let assign = ward_cluster_from_sq_distances(&sq, k_eff)?;
    let dist = sq.mapv(f64::sqrt);
    let eligible: Vec<bool> = (0..n).map(|i| i < n_easy).collect();
    let report = silhouette_from_distances(&dist, &assign, &eligible)?;

    let sizes_unlabeled = {
        let mut s = vec![0usize; assign.k];
        for &l in &assign.labels[..n_easy] {
            s[l] += 1;
        }
        s
    };
    let mut best: Option<usize> = None;
    for (c, mean) in report.per_cluster_mean.iter().enumerate() {
        let Some(mean) = mean else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let bm = report.per_cluster_mean[b].expect("best is eligible");
                *mean > bm || (*mean == bm && sizes_unlabeled[c] > sizes_unlabeled[b])
            }
        };
        if better {
            best = Some(c);
        }
    }
    let best = best.expect("at least one easy sample is eligible");
    Ok(build(easy_ids, refill_ids, &assign, report.per_cluster_mean, best, k_clamped))
}

fn build(
    easy_ids: &[String],
    refill_ids: &[String],
    assign: &ClusterAssignment,
    means: Vec<Option<f64>>,
    best: usize,
    k_clamped: bool,
) -> ClusterProposal {
    let n_easy = easy_ids.len();
    let mut all_clusters: Vec<ClusterSummary> = means
        .iter()
        .enumerate()
        .map(|(index, &silhouette_mean)| ClusterSummary {
            index,
            n_unlabeled: 0,
            n_refill: 0,
            silhouette_mean,
        })
        .collect();
    let mut cluster_members = Vec::new();
    let mut refill_members = Vec::new();
    for (i, &l) in assign.labels.iter().enumerate() {
        if i < n_easy {
            all_clusters[l].n_unlabeled += 1;
            if l == best {
                cluster_members.push(easy_ids[i].clone());
            }
        } else {
            all_clusters[l].n_refill += 1;
            if l == best {
                refill_members.push(refill_ids[i - n_easy].clone());
            }
        }
    }
    ClusterProposal {
        cluster_index: best,
        cluster_members,
        refill_members,
        silhouette_mean: means[best].unwrap_or(0.0),
        k: assign.k,
        k_clamped,
        all_clusters,
        labels: assign.labels.clone(),
    }
}
