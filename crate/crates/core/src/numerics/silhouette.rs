use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{pairwise_distances, ClusterAssignment};
use crate::{Error, Result};

/// Silhouette coefficients restricted to an eligibility mask.
///
/// Ineligible points still take part in every distance average; they only
/// lack their own score and never count toward a cluster mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteReport {
    pub per_point: Vec<Option<f64>>,
    /// Mean score over eligible members; `None` for clusters without any.
    pub per_cluster_mean: Vec<Option<f64>>,
    pub eligible_mask: Vec<bool>,
}

pub fn silhouette(
    points: ArrayView2<'_, f64>,
    assign: &ClusterAssignment,
    eligible: &[bool],
) -> Result<SilhouetteReport> {
    let dist = pairwise_distances(points)?;
    silhouette_from_distances(&dist, assign, eligible)
}

/// Same as [`silhouette`] on a precomputed Euclidean distance matrix.
pub fn silhouette_from_distances(
    dist: &Array2<f64>,
    assign: &ClusterAssignment,
    eligible: &[bool],
) -> Result<SilhouetteReport> {
    let n = assign.labels.len();
    if dist.nrows() != n || dist.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: dist.nrows(),
        });
    }
    if eligible.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: eligible.len(),
        });
    }
    if !eligible.iter().any(|&e| e) {
        return Err(Error::NoEligiblePoints);
    }
    if assign.k < 2 {
        return Err(Error::SingleCluster);
    }
    let sizes = assign.sizes();

    let mut per_point = vec![None; n];
    let mut sums = vec![0.0; assign.k];
    for i in (0..n).filter(|&i| eligible[i]) {
        let own = assign.labels[i];
        if sizes[own] == 1 {
            per_point[i] = Some(0.0);
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[assign.labels[j]] += dist[[i, j]];
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..assign.k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        let s = if denom > 0.0 { (b - a) / denom } else { 0.0 };
        per_point[i] = Some(s.clamp(-1.0, 1.0));
    }

    let mut totals = vec![(0.0, 0usize); assign.k];
    for (i, s) in per_point.iter().enumerate() {
        if let Some(s) = s {
            let t = &mut totals[assign.labels[i]];
            t.0 += s;
            t.1 += 1;
        }
    }
    let per_cluster_mean = totals
        .into_iter()
        .map(|(sum, count)| (count > 0).then(|| sum / count as f64))
        .collect();

    Ok(SilhouetteReport {
        per_point,
        per_cluster_mean,
        eligible_mask: eligible.to_vec(),
    })
}
