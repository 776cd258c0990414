//! Ward agglomerative clustering.
//!
//! Clusters live in slots `0..n`; merging slots `i < j` keeps the result in
//! slot `i`, so a slot index is always the smallest point index it contains.
//! Each step merges the pair with the smallest Ward cost
//! `|A||B| / (|A| + |B|) * ||mean(A) - mean(B)||^2`, ties going to the
//! lexicographically smallest `(i, j)`. Costs are maintained with the
//! Lance-Williams recurrence and a per-row nearest-neighbour cache, which keeps
//! the typical cost quadratic in `n`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{pairwise_sq_distances, ClusterAssignment};
use crate::{Error, Result};

/// One agglomeration step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    /// Ward cost of the merge (increase in within-cluster sum of squares).
    pub cost: f64,
    /// Size of the merged cluster.
    pub size: usize,
    /// Number of clusters after the merge.
    pub clusters_after: usize,
}

struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    #[inline]
    fn get(&self, a: usize, b: usize) -> f64 {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        self.data[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, a: usize, b: usize, v: f64) {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        self.data[i * self.n + j] = v;
    }
}

struct NearestCache {
    nn: Vec<usize>,
    cost: Vec<f64>,
}

impl NearestCache {
    const NONE: usize = usize::MAX;

    fn recompute(&mut self, r: usize, costs: &CostMatrix, active: &[bool]) {
        let mut best = (f64::INFINITY, Self::NONE);
        for c in (r + 1)..costs.n {
            if active[c] {
                let v = costs.get(r, c);
                if v < best.0 || best.1 == Self::NONE {
                    best = (v, c);
                }
            }
        }
        self.cost[r] = best.0;
        self.nn[r] = best.1;
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k < 1 || k > n {
        return Err(Error::invalid(format!(
            "cluster count k={k} must lie in [1, {n}]"
        )));
    }
    Ok(())
}

/// Agglomerate down to `k` clusters from a squared-distance matrix, returning
/// the partition and the merge trace.
pub fn ward_linkage(sq_dist: &Array2<f64>, k: usize) -> Result<(ClusterAssignment, Vec<Merge>)> {
    let n = sq_dist.nrows();
    if sq_dist.ncols() != n {
        return Err(Error::invalid("distance matrix is not square"));
    }
    check_k(n, k)?;

    // singleton Ward cost is half the squared distance
    let mut costs = CostMatrix {
        n,
        data: vec![0.0; n * n],
    };
    for i in 0..n {
        for j in (i + 1)..n {
            costs.set(i, j, 0.5 * sq_dist[[i, j]]);
        }
    }
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut cache = NearestCache {
        nn: vec![NearestCache::NONE; n],
        cost: vec![f64::INFINITY; n],
    };
    for r in 0..n {
        cache.recompute(r, &costs, &active);
    }

    let mut merges = Vec::with_capacity(n - k);
    let mut n_active = n;
    while n_active > k {
        let mut best: Option<usize> = None;
        for r in 0..n {
            if !active[r] || cache.nn[r] == NearestCache::NONE {
                continue;
            }
            match best {
                Some(b) if cache.cost[r] >= cache.cost[b] => {}
                _ => best = Some(r),
            }
        }
        let i = best.expect("at least two active clusters");
        let j = cache.nn[i];
        let cost_ij = costs.get(i, j);
        let (si, sj) = (size[i] as f64, size[j] as f64);

        for r in 0..n {
            if !active[r] || r == i || r == j {
                continue;
            }
            let sr = size[r] as f64;
            let updated = ((sr + si) * costs.get(r, i) + (sr + sj) * costs.get(r, j)
                - sr * cost_ij)
                / (sr + si + sj);
            costs.set(r, i, updated);
        }
        active[j] = false;
        size[i] += size[j];
        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        n_active -= 1;
        merges.push(Merge {
            left: i,
            right: j,
            cost: cost_ij,
            size: size[i],
            clusters_after: n_active,
        });

        cache.recompute(i, &costs, &active);
        for r in 0..n {
            if !active[r] || r == i {
                continue;
            }
            if cache.nn[r] == i || cache.nn[r] == j {
                cache.recompute(r, &costs, &active);
            } else if r < i {
                let c = costs.get(r, i);
                if c < cache.cost[r] || (c == cache.cost[r] && i < cache.nn[r]) {
                    cache.cost[r] = c;
                    cache.nn[r] = i;
                }
            }
        }
    }

    let mut labels = vec![0usize; n];
    for (cluster, slot) in (0..n).filter(|&s| active[s]).enumerate() {
        for &p in &members[slot] {
            labels[p] = cluster;
        }
    }
    Ok((ClusterAssignment { labels, k }, merges))
}

pub fn ward_cluster_from_sq_distances(sq_dist: &Array2<f64>, k: usize) -> Result<ClusterAssignment> {
    ward_linkage(sq_dist, k).map(|(a, _)| a)
}

/// Ward clustering of the rows of `points` into `k` clusters.
pub fn ward_cluster(points: ArrayView2<'_, f64>, k: usize) -> Result<ClusterAssignment> {
    check_k(points.nrows(), k)?;
    ward_cluster_from_sq_distances(&pairwise_sq_distances(points)?, k)
}
