use std::path::Path;

use ndarray::Array2;
use objdisc_core::dataset::{BoundingBox, Dataset};
use objdisc_core::engine::{
    ClusterSummary, DiscoverySession, IterationRecord, PendingIteration, SessionStatus,
};
use objdisc_core::numerics::{pca_fit, pca_transform, PcaStatus, PcaTarget};
use serde::{Deserialize, Serialize};

use crate::error::ApiResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberView {
    pub id: String,
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub objectness: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crop_uri: Option<String>,
    /// Where the crop can be fetched, when it is served or remote.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crop_url: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointRole {
    Proposal,
    Refill,
    Easy,
}

/// One iteration point in the 2-D display projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointView {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub cluster: usize,
    pub role: PointRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalView {
    pub proposal_id: String,
    pub iteration: usize,
    pub silhouette_mean: f64,
    pub k: usize,
    pub k_clamped: bool,
    pub members: Vec<MemberView>,
    pub refill_members: Vec<MemberView>,
    pub points: Vec<PointView>,
    pub all_clusters: Vec<ClusterSummary>,
    /// Classes discovered so far, sorted.
    pub suggested_labels: Vec<String>,
    pub pool_size: usize,
    pub n_easy: usize,
    /// Refill samples drawn this iteration, in or out of the proposal.
    pub n_refill: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AdvanceResponse {
    AwaitingLabel { proposal: Box<ProposalView> },
    Finished { iterations: usize, n_discovered: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub proposal_id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResponse {
    pub status: SessionStatus,
    pub pool_size: usize,
    pub n_discovered: usize,
    pub record: IterationRecord,
}

fn member(dataset: &Dataset, crops_dir: &Path, id: &str) -> Option<MemberView> {
    let c = dataset.get(id)?;
    let crop_url = c.crop_uri.as_deref().and_then(|uri| {
        if uri.starts_with("http://") || uri.starts_with("https://") {
            return Some(uri.to_string());
        }
        let rel = Path::new(uri);
        let safe = rel.is_relative()
            && rel
                .components()
                .all(|p| matches!(p, std::path::Component::Normal(_)));
        (safe && crops_dir.join(rel).is_file()).then(|| format!("/crops/{uri}"))
    });
    Some(MemberView {
        id: c.id.clone(),
        image_id: c.image_id.clone(),
        bbox: c.bbox,
        objectness: c.objectness,
        crop_uri: c.crop_uri.clone(),
        crop_url,
    })
}

/// First two principal coordinates of `x`; missing axes are zero.
fn project_2d(x: &Array2<f64>) -> ApiResult<Vec<[f64; 2]>> {
    let n = x.nrows();
    let mut out = vec![[0.0; 2]; n];
    if n < 2 || x.ncols() == 0 {
        return Ok(out);
    }
    let model = pca_fit(x.view(), PcaTarget::Components(2.min(x.ncols())))?;
    if model.status == PcaStatus::ZeroVariance {
        return Ok(out);
    }
    let p = pca_transform(&model, x.view())?;
    for (i, row) in p.rows().into_iter().enumerate() {
        for (d, v) in row.iter().take(2).enumerate() {
            out[i][d] = *v;
        }
    }
    Ok(out)
}

pub fn proposal_view(
    session: &DiscoverySession,
    pending: &PendingIteration,
    crops_dir: &Path,
) -> ApiResult<ProposalView> {
    let ds = session.dataset();
    let state = session.state();
    let p = &pending.proposal;
    let mut ids: Vec<&String> = pending.selection.selected_ids.iter().collect();
    ids.extend(&pending.refill_ids);
    let coords = project_2d(&session.working_features(&ids)?)?;
    let n_easy = pending.selection.selected_ids.len();
    let points = ids
        .iter()
        .zip(coords)
        .enumerate()
        .map(|(i, (id, [x, y]))| {
            let cluster = p.labels.get(i).copied().unwrap_or(0);
            let role = if i >= n_easy {
                PointRole::Refill
            } else if cluster == p.cluster_index {
                PointRole::Proposal
            } else {
                PointRole::Easy
            };
            PointView {
                id: (*id).clone(),
                x,
                y,
                cluster,
                role,
            }
        })
        .collect();
    Ok(ProposalView {
        proposal_id: pending.proposal_id.clone(),
        iteration: state.t + 1,
        silhouette_mean: p.silhouette_mean,
        k: p.k,
        k_clamped: p.k_clamped,
        members: p
            .cluster_members
            .iter()
            .filter_map(|id| member(ds, crops_dir, id))
            .collect(),
        refill_members: p
            .refill_members
            .iter()
            .filter_map(|id| member(ds, crops_dir, id))
            .collect(),
        points,
        all_clusters: p.all_clusters.clone(),
        suggested_labels: state.refill_bag.keys().cloned().collect(),
        pool_size: state.unlabeled_pool.len(),
        n_easy,
        n_refill: pending.refill_ids.len(),
    })
}
