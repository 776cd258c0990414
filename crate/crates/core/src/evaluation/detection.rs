use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::{overlap_score, Candidate, GroundTruthObject, MatchConfig};
use crate::Result;

pub const DEFAULT_TOP_W: usize = 50;

/// False-positive share and detection rate of a candidate file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub top_w: Option<usize>,
    /// Candidates kept after per-image truncation.
    pub n_candidates: usize,
    pub n_gt: usize,
    /// Percentage of kept candidates hitting no ground-truth box; absent without candidates.
    pub no_pct: Option<f64>,
    /// Percentage of ground-truth boxes hit by a kept candidate; absent without ground truth.
    pub dr: Option<f64>,
}

/// Keep the `top_w` highest-objectness candidates of each image (all when
/// `None`; equal scores keep file order), then match them against the
/// ground truth of their image.
pub fn detection_metrics(
    cands: &[Candidate],
    gts: &[GroundTruthObject],
    cfg: &MatchConfig,
    top_w: Option<usize>,
) -> Result<DetectionReport> {
    cfg.validate()?;
    let mut gt_by_image: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        g.validate()?;
        gt_by_image.entry(g.image_id.as_str()).or_default().push(i);
    }
    let mut by_image: BTreeMap<&str, Vec<&Candidate>> = BTreeMap::new();
    for c in cands {
        by_image.entry(c.image_id.as_str()).or_default().push(c);
    }

    let mut hit_gt = vec![false; gts.len()];
    let mut kept = 0usize;
    let mut misses = 0usize;
    for (image, mut list) in by_image {
        list.sort_by(|a, b| b.objectness.total_cmp(&a.objectness));
        if let Some(w) = top_w {
            list.truncate(w);
        }
        let image_gts = gt_by_image.get(image).map_or(&[][..], Vec::as_slice);
        for c in list {
            kept += 1;
            let mut any = false;
            for &g in image_gts {
                if overlap_score(&c.bbox, &gts[g].bbox) > cfg.os_threshold {
                    hit_gt[g] = true;
                    any = true;
                }
            }
            misses += usize::from(!any);
        }
    }
    let pct = |a: usize, b: usize| (b > 0).then(|| 100.0 * a as f64 / b as f64);
    Ok(DetectionReport {
        top_w,
        n_candidates: kept,
        n_gt: gts.len(),
        no_pct: pct(misses, kept),
        dr: pct(hit_gt.iter().filter(|&&h| h).count(), gts.len()),
    })
}
