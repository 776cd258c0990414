//! Candidate / ground-truth data model and everything that prepares a
//! dataset for a discovery run.

mod io;
mod overlap;
mod scene;
mod split;
mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, NO_OBJECT};

pub use io::{
    read_candidates, read_ground_truth, validate_candidates_file, validate_ground_truth_file,
    write_candidates, write_ground_truth, Diagnostic, ValidationSummary,
};
pub use overlap::{annotate_candidates, overlap_score};
pub use scene::concat_scene_features;
pub use split::make_split;
pub use synth::{synth_generate, BetaParams, SynthConfig};

/// Axis-aligned rectangle in pixel coordinates. Areas are continuous (`w * h`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BoundingBox { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let BoundingBox { x, y, w, h } = *self;
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("bounding box"));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::invalid(format!("box has non-positive size {w}x{h}")));
        }
        if x < 0.0 || y < 0.0 {
            return Err(Error::invalid(format!("box origin ({x}, {y}) is negative")));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

/// One object proposal: a window with its objectness score and feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub objectness: f64,
    pub features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_features: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop_uri: Option<String>,
}

impl Candidate {
    pub fn is_no_object(&self) -> bool {
        self.gt_class.as_deref() == Some(NO_OBJECT)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    #[serde(rename = "class")]
    pub class_name: String,
}

impl GroundTruthObject {
    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        if self.class_name.trim().is_empty() {
            return Err(Error::invalid("ground-truth class name is empty"));
        }
        if self.class_name == NO_OBJECT {
            return Err(Error::invalid(format!(
                "ground-truth class name \"{NO_OBJECT}\" is reserved"
            )));
        }
        Ok(())
    }
}

/// Ground-truth matching parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// A candidate hits a ground-truth box when their overlap strictly exceeds this.
    pub os_threshold: f64,
    /// Reject candidates from images that carry no ground truth at all.
    #[serde(default)]
    pub strict: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            os_threshold: 0.5,
            strict: false,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.os_threshold > 0.0 && self.os_threshold <= 1.0) {
            return Err(Error::invalid(format!(
                "os_threshold must lie in (0, 1], got {}",
                self.os_threshold
            )));
        }
        Ok(())
    }
}

/// Partition of a dataset into the labeled refill bag and the unlabeled pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub refill_bag_ids: Vec<String>,
    pub unlabeled_pool_ids: Vec<String>,
    pub heldout_classes: BTreeSet<String>,
    pub class_holdout_frac: f64,
    pub refill_frac: f64,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn read(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Check the split against the dataset it was made from.
    pub fn check(&self, dataset: &Dataset) -> Result<()> {
        let mut seen = BTreeSet::new();
        for id in self.refill_bag_ids.iter().chain(&self.unlabeled_pool_ids) {
            if dataset.index_of(id).is_none() {
                return Err(Error::invalid(format!("split references unknown candidate {id}")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("candidate {id} appears twice in the split")));
            }
        }
        for id in &self.refill_bag_ids {
            let cand = dataset.get(id).expect("checked above");
            match cand.gt_class.as_deref() {
                None => {
                    return Err(Error::invalid(format!("refill candidate {id} is unannotated")))
                }
                Some(c) if self.heldout_classes.contains(c) => {
                    return Err(Error::invalid(format!(
                        "refill candidate {id} belongs to held-out class {c}"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_images: usize,
    pub w_per_image: usize,
    pub n_candidates: usize,
    pub n_gt: usize,
    pub dim: usize,
    pub class_histogram: BTreeMap<String, usize>,
}

/// Candidates and ground truth of one dataset, with an id index.
///
/// All candidates share one feature dimension.
#[derive(Debug, Clone)]
pub struct Dataset {
    candidates: Vec<Candidate>,
    ground_truth: Vec<GroundTruthObject>,
    index: HashMap<String, usize>,
    dim: usize,
}

impl Dataset {
    pub fn new(candidates: Vec<Candidate>, ground_truth: Vec<GroundTruthObject>) -> Result<Self> {
        let dim = candidates.first().map_or(0, |c| c.features.len());
        let mut index = HashMap::with_capacity(candidates.len());
        for (i, c) in candidates.iter().enumerate() {
            if c.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.features.len(),
                });
            }
            if dim == 0 {
                return Err(Error::invalid("candidate feature vectors are empty"));
            }
            if c.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("candidate features"));
            }
            if !(0.0..=1.0).contains(&c.objectness) {
                return Err(Error::invalid(format!(
                    "candidate {} has objectness {} outside [0, 1]",
                    c.id, c.objectness
                )));
            }
            c.bbox.validate()?;
            if index.insert(c.id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate candidate id {}", c.id)));
            }
        }
        let mut classes = BTreeSet::new();
        for gt in &ground_truth {
            gt.validate()?;
            classes.insert(gt.class_name.as_str());
        }
        if !ground_truth.is_empty() {
            for c in &candidates {
                if let Some(cls) = c.gt_class.as_deref() {
                    if cls != NO_OBJECT && !classes.contains(cls) {
                        return Err(Error::invalid(format!(
                            "candidate {} is annotated with unknown class {cls}",
                            c.id
                        )));
                    }
                }
            }
        }
        Ok(Dataset {
            candidates,
            ground_truth,
            index,
            dim,
        })
    }

    /// Load a candidate file and an optional ground-truth file, annotating
    /// candidates when ground truth is present.
    pub fn load(
        candidates: impl AsRef<std::path::Path>,
        ground_truth: Option<&std::path::Path>,
        cfg: &MatchConfig,
    ) -> Result<Self> {
        let cands = read_candidates(candidates)?;
        match ground_truth {
            Some(path) => {
                let gts = read_ground_truth(path)?;
                let cands = annotate_candidates(&cands, &gts, cfg)?;
                Dataset::new(cands, gts)
            }
            None => Dataset::new(cands, Vec::new()),
        }
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn ground_truth(&self) -> &[GroundTruthObject] {
        &self.ground_truth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Candidate> {
        self.index_of(id).map(|i| &self.candidates[i])
    }

    pub fn is_annotated(&self) -> bool {
        self.candidates.iter().all(|c| c.gt_class.is_some())
    }

    /// Replace every candidate's features by object features followed by its
    /// own scene features.
    pub fn with_scene_features(&self) -> Result<Self> {
        let mut out = Vec::with_capacity(self.candidates.len());
        for c in &self.candidates {
            let scene = c.scene_features.as_ref().ok_or_else(|| {
                Error::invalid(format!("candidate {} has no scene_features", c.id))
            })?;
            out.push(concat_scene_features(c, scene)?);
        }
        Dataset::new(out, self.ground_truth.clone())
    }

    /// Feature rows for the given ids, in order.
    pub fn feature_matrix<S: AsRef<str>>(&self, ids: &[S]) -> Result<Array2<f64>> {
        let mut m = Array2::zeros((ids.len(), self.dim));
        for (r, id) in ids.iter().enumerate() {
            let c = self
                .get(id.as_ref())
                .ok_or_else(|| Error::invalid(format!("unknown candidate {}", id.as_ref())))?;
            m.row_mut(r)
                .iter_mut()
                .zip(&c.features)
                .for_each(|(dst, &v)| *dst = v);
        }
        Ok(m)
    }

    pub fn stats(&self) -> DatasetStats {
        let mut per_image: HashMap<&str, usize> = HashMap::new();
        let mut class_histogram = BTreeMap::new();
        for c in &self.candidates {
            *per_image.entry(c.image_id.as_str()).or_default() += 1;
            if let Some(cls) = &c.gt_class {
                *class_histogram.entry(cls.clone()).or_default() += 1;
            }
        }
        let mut images: BTreeSet<&str> = per_image.keys().copied().collect();
        images.extend(self.ground_truth.iter().map(|g| g.image_id.as_str()));
        DatasetStats {
            n_images: images.len(),
            w_per_image: per_image.values().copied().max().unwrap_or(0),
            n_candidates: self.candidates.len(),
            n_gt: self.ground_truth.len(),
            dim: self.dim,
            class_histogram,
        }
    }
}
