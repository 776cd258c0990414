use super::Candidate;
use crate::{Error, Result};

/// Append a scene descriptor to a candidate's object features.
pub fn concat_scene_features(cand: &Candidate, scene: &[f64]) -> Result<Candidate> {
    if scene.is_empty() {
        return Err(Error::invalid("scene feature vector is empty"));
    }
    if scene.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("scene features"));
    }
    let mut out = cand.clone();
    out.features.extend_from_slice(scene);
    Ok(out)
}
