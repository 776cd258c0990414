use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{predict_binary, BinarySvmModel};
use crate::dataset::Candidate;
use crate::{Error, Result};

/// Candidates split by the filter's verdict; nothing is discarded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub kept: Vec<Candidate>,
    pub removed: Vec<Candidate>,
}

/// Keep the candidates predicted 'Object' (+1), in input order.
pub fn filter_no_objects(pool: &[Candidate], model: &BinarySvmModel) -> Result<FilterOutcome> {
    if let Some(c) = pool.iter().find(|c| c.features.len() != model.dim) {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: c.features.len(),
        });
    }
    if pool.is_empty() {
        return Ok(FilterOutcome::default());
    }
    let x = Array2::from_shape_fn((pool.len(), model.dim), |(i, d)| pool[i].features[d]);
    let (labels, _) = predict_binary(model, x.view())?;
    let mut out = FilterOutcome::default();
    for (c, l) in pool.iter().zip(labels) {
        if l > 0 {
            out.kept.push(c.clone());
        } else {
            out.removed.push(c.clone());
        }
    }
    Ok(out)
}
