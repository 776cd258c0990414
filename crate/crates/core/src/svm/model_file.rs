use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BinarySvmModel, OneClassSvmModel};
use crate::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SvmModel {
    Binary(BinarySvmModel),
    OneClass(OneClassSvmModel),
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        match self {
            SvmModel::Binary(m) => m.dim,
            SvmModel::OneClass(m) => m.dim,
        }
    }
}

/// Portable JSON document holding one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub feature_dim: usize,
    pub model: SvmModel,
}

impl ModelFile {
    pub fn new(model: SvmModel) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            feature_dim: model.dim(),
            model,
        }
    }

    pub fn binary(&self) -> Option<&BinarySvmModel> {
        match &self.model {
            SvmModel::Binary(m) => Some(m),
            SvmModel::OneClass(_) => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        if file.feature_dim != file.model.dim() {
            return Err(Error::DimensionMismatch {
                expected: file.feature_dim,
                got: file.model.dim(),
            });
        }
        Ok(file)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}
