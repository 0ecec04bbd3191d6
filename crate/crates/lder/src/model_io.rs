//! Model files: `{"n": …, "r1": …, "r2": …, "alpha": […]}` with `alpha` in the
//! flat block layout.

use std::path::Path;

use lder_core::{LDerParams, ModelDims};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub n: usize,
    pub r1: usize,
    pub r2: usize,
    pub alpha: Vec<f64>,
}

impl ModelFile {
    pub fn from_params(p: &LDerParams) -> Self {
        let d = p.dims();
        ModelFile {
            n: d.n,
            r1: d.r1,
            r2: d.r2,
            alpha: p.flatten(),
        }
    }

    pub fn into_params(self) -> Result<LDerParams> {
        let dims = ModelDims::new(self.n, self.r1, self.r2)?;
        if self.alpha.len() != dims.flat_len() {
            return Err(Error::Format(format!(
                "model alpha has {} entries, expected (r1 + r2)(n + 1) = {}",
                self.alpha.len(),
                dims.flat_len()
            )));
        }
        Ok(LDerParams::unflatten(self.alpha, dims)?)
    }
}

pub fn model_to_json(p: &LDerParams) -> String {
    serde_json::to_string_pretty(&ModelFile::from_params(p)).expect("model serializes")
}

pub fn model_from_json(s: &str) -> Result<LDerParams> {
    serde_json::from_str::<ModelFile>(s)?.into_params()
}

pub fn save_model(path: impl AsRef<Path>, p: &LDerParams) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(p)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LDerParams> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&s)
}
