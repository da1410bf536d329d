//! `model.json`: the built-in models that can be stored next to a run.

use std::path::Path;

use moi_core::interventions::Predictor;
use moi_core::synthetic::{linear_shap, LinearModel, TreeEnsemble};
use moi_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{MoiError, Result};
use crate::formats::{read_bytes, write_bytes};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoredModel {
    Ridge(LinearModel),
    TreeEnsemble(TreeEnsemble),
}

impl Predictor for StoredModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            Self::Ridge(m) => m.predict_row(x),
            Self::TreeEnsemble(m) => m.predict_row(x),
        }
    }
}

impl StoredModel {
    pub fn n_features(&self) -> Option<usize> {
        match self {
            Self::Ridge(m) => Some(m.weights.len()),
            Self::TreeEnsemble(_) => None,
        }
    }

    /// Exact attributions against `background`, where the model admits them.
    pub fn attribute(&self, x: &Matrix, background: &Matrix) -> Option<Result<Matrix>> {
        match self {
            Self::Ridge(m) => Some(linear_shap(m, x, background).map_err(MoiError::from)),
            Self::TreeEnsemble(_) => None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_slice(&read_bytes(path)?).map_err(|e| MoiError::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &crate::artifacts::json_bytes(self)?)
    }
}
