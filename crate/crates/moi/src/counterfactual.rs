//! Two-pass ablation for external models: write counterfactual inputs, let
//! the model score them, then read the predictions back.

use std::path::{Path, PathBuf};

use moi_core::community::Partition;
use moi_core::interventions::{drop_from_predictions, intervene, EvalMetric, InterventionPolicy};
use moi_core::rng;
use serde::{Deserialize, Serialize};

use crate::artifacts::json_bytes;
use crate::error::{MoiError, Result};
use crate::formats::{read_bytes, read_predictions, write_bytes, write_table, Table};

pub const MANIFEST: &str = "manifest.json";
pub const ORIGINAL: &str = "X.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub file: String,
    #[serde(rename = "R")]
    pub r: usize,
    pub policy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub original: String,
    pub modules: Vec<ManifestEntry>,
    pub seed: u64,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_slice(&read_bytes(path)?).map_err(|e| MoiError::format(path, e.to_string()))
    }
}

/// `X.csv` → `X.prediction.csv`.
pub fn prediction_file(file: &str) -> String {
    let stem = file.strip_suffix(".csv").unwrap_or(file);
    format!("{stem}.prediction.csv")
}

/// Writes the original data, one counterfactual CSV per module and the
/// manifest. Module `m` draws with seed `derive(policy.seed, m)`; row
/// `s·R + r` of a counterfactual file is draw `r` of instance `s`.
pub fn emit_counterfactuals(x: &Table, partition: &Partition, policy: &InterventionPolicy, out_dir: &Path) -> Result<Manifest> {
    if partition.d() != x.names.len() {
        return Err(MoiError::Data(format!("modules cover {} features, data has {}", partition.d(), x.names.len())));
    }
    policy.validate()?;
    write_table(&out_dir.join(ORIGINAL), &x.names, x.ids.as_deref(), &x.values)?;
    let r = policy.effective_draws();
    let ids: Option<Vec<String>> = x.ids.as_ref().map(|ids| ids.iter().flat_map(|id| (0..r).map(move |k| format!("{id}#{k}"))).collect());
    let mut entries = Vec::new();
    for (m, members) in partition.modules().iter().enumerate() {
        let p = InterventionPolicy { seed: rng::derive(policy.seed, m as u64), ..*policy };
        let cf = intervene(&x.values, members, &p, &x.values)?;
        let file = format!("module_{m}.csv");
        write_table(&out_dir.join(&file), &x.names, ids.as_deref(), &cf)?;
        entries.push(ManifestEntry { id: m, file, r, policy: policy.name().into() });
    }
    let manifest = Manifest { original: ORIGINAL.into(), modules: entries, seed: policy.seed };
    write_bytes(&out_dir.join(MANIFEST), &json_bytes(&manifest)?)?;
    Ok(manifest)
}

fn predictions_for(dir: &Path, file: &str, what: &str) -> Result<Vec<f64>> {
    let path: PathBuf = dir.join(prediction_file(file));
    if !path.exists() {
        return Err(MoiError::Data(format!("{what}: missing predictions file {}", path.display())));
    }
    read_predictions(&path)
}

/// Per-module drops from predictions stored next to the manifest files
/// (or in `predictions_dir`).
pub fn ingest_predictions(
    manifest: &Manifest,
    predictions_dir: &Path,
    metric: EvalMetric,
    y: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let original = predictions_for(predictions_dir, &manifest.original, "original data")?;
    manifest
        .modules
        .iter()
        .map(|e| {
            let what = format!("module {}", e.id);
            let cf = predictions_for(predictions_dir, &e.file, &what)?;
            if cf.len() != original.len() * e.r {
                return Err(MoiError::Data(format!(
                    "{what}: expected {} predictions ({} instances x R={}), found {}",
                    original.len() * e.r,
                    original.len(),
                    e.r,
                    cf.len()
                )));
            }
            drop_from_predictions(&original, &cf, e.r, y, metric).map_err(|err| MoiError::Data(format!("{what}: {err}")))
        })
        .collect()
}
