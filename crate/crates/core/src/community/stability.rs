//! Hyperparameter selection by module stability under a modularity floor.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::graph::Sparsifier;
use crate::matrix::Matrix;
use crate::metrics::stability::{msi, Perturbation};
use crate::pipeline::{self, PipelineConfig};
use crate::rng;

pub const DEFAULT_Q_FLOOR: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SettingResult {
    pub k: usize,
    pub resolution: f64,
    pub msi: f64,
    pub msi_ci: (f64, f64),
    /// `Q(γ)` of the full-data partition; `None` for an edgeless graph.
    pub q: Option<f64>,
    pub modules: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StabilityReport {
    pub grid: Vec<SettingResult>,
    pub selected: usize,
    pub q_floor: f64,
}

impl StabilityReport {
    pub fn selected(&self) -> &SettingResult {
        &self.grid[self.selected]
    }
}

fn with_k(cfg: &PipelineConfig, k: usize, gamma: f64) -> PipelineConfig {
    let mut c = cfg.clone();
    c.graph.sparsifier = match cfg.graph.sparsifier {
        Sparsifier::TopK(_) => Sparsifier::TopK(k),
        Sparsifier::MutualTopK(_) => Sparsifier::MutualTopK(k),
        s @ Sparsifier::Threshold(_) => s,
    };
    c.resolution = gamma;
    c
}

/// Evaluates MSI over the `ks × resolutions` grid and selects the most
/// stable setting with `Q ≥ q_floor`; ties go to larger `Q`, then smaller `k`.
#[allow(clippy::too_many_arguments)]
pub fn stability_sweep(
    phi: &Matrix,
    ks: &[usize],
    resolutions: &[f64],
    base: &PipelineConfig,
    perturbation: Perturbation,
    t: usize,
    q_floor: f64,
    seed: u64,
) -> Result<StabilityReport> {
    if ks.is_empty() || resolutions.is_empty() {
        return Err(invalid("stability grid is empty"));
    }
    if t < 10 {
        return Err(invalid("stability sweep needs at least 10 resamples"));
    }
    let mut grid = Vec::with_capacity(ks.len() * resolutions.len());
    for &k in ks {
        for &gamma in resolutions {
            let cfg = with_k(base, k, gamma);
            let index = grid.len() as u64;
            let m = msi(phi, &cfg, perturbation, t, rng::derive(seed, index))?;
            let out = pipeline::PipelineOutput { graph: pipeline::build_graph(phi, &cfg)?, partition: m.reference.clone() };
            grid.push(SettingResult {
                k,
                resolution: gamma,
                msi: m.msi,
                msi_ci: m.ci,
                q: out.modularity(gamma),
                modules: m.reference.k(),
            });
        }
    }
    let mut selected: Option<usize> = None;
    for (i, s) in grid.iter().enumerate() {
        let Some(q) = s.q else { continue };
        if q < q_floor {
            continue;
        }
        let better = match selected {
            None => true,
            Some(j) => {
                let b = &grid[j];
                let bq = b.q.unwrap_or(f64::NEG_INFINITY);
                s.msi > b.msi || (s.msi == b.msi && (q > bq || (q == bq && s.k < b.k)))
            }
        };
        if better {
            selected = Some(i);
        }
    }
    match selected {
        Some(selected) => Ok(StabilityReport { grid, selected, q_floor }),
        None => Err(Error::NoSettingMeetsFloor {
            floor: q_floor,
            best_q: grid.iter().filter_map(|s| s.q).fold(f64::NEG_INFINITY, f64::max),
        }),
    }
}
