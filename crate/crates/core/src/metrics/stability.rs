//! Module Stability Index: mean IoU of Hungarian-matched modules between a
//! reference partition and partitions of perturbed reruns.

use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::matching::match_modules;
use crate::attribution::WorkingMatrix;
use crate::community::{ConsensusMatrix, Partition};
use crate::error::{invalid, Result};
use crate::math;
use crate::matrix::Matrix;
use crate::par;
use crate::pipeline::{self, PipelineConfig};
use crate::rng;

pub const DEFAULT_MSI_RUNS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Perturbation {
    /// Rerun on the unperturbed data.
    Identity,
    /// Resample rows of `Φ` (with replacement, or without replacement at
    /// `subsample` rate), then optionally add `N(0, σ²)` noise to `A`.
    Resample { subsample: Option<f64>, noise_sigma: f64 },
    /// Replace `A` by i.i.d. standard normal noise of the same shape.
    FreshNoise,
}

impl Perturbation {
    pub fn bootstrap() -> Self {
        Self::Resample { subsample: None, noise_sigma: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsiResult {
    pub msi: f64,
    pub ci: (f64, f64),
    pub per_run: Vec<f64>,
    pub consensus: ConsensusMatrix,
    pub reference: Partition,
}

fn perturbed_working(phi: &Matrix, cfg: &PipelineConfig, perturbation: Perturbation, seed: u64) -> Result<WorkingMatrix> {
    let mut rng = rng::rng(seed);
    let (n, d) = (phi.rows(), phi.cols());
    match perturbation {
        Perturbation::Identity => pipeline::working_matrix(phi, cfg),
        Perturbation::FreshNoise => {
            let data = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
            Ok(WorkingMatrix::raw(Matrix::from_vec(n, d, data)?))
        }
        Perturbation::Resample { subsample, noise_sigma } => {
            let rows: Vec<usize> = match subsample {
                None => (0..n).map(|_| rng.random_range(0..n)).collect(),
                Some(rate) => {
                    let m = ((rate * n as f64) as usize).clamp(2, n);
                    let mut r = index::sample(&mut rng, n, m).into_vec();
                    r.sort_unstable();
                    r
                }
            };
            let mut a = pipeline::working_matrix(&phi.select_rows(&rows), cfg)?;
            if noise_sigma > 0.0 {
                for v in a.values.as_mut_slice() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += noise_sigma * z;
                }
            }
            Ok(a)
        }
    }
}

/// MSI of `cfg` on `phi` over `t` perturbed reruns. Community detection
/// keeps `cfg.comm_seed` in every run; perturbation streams derive from
/// `(seed, run)`.
pub fn msi(phi: &Matrix, cfg: &PipelineConfig, perturbation: Perturbation, t: usize, seed: u64) -> Result<MsiResult> {
    if t < 2 {
        return Err(invalid("MSI needs at least 2 repetitions"));
    }
    if let Perturbation::Resample { subsample: Some(r), noise_sigma } = perturbation {
        if !(r > 0.0 && r <= 1.0) {
            return Err(invalid("subsample rate must lie in (0, 1]"));
        }
        if !(noise_sigma >= 0.0) {
            return Err(invalid("noise sigma must be nonnegative"));
        }
    }
    let reference = pipeline::run(phi, cfg)?.partition;
    let runs: Vec<Result<Partition>> = par::map_indexed(t, |run| {
        let a = perturbed_working(phi, cfg, perturbation, rng::derive(seed, run as u64))?;
        Ok(pipeline::run_on_working(&a, cfg)?.partition)
    });
    let runs: Vec<Partition> = runs.into_iter().collect::<Result<_>>()?;
    let per_run: Vec<f64> = runs.iter().map(|p| match_modules(&reference, p).map(|m| m.mean_iou)).collect::<Result<_>>()?;
    let consensus = ConsensusMatrix::from_partitions(phi.cols(), &runs)?;
    Ok(MsiResult {
        msi: math::mean(&per_run),
        ci: math::percentile_interval(&per_run, 0.05),
        per_run,
        consensus,
        reference,
    })
}
