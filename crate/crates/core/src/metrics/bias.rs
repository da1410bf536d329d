use alloc::vec::Vec;

use rand::Rng as _;

use super::fairness::GroupLabels;
use super::modules::ModuleAttributions;
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::par;
use crate::rng;

pub const DEFAULT_BEI_EPS: f64 = 1e-6;
pub const DEFAULT_BOOTSTRAPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BeiEstimate {
    pub bei: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// `|mean_a − mean_b| / (s_pool + eps)`, maximized over group pairs.
fn bei_of(values: &[f64], groups: &[Vec<usize>], eps: f64) -> f64 {
    let stats: Vec<(f64, f64, usize)> = groups
        .iter()
        .map(|rows| {
            let xs: Vec<f64> = rows.iter().map(|&r| values[r]).collect();
            (math::mean(&xs), math::sample_variance(&xs), xs.len())
        })
        .collect();
    let mut best = 0.0f64;
    for a in 0..stats.len() {
        for b in (a + 1)..stats.len() {
            let (ma, va, na) = stats[a];
            let (mb, vb, nb) = stats[b];
            let pooled = ((na - 1) as f64 * va + (nb - 1) as f64 * vb) / (na + nb - 2) as f64;
            best = best.max(math::abs(ma - mb) / (math::sqrt(pooled) + eps));
        }
    }
    best
}

/// Bias exposure per module with a percentile bootstrap CI. Resampling is
/// stratified by group so every group keeps its size.
pub fn bias_exposure(
    psi: &ModuleAttributions,
    labels: &GroupLabels,
    eps: f64,
    bootstraps: usize,
    seed: u64,
) -> Result<Vec<BeiEstimate>> {
    let n = psi.psi.rows();
    if labels.n() != n {
        return Err(Error::DimensionMismatch { context: "group labels", expected: n, found: labels.n() });
    }
    if !(eps >= 0.0) {
        return Err(invalid("bei_eps must be nonnegative"));
    }
    let groups: Vec<Vec<usize>> = labels.groups().into_values().collect();
    if groups.len() < 2 {
        return Err(invalid("bias exposure needs at least two groups"));
    }
    if let Some((name, _)) = labels.groups().into_iter().find(|(_, rows)| rows.len() < 2) {
        return Err(invalid(alloc::format!("group {name} has fewer than 2 instances")));
    }
    let columns: Vec<Vec<f64>> = (0..psi.k()).map(|m| psi.column(m)).collect();
    let point: Vec<f64> = columns.iter().map(|c| bei_of(c, &groups, eps)).collect();
    let boot: Vec<Vec<f64>> = par::map_indexed(bootstraps, |b| {
        let mut rng = rng::child(seed, b as u64);
        let resampled: Vec<Vec<usize>> = groups
            .iter()
            .map(|rows| (0..rows.len()).map(|_| rows[rng.random_range(0..rows.len())]).collect())
            .collect();
        columns.iter().map(|c| bei_of(c, &resampled, eps)).collect()
    });
    Ok(point
        .iter()
        .enumerate()
        .map(|(m, &bei)| {
            let draws: Vec<f64> = boot.iter().map(|b| b[m]).collect();
            let (lo, hi) = if draws.is_empty() { (bei, bei) } else { math::percentile_interval(&draws, 0.05) };
            BeiEstimate { bei, ci_low: lo, ci_high: hi }
        })
        .collect())
}
