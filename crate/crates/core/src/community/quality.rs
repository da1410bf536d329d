use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::partition::Partition;
use crate::error::{invalid, Error, Result};
use crate::graph::ExplanationGraph;

fn check(g: &ExplanationGraph, p: &Partition) -> Result<()> {
    if p.d() != g.d() {
        return Err(Error::DimensionMismatch { context: "partition", expected: g.d(), found: p.d() });
    }
    if g.has_negative() {
        return Err(Error::SignedGraph);
    }
    Ok(())
}

/// `Q(γ) = Σ_c [ in_c / 2m − γ (tot_c / 2m)² ]`.
pub fn modularity(g: &ExplanationGraph, p: &Partition, gamma: f64) -> Result<f64> {
    check(g, p)?;
    let strengths = g.strengths();
    let two_m: f64 = strengths.iter().sum();
    if two_m == 0.0 {
        return Err(Error::EmptyGraph);
    }
    let mut inside = vec![0.0; p.k()];
    let mut tot = vec![0.0; p.k()];
    for i in 0..g.d() {
        let c = p.module_of(i);
        tot[c] += strengths[i];
        for &(j, w) in g.neighbors(i) {
            if p.module_of(j) == c {
                inside[c] += w;
            }
        }
    }
    Ok(inside.iter().zip(&tot).map(|(a, t)| a / two_m - gamma * (t / two_m) * (t / two_m)).sum())
}

/// `cut(S, S̄) / min(vol S, vol S̄)`; a zero minimum volume gives 0.
pub fn conductance(g: &ExplanationGraph, s: &[usize]) -> Result<f64> {
    let d = g.d();
    let mut inside = vec![false; d];
    for &i in s {
        if i >= d {
            return Err(invalid(format!("node {i} out of range")));
        }
        inside[i] = true;
    }
    let size = inside.iter().filter(|b| **b).count();
    if size == 0 || size == d {
        return Err(invalid("conductance needs a non-empty proper subset"));
    }
    let (mut cut, mut vol_in, mut vol_out) = (0.0, 0.0, 0.0);
    for i in 0..d {
        for &(j, w) in g.neighbors(i) {
            let w = crate::math::abs(w);
            if inside[i] {
                vol_in += w;
                if !inside[j] {
                    cut += w;
                }
            } else {
                vol_out += w;
            }
        }
    }
    if vol_in == 0.0 && vol_out == 0.0 {
        return Err(invalid("conductance undefined: both sides have zero volume"));
    }
    let min = if vol_in < vol_out { vol_in } else { vol_out };
    Ok(if min == 0.0 { 0.0 } else { cut / min })
}

/// Mean conductance over modules; `None` when no module is a proper subset
/// with defined conductance.
pub fn mean_conductance(g: &ExplanationGraph, p: &Partition) -> Option<f64> {
    let vals: Vec<f64> = p.modules().iter().filter_map(|m| conductance(g, m).ok()).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}
