use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::louvain::louvain;
use super::partition::Partition;
use crate::error::{invalid, Error, Result};
use crate::graph::ExplanationGraph;
use crate::matrix::Matrix;

pub const DEFAULT_CONSENSUS_THRESHOLD: f64 = 0.5;

/// Co-clustering frequencies `C_ij`; symmetric with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusMatrix {
    c: Matrix,
}

impl ConsensusMatrix {
    pub fn new(c: Matrix) -> Result<Self> {
        let d = c.rows();
        if c.cols() != d {
            return Err(Error::DimensionMismatch { context: "consensus matrix", expected: d, found: c.cols() });
        }
        if !c.is_symmetric(0.0) {
            return Err(invalid("consensus matrix must be symmetric"));
        }
        for i in 0..d {
            if c.get(i, i) != 1.0 {
                return Err(invalid(format!("consensus diagonal at {i} must be 1")));
            }
        }
        if c.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("consensus entries must lie in [0, 1]"));
        }
        Ok(Self { c })
    }

    /// `C_ij = (1/T) Σ_t 1[c_i = c_j]`. Integer counts make the result
    /// independent of the order of `runs`.
    pub fn from_partitions(d: usize, runs: &[Partition]) -> Result<Self> {
        if runs.is_empty() {
            return Err(invalid("consensus needs at least one partition"));
        }
        let mut counts = vec![0u32; d * d];
        for p in runs {
            if p.d() != d {
                return Err(Error::DimensionMismatch { context: "consensus partition", expected: d, found: p.d() });
            }
            for members in p.modules() {
                for &i in &members {
                    for &j in &members {
                        counts[i * d + j] += 1;
                    }
                }
            }
        }
        let t = runs.len() as f64;
        let data: Vec<f64> = counts.iter().map(|&c| c as f64 / t).collect();
        Ok(Self { c: Matrix::from_vec(d, d, data)? })
    }

    pub fn d(&self) -> usize {
        self.c.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c.get(i, j)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.c
    }
}

/// Louvain at `γ = 1` on the graph of pairs with `C_ij ≥ threshold`.
pub fn consensus_partition(c: &ConsensusMatrix, threshold: f64, seed: u64) -> Result<Partition> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(invalid(format!("consensus threshold must lie in (0, 1), found {threshold}")));
    }
    let d = c.d();
    let mut edges = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = c.get(i, j);
            if v >= threshold && v > 0.0 {
                edges.push((i, j, v));
            }
        }
    }
    louvain(&ExplanationGraph::from_edges(d, &edges)?, 1.0, seed)
}
