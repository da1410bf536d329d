use alloc::vec::Vec;

use crate::community::Partition;
use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;

/// Per-instance module attributions `Ψ_sM = Σ_{i∈M} Φ_si`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleAttributions {
    pub psi: Matrix,
    pub partition: Partition,
}

impl ModuleAttributions {
    pub fn k(&self) -> usize {
        self.psi.cols()
    }

    pub fn column(&self, m: usize) -> Vec<f64> {
        self.psi.column(m)
    }

    /// Mean of `|ψ(M)|` over instances, per module.
    pub fn mean_abs(&self) -> Vec<f64> {
        (0..self.k()).map(|m| math::mean(&self.column(m).iter().map(|v| math::abs(*v)).collect::<Vec<_>>())).collect()
    }
}

pub fn module_attributions(phi: &Matrix, partition: &Partition) -> Result<ModuleAttributions> {
    if partition.d() != phi.cols() {
        return Err(Error::DimensionMismatch { context: "partition", expected: phi.cols(), found: partition.d() });
    }
    let k = partition.k();
    let mut psi = Matrix::zeros(phi.rows(), k);
    for s in 0..phi.rows() {
        let row = phi.row(s);
        let out = psi.row_mut(s);
        for (i, v) in row.iter().enumerate() {
            out[partition.module_of(i)] += v;
        }
    }
    Ok(ModuleAttributions { psi, partition: partition.clone() })
}

/// Mean `|corr|` over unordered pairs of the module's columns; 0 for a
/// singleton. Constant columns contribute 0.
pub fn redundancy_index(a: &Matrix, members: &[usize]) -> f64 {
    if members.len() < 2 {
        return 0.0;
    }
    let cols: Vec<Option<Vec<f64>>> = members.iter().map(|&i| math::center_unit(&a.column(i))).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for x in 0..cols.len() {
        for y in (x + 1)..cols.len() {
            if let (Some(u), Some(v)) = (&cols[x], &cols[y]) {
                total += math::abs(math::dot(u, v)).min(1.0);
            }
            pairs += 1;
        }
    }
    total / pairs as f64
}
