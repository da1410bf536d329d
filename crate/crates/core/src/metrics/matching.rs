use alloc::vec;
use alloc::vec::Vec;

use crate::community::Partition;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Minimum-cost perfect assignment on a square cost matrix (Kuhn–Munkres
/// with potentials, `O(n³)`). Returns the column assigned to each row.
pub fn hungarian(cost: &Matrix) -> Result<Vec<usize>> {
    let n = cost.rows();
    if cost.cols() != n {
        return Err(Error::DimensionMismatch { context: "assignment cost", expected: n, found: cost.cols() });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // 1-based arrays; p[j] is the row matched to column j.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    Ok(assignment)
}

/// `|A ∩ B| / |A ∪ B|` between every module pair.
pub fn iou_matrix(a: &Partition, b: &Partition) -> Result<Matrix> {
    if a.d() != b.d() {
        return Err(Error::DimensionMismatch { context: "partition", expected: a.d(), found: b.d() });
    }
    let mut inter = Matrix::zeros(a.k(), b.k());
    for i in 0..a.d() {
        let (x, y) = (a.module_of(i), b.module_of(i));
        inter.set(x, y, inter.get(x, y) + 1.0);
    }
    let (sa, sb) = (a.sizes(), b.sizes());
    let mut iou = inter.clone();
    for x in 0..a.k() {
        for y in 0..b.k() {
            let i = inter.get(x, y);
            iou.set(x, y, i / (sa[x] as f64 + sb[y] as f64 - i));
        }
    }
    Ok(iou)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleMatching {
    /// `(reference module, other module, IoU)` for matched real pairs.
    pub pairs: Vec<(usize, usize, f64)>,
    pub mean_iou: f64,
}

/// Optimal one-to-one matching on `1 − IoU`, padding the smaller side with
/// zero-IoU dummies.
pub fn match_modules(reference: &Partition, other: &Partition) -> Result<ModuleMatching> {
    let iou = iou_matrix(reference, other)?;
    let (ka, kb) = (reference.k(), other.k());
    let n = ka.max(kb);
    let mut cost = Matrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            let v = if x < ka && y < kb { iou.get(x, y) } else { 0.0 };
            cost.set(x, y, 1.0 - v);
        }
    }
    let assignment = hungarian(&cost)?;
    let pairs: Vec<(usize, usize, f64)> = (0..ka)
        .filter(|&x| assignment[x] < kb)
        .map(|x| (x, assignment[x], iou.get(x, assignment[x])))
        .collect();
    let mean_iou = if pairs.is_empty() { 0.0 } else { pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64 };
    Ok(ModuleMatching { pairs, mean_iou })
}
