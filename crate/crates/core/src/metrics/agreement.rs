use alloc::collections::BTreeMap;

use crate::community::Partition;
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Agreement {
    pub ari: f64,
    /// Normalized by the arithmetic mean of the two entropies.
    pub nmi: f64,
    pub vi: f64,
}

fn entropy(sizes: &[usize], n: f64) -> f64 {
    sizes.iter().filter(|&&c| c > 0).map(|&c| { let p = c as f64 / n; -p * math::ln(p) }).sum()
}

/// ARI (pair counting), NMI and VI (natural log).
pub fn partition_agreement(p1: &Partition, p2: &Partition) -> Result<Agreement> {
    if p1.d() != p2.d() {
        return Err(Error::DimensionMismatch { context: "partition", expected: p1.d(), found: p2.d() });
    }
    if p1 == p2 {
        return Ok(Agreement { ari: 1.0, nmi: 1.0, vi: 0.0 });
    }
    let n = p1.d() as f64;
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for i in 0..p1.d() {
        *table.entry((p1.module_of(i), p2.module_of(i))).or_insert(0) += 1;
    }
    let (a, b) = (p1.sizes(), p2.sizes());
    let index: f64 = table.values().map(|&c| math::comb2(c)).sum();
    let sum_a: f64 = a.iter().map(|&c| math::comb2(c)).sum();
    let sum_b: f64 = b.iter().map(|&c| math::comb2(c)).sum();
    let expected = sum_a * sum_b / math::comb2(p1.d());
    let max_index = 0.5 * (sum_a + sum_b);
    let ari = if max_index == expected { 0.0 } else { (index - expected) / (max_index - expected) };

    let (h1, h2) = (entropy(&a, n), entropy(&b, n));
    let mut mi = 0.0;
    for (&(x, y), &c) in &table {
        let pxy = c as f64 / n;
        mi += pxy * math::ln(pxy * n * n / (a[x] as f64 * b[y] as f64));
    }
    let mi = mi.max(0.0);
    let nmi = if h1 + h2 == 0.0 { 1.0 } else { (2.0 * mi / (h1 + h2)).min(1.0) };
    let vi = (h1 + h2 - 2.0 * mi).max(0.0);
    Ok(Agreement { ari, nmi, vi })
}
