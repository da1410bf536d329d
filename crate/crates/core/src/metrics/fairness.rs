use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math;

/// Protected-group labels aligned with the rows of `Φ`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupLabels {
    pub group: Vec<String>,
    /// Outcomes; values above 0.5 count as positive.
    pub y: Option<Vec<f64>>,
    pub yhat: Option<Vec<bool>>,
    pub score: Option<Vec<f64>>,
}

impl GroupLabels {
    pub fn new(group: Vec<String>) -> Self {
        Self { group, ..Self::default() }
    }

    pub fn n(&self) -> usize {
        self.group.len()
    }

    /// Row indices per group, keyed and ordered by group name.
    pub fn groups(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, g) in self.group.iter().enumerate() {
            out.entry(g.as_str()).or_default().push(i);
        }
        out
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            group: rows.iter().map(|&r| self.group[r].clone()).collect(),
            y: self.y.as_ref().map(|v| rows.iter().map(|&r| v[r]).collect()),
            yhat: self.yhat.as_ref().map(|v| rows.iter().map(|&r| v[r]).collect()),
            score: self.score.as_ref().map(|v| rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

/// Max pairwise group gaps; `None` when no pair had a defined rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FairnessGaps {
    pub dp_gap: Option<f64>,
    pub eo_tpr_gap: Option<f64>,
    pub eo_fpr_gap: Option<f64>,
}

fn max_pairwise_gap(rates: &[(&str, Option<f64>)], what: &str) -> Option<f64> {
    let mut best: Option<f64> = None;
    for a in 0..rates.len() {
        for b in (a + 1)..rates.len() {
            match (rates[a].1, rates[b].1) {
                (Some(ra), Some(rb)) => {
                    let gap = math::abs(ra - rb);
                    best = Some(best.map_or(gap, |v: f64| v.max(gap)));
                }
                _ => log::warn!("{what} undefined for groups {} / {}; pair skipped", rates[a].0, rates[b].0),
            }
        }
    }
    best
}

fn rate(rows: impl Iterator<Item = bool>) -> Option<f64> {
    let (mut hits, mut total) = (0usize, 0usize);
    for r in rows {
        total += 1;
        hits += r as usize;
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Demographic-parity and equalized-odds gaps, maximized over group pairs.
pub fn fairness_gaps(labels: &GroupLabels) -> Result<FairnessGaps> {
    let yhat = labels.yhat.as_ref().ok_or(Error::MissingLabels("dp_gap"))?;
    if yhat.len() != labels.n() {
        return Err(Error::DimensionMismatch { context: "yhat", expected: labels.n(), found: yhat.len() });
    }
    let groups = labels.groups();
    if groups.len() < 2 {
        return Err(invalid("fairness gaps need at least two groups"));
    }
    let dp: Vec<(&str, Option<f64>)> = groups.iter().map(|(g, rows)| (*g, rate(rows.iter().map(|&r| yhat[r])))).collect();
    let mut out = FairnessGaps { dp_gap: max_pairwise_gap(&dp, "positive rate"), ..Default::default() };
    if let Some(y) = &labels.y {
        if y.len() != labels.n() {
            return Err(Error::DimensionMismatch { context: "y", expected: labels.n(), found: y.len() });
        }
        let cond = |positive: bool| -> Vec<(&str, Option<f64>)> {
            groups
                .iter()
                .map(|(g, rows)| (*g, rate(rows.iter().filter(|&&r| (y[r] > 0.5) == positive).map(|&r| yhat[r]))))
                .collect()
        };
        out.eo_tpr_gap = max_pairwise_gap(&cond(true), "TPR");
        out.eo_fpr_gap = max_pairwise_gap(&cond(false), "FPR");
    }
    Ok(out)
}
