//! Module interventions, ablation drops and cross-module synergy.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::community::Partition;
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::matrix::Matrix;
use crate::metrics::{fairness_gaps, module_attributions, GroupLabels};
use crate::par;
use crate::rng;

pub const DEFAULT_DRAWS: usize = 8;

/// Anything that scores a feature row.
pub trait Predictor: Sync {
    fn predict_row(&self, x: &[f64]) -> f64;

    fn predict(&self, x: &Matrix) -> Vec<f64> {
        par::map_indexed(x.rows(), |s| self.predict_row(x.row(s)))
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Predictor for F {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum PolicyKind {
    HardMarginal,
    ConditionalKnn { donor_k: usize },
    SoftAttenuate { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InterventionPolicy {
    pub kind: PolicyKind,
    /// Counterfactual draws per instance; forced to 1 for soft attenuation.
    pub draws: usize,
    pub seed: u64,
}

impl InterventionPolicy {
    pub fn hard(draws: usize, seed: u64) -> Self {
        Self { kind: PolicyKind::HardMarginal, draws, seed }
    }

    pub fn knn(donor_k: usize, draws: usize, seed: u64) -> Self {
        Self { kind: PolicyKind::ConditionalKnn { donor_k }, draws, seed }
    }

    pub fn soft(delta: f64) -> Self {
        Self { kind: PolicyKind::SoftAttenuate { delta }, draws: 1, seed: 0 }
    }

    pub fn effective_draws(&self) -> usize {
        match self.kind {
            PolicyKind::SoftAttenuate { .. } => 1,
            _ => self.draws,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            PolicyKind::HardMarginal => "hard_marginal",
            PolicyKind::ConditionalKnn { .. } => "conditional_knn",
            PolicyKind::SoftAttenuate { .. } => "soft_attenuate",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            PolicyKind::SoftAttenuate { delta } if !(0.0..=1.0).contains(&delta) => {
                Err(invalid(format!("delta must lie in [0, 1], found {delta}")))
            }
            PolicyKind::ConditionalKnn { donor_k: 0 } => Err(invalid("donor_k must be at least 1")),
            _ if self.draws == 0 => Err(invalid("draws must be at least 1")),
            _ => Ok(()),
        }
    }
}

fn check_module(module: &[usize], p: usize) -> Result<()> {
    if module.is_empty() {
        return Err(invalid("intervention module is empty"));
    }
    if let Some(&bad) = module.iter().find(|&&i| i >= p) {
        return Err(invalid(format!("feature {bad} out of range for {p} columns")));
    }
    Ok(())
}

/// Counterfactual rows for module `module`; row `s·R + r` is draw `r` of
/// instance `s`. Columns outside the module are copied unchanged.
pub fn intervene(x: &Matrix, module: &[usize], policy: &InterventionPolicy, reference: &Matrix) -> Result<Matrix> {
    policy.validate()?;
    check_module(module, x.cols())?;
    if reference.cols() != x.cols() {
        return Err(Error::DimensionMismatch { context: "reference columns", expected: x.cols(), found: reference.cols() });
    }
    let r = policy.effective_draws();
    let (n, p) = (x.rows(), x.cols());
    let mut out = Matrix::zeros(n * r, p);
    match policy.kind {
        PolicyKind::SoftAttenuate { delta } => {
            if reference.rows() == 0 {
                return Err(invalid("reference is empty"));
            }
            let mu = reference.column_means();
            for s in 0..n {
                let row = out.row_mut(s);
                row.copy_from_slice(x.row(s));
                for &i in module {
                    row[i] = mu[i] + delta * (row[i] - mu[i]);
                }
            }
        }
        PolicyKind::HardMarginal => {
            if reference.rows() == 0 {
                return Err(invalid("reference is empty"));
            }
            let mut rng = rng::rng(policy.seed);
            for s in 0..n {
                for d in 0..r {
                    let donor = reference.row(rng.random_range(0..reference.rows()));
                    let row = out.row_mut(s * r + d);
                    row.copy_from_slice(x.row(s));
                    for &i in module {
                        row[i] = donor[i];
                    }
                }
            }
        }
        PolicyKind::ConditionalKnn { donor_k } => {
            if reference.rows() < donor_k {
                return Err(invalid(format!(
                    "reference has {} rows, fewer than donor_k = {donor_k}",
                    reference.rows()
                )));
            }
            let mut in_module = vec![false; p];
            for &i in module {
                in_module[i] = true;
            }
            let rest: Vec<usize> = (0..p).filter(|&i| !in_module[i]).collect();
            let scale: Vec<f64> = rest
                .iter()
                .map(|&i| {
                    let sd = math::sqrt(math::sample_variance(&reference.column(i)));
                    if sd > 0.0 && sd.is_finite() { sd } else { 1.0 }
                })
                .collect();
            let donors: Vec<Vec<usize>> = par::map_indexed(n, |s| {
                let xs = x.row(s);
                let mut dist: Vec<(f64, usize)> = (0..reference.rows())
                    .map(|t| {
                        let rr = reference.row(t);
                        let d2 = rest.iter().zip(&scale).map(|(&i, sc)| {
                            let z = (xs[i] - rr[i]) / sc;
                            z * z
                        });
                        (d2.sum::<f64>(), t)
                    })
                    .collect();
                dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                dist.truncate(donor_k);
                dist.into_iter().map(|e| e.1).collect()
            });
            let mut rng = rng::rng(policy.seed);
            for s in 0..n {
                for d in 0..r {
                    let donor = reference.row(donors[s][rng.random_range(0..donor_k)]);
                    let row = out.row_mut(s * r + d);
                    row.copy_from_slice(x.row(s));
                    for &i in module {
                        row[i] = donor[i];
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum EvalMetric {
    MeanPrediction,
    R2,
    Auroc,
    Accuracy,
}

impl EvalMetric {
    pub fn name(&self) -> &'static str {
        match self {
            Self::MeanPrediction => "mean_prediction",
            Self::R2 => "r2",
            Self::Auroc => "auroc",
            Self::Accuracy => "accuracy",
        }
    }

    pub fn needs_labels(&self) -> bool {
        !matches!(self, Self::MeanPrediction)
    }
}

/// Mann–Whitney AUROC with average ranks for ties.
pub fn auroc(scores: &[f64], y: &[f64]) -> Result<f64> {
    let ranks = math::average_ranks(scores);
    let pos = y.iter().filter(|v| **v > 0.5).count();
    let neg = y.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(invalid("AUROC needs both classes"));
    }
    let rank_sum: f64 = ranks.iter().zip(y).filter(|(_, v)| **v > 0.5).map(|(r, _)| r).sum();
    Ok((rank_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos as f64 * neg as f64))
}

pub fn r2(pred: &[f64], y: &[f64]) -> Result<f64> {
    let my = math::mean(y);
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    if ss_tot == 0.0 {
        return Err(invalid("R² undefined for constant y"));
    }
    let ss_res: f64 = pred.iter().zip(y).map(|(p, v)| (v - p) * (v - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn evaluate(metric: EvalMetric, pred: &[f64], y: Option<&[f64]>) -> Result<f64> {
    let labels = |name| -> Result<&[f64]> {
        let y = y.ok_or(Error::MissingLabels(name))?;
        if y.len() != pred.len() {
            return Err(Error::DimensionMismatch { context: "labels", expected: pred.len(), found: y.len() });
        }
        Ok(y)
    };
    match metric {
        EvalMetric::MeanPrediction => Ok(math::mean(pred)),
        EvalMetric::R2 => r2(pred, labels("r2")?),
        EvalMetric::Auroc => auroc(pred, labels("auroc")?),
        EvalMetric::Accuracy => {
            let y = labels("accuracy")?;
            let hits = pred.iter().zip(y).filter(|(p, v)| (**p > 0.5) == (**v > 0.5)).count();
            Ok(hits as f64 / pred.len() as f64)
        }
    }
}

/// Mean of each instance's `draws` consecutive counterfactual predictions.
pub fn average_draws(cf: &[f64], draws: usize) -> Result<Vec<f64>> {
    if draws == 0 || cf.len() % draws != 0 {
        return Err(invalid(format!("{} counterfactual predictions do not split into {draws} draws", cf.len())));
    }
    Ok(cf.chunks(draws).map(|c| c.iter().sum::<f64>() / draws as f64).collect())
}

/// `𝓔(original) − 𝓔(mean-over-draws counterfactual)` from precomputed predictions.
pub fn drop_from_predictions(
    original: &[f64],
    counterfactual: &[f64],
    draws: usize,
    y: Option<&[f64]>,
    metric: EvalMetric,
) -> Result<f64> {
    let cf = average_draws(counterfactual, draws)?;
    if cf.len() != original.len() {
        return Err(Error::DimensionMismatch { context: "counterfactual predictions", expected: original.len(), found: cf.len() });
    }
    Ok(evaluate(metric, original, y)? - evaluate(metric, &cf, y)?)
}

/// Ablation drop `Δ_y(M)`; an empty module gives 0.
pub fn ablation_drop(
    model: &dyn Predictor,
    x: &Matrix,
    y: Option<&[f64]>,
    module: &[usize],
    metric: EvalMetric,
    policy: &InterventionPolicy,
    reference: &Matrix,
) -> Result<f64> {
    if metric.needs_labels() && y.is_none() {
        return Err(Error::MissingLabels(metric.name()));
    }
    if module.is_empty() {
        return Ok(0.0);
    }
    let original = model.predict(x);
    let cf = model.predict(&intervene(x, module, policy, reference)?);
    drop_from_predictions(&original, &cf, policy.effective_draws(), y, metric)
}

/// `Syn(A, B) = Δ(A ∪ B) − Δ(A) − Δ(B)`, all with the policy's seed.
#[allow(clippy::too_many_arguments)]
pub fn synergy(
    model: &dyn Predictor,
    x: &Matrix,
    y: Option<&[f64]>,
    a: &[usize],
    b: &[usize],
    metric: EvalMetric,
    policy: &InterventionPolicy,
    reference: &Matrix,
) -> Result<f64> {
    if let Some(i) = a.iter().find(|i| b.contains(i)) {
        return Err(invalid(format!("modules overlap at feature {i}")));
    }
    let union: Vec<usize> = a.iter().chain(b).copied().collect();
    let da = ablation_drop(model, x, y, a, metric, policy, reference)?;
    let db = ablation_drop(model, x, y, b, metric, policy, reference)?;
    let dab = ablation_drop(model, x, y, &union, metric, policy, reference)?;
    Ok(dab - da - db)
}

/// Drops for every module of `partition`; module `m` uses seed `(seed, m)`.
pub fn module_drops(
    model: &dyn Predictor,
    x: &Matrix,
    y: Option<&[f64]>,
    partition: &Partition,
    metric: EvalMetric,
    policy: &InterventionPolicy,
    reference: &Matrix,
) -> Result<Vec<f64>> {
    partition
        .modules()
        .iter()
        .enumerate()
        .map(|(m, members)| {
            let p = InterventionPolicy { seed: rng::derive(policy.seed, m as u64), ..*policy };
            ablation_drop(model, x, y, members, metric, &p, reference)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WhatIfOutcome {
    pub dp_gap_before: Option<f64>,
    pub dp_gap_after: Option<f64>,
    pub metric_before: f64,
    pub metric_after: f64,
    /// `mean|ψ_after(M)| − mean|ψ_before(M)|` per module, when attributions are available.
    pub per_module_psi_shift: Option<Vec<f64>>,
}

/// Inputs shared by what-if queries.
pub struct WhatIfContext<'a> {
    pub model: &'a dyn Predictor,
    pub x: &'a Matrix,
    pub y: Option<&'a [f64]>,
    pub group: &'a [String],
    pub partition: &'a Partition,
    pub metric: EvalMetric,
    /// Scores above this count as positive predictions.
    pub decision_threshold: f64,
    pub attribute: Option<&'a (dyn Fn(&Matrix) -> Result<Matrix> + Sync)>,
}

fn dp_gap(pred: &[f64], group: &[String], threshold: f64) -> Option<f64> {
    let labels = GroupLabels {
        group: group.to_vec(),
        y: None,
        yhat: Some(pred.iter().map(|p| *p > threshold).collect()),
        score: None,
    };
    fairness_gaps(&labels).ok().and_then(|g| g.dp_gap)
}

/// Soft-attenuates one module towards the data means and reports the
/// fairness and metric change.
pub fn whatif(ctx: &WhatIfContext<'_>, module_id: usize, delta: f64) -> Result<WhatIfOutcome> {
    if module_id >= ctx.partition.k() {
        return Err(invalid(format!("module {module_id} does not exist")));
    }
    if ctx.group.len() != ctx.x.rows() {
        return Err(Error::DimensionMismatch { context: "groups", expected: ctx.x.rows(), found: ctx.group.len() });
    }
    let members = &ctx.partition.modules()[module_id];
    let policy = InterventionPolicy::soft(delta);
    let x_after = intervene(ctx.x, members, &policy, ctx.x)?;
    let before = ctx.model.predict(ctx.x);
    let after = ctx.model.predict(&x_after);
    let shift = match ctx.attribute {
        Some(attribute) => {
            let psi_before = module_attributions(&attribute(ctx.x)?, ctx.partition)?.mean_abs();
            let psi_after = module_attributions(&attribute(&x_after)?, ctx.partition)?.mean_abs();
            Some(psi_after.iter().zip(&psi_before).map(|(a, b)| a - b).collect())
        }
        None => None,
    };
    Ok(WhatIfOutcome {
        dp_gap_before: dp_gap(&before, ctx.group, ctx.decision_threshold),
        dp_gap_after: dp_gap(&after, ctx.group, ctx.decision_threshold),
        metric_before: evaluate(ctx.metric, &before, ctx.y)?,
        metric_after: evaluate(ctx.metric, &after, ctx.y)?,
        per_module_psi_shift: shift,
    })
}
