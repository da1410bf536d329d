use alloc::vec::Vec;

use super::bias::{bias_exposure, BeiEstimate};
use super::fairness::{fairness_gaps, FairnessGaps, GroupLabels};
use super::modules::{module_attributions, redundancy_index};
use crate::community::{mean_conductance, modularity, Partition};
use crate::error::{Error, Result};
use crate::graph::ExplanationGraph;
use crate::math;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModuleRecord {
    pub id: usize,
    pub size: usize,
    pub members: Vec<usize>,
    /// Mean weighted degree (strength) of the members.
    pub avg_degree: f64,
    pub ri: f64,
    pub bei: Option<BeiEstimate>,
    pub mean_abs_psi: f64,
    pub ablation_drop: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GlobalMetrics {
    pub q: Option<f64>,
    pub mean_conductance: Option<f64>,
    pub msi: Option<f64>,
    pub msi_ci: Option<(f64, f64)>,
    pub dp_gap: Option<f64>,
    pub eo_tpr_gap: Option<f64>,
    pub eo_fpr_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SankeyFlows {
    /// `(feature, module, mean |φ_i|)`.
    pub feature_to_module: Vec<(usize, usize, f64)>,
    /// `(module, mean |ψ(M)|)`.
    pub module_to_output: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub modules: Vec<ModuleRecord>,
    pub global: GlobalMetrics,
    pub sankey: SankeyFlows,
    pub heatmap_order: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SummaryInputs<'a> {
    pub graph: &'a ExplanationGraph,
    pub partition: &'a Partition,
    pub phi: &'a Matrix,
    /// Working matrix used for the redundancy index.
    pub working: &'a Matrix,
    pub labels: Option<&'a GroupLabels>,
    pub resolution: f64,
    pub bei_eps: f64,
    pub bootstraps: usize,
    pub seed: u64,
    /// One drop per module, or `None` when ablation was not run.
    pub ablation: Option<&'a [f64]>,
    pub msi: Option<(f64, (f64, f64))>,
}

/// Features ordered by module id, then by decreasing strength, then id.
pub fn heatmap_order(g: &ExplanationGraph, p: &Partition) -> Vec<usize> {
    let strength = g.strengths();
    let mut order: Vec<usize> = (0..p.d()).collect();
    order.sort_by(|&a, &b| {
        p.module_of(a).cmp(&p.module_of(b)).then(strength[b].total_cmp(&strength[a])).then(a.cmp(&b))
    });
    order
}

pub fn sankey_flows(phi: &Matrix, p: &Partition) -> Result<SankeyFlows> {
    let psi = module_attributions(phi, p)?;
    let feature_to_module = (0..phi.cols())
        .map(|i| (i, p.module_of(i), math::mean(&phi.column(i).iter().map(|v| math::abs(*v)).collect::<Vec<_>>())))
        .collect();
    let module_to_output = psi.mean_abs().into_iter().enumerate().collect();
    Ok(SankeyFlows { feature_to_module, module_to_output })
}

pub fn module_summary(inp: &SummaryInputs<'_>) -> Result<MetricReport> {
    let (g, p) = (inp.graph, inp.partition);
    if g.d() != p.d() || inp.phi.cols() != p.d() || inp.working.cols() != p.d() {
        return Err(Error::DimensionMismatch { context: "module summary", expected: p.d(), found: inp.phi.cols() });
    }
    if let Some(drops) = inp.ablation {
        if drops.len() != p.k() {
            return Err(Error::DimensionMismatch { context: "ablation drops", expected: p.k(), found: drops.len() });
        }
    }
    let psi = module_attributions(inp.phi, p)?;
    let mean_abs = psi.mean_abs();
    let strength = g.strengths();
    let bei = match inp.labels {
        Some(l) if l.groups().len() >= 2 => Some(bias_exposure(&psi, l, inp.bei_eps, inp.bootstraps, inp.seed)?),
        _ => None,
    };
    let modules = p
        .modules()
        .into_iter()
        .enumerate()
        .map(|(id, members)| ModuleRecord {
            id,
            size: members.len(),
            avg_degree: members.iter().map(|&i| strength[i]).sum::<f64>() / members.len() as f64,
            ri: redundancy_index(inp.working, &members),
            bei: bei.as_ref().map(|b| b[id]),
            mean_abs_psi: mean_abs[id],
            ablation_drop: inp.ablation.map(|d| d[id]),
            members,
        })
        .collect();
    let projected = g.project_abs();
    let fairness = match inp.labels {
        Some(l) if l.yhat.is_some() && l.groups().len() >= 2 => fairness_gaps(l)?,
        _ => FairnessGaps::default(),
    };
    let global = GlobalMetrics {
        q: modularity(&projected, p, inp.resolution).ok(),
        mean_conductance: mean_conductance(&projected, p),
        msi: inp.msi.map(|m| m.0),
        msi_ci: inp.msi.map(|m| m.1),
        dp_gap: fairness.dp_gap,
        eo_tpr_gap: fairness.eo_tpr_gap,
        eo_fpr_gap: fairness.eo_fpr_gap,
    };
    Ok(MetricReport { modules, global, sankey: sankey_flows(inp.phi, p)?, heatmap_order: heatmap_order(g, p) })
}
