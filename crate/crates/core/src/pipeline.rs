//! End-to-end module discovery: working matrix → affinity → graph → partition.

use crate::affinity::{self, AffinityMatrix, AffinityRule};
use crate::attribution::{make_working_matrix, ColumnScaling, RowScaling, View, WorkingMatrix};
use crate::community::{detect, modularity, Algorithm, Partition};
use crate::error::{Error, Result};
use crate::graph::{self, ExplanationGraph, GraphConfig};
use crate::matrix::Matrix;

pub const DEFAULT_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Significance {
    pub permutations: usize,
    pub fdr_q: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PipelineConfig {
    pub view: View,
    pub column_scaling: ColumnScaling,
    pub row_scaling: RowScaling,
    pub epsilon: f64,
    pub edge_rule: AffinityRule,
    /// Rescale by exceedance rarity before computing affinities.
    pub tfidf: bool,
    pub shrinkage: f64,
    pub shrink_floor: f64,
    pub significance: Option<Significance>,
    pub graph: GraphConfig,
    pub algorithm: Algorithm,
    pub resolution: f64,
    /// Run detection on `|W|` when the graph is signed.
    pub project_abs: bool,
    pub graph_seed: u64,
    pub comm_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            view: View::Magnitude,
            column_scaling: ColumnScaling::Mad,
            row_scaling: RowScaling::None,
            epsilon: DEFAULT_EPSILON,
            edge_rule: AffinityRule::CosineMagnitude,
            tfidf: false,
            shrinkage: 1.0,
            shrink_floor: 0.0,
            significance: None,
            graph: GraphConfig::default(),
            algorithm: Algorithm::Leiden,
            resolution: 1.0,
            project_abs: true,
            graph_seed: 0,
            comm_seed: 0,
        }
    }
}

pub fn working_matrix(phi: &Matrix, cfg: &PipelineConfig) -> Result<WorkingMatrix> {
    make_working_matrix(phi, cfg.view, cfg.column_scaling, cfg.row_scaling, cfg.epsilon)
}

/// Affinity with the optional rarity rescaling, shrinkage and significance filter.
pub fn affinity_of(a: &WorkingMatrix, cfg: &PipelineConfig) -> Result<AffinityMatrix> {
    let rescaled;
    let a = if cfg.tfidf {
        let q = match cfg.edge_rule {
            AffinityRule::CoexceedFreq { q } | AffinityRule::Jaccard { q } => q,
            _ => affinity::DEFAULT_EXCEEDANCE_Q,
        };
        rescaled = affinity::tfidf_rescale(a, &affinity::exceedance(a, q)?)?;
        &rescaled
    } else {
        a
    };
    let mut w = affinity::compute(a, &cfg.edge_rule, None)?;
    if cfg.shrinkage != 1.0 || cfg.shrink_floor > 0.0 {
        w = affinity::shrink(&w, cfg.shrinkage, cfg.shrink_floor)?;
    }
    if let Some(sig) = cfg.significance {
        w = affinity::significance_filter(&w, a, sig.permutations, sig.fdr_q, cfg.graph_seed)?;
    }
    Ok(w)
}

pub fn graph_of(w: &AffinityMatrix, cfg: &PipelineConfig) -> Result<ExplanationGraph> {
    graph::build(w, &cfg.graph)
}

pub fn build_graph(phi: &Matrix, cfg: &PipelineConfig) -> Result<ExplanationGraph> {
    let a = working_matrix(phi, cfg)?;
    graph_of(&affinity_of(&a, cfg)?, cfg)
}

/// The graph community detection runs on: `|W|` for signed graphs when
/// projection is enabled.
pub fn detection_graph(g: &ExplanationGraph, project_abs: bool) -> Result<ExplanationGraph> {
    if g.has_negative() {
        if project_abs {
            Ok(g.project_abs())
        } else {
            Err(Error::SignedGraph)
        }
    } else {
        Ok(g.clone())
    }
}

pub fn detect_modules(g: &ExplanationGraph, cfg: &PipelineConfig) -> Result<Partition> {
    detect(&detection_graph(g, cfg.project_abs)?, cfg.algorithm, cfg.resolution, cfg.comm_seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub graph: ExplanationGraph,
    pub partition: Partition,
}

impl PipelineOutput {
    /// `Q(γ)` on the detection graph; `None` for an edgeless graph.
    pub fn modularity(&self, gamma: f64) -> Option<f64> {
        modularity(&self.graph.project_abs(), &self.partition, gamma).ok()
    }
}

pub fn run_on_working(a: &WorkingMatrix, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let graph = graph_of(&affinity_of(a, cfg)?, cfg)?;
    let partition = detect_modules(&graph, cfg)?;
    Ok(PipelineOutput { graph, partition })
}

pub fn run(phi: &Matrix, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    run_on_working(&working_matrix(phi, cfg)?, cfg)
}
