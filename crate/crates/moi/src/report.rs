//! JSON artifact schemas (`modules.json`, `report.json`, consensus and
//! stability files) and the reordered heatmap.

use std::fmt::Write as _;

use moi_core::community::{Partition, StabilityReport};
use moi_core::graph::{ExplanationGraph, GraphMeta};
use moi_core::metrics::MetricReport;
use moi_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{MoiError, Result};

pub const BEI_DEFINITION: &str =
    "max over group pairs of |mean_a(psi) - mean_b(psi)| / (pooled sd + bei_eps); 95% percentile bootstrap CI, resampling within groups";
pub const NMI_NORMALIZATION: &str = "mutual information divided by the arithmetic mean of the two entropies";
pub const AVG_DEGREE: &str = "mean weighted degree (strength) of the module's features";

/// Sidecar describing a stored graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub feature_names: Vec<String>,
    pub meta: GraphMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    #[serde(rename = "Q")]
    pub q: Option<f64>,
    pub mean_conductance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulesFile {
    pub feature_names: Vec<String>,
    pub modules: Vec<Vec<usize>>,
    pub resolution: f64,
    pub seed: u64,
    pub algorithm: String,
    pub quality: Quality,
}

impl ModulesFile {
    pub fn partition(&self) -> Result<Partition> {
        Ok(Partition::from_modules(self.feature_names.len(), &self.modules)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleEntry {
    pub id: usize,
    pub size: usize,
    pub features: Vec<String>,
    pub avg_degree: f64,
    pub ri: f64,
    pub bei: Option<f64>,
    pub bei_ci: Option<[f64; 2]>,
    pub mean_abs_psi: f64,
    pub ablation_drop: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalEntry {
    #[serde(rename = "Q")]
    pub q: Option<f64>,
    pub mean_conductance: Option<f64>,
    pub msi: Option<f64>,
    pub msi_ci: Option<[f64; 2]>,
    pub dp_gap: Option<f64>,
    pub eo_tpr_gap: Option<f64>,
    pub eo_fpr_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFlow {
    pub feature: String,
    pub module: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleFlow {
    pub module: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sankey {
    pub feature_to_module: Vec<FeatureFlow>,
    pub module_to_output: Vec<ModuleFlow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationMeta {
    pub policy: String,
    pub draws: usize,
    pub metric: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub bei_definition: String,
    pub nmi_normalization: String,
    pub avg_degree: String,
    pub group_label: String,
    pub ablation: Option<AblationMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub modules: Vec<ModuleEntry>,
    pub global: GlobalEntry,
    pub sankey: Sankey,
    pub heatmap_order: Vec<String>,
    pub consensus_path: Option<String>,
    pub metadata: Metadata,
}

impl Report {
    pub fn new(
        m: &MetricReport,
        names: &[String],
        group_label: &str,
        ablation: Option<AblationMeta>,
        consensus_path: Option<String>,
    ) -> Self {
        let pair = |(a, b): (f64, f64)| [a, b];
        Self {
            modules: m
                .modules
                .iter()
                .map(|r| ModuleEntry {
                    id: r.id,
                    size: r.size,
                    features: r.members.iter().map(|&i| names[i].clone()).collect(),
                    avg_degree: r.avg_degree,
                    ri: r.ri,
                    bei: r.bei.map(|b| b.bei),
                    bei_ci: r.bei.map(|b| [b.ci_low, b.ci_high]),
                    mean_abs_psi: r.mean_abs_psi,
                    ablation_drop: r.ablation_drop,
                })
                .collect(),
            global: GlobalEntry {
                q: m.global.q,
                mean_conductance: m.global.mean_conductance,
                msi: m.global.msi,
                msi_ci: m.global.msi_ci.map(pair),
                dp_gap: m.global.dp_gap,
                eo_tpr_gap: m.global.eo_tpr_gap,
                eo_fpr_gap: m.global.eo_fpr_gap,
            },
            sankey: Sankey {
                feature_to_module: m
                    .sankey
                    .feature_to_module
                    .iter()
                    .map(|&(f, module, value)| FeatureFlow { feature: names[f].clone(), module, value })
                    .collect(),
                module_to_output: m.sankey.module_to_output.iter().map(|&(module, value)| ModuleFlow { module, value }).collect(),
            },
            heatmap_order: m.heatmap_order.iter().map(|&i| names[i].clone()).collect(),
            consensus_path,
            metadata: Metadata {
                bei_definition: BEI_DEFINITION.into(),
                nmi_normalization: NMI_NORMALIZATION.into(),
                avg_degree: AVG_DEGREE.into(),
                group_label: group_label.into(),
                ablation,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusFile {
    pub feature_names: Vec<String>,
    pub runs: usize,
    pub threshold: f64,
    pub matrix: Vec<Vec<f64>>,
    pub consensus_modules: Vec<Vec<usize>>,
    pub msi: f64,
    pub msi_ci: [f64; 2],
}

pub fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingEntry {
    pub k: usize,
    pub resolution: f64,
    pub msi: f64,
    pub msi_ci: [f64; 2],
    #[serde(rename = "Q")]
    pub q: Option<f64>,
    pub modules: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityFile {
    pub runs: usize,
    pub q_floor: f64,
    pub selected: usize,
    pub grid: Vec<SettingEntry>,
}

impl StabilityFile {
    pub fn new(r: &StabilityReport, runs: usize) -> Self {
        Self {
            runs,
            q_floor: r.q_floor,
            selected: r.selected,
            grid: r
                .grid
                .iter()
                .map(|s| SettingEntry {
                    k: s.k,
                    resolution: s.resolution,
                    msi: s.msi,
                    msi_ci: [s.msi_ci.0, s.msi_ci.1],
                    q: s.q,
                    modules: s.modules,
                })
                .collect(),
        }
    }
}

/// Graph payload for the dashboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphPayload {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub modules: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub name: String,
    pub module: usize,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

pub fn graph_payload(g: &ExplanationGraph, names: &[String], p: &Partition) -> Result<GraphPayload> {
    if g.d() != p.d() || names.len() != p.d() {
        return Err(MoiError::Data(format!("graph has {} nodes, modules cover {}", g.d(), p.d())));
    }
    let strength = g.strengths();
    Ok(GraphPayload {
        nodes: (0..g.d()).map(|i| Node { id: i, name: names[i].clone(), module: p.module_of(i), strength: strength[i] }).collect(),
        edges: g.edges().into_iter().map(|(source, target, weight)| Edge { source, target, weight }).collect(),
        modules: p.modules(),
    })
}

/// `W` with rows and columns in `order`, as CSV with feature-name headers.
pub fn heatmap_csv(g: &ExplanationGraph, names: &[String], order: &[usize]) -> String {
    let mut out = String::from("feature");
    for &j in order {
        out.push(',');
        out.push_str(&csv_field(&names[j]));
    }
    out.push('\n');
    for &i in order {
        out.push_str(&csv_field(&names[i]));
        for &j in order {
            let _ = write!(out, ",{}", g.weight(i, j));
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Reordered `|W|` as an SVG grid; negative weights are drawn in red.
pub fn heatmap_svg(g: &ExplanationGraph, order: &[usize], p: &Partition) -> String {
    const CELL: usize = 8;
    let d = order.len();
    let size = d * CELL;
    let max = g.edges().iter().map(|e| e.2.abs()).fold(0.0f64, f64::max);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n<rect width=\"{size}\" height=\"{size}\" fill=\"white\"/>\n"
    );
    for (r, &i) in order.iter().enumerate() {
        for (c, &j) in order.iter().enumerate() {
            let w = g.weight(i, j);
            if w == 0.0 || max == 0.0 {
                continue;
            }
            let color = if w < 0.0 { "#c0392b" } else { "#1f3a93" };
            let _ = writeln!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{color}\" fill-opacity=\"{:.4}\"/>",
                c * CELL,
                r * CELL,
                w.abs() / max
            );
        }
    }
    // module boundaries along the diagonal
    let mut start = 0;
    while start < d {
        let m = p.module_of(order[start]);
        let mut end = start;
        while end < d && p.module_of(order[end]) == m {
            end += 1;
        }
        let _ = writeln!(
            out,
            "<rect x=\"{0}\" y=\"{0}\" width=\"{1}\" height=\"{1}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>",
            start * CELL,
            (end - start) * CELL
        );
        start = end;
    }
    out.push_str("</svg>\n");
    out
}
