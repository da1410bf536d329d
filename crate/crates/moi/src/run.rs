//! Full runs: Φ in, run directory out.

use std::path::Path;

use moi_core::attribution::{AttributionMatrix, LabelTable};
use moi_core::community::{consensus_partition, mean_conductance, modularity, stability_sweep, Partition, StabilityReport};
use moi_core::graph::ExplanationGraph;
use moi_core::interventions::{module_drops, EvalMetric, Predictor};
use moi_core::metrics::{module_summary, msi, GroupLabels, MsiResult, SummaryInputs};
use moi_core::pipeline::{self, PipelineConfig};
use moi_core::{rng, Matrix};

use crate::artifacts::{json_bytes, with_hash, RunDir};
use crate::config::Config;
use crate::error::{MoiError, Result};
use crate::formats::{self, Table};
use crate::model::StoredModel;
use crate::report::{
    self, AblationMeta, ConsensusFile, GraphFile, ModulesFile, Quality, Report, StabilityFile,
};

pub const PHI: &str = "phi.moiphi";
pub const GRAPH: &str = "W.sparse";
pub const GRAPH_META: &str = "W.sparse.meta.json";
pub const EDGES: &str = "edges.tsv";
pub const MODULES: &str = "modules.json";
pub const CONSENSUS: &str = "consensus.json";
pub const STABILITY: &str = "stability.json";
pub const REPORT: &str = "report.json";
pub const GRAPHML: &str = "graph.graphml";
pub const HEATMAP_CSV: &str = "heatmap.csv";
pub const HEATMAP_SVG: &str = "heatmap.svg";
pub const MODEL: &str = "model.json";
pub const DATA: &str = "X.csv";
pub const LABELS: &str = "labels.csv";

/// Graph sidecar path for a graph file.
pub fn meta_path(graph: &Path) -> std::path::PathBuf {
    let mut s = graph.as_os_str().to_os_string();
    s.push(".meta.json");
    s.into()
}

pub struct GraphBuild {
    pub graph: ExplanationGraph,
    pub working: Matrix,
}

pub fn build_graph(phi: &AttributionMatrix, cfg: &PipelineConfig) -> Result<GraphBuild> {
    let a = pipeline::working_matrix(phi.values(), cfg)?;
    let graph = pipeline::graph_of(&pipeline::affinity_of(&a, cfg)?, cfg)?;
    Ok(GraphBuild { graph, working: a.values })
}

/// Partition plus its `modules.json` record.
pub fn find_modules(
    g: &ExplanationGraph,
    names: &[String],
    cfg: &PipelineConfig,
) -> Result<(Partition, ModulesFile)> {
    let detection = pipeline::detection_graph(g, cfg.project_abs)?;
    let p = moi_core::community::detect(&detection, cfg.algorithm, cfg.resolution, cfg.comm_seed)?;
    let file = ModulesFile {
        feature_names: names.to_vec(),
        modules: p.modules(),
        resolution: cfg.resolution,
        seed: cfg.comm_seed,
        algorithm: format!("{:?}", cfg.algorithm).to_lowercase(),
        quality: Quality { q: modularity(&detection, &p, cfg.resolution).ok(), mean_conductance: mean_conductance(&detection, &p) },
    };
    Ok((p, file))
}

/// Aligns labels to Φ rows; predicted labels come from the table, or from
/// the model when the table has none.
pub fn group_labels(
    labels: &LabelTable,
    ids: &[String],
    predictions: Option<&[f64]>,
    threshold: f64,
) -> Result<GroupLabels> {
    let mut g = labels.align(ids)?;
    if g.yhat.is_none() {
        g.yhat = predictions.map(|p| p.iter().map(|v| *v > threshold).collect());
    }
    Ok(g)
}

/// Stability grid for a run: the configured sweep, or just the run's own
/// setting. Returns the report and the MSI result of the selected setting.
pub fn stability(
    phi: &Matrix,
    cfg: &Config,
    base: &PipelineConfig,
    sweep: bool,
    runs: usize,
) -> Result<(StabilityReport, MsiResult, PipelineConfig)> {
    let (ks, res) = if sweep {
        (cfg.stability.k_sweep.clone(), cfg.stability.res_sweep.clone())
    } else {
        (vec![cfg.k], vec![cfg.resolution])
    };
    let seed = cfg.seeds.split;
    let report = stability_sweep(phi, &ks, &res, base, cfg.perturbation(), runs, cfg.stability.q_floor, seed)?;
    let chosen = report.selected();
    let mut selected = base.clone();
    selected.graph.sparsifier = cfg.sparsifier_with_k(chosen.k);
    selected.resolution = chosen.resolution;
    // Same seed as the sweep used for this grid point, so the numbers agree.
    let m = msi(phi, &selected, cfg.perturbation(), runs, rng::derive(seed, report.selected as u64))?;
    Ok((report, m, selected))
}

#[derive(Default)]
pub struct RunInputs<'a> {
    pub labels: Option<&'a LabelTable>,
    pub model: Option<&'a StoredModel>,
    pub data: Option<&'a Table>,
    /// Perturbed reruns for MSI; 0 skips stability.
    pub msi_runs: usize,
    pub sweep: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub partition: Partition,
    pub graph: ExplanationGraph,
    pub report: Report,
}

pub fn run(cfg: &Config, phi: &AttributionMatrix, inputs: &RunInputs<'_>, out: &Path) -> Result<RunOutput> {
    if inputs.msi_runs != 0 && inputs.msi_runs < 10 {
        return Err(MoiError::Usage("--msi-runs must be 0 or at least 10".into()));
    }
    let mut dir = RunDir::create(out, cfg)?;
    let names = phi.feature_names().to_vec();
    dir.write(PHI, &formats::moiphi_bytes(phi))?;
    dir.log(format!("phi n={} d={}", phi.n(), phi.d()));

    let mut pcfg = cfg.to_pipeline(&names)?;
    let mut stability_out = None;
    if inputs.msi_runs > 0 {
        let (report, m, selected) = stability(phi.values(), cfg, &pcfg, inputs.sweep, inputs.msi_runs)?;
        let s = report.selected();
        dir.log(format!("stability selected k={} resolution={} msi={:.6}", s.k, s.resolution, s.msi));
        dir.write_json(STABILITY, &StabilityFile::new(&report, inputs.msi_runs))?;
        pcfg = selected;
        stability_out = Some(m);
    }

    let GraphBuild { graph, working } = build_graph(phi, &pcfg)?;
    dir.write(GRAPH, &formats::moiws_bytes(&graph))?;
    dir.write_json(GRAPH_META, &GraphFile { feature_names: names.clone(), meta: graph.meta.clone() })?;
    dir.write(EDGES, formats::edge_tsv(&graph, &names).as_bytes())?;
    dir.log(format!("graph edges={}", graph.edge_count()));

    let (partition, modules_file) = find_modules(&graph, &names, &pcfg)?;
    dir.write_json(MODULES, &modules_file)?;
    dir.log(format!("modules k={}", partition.k()));

    let consensus_path = match &stability_out {
        Some(m) => {
            let threshold = cfg.stability.consensus_threshold;
            let cp = consensus_partition(&m.consensus, threshold, cfg.seeds.comm)?;
            let file = ConsensusFile {
                feature_names: names.clone(),
                runs: inputs.msi_runs,
                threshold,
                matrix: report::rows_of(m.consensus.matrix()),
                consensus_modules: cp.modules(),
                msi: m.msi,
                msi_ci: [m.ci.0, m.ci.1],
            };
            dir.write_json(CONSENSUS, &file)?;
            Some(CONSENSUS.to_string())
        }
        None => None,
    };

    let model_inputs = match (inputs.model, inputs.data) {
        (Some(model), Some(data)) => {
            if data.values.rows() != phi.n() || data.values.cols() != phi.d() {
                return Err(MoiError::Data(format!(
                    "data is {}x{}, attributions are {}x{}",
                    data.values.rows(),
                    data.values.cols(),
                    phi.n(),
                    phi.d()
                )));
            }
            Some((model, data))
        }
        (None, None) => None,
        _ => return Err(MoiError::Usage("--model and --X must be given together".into())),
    };
    let predictions = model_inputs.map(|(m, d)| m.predict(&d.values));
    let labels = match inputs.labels {
        Some(t) => Some(group_labels(t, phi.instance_ids(), predictions.as_deref(), cfg.fairness.decision_threshold)?),
        None => None,
    };

    let mut ablation_meta = None;
    let drops = match model_inputs {
        Some((model, data)) => {
            let y = labels.as_ref().and_then(|l| l.y.as_deref());
            let mut metric = cfg.ablation.metric;
            if metric.needs_labels() && y.is_none() {
                dir.log(format!("no outcomes for {}; ablation uses mean_prediction", metric.name()));
                metric = EvalMetric::MeanPrediction;
            }
            let policy = cfg.policy();
            let d = module_drops(model, &data.values, y, &partition, metric, &policy, &data.values)?;
            ablation_meta =
                Some(AblationMeta { policy: policy.name().into(), draws: policy.effective_draws(), metric: metric.name().into() });
            dir.log(format!("ablation policy={} metric={}", policy.name(), metric.name()));
            Some(d)
        }
        None => None,
    };

    let metrics = module_summary(&SummaryInputs {
        graph: &graph,
        partition: &partition,
        phi: phi.values(),
        working: &working,
        labels: labels.as_ref(),
        resolution: pcfg.resolution,
        bei_eps: cfg.fairness.bei_eps,
        bootstraps: cfg.fairness.bootstraps,
        seed: cfg.seeds.split,
        ablation: drops.as_deref(),
        msi: stability_out.as_ref().map(|m| (m.msi, m.ci)),
    })?;
    let report = Report::new(&metrics, &names, &cfg.fairness.group_label, ablation_meta, consensus_path);
    dir.write_json(REPORT, &report)?;
    dir.write(GRAPHML, formats::graphml(&graph, &names, Some(&partition)).as_bytes())?;
    dir.write(HEATMAP_CSV, report::heatmap_csv(&graph, &names, &metrics.heatmap_order).as_bytes())?;
    dir.write(HEATMAP_SVG, report::heatmap_svg(&graph, &metrics.heatmap_order, &partition).as_bytes())?;

    if let Some((model, data)) = model_inputs {
        dir.write(MODEL, &json_bytes(model)?)?;
        let ids = data.ids.clone().unwrap_or_else(|| phi.instance_ids().to_vec());
        dir.write(DATA, &formats::table_bytes(&data.names, Some(&ids), &data.values)?)?;
    }
    if let Some(t) = inputs.labels {
        dir.write(LABELS, &formats::labels_bytes(t)?)?;
    }
    dir.finish()?;
    Ok(RunOutput { partition, graph, report })
}

/// JSON bytes with the config hash, as written into run directories.
pub fn hashed_json<T: serde::Serialize>(value: &T, config_hash: &str) -> Result<Vec<u8>> {
    json_bytes(&with_hash(value, config_hash)?)
}
