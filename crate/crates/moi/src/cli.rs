//! `moi` command line.

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use moi_core::attribution::AttributionMatrix;
use moi_core::community::Partition;
use moi_core::interventions::{module_drops, synergy, EvalMetric, InterventionPolicy};
use moi_core::metrics::{module_summary, SummaryInputs};
use moi_core::synthetic::{
    exhaustive_shap_matrix, fit_ridge, fit_tree_ensemble, gen_additive, gen_cross_module, gen_environments, gen_xor, linear_shap,
    GroupShift, SyntheticDataset, SyntheticSpec, TreeParams,
};
use moi_core::{rng, Matrix};
use serde::Serialize;

use crate::artifacts::{json_bytes, with_hash};
use crate::config::{CommunityAlgo, Config, EdgeRule, PolicyName, SparsifierKind};
use crate::counterfactual::{emit_counterfactuals, ingest_predictions, Manifest, MANIFEST};
use crate::error::{MoiError, Result};
use crate::formats::{self, load_attributions, read_labels, read_moiws, read_table, write_bytes, PhiFormat, Table};
use crate::model::StoredModel;
use crate::report::{AblationMeta, GraphFile, ModulesFile, Report, StabilityFile};
use crate::run::{self, meta_path, RunInputs};

#[derive(Debug, Parser)]
#[command(name = "moi", version, about = "Feature modules from attribution matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate an attribution matrix (and labels) and store it as MOIPHI or CSV.
    Ingest(IngestArgs),
    /// Build the sparse explanation graph.
    BuildGraph(BuildGraphArgs),
    /// Detect feature modules on a stored graph.
    Communities(CommunitiesArgs),
    /// Module summary table, fairness gaps and optional MSI.
    Metrics(MetricsArgs),
    /// Module ablation drops, either in process or via counterfactual files.
    Ablate(AblateArgs),
    /// Stability sweep over k and resolution.
    Select(SelectArgs),
    /// Synthetic data with planted modules.
    Synth(SynthArgs),
    /// Full run into an artifact directory.
    Report(ReportArgs),
    /// HTTP API over an artifact directory.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub phi: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// `.csv` writes CSV, anything else MOIPHI.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct GraphFlags {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub edge: Option<EdgeRule>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Mutual top-k sparsification.
    #[arg(long, conflicts_with = "topk")]
    pub mutual: bool,
    /// Plain (union) top-k sparsification.
    #[arg(long)]
    pub topk: bool,
    #[arg(long)]
    pub degree_norm: Option<f64>,
    #[arg(long)]
    pub signed: bool,
}

impl GraphFlags {
    fn config(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(e) = self.edge {
            cfg.edge_rule = e;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if self.mutual {
            cfg.sparsifier = SparsifierKind::MutualTopk;
        }
        if self.topk {
            cfg.sparsifier = SparsifierKind::Topk;
        }
        if let Some(b) = self.degree_norm {
            cfg.degree_norm = b;
        }
        if self.signed {
            cfg.signed = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    #[arg(long)]
    pub phi: PathBuf,
    #[command(flatten)]
    pub flags: GraphFlags,
    /// MOIWS1 output; the sidecar `<out>.meta.json` holds names and settings.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the edge list as TSV.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub graphml: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CommunitiesArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub algo: Option<CommunityAlgo>,
    #[arg(long)]
    pub res: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Detect on |W| when the graph has negative edges.
    #[arg(long)]
    pub project_abs: bool,
    /// Defaults to `modules.json` next to the graph.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub phi: PathBuf,
    #[arg(long)]
    pub modules: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Stored graph; rebuilt from Φ and the config when absent.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long = "X")]
    pub x: Option<PathBuf>,
    /// Perturbed reruns for MSI (0 skips it).
    #[arg(long, default_value_t = 0)]
    pub msi_runs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub modules: PathBuf,
    #[arg(long = "X")]
    pub x: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Label table with a `y` column, for labelled metrics.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub policy: Option<PolicyName>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also compute synergy for every module pair.
    #[arg(long)]
    pub synergy: bool,
    /// Write counterfactual CSVs and a manifest into `--out` instead of scoring.
    #[arg(long, conflicts_with = "ingest_predictions")]
    pub emit_counterfactuals: bool,
    /// Directory with the manifest and `<file>.prediction.csv` files.
    #[arg(long)]
    pub ingest_predictions: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub phi: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Defaults to `stability.bootstraps` from the config.
    #[arg(long)]
    pub msi_runs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthFamily {
    Additive,
    Xor,
    Cross,
    Environments,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthModel {
    None,
    Ridge,
    Tree,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthFamily::Additive)]
    pub family: SynthFamily,
    /// Module sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [8, 8, 8, 8])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.8)]
    pub rho: f64,
    /// `inf` for noise-free targets.
    #[arg(long, default_value_t = 10.0)]
    pub snr: f64,
    #[arg(long, default_value_t = 4000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Interacting module pairs as `a:b`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub interactions: Vec<String>,
    /// `module:magnitude` shift for group g1.
    #[arg(long)]
    pub group_shift: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub environments: usize,
    #[arg(long, default_value_t = 0)]
    pub env_module: usize,
    #[arg(long, default_value_t = 0.5)]
    pub env_shift: f64,
    /// Fit a built-in model and write `model.json` (and `phi.csv` when exact attributions are cheap).
    #[arg(long, value_enum, default_value_t = SynthModel::None)]
    pub model: SynthModel,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub phi: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long = "X")]
    pub x: Option<PathBuf>,
    /// Defaults to `stability.bootstraps` from the config; 0 skips MSI.
    #[arg(long)]
    pub msi_runs: Option<usize>,
    /// Select k and resolution over the configured sweep.
    #[arg(long)]
    pub sweep: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub artifacts: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn load_phi(path: &Path) -> Result<AttributionMatrix> {
    load_attributions(path, PhiFormat::from_path(path))
}

fn write_hashed<T: Serialize>(path: &Path, value: &T, cfg: &Config) -> Result<()> {
    write_bytes(path, &json_bytes(&with_hash(value, &cfg.hash())?)?)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&formats::read_bytes(path)?).map_err(|e| MoiError::format(path, e.to_string()))
}

fn parse_metric(s: &str) -> Result<EvalMetric> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| MoiError::Usage(format!("unknown metric {s:?} (mean_prediction, r2, auroc, accuracy)")))
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let phi = load_phi(&a.phi)?;
    if let Some(l) = &a.labels {
        read_labels(l)?.align(phi.instance_ids()).map_err(|e| MoiError::format(l, e.to_string()))?;
    }
    match PhiFormat::from_path(&a.out) {
        PhiFormat::Csv => formats::write_phi_csv(&a.out, &phi)?,
        PhiFormat::Moiphi => formats::write_moiphi(&a.out, &phi)?,
    }
    println!("n={} d={}", phi.n(), phi.d());
    Ok(())
}

fn build_graph(a: &BuildGraphArgs) -> Result<()> {
    let cfg = a.flags.config()?;
    let phi = load_phi(&a.phi)?;
    let names = phi.feature_names().to_vec();
    let g = run::build_graph(&phi, &cfg.to_pipeline(&names)?)?.graph;
    formats::write_moiws(&a.out, &g)?;
    write_hashed(&meta_path(&a.out), &GraphFile { feature_names: names.clone(), meta: g.meta.clone() }, &cfg)?;
    if let Some(p) = &a.edges {
        write_bytes(p, formats::edge_tsv(&g, &names).as_bytes())?;
    }
    if let Some(p) = &a.graphml {
        write_bytes(p, formats::graphml(&g, &names, None).as_bytes())?;
    }
    println!("d={} edges={}", g.d(), g.edge_count());
    Ok(())
}

/// Graph plus feature names from the sidecar (or `f0..` when it is missing).
fn load_graph(path: &Path) -> Result<(moi_core::graph::ExplanationGraph, Vec<String>)> {
    let mut g = read_moiws(path)?;
    let meta = meta_path(path);
    let names = if meta.exists() {
        let file: GraphFile = read_json(&meta)?;
        if file.feature_names.len() != g.d() {
            return Err(MoiError::format(&meta, format!("{} names for {} nodes", file.feature_names.len(), g.d())));
        }
        g.meta = file.meta;
        file.feature_names
    } else {
        (0..g.d()).map(|i| format!("f{i}")).collect()
    };
    Ok((g, names))
}

fn communities(a: &CommunitiesArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(algo) = a.algo {
        cfg.community = algo;
    }
    if let Some(res) = a.res {
        cfg.resolution = res;
    }
    if let Some(seed) = a.seed {
        cfg.seeds.comm = seed;
    }
    if a.project_abs {
        cfg.project_abs = true;
    }
    cfg.validate()?;
    let (g, names) = load_graph(&a.graph)?;
    let pcfg = cfg.to_pipeline(&names)?;
    let (p, file) = run::find_modules(&g, &names, &pcfg)?;
    let out = a.out.clone().unwrap_or_else(|| a.graph.with_file_name(run::MODULES));
    write_hashed(&out, &file, &cfg)?;
    println!("modules={} Q={}", p.k(), file.quality.q.map_or("null".into(), |q| q.to_string()));
    Ok(())
}

fn load_modules(path: &Path) -> Result<(ModulesFile, Partition)> {
    let file: ModulesFile = read_json(path)?;
    let p = file.partition().map_err(|e| MoiError::format(path, e.to_string()))?;
    Ok((file, p))
}

fn load_model_data(model: Option<&Path>, x: Option<&Path>) -> Result<Option<(StoredModel, Table)>> {
    match (model, x) {
        (Some(m), Some(x)) => Ok(Some((StoredModel::load(m)?, read_table(x)?))),
        (None, None) => Ok(None),
        _ => Err(MoiError::Usage("--model and --X must be given together".into())),
    }
}

fn metrics(a: &MetricsArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let phi = load_phi(&a.phi)?;
    let names = phi.feature_names().to_vec();
    let (mfile, p) = load_modules(&a.modules)?;
    if mfile.feature_names != names {
        return Err(MoiError::Data("modules.json feature names do not match the attribution matrix".into()));
    }
    let mut pcfg = cfg.to_pipeline(&names)?;
    pcfg.resolution = mfile.resolution;
    let built = run::build_graph(&phi, &pcfg)?;
    let graph = match &a.graph {
        Some(path) => load_graph(path)?.0,
        None => built.graph,
    };
    let md = load_model_data(a.model.as_deref(), a.x.as_deref())?;
    let predictions = md.as_ref().map(|(m, x)| moi_core::interventions::Predictor::predict(m, &x.values));
    let labels = match &a.labels {
        Some(path) => {
            let t = read_labels(path)?;
            Some(run::group_labels(&t, phi.instance_ids(), predictions.as_deref(), cfg.fairness.decision_threshold)?)
        }
        None => None,
    };
    let mut ablation_meta = None;
    let drops = match &md {
        Some((model, x)) => {
            let y = labels.as_ref().and_then(|l| l.y.as_deref());
            let metric = if cfg.ablation.metric.needs_labels() && y.is_none() { EvalMetric::MeanPrediction } else { cfg.ablation.metric };
            let policy = cfg.policy();
            ablation_meta = Some(AblationMeta { policy: policy.name().into(), draws: policy.effective_draws(), metric: metric.name().into() });
            Some(module_drops(model, &x.values, y, &p, metric, &policy, &x.values)?)
        }
        None => None,
    };
    let msi = if a.msi_runs > 0 {
        let m = moi_core::metrics::msi(phi.values(), &pcfg, cfg.perturbation(), a.msi_runs, cfg.seeds.split)?;
        Some((m.msi, m.ci))
    } else {
        None
    };
    let m = module_summary(&SummaryInputs {
        graph: &graph,
        partition: &p,
        phi: phi.values(),
        working: &built.working,
        labels: labels.as_ref(),
        resolution: mfile.resolution,
        bei_eps: cfg.fairness.bei_eps,
        bootstraps: cfg.fairness.bootstraps,
        seed: cfg.seeds.split,
        ablation: drops.as_deref(),
        msi,
    })?;
    let report = Report::new(&m, &names, &cfg.fairness.group_label, ablation_meta, None);
    write_hashed(&a.out, &report, &cfg)?;
    println!("modules={}", report.modules.len());
    Ok(())
}

#[derive(Serialize)]
struct DropRow {
    module: usize,
    drop: f64,
}

#[derive(Serialize)]
struct SynergyRow {
    a: usize,
    b: usize,
    syn: f64,
}

#[derive(Serialize)]
struct AblationFile {
    metric: String,
    policy: String,
    draws: usize,
    seed: u64,
    drops: Vec<DropRow>,
    synergy: Option<Vec<SynergyRow>>,
}

fn ablate(a: &AblateArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(p) = a.policy {
        cfg.ablation.policy = p;
    }
    if let Some(d) = a.draws {
        cfg.ablation.draws = d;
    }
    if let Some(d) = a.delta {
        cfg.ablation.delta = d;
    }
    if let Some(m) = &a.metric {
        cfg.ablation.metric = parse_metric(m)?;
    }
    if let Some(s) = a.seed {
        cfg.seeds.split = s;
    }
    cfg.validate()?;
    let policy = cfg.policy();
    let (_, p) = load_modules(&a.modules)?;
    let x = match &a.x {
        Some(path) => Some(read_table(path)?),
        None => None,
    };
    if a.emit_counterfactuals {
        let x = x.ok_or_else(|| MoiError::Usage("--emit-counterfactuals needs --X".into()))?;
        let manifest = emit_counterfactuals(&x, &p, &policy, &a.out)?;
        println!("wrote {} counterfactual files to {}", manifest.modules.len(), a.out.display());
        return Ok(());
    }
    let y = match &a.labels {
        Some(path) => {
            let t = read_labels(path)?;
            match (&x, t.y.is_some()) {
                (Some(x), true) => {
                    let ids: Vec<String> = x.ids.clone().unwrap_or_else(|| (0..x.values.rows()).map(|i| i.to_string()).collect());
                    t.align(&ids)?.y
                }
                (None, true) => t.y,
                _ => None,
            }
        }
        None => None,
    };
    let metric = cfg.ablation.metric;
    let (drops, syn) = if let Some(dir) = &a.ingest_predictions {
        let manifest = Manifest::load(&dir.join(MANIFEST))?;
        (ingest_predictions(&manifest, dir, metric, y.as_deref())?, None)
    } else {
        let model = a.model.as_ref().ok_or_else(|| MoiError::Usage("ablate needs --model, --emit-counterfactuals or --ingest-predictions".into()))?;
        let model = StoredModel::load(model)?;
        let x = x.ok_or_else(|| MoiError::Usage("ablate with --model needs --X".into()))?;
        let drops = module_drops(&model, &x.values, y.as_deref(), &p, metric, &policy, &x.values)?;
        let syn = if a.synergy {
            let modules = p.modules();
            let mut rows = Vec::new();
            for i in 0..modules.len() {
                for j in (i + 1)..modules.len() {
                    let pol = InterventionPolicy { seed: rng::derive(policy.seed, (i * modules.len() + j) as u64), ..policy };
                    let s = synergy(&model, &x.values, y.as_deref(), &modules[i], &modules[j], metric, &pol, &x.values)?;
                    rows.push(SynergyRow { a: i, b: j, syn: s });
                }
            }
            Some(rows)
        } else {
            None
        };
        (drops, syn)
    };
    let file = AblationFile {
        metric: metric.name().into(),
        policy: policy.name().into(),
        draws: policy.effective_draws(),
        seed: policy.seed,
        drops: drops.iter().enumerate().map(|(module, &drop)| DropRow { module, drop }).collect(),
        synergy: syn,
    };
    let out = if a.out.extension().is_some_and(|e| e == "json") { a.out.clone() } else { a.out.join("ablation.json") };
    write_hashed(&out, &file, &cfg)?;
    println!("modules={}", drops.len());
    Ok(())
}

fn select(a: &SelectArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let phi = load_phi(&a.phi)?;
    let runs = a.msi_runs.unwrap_or(cfg.stability.bootstraps);
    let base = cfg.to_pipeline(phi.feature_names())?;
    let report = moi_core::community::stability_sweep(
        phi.values(),
        &cfg.stability.k_sweep,
        &cfg.stability.res_sweep,
        &base,
        cfg.perturbation(),
        runs,
        cfg.stability.q_floor,
        cfg.seeds.split,
    )?;
    let s = report.selected();
    write_hashed(&a.out, &StabilityFile::new(&report, runs), &cfg)?;
    println!("selected k={} resolution={} msi={}", s.k, s.resolution, s.msi);
    Ok(())
}

fn parse_pair(s: &str, what: &str) -> Result<(String, String)> {
    let (a, b) = s.split_once(':').ok_or_else(|| MoiError::Usage(format!("{what} must look like a:b, found {s:?}")))?;
    Ok((a.trim().into(), b.trim().into()))
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| MoiError::Usage(format!("{what}: cannot parse {s:?}")))
}

#[derive(Serialize)]
struct TruthFile {
    family: String,
    modules: Vec<Vec<usize>>,
    interactions: Vec<[usize; 2]>,
    seed: u64,
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec = SyntheticSpec::new(a.sizes.clone(), a.rho, a.snr, a.n, a.seed);
    for s in &a.interactions {
        let (x, y) = parse_pair(s, "--interactions")?;
        spec.interactions.push((parse_num(&x, "--interactions")?, parse_num(&y, "--interactions")?));
    }
    if let Some(s) = &a.group_shift {
        let (m, mag) = parse_pair(s, "--group-shift")?;
        spec.group_shift = Some(GroupShift { module: parse_num(&m, "--group-shift")?, magnitude: parse_num(&mag, "--group-shift")? });
    }
    let parts: Vec<SyntheticDataset> = match a.family {
        SynthFamily::Additive => vec![gen_additive(&spec)?],
        SynthFamily::Xor => vec![gen_xor(&spec)?],
        SynthFamily::Cross => vec![gen_cross_module(&spec)?],
        SynthFamily::Environments => gen_environments(&spec, a.environments, a.env_module, a.env_shift)?,
    };
    let d = spec.d();
    let names: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    let n: usize = parts.iter().map(|p| p.x.rows()).sum();
    let mut data = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    let mut group = Vec::with_capacity(n);
    let mut env = Vec::with_capacity(n);
    for p in &parts {
        data.extend_from_slice(p.x.as_slice());
        y.extend_from_slice(&p.y);
        group.extend(p.group.iter().cloned());
        env.extend(std::iter::repeat_n(p.environment, p.x.rows()));
    }
    let x = Matrix::from_vec(n, d, data)?;
    let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    formats::write_table(&a.out.join("X.csv"), &names, Some(&ids), &x)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| MoiError::Data(e.to_string());
    let with_env = parts[0].environment.is_some();
    let mut header = vec!["instance_id", "group", "y"];
    if with_env {
        header.push("environment");
    }
    w.write_record(&header).map_err(csv_err)?;
    for s in 0..n {
        let mut rec = vec![ids[s].clone(), group[s].clone(), y[s].to_string()];
        if let Some(e) = env[s] {
            rec.push(e.to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    write_bytes(&a.out.join("labels.csv"), &w.into_inner().map_err(|e| MoiError::Data(e.to_string()))?)?;

    let truth = TruthFile {
        family: format!("{:?}", parts[0].function.family).to_lowercase(),
        modules: parts[0].truth.modules(),
        interactions: parts[0].truth_interactions.iter().map(|&(a, b)| [a, b]).collect(),
        seed: a.seed,
    };
    write_bytes(&a.out.join("truth.json"), &json_bytes(&truth)?)?;

    let model = match a.model {
        SynthModel::None => None,
        SynthModel::Ridge => Some(StoredModel::Ridge(fit_ridge(&x, &y, 1e-3)?)),
        SynthModel::Tree => Some(StoredModel::TreeEnsemble(fit_tree_ensemble(&x, &y, TreeParams::default())?)),
    };
    if let Some(model) = &model {
        model.save(&a.out.join("model.json"))?;
        let phi = match model {
            StoredModel::Ridge(m) => Some(linear_shap(m, &x, &x)?),
            StoredModel::TreeEnsemble(_) if d <= 8 => {
                let rows: Vec<usize> = (0..n.min(32)).collect();
                Some(exhaustive_shap_matrix(model, &x, &x.select_rows(&rows))?)
            }
            StoredModel::TreeEnsemble(_) => None,
        };
        if let Some(phi) = phi {
            formats::write_table(&a.out.join("phi.csv"), &names, Some(&ids), &phi)?;
        }
    }
    println!("n={n} d={d}");
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let phi = load_phi(&a.phi)?;
    let labels = match &a.labels {
        Some(p) => Some(read_labels(p)?),
        None => None,
    };
    let md = load_model_data(a.model.as_deref(), a.x.as_deref())?;
    let inputs = RunInputs {
        labels: labels.as_ref(),
        model: md.as_ref().map(|m| &m.0),
        data: md.as_ref().map(|m| &m.1),
        msi_runs: a.msi_runs.unwrap_or(cfg.stability.bootstraps),
        sweep: a.sweep,
    };
    let out = run::run(&cfg, &phi, &inputs, &a.out)?;
    println!("modules={} artifacts={}", out.partition.k(), a.out.display());
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<()> {
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| MoiError::Usage(format!("bad address {}:{}: {e}", a.host, a.port)))?;
    crate::serve::serve(&a.artifacts, addr)
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::BuildGraph(a) => build_graph(a),
        Command::Communities(a) => communities(a),
        Command::Metrics(a) => metrics(a),
        Command::Ablate(a) => ablate(a),
        Command::Select(a) => select(a),
        Command::Synth(a) => synth(a),
        Command::Report(a) => report(a),
        Command::Serve(a) => serve(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
