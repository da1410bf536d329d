//! Acceptance suite: one PASS/FAIL line per criterion. Always exits 0 so the
//! workspace test run completes; read the lines, not the exit code.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use moi::config::Config;
use moi::formats::Table;
use moi::model::StoredModel;
use moi::run::{run, RunInputs};
use moi_core::attribution::LabelTable;
use moi_core::community::{conductance, detect, modularity, Algorithm, Partition};
use moi_core::graph::ExplanationGraph;
use moi_core::interventions::{evaluate, synergy, whatif, EvalMetric, InterventionPolicy, Predictor, WhatIfContext};
use moi_core::metrics::{
    bias_exposure, hungarian, iou_matrix, module_attributions, module_summary, msi, partition_agreement, GroupLabels, Perturbation,
    SummaryInputs,
};
use moi_core::pipeline::{self, PipelineConfig, Significance};
use moi_core::synthetic::{
    exhaustive_shap_matrix, fit_ridge, fit_tree_ensemble, gen_additive, gen_xor, linear_shap, GroupShift, LinearModel, SyntheticSpec,
    TreeParams,
};
use moi_core::Matrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

struct Fixture {
    x: Matrix,
    y: Vec<f64>,
    phi: Matrix,
    truth: Partition,
}

fn additive_fixture(seed: u64) -> Result<Fixture, String> {
    let data = gen_additive(&SyntheticSpec::new(vec![8; 4], 0.8, 10.0, 4000, seed)).map_err(err)?;
    let model = fit_ridge(&data.x, &data.y, 1e-3).map_err(err)?;
    let phi = linear_shap(&model, &data.x, &data.x).map_err(err)?;
    Ok(Fixture { x: data.x, y: data.y, phi, truth: data.truth })
}

fn recovery() -> Check {
    let single = pool(1);
    let mut hits = 0;
    let mut slowest: f64 = 0.0;
    let mut detail = Vec::new();
    for seed in 0..5 {
        let start = Instant::now();
        let (f, out) = single.install(|| -> Result<_, String> {
            let f = additive_fixture(seed)?;
            let out = pipeline::run(&f.phi, &PipelineConfig::default()).map_err(err)?;
            Ok((f, out))
        })?;
        slowest = slowest.max(start.elapsed().as_secs_f64());
        let a = partition_agreement(&out.partition, &f.truth).map_err(err)?;
        if a.ari >= 0.9 && a.nmi >= 0.85 {
            hits += 1;
        }
        detail.push(format!("{:.2}/{:.2}", a.ari, a.nmi));
    }
    Ok((
        hits >= 4 && slowest < 30.0,
        format!("{hits}/5 seeds with ARI>=0.9 and NMI>=0.85 (ARI/NMI {}), slowest {slowest:.2}s", detail.join(" ")),
    ))
}

fn clique(offset: usize, size: usize, edges: &mut Vec<(usize, usize, f64)>) {
    for i in 0..size {
        for j in (i + 1)..size {
            edges.push((offset + i, offset + j, 1.0));
        }
    }
}

fn exact_values() -> Check {
    let mut edges = Vec::new();
    clique(0, 4, &mut edges);
    clique(4, 4, &mut edges);
    let g = ExplanationGraph::from_edges(8, &edges).map_err(err)?;
    let halves = Partition::new(&[0, 0, 0, 0, 1, 1, 1, 1]);
    let q_two = modularity(&g, &halves, 1.0).map_err(err)?;
    let q_found = modularity(&g, &detect(&g, Algorithm::Leiden, 1.0, 0).map_err(err)?, 1.0).map_err(err)?;
    let q_one = modularity(&g, &Partition::single(8), 1.0).map_err(err)?;
    let phi_c = conductance(&g, &[0, 1, 2, 3]).map_err(err)?;
    let ok = (q_two - 0.5).abs() <= 1e-12 && (q_found - 0.5).abs() <= 1e-12 && q_one.abs() <= 1e-12 && phi_c == 0.0;
    Ok((ok, format!("Q(two cliques)={q_two:e}, detected Q={q_found:e}, Q(one module)={q_one:e}, conductance={phi_c}")))
}

fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for c in 0..=max + 1 {
            cur.push(c);
            rec(i + 1, n, cur, max.max(c), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, n, &mut vec![0], 0, &mut out);
    out
}

/// Modularity from the double sum over node pairs.
fn q_definition(w: &Matrix, labels: &[usize]) -> f64 {
    let d = w.rows();
    let k: Vec<f64> = (0..d).map(|i| w.row(i).iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..d {
        for j in 0..d {
            if labels[i] == labels[j] {
                q += w.get(i, j) - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> ExplanationGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((i, j, rng.random_range(0.1..1.0)));
            }
        }
    }
    if edges.is_empty() {
        edges.push((0, 1, 1.0));
    }
    ExplanationGraph::from_edges(n, &edges).unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for at in 0..=p.len() {
            let mut q = p.clone();
            q.insert(at, n - 1);
            out.push(q);
        }
    }
    out
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

fn oracles() -> Check {
    // modularity optimum on the frozen 50-graph set
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut q_gap: f64 = 0.0;
    for t in 0..50 {
        let n = 4 + t % 5;
        let g = random_graph(&mut rng, n, 0.5);
        let w = g.to_dense();
        let best = all_partitions(n).iter().map(|p| q_definition(&w, p)).fold(f64::NEG_INFINITY, f64::max);
        let p = detect(&g, Algorithm::Leiden, 1.0, t as u64).map_err(err)?;
        q_gap = q_gap.max(best - modularity(&g, &p, 1.0).map_err(err)?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut shap_gap: f64 = 0.0;
    for _ in 0..20 {
        let model = LinearModel {
            weights: (0..6).map(|_| rng.random_range(-3.0..3.0)).collect(),
            intercept: rng.random_range(-1.0..1.0),
            lambda: 0.0,
        };
        let background = random_matrix(&mut rng, 7, 6);
        let x = random_matrix(&mut rng, 5, 6);
        let fast = linear_shap(&model, &x, &background).map_err(err)?;
        let exact = exhaustive_shap_matrix(&model, &x, &background).map_err(err)?;
        shap_gap = fast.as_slice().iter().zip(exact.as_slice()).map(|(a, b)| (a - b).abs()).fold(shap_gap, f64::max);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut match_gap: f64 = 0.0;
    for t in 0..100 {
        let k = 1 + t % 6;
        let d = 12;
        let labels = |rng: &mut ChaCha8Rng| -> Vec<usize> {
            let mut l: Vec<usize> = (0..d).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
            l.shuffle(rng);
            l
        };
        let (a, b) = (Partition::new(&labels(&mut rng)), Partition::new(&labels(&mut rng)));
        let iou = iou_matrix(&a, &b).map_err(err)?;
        let cost = iou.map(|v| 1.0 - v);
        let total = |assign: &[usize]| assign.iter().enumerate().map(|(r, &c)| cost.get(r, c)).sum::<f64>();
        let best = permutations(k).iter().map(|p| total(p)).fold(f64::INFINITY, f64::min);
        match_gap = match_gap.max((total(&hungarian(&cost).map_err(err)?) - best).abs());
    }
    let ok = q_gap <= 1e-9 && shap_gap <= 1e-9 && match_gap <= 1e-12;
    Ok((ok, format!("max Q gap {q_gap:.1e} (50 graphs), SHAP gap {shap_gap:.1e} (20 models), assignment gap {match_gap:.1e} (100 matrices)")))
}

fn additive_synergy() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let d = 8;
        let coef: Vec<(f64, f64)> = (0..d).map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0))).collect();
        let model = move |r: &[f64]| r.iter().zip(&coef).map(|(x, (a, b))| a * x + b * x.sin()).sum::<f64>();
        let x = random_matrix(&mut rng, 200, d);
        let reference = x.select_rows(&[rng.random_range(0..200)]);
        let labels: Vec<usize> = (0..d).map(|i| if i < 4 { i } else { rng.random_range(0..4) }).collect();
        let modules = Partition::new(&labels).modules();
        let policy = InterventionPolicy::hard(1, seed);
        for a in 0..modules.len() {
            for b in (a + 1)..modules.len() {
                let s = synergy(&model, &x, None, &modules[a], &modules[b], EvalMetric::MeanPrediction, &policy, &reference).map_err(err)?;
                worst = worst.max(s.abs());
            }
        }
    }
    Ok((worst <= 1e-9, format!("max |Syn| {worst:.1e} over 20 models")))
}

fn xor_synergy() -> Check {
    let n = 2000;
    let data = gen_xor(&SyntheticSpec::new(vec![3, 3], 0.0, f64::INFINITY, n, 21)).map_err(err)?;
    let modules = data.truth.modules();
    let policy = InterventionPolicy::hard(8, 5);
    let syn_of = |y: &[f64]| -> Result<f64, String> {
        let model = fit_tree_ensemble(&data.x, y, TreeParams::default()).map_err(err)?;
        synergy(&model, &data.x, Some(y), &modules[0], &modules[1], EvalMetric::Auroc, &policy, &data.x).map_err(err)
    };
    let observed = syn_of(&data.y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut null = Vec::with_capacity(200);
    for _ in 0..200 {
        let mut y = data.y.clone();
        y.shuffle(&mut rng);
        null.push(syn_of(&y)?.abs());
    }
    null.sort_by(f64::total_cmp);
    let p99 = null[(0.99 * (null.len() - 1) as f64).round() as usize];
    Ok((observed.abs() > p99, format!("Syn {observed:.4} (|Syn| vs null p99 {p99:.4}, 200 permuted-label refits)")))
}

fn msi_calibration() -> Check {
    let f = additive_fixture(0)?;
    let cfg = PipelineConfig::default();
    let identity = msi(&f.phi, &cfg, Perturbation::Identity, 200, 1).map_err(err)?;
    let planted = msi(&f.phi, &cfg, Perturbation::bootstrap(), 200, 2).map_err(err)?;
    let noise = msi(&f.phi, &cfg, Perturbation::FreshNoise, 200, 3).map_err(err)?;
    let ok = identity.msi == 1.0 && planted.msi - noise.msi >= 0.3;
    Ok((ok, format!("identity {} , bootstrap {:.3}, fresh noise {:.3} (T=200)", identity.msi, planted.msi, noise.msi)))
}

fn fdr() -> Check {
    let (d, n, repeats, pairs) = (40usize, 2000usize, 50usize, 40 * 39 / 2);
    let mut retained = 0usize;
    for r in 0..repeats as u64 {
        let data = gen_additive(&SyntheticSpec::new(vec![8; 5], 0.8, 10.0, n, 500 + r)).map_err(err)?;
        let model = fit_ridge(&data.x, &data.y, 1e-3).map_err(err)?;
        let phi = linear_shap(&model, &data.x, &data.x).map_err(err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(900 + r);
        let mut cols = phi.columns();
        for c in &mut cols {
            c.shuffle(&mut rng);
        }
        let null = Matrix::from_columns(&cols).map_err(err)?;
        let mut cfg = PipelineConfig { significance: Some(Significance { permutations: 199, fdr_q: 0.05 }), ..Default::default() };
        cfg.graph_seed = r;
        let a = pipeline::working_matrix(&null, &cfg).map_err(err)?;
        let w = pipeline::affinity_of(&a, &cfg).map_err(err)?;
        retained += (0..d).flat_map(|i| ((i + 1)..d).map(move |j| (i, j))).filter(|&(i, j)| w.get(i, j) != 0.0).count();
    }
    let trials = (pairs * repeats) as f64;
    let frac = retained as f64 / trials;
    let bound = 0.05 + 3.0 * (0.05 * 0.95 / trials).sqrt();
    Ok((frac <= bound, format!("mean retained fraction {frac:.5} (bound {bound:.5}, {repeats} repeats)")))
}

fn r2_split(features: &Matrix, y: &[f64]) -> Result<f64, String> {
    let n = features.rows();
    let (train, test): (Vec<usize>, Vec<usize>) = (0..n).partition(|i| i % 2 == 0);
    let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let yte: Vec<f64> = test.iter().map(|&i| y[i]).collect();
    let m = fit_ridge(&features.select_rows(&train), &ytr, 1e-3).map_err(err)?;
    evaluate(EvalMetric::R2, &m.predict(&features.select_rows(&test)), Some(&yte)).map_err(err)
}

fn compression() -> Check {
    let f = additive_fixture(0)?;
    let p = pipeline::run(&f.phi, &PipelineConfig::default()).map_err(err)?.partition;
    let r2_phi = r2_split(&f.phi, &f.y)?;
    let r2_psi = r2_split(&module_attributions(&f.phi, &p).map_err(err)?.psi, &f.y)?;
    let r2_truth = r2_split(&module_attributions(&f.phi, &f.truth).map_err(err)?.psi, &f.y)?;
    let _ = &f.x;
    Ok((
        (r2_phi - r2_psi).abs() <= 0.02,
        format!("held-out R2 on Phi (d=32) {r2_phi:.4}, on Psi (K={}) {r2_psi:.4}, on planted Psi {r2_truth:.4}", p.k()),
    ))
}

struct Biased {
    x: Matrix,
    outcome: Vec<f64>,
    group: Vec<String>,
    model: LinearModel,
    phi: Matrix,
}

/// Module 3 alone carries the group shift; outcomes are `y > 0.5`.
fn biased_fixture(seed: u64) -> Result<Biased, String> {
    let mut spec = SyntheticSpec::new(vec![8; 4], 0.8, 10.0, 4000, seed);
    spec.module_scales = Some(vec![1.0, 1.0, 1.0, 0.3]);
    spec.group_shift = Some(GroupShift { module: 3, magnitude: 1.0 });
    let data = gen_additive(&spec).map_err(err)?;
    let model = fit_ridge(&data.x, &data.y, 1e-3).map_err(err)?;
    let phi = linear_shap(&model, &data.x, &data.x).map_err(err)?;
    let outcome = data.y.iter().map(|v| f64::from(u8::from(*v > 0.5))).collect();
    Ok(Biased { x: data.x, outcome, group: data.group, model, phi })
}

/// Seeds where the max-BEI module is the planted one, and seeds where the
/// what-if cut meets both bounds.
fn bias_runs(cfg: &PipelineConfig) -> Result<(usize, usize, Vec<String>), String> {
    let planted: Vec<usize> = (24..32).collect();
    let (mut hits, mut whatif_ok) = (0, 0);
    let mut detail = Vec::new();
    for seed in 0..5 {
        let b = biased_fixture(seed)?;
        let p = pipeline::run(&b.phi, cfg).map_err(err)?.partition;
        let labels = GroupLabels { group: b.group.clone(), y: Some(b.outcome.clone()), yhat: None, score: None };
        let bei = bias_exposure(&module_attributions(&b.phi, &p).map_err(err)?, &labels, 1e-6, 50, seed).map_err(err)?;
        let top = (0..bei.len()).max_by(|&i, &j| bei[i].bei.total_cmp(&bei[j].bei)).unwrap();
        // the discovered module holding most of the planted one
        let modules = p.modules();
        let home = (0..modules.len()).max_by_key(|&m| modules[m].iter().filter(|i| planted.contains(i)).count()).unwrap();
        if top == home {
            hits += 1;
        }
        let ctx = WhatIfContext {
            model: &b.model,
            x: &b.x,
            y: Some(&b.outcome),
            group: &b.group,
            partition: &p,
            metric: EvalMetric::Auroc,
            decision_threshold: 0.5,
            attribute: None,
        };
        let out = whatif(&ctx, top, 0.2).map_err(err)?;
        let (before, after) = (out.dp_gap_before.unwrap_or(0.0), out.dp_gap_after.unwrap_or(0.0));
        let metric_drop = out.metric_before - out.metric_after;
        if 1.0 - after / before >= 0.25 && metric_drop <= 0.03 {
            whatif_ok += 1;
        }
        detail.push(format!("|M|={} dp {before:.3}->{after:.3} auroc -{metric_drop:.3}", modules[top].len()));
    }
    Ok((hits, whatif_ok, detail))
}

fn bias_localization() -> Check {
    let (hits, ok, detail) = bias_runs(&PipelineConfig::default())?;
    let mut narrow = PipelineConfig::default();
    narrow.graph.sparsifier = moi_core::graph::Sparsifier::MutualTopK(7);
    let (hits7, ok7, _) = bias_runs(&narrow)?;
    Ok((
        hits >= 4 && ok == 5,
        format!(
            "max BEI on planted module in {hits}/5 seeds, whatif within bounds in {ok}/5 ({}); with mutual k=7: {hits7}/5 and {ok7}/5",
            detail.join(", ")
        ),
    ))
}

fn run_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism() -> Check {
    let b = biased_fixture(0)?;
    let names: Vec<String> = (0..32).map(|i| format!("x{i}")).collect();
    let ids: Vec<String> = (0..b.x.rows()).map(|i| format!("r{i}")).collect();
    let phi = moi_core::attribution::AttributionMatrix::new(b.phi.clone(), names.clone(), Some(ids.clone())).map_err(err)?;
    let labels = LabelTable { instance_ids: ids.clone(), group: b.group.clone(), class: None, y: Some(b.outcome.clone()), yhat: None };
    let model = StoredModel::Ridge(b.model.clone());
    let data = Table { names, ids: Some(ids), values: b.x.clone() };
    let mut cfg = Config::default();
    cfg.fairness.bootstraps = 50;
    let inputs = RunInputs { labels: Some(&labels), model: Some(&model), data: Some(&data), msi_runs: 20, sweep: false };
    let root = tempfile::tempdir().map_err(err)?;
    let mut outputs = Vec::new();
    for (i, threads) in [1, 1, 8].into_iter().enumerate() {
        let dir = root.path().join(format!("run{i}"));
        pool(threads).install(|| run(&cfg, &phi, &inputs, &dir)).map_err(err)?;
        outputs.push(run_bytes(&dir));
    }
    let same = outputs[0] == outputs[1] && outputs[0] == outputs[2];
    Ok((same, format!("{} artifacts compared across 2 single-threaded runs and 1 run on 8 threads", outputs[0].len())))
}

fn peak_memory_mb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

fn full_pipeline(phi: &Matrix) -> Result<usize, String> {
    let cfg = PipelineConfig::default();
    let a = pipeline::working_matrix(phi, &cfg).map_err(err)?;
    let out = pipeline::run_on_working(&a, &cfg).map_err(err)?;
    let m = module_summary(&SummaryInputs {
        graph: &out.graph,
        partition: &out.partition,
        phi,
        working: &a.values,
        labels: None,
        resolution: cfg.resolution,
        bei_eps: 1e-6,
        bootstraps: 0,
        seed: 0,
        ablation: None,
        msi: None,
    })
    .map_err(err)?;
    Ok(m.modules.len())
}

fn performance() -> Check {
    let data = gen_additive(&SyntheticSpec::new(vec![20; 25], 0.5, 10.0, 5000, 8)).map_err(err)?;
    let model = fit_ridge(&data.x, &data.y, 1e-3).map_err(err)?;
    let phi = linear_shap(&model, &data.x, &data.x).map_err(err)?;
    drop(data);
    let start = Instant::now();
    let k1 = pool(1).install(|| full_pipeline(&phi))?;
    let t1 = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let k8 = pool(8).install(|| full_pipeline(&phi))?;
    let t8 = start.elapsed().as_secs_f64();
    let mem = peak_memory_mb();
    let ok = t1 < 60.0 && t8 < 20.0 && k1 == k8 && mem.is_some_and(|m| m < 2048.0);
    let mem = mem.map_or("unknown".into(), |m| format!("{m:.0} MB"));
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    Ok((ok, format!("n=5000 d=500: 1 thread {t1:.2}s, 8 threads {t8:.2}s ({cores} cores available), {k1} modules, peak RSS {mem}")))
}

fn main() {
    let checks: [(&str, fn() -> Check); 11] = [
        ("planted-module recovery", recovery),
        ("exact values", exact_values),
        ("oracle equivalences", oracles),
        ("additive zero synergy", additive_synergy),
        ("xor synergy detection", xor_synergy),
        ("msi calibration", msi_calibration),
        ("fdr control", fdr),
        ("compression", compression),
        ("bias localization", bias_localization),
        ("determinism", determinism),
        ("performance", performance),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("{} {name}: {detail} [{:.1}s]", if pass { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {failed} failing");
}
