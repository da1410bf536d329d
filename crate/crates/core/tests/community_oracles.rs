use moi_core::community::{detect, leiden_refine, louvain, modularity, vertex_mover, Algorithm, Partition};
use moi_core::graph::{connected_components, ExplanationGraph};
use moi_core::metrics::partition_agreement;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every set partition of `0..n` as restricted-growth strings.
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
    let mut cur = vec![0];
    rec(1, n, &mut cur, 0, &mut out);
    out
}

/// Modularity straight from the double-sum definition.
fn q_definition(g: &ExplanationGraph, labels: &[usize], gamma: f64) -> f64 {
    let d = g.d();
    let w = g.to_dense();
    let k: Vec<f64> = (0..d).map(|i| (0..d).map(|j| w.get(i, j)).sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..d {
        for j in 0..d {
            if labels[i] == labels[j] {
                q += w.get(i, j) - gamma * k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

fn brute_force_max_q(g: &ExplanationGraph, gamma: f64) -> f64 {
    all_partitions(g.d()).iter().map(|p| q_definition(g, p, gamma)).fold(f64::NEG_INFINITY, f64::max)
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

fn planted_blocks(rng: &mut ChaCha8Rng, n: usize, p_in: f64, p_out: f64) -> ExplanationGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let same = (i < n / 2) == (j < n / 2);
            if rng.random::<f64>() < if same { p_in } else { p_out } {
                edges.push((i, j, 1.0));
            }
        }
    }
    ExplanationGraph::from_edges(n, &edges).unwrap()
}

#[test]
fn bell_numbers() {
    assert_eq!(all_partitions(5).len(), 52);
    assert_eq!(all_partitions(8).len(), 4140);
}

#[test]
fn definition_matches_library_modularity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let g = random_graph(&mut rng, 7, 0.5);
        let labels: Vec<usize> = (0..7).map(|_| rng.random_range(0..3)).collect();
        let p = Partition::new(&labels);
        for gamma in [0.5, 1.0, 1.7] {
            assert!((q_definition(&g, &labels, gamma) - modularity(&g, &p, gamma).unwrap()).abs() < 1e-12);
        }
    }
}

#[test]
fn detection_reaches_brute_force_optimum_on_small_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for t in 0..50 {
        let n = 4 + t % 5;
        let g = random_graph(&mut rng, n, 0.5);
        let best = brute_force_max_q(&g, 1.0);
        let p = detect(&g, Algorithm::Leiden, 1.0, t as u64).unwrap();
        let q = modularity(&g, &p, 1.0).unwrap();
        worst = worst.max(best - q);
    }
    assert!(worst <= 1e-9, "largest gap to optimum {worst}");
}

#[test]
fn complete_graph_optimum_is_single_module() {
    let mut edges = Vec::new();
    for i in 0..5 {
        for j in (i + 1)..5 {
            edges.push((i, j, 1.0));
        }
    }
    let g = ExplanationGraph::from_edges(5, &edges).unwrap();
    let best = all_partitions(5).into_iter().max_by(|a, b| q_definition(&g, a, 1.0).total_cmp(&q_definition(&g, b, 1.0))).unwrap();
    assert_eq!(Partition::new(&best), Partition::single(5));
    assert_eq!(detect(&g, Algorithm::Leiden, 1.0, 0).unwrap(), Partition::single(5));
}

#[test]
fn planted_two_block_graph_recovered() {
    let truth = Partition::new(&(0..20).map(|i| i / 10).collect::<Vec<_>>());
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let g = planted_blocks(&mut rng, 20, 0.9, 0.05);
        let p = detect(&g, Algorithm::Leiden, 1.0, seed).unwrap();
        assert_eq!(partition_agreement(&p, &truth).unwrap().ari, 1.0, "seed {seed}");
    }
    // The 10-node variant is small enough to confirm the blocks are the optimum.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = planted_blocks(&mut rng, 10, 0.9, 0.05);
    let small_truth = Partition::new(&(0..10).map(|i| i / 5).collect::<Vec<_>>());
    let best = brute_force_max_q(&g, 1.0);
    assert!((modularity(&g, &small_truth, 1.0).unwrap() - best).abs() < 1e-12);
}

fn is_connected_module(g: &ExplanationGraph, members: &[usize]) -> bool {
    let sub: Vec<(usize, usize, f64)> = g
        .edges()
        .into_iter()
        .filter(|(i, j, _)| members.contains(i) && members.contains(j))
        .map(|(i, j, w)| (members.iter().position(|m| *m == i).unwrap(), members.iter().position(|m| *m == j).unwrap(), w))
        .collect();
    connected_components(&ExplanationGraph::from_edges(members.len(), &sub).unwrap()).len() == 1
}

#[test]
fn leiden_never_decreases_quality_over_100_seeds() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(6..30);
        let g = random_graph(&mut rng, n, 0.2);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let start = Partition::new(&labels);
        let gamma = [0.5, 1.0, 1.5][seed as usize % 3];
        let out = leiden_refine(&g, &start, gamma, seed).unwrap();
        assert!(modularity(&g, &out, gamma).unwrap() >= modularity(&g, &start, gamma).unwrap() - 1e-12);
        assert!(out.modules().iter().all(|m| is_connected_module(&g, m)), "seed {seed}");
    }
}

proptest! {
    #[test]
    fn louvain_beats_singletons_and_stays_in_range(seed in 0u64..10_000, n in 2usize..25, p in 0.1f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, n, p);
        let part = louvain(&g, 1.0, seed).unwrap();
        let q = modularity(&g, &part, 1.0).unwrap();
        let q0 = modularity(&g, &Partition::singletons(n), 1.0).unwrap();
        prop_assert!(q >= q0 - 1e-12);
        prop_assert!((-1.0..=1.0).contains(&q));
    }

    #[test]
    fn detection_is_deterministic(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, 15, 0.3);
        prop_assert_eq!(detect(&g, Algorithm::Leiden, 1.0, seed).unwrap(), detect(&g, Algorithm::Leiden, 1.0, seed).unwrap());
    }

    #[test]
    fn vertex_mover_never_lowers_quality(seed in 0u64..10_000, n in 2usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, n, 0.3);
        let start = Partition::new(&(0..n).map(|_| rng.random_range(0..3)).collect::<Vec<usize>>());
        let out = vertex_mover(&g, &start, 1.0).unwrap();
        prop_assert!(modularity(&g, &out, 1.0).unwrap() >= modularity(&g, &start, 1.0).unwrap() - 1e-12);
    }
}
