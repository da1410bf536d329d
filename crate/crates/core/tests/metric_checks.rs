use moi_core::affinity::{self, AffinityRule, CorrMethod};
use moi_core::attribution::WorkingMatrix;
use moi_core::community::{consensus_partition, modularity, stability_sweep, ConsensusMatrix, Partition};
use moi_core::graph::{degree_normalize, sparsify, Sparsifier};
use moi_core::metrics::{bias_exposure, module_attributions, msi, partition_agreement, GroupLabels, Perturbation};
use moi_core::pipeline::PipelineConfig;
use moi_core::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect()).unwrap()
}

/// Blocks of columns sharing a latent factor.
fn block_matrix(rng: &mut ChaCha8Rng, n: usize, blocks: usize, size: usize, noise: f64) -> Matrix {
    let mut m = Matrix::zeros(n, blocks * size);
    for s in 0..n {
        for b in 0..blocks {
            let z: f64 = StandardNormal.sample(rng);
            for i in 0..size {
                let e: f64 = StandardNormal.sample(rng);
                m.set(s, b * size + i, z + noise * e);
            }
        }
    }
    m
}

#[test]
fn bias_exposure_of_unit_mean_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 10_000;
    let group: Vec<String> = (0..n).map(|s| if s % 2 == 0 { "a".into() } else { "b".into() }).collect();
    let values: Vec<f64> = (0..n)
        .map(|s| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if s % 2 == 0 { 1.0 + z } else { z }
        })
        .collect();
    let phi = Matrix::from_vec(n, 1, values).unwrap();
    let psi = module_attributions(&phi, &Partition::single(1)).unwrap();
    let e = bias_exposure(&psi, &GroupLabels::new(group), 1e-6, 50, 3).unwrap();
    assert!((e[0].bei - 1.0).abs() < 0.05, "{:?}", e[0]);
    assert!(e[0].ci_low <= e[0].bei && e[0].bei <= e[0].ci_high);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn bias_exposure_ignores_constant_shifts(seed in 0u64..10_000, shift in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = gaussian(&mut rng, 40, 3);
        let shifted = phi.map(|v| v + shift);
        let group: Vec<String> = (0..40).map(|s| ["x", "y", "z"][s % 3].to_string()).collect();
        let p = Partition::new(&[0, 1, 1]);
        let a = bias_exposure(&module_attributions(&phi, &p).unwrap(), &GroupLabels::new(group.clone()), 1e-6, 0, 0).unwrap();
        let b = bias_exposure(&module_attributions(&shifted, &p).unwrap(), &GroupLabels::new(group), 1e-6, 0, 0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.bei - y.bei).abs() < 1e-9);
        }
    }

    #[test]
    fn module_sums_preserve_row_totals(seed in 0u64..10_000, d in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = gaussian(&mut rng, 25, d);
        let labels: Vec<usize> = (0..d).map(|_| rng.random_range(0..4)).collect();
        let psi = module_attributions(&phi, &Partition::new(&labels)).unwrap();
        for (a, b) in psi.psi.row_sums().iter().zip(phi.row_sums()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mutual_edges_are_a_subset_of_topk_edges(seed in 0u64..10_000, d in 3usize..15, k in 1usize..6) {
        prop_assume!(k < d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = affinity::cosine_magnitude(&WorkingMatrix::raw(gaussian(&mut rng, 30, d)));
        let top = sparsify(&w, Sparsifier::TopK(k), 0).unwrap();
        let mutual = sparsify(&w, Sparsifier::MutualTopK(k), 0).unwrap();
        for (i, j, _) in mutual.edges() {
            prop_assert!(top.weight(i, j) != 0.0);
        }
        let normalized = degree_normalize(&top, 0.5).unwrap();
        prop_assert_eq!(
            normalized.edges().iter().map(|e| (e.0, e.1)).collect::<Vec<_>>(),
            top.edges().iter().map(|e| (e.0, e.1)).collect::<Vec<_>>()
        );
        normalized.validate().unwrap();
    }

    #[test]
    fn cosine_and_correlation_ignore_positive_column_scaling(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(&mut rng, 20, 5);
        let scales: Vec<f64> = (0..5).map(|_| rng.random_range(0.01..100.0)).collect();
        let mut scaled = a.clone();
        for s in 0..20 {
            for (c, f) in scales.iter().enumerate() {
                scaled.set(s, c, a.get(s, c) * f);
            }
        }
        let (wa, wb) = (WorkingMatrix::raw(a), WorkingMatrix::raw(scaled));
        let pairs = [
            (affinity::cosine_magnitude(&wa), affinity::cosine_magnitude(&wb)),
            (affinity::corr_signed(&wa, CorrMethod::Pearson).unwrap(), affinity::corr_signed(&wb, CorrMethod::Pearson).unwrap()),
            (affinity::corr_signed(&wa, CorrMethod::Spearman).unwrap(), affinity::corr_signed(&wb, CorrMethod::Spearman).unwrap()),
        ];
        for (x, y) in pairs {
            for i in 0..5 {
                for j in 0..5 {
                    prop_assert!((x.get(i, j) - y.get(i, j)).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn binned_mutual_information_of_independent_columns_is_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = Matrix::from_vec(10_000, 2, (0..20_000).map(|_| rng.random::<f64>()).collect()).unwrap();
    let w = affinity::mutual_info_binned(&WorkingMatrix::raw(a), 8).unwrap();
    assert!(w.get(0, 1) <= 0.02 && w.get(0, 1) >= 0.0);
}

#[test]
fn conditioning_on_the_common_cause_shrinks_correlation() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 5000;
    let mut m = Matrix::zeros(n, 3);
    for s in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        let e1: f64 = StandardNormal.sample(&mut rng);
        let e2: f64 = StandardNormal.sample(&mut rng);
        m.set(s, 0, z + e1);
        m.set(s, 1, z + e2);
        m.set(s, 2, z);
    }
    let a = WorkingMatrix::raw(m);
    let raw = affinity::partial_corr(&a, 0, 1, &[]).unwrap();
    let conditioned = affinity::partial_corr(&a, 0, 1, &[2]).unwrap();
    assert!(conditioned.abs() < raw.abs(), "{conditioned} vs {raw}");
}

#[test]
fn duplicated_column_survives_the_significance_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut m = gaussian(&mut rng, 200, 4);
    for s in 0..200 {
        let v = m.get(s, 0);
        m.set(s, 3, v);
    }
    let a = WorkingMatrix::raw(m);
    let w = affinity::compute(&a, &AffinityRule::Pearson, None).unwrap();
    let kept = affinity::significance_filter(&w, &a, 199, 0.05, 11).unwrap();
    assert!((kept.get(0, 3) - 1.0).abs() < 1e-12);
    assert!(affinity::significance_filter(&w, &a, 0, 0.05, 11).is_err());
}

fn planted_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.graph.sparsifier = Sparsifier::MutualTopK(5);
    cfg
}

#[test]
fn identity_perturbation_gives_perfect_stability() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let phi = block_matrix(&mut rng, 300, 3, 6, 0.5);
    let r = msi(&phi, &planted_config(), Perturbation::Identity, 5, 1).unwrap();
    assert_eq!(r.msi, 1.0);
    let c = r.consensus.matrix();
    for i in 0..18 {
        for j in 0..18 {
            let same = r.reference.module_of(i) == r.reference.module_of(j);
            assert_eq!(c.get(i, j), if same { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn fresh_noise_is_unstable() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let phi = block_matrix(&mut rng, 500, 6, 5, 0.5);
    let mut values = Vec::new();
    for rep in 0..20 {
        let r = msi(&phi, &planted_config(), Perturbation::FreshNoise, 4, rep).unwrap();
        values.push(r.msi);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    assert!(mean < 0.5, "fresh-noise MSI {mean}");
    let bootstrap = msi(&phi, &planted_config(), Perturbation::bootstrap(), 10, 9).unwrap();
    assert!(bootstrap.msi > 0.9, "bootstrap MSI {}", bootstrap.msi);
}

#[test]
fn sweep_selection_and_floor() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let phi = block_matrix(&mut rng, 300, 3, 6, 0.5);
    let base = planted_config();
    let one = stability_sweep(&phi, &[5], &[1.0], &base, Perturbation::bootstrap(), 10, 0.2, 3).unwrap();
    assert_eq!(one.selected, 0);
    assert_eq!(one.grid.len(), 1);
    let grid = stability_sweep(&phi, &[3, 5], &[0.5, 1.0, 1.5], &base, Perturbation::bootstrap(), 10, 0.2, 3).unwrap();
    let chosen = grid.selected();
    assert!(chosen.q.unwrap() >= 0.2);
    assert!(grid.grid.iter().filter(|s| s.q.is_some_and(|q| q >= 0.2)).all(|s| s.msi <= chosen.msi));
    assert!(stability_sweep(&phi, &[5], &[1.0], &base, Perturbation::bootstrap(), 10, 1.1, 3).is_err());
}

#[test]
fn consensus_recovers_repeated_and_planted_partitions() {
    let p = Partition::new(&[0, 0, 1, 1, 2, 2, 2]);
    let c = ConsensusMatrix::from_partitions(7, &vec![p.clone(); 6]).unwrap();
    assert_eq!(consensus_partition(&c, 0.5, 0).unwrap(), p);
    let eye = ConsensusMatrix::new(Matrix::from_vec(4, 4, (0..16).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect()).unwrap()).unwrap();
    assert_eq!(consensus_partition(&eye, 0.5, 0).unwrap(), Partition::singletons(4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn consensus_ignores_run_order(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut runs: Vec<Partition> = (0..6).map(|_| Partition::new(&(0..9).map(|_| rng.random_range(0..3)).collect::<Vec<usize>>())).collect();
        let a = ConsensusMatrix::from_partitions(9, &runs).unwrap();
        runs.reverse();
        runs.swap(0, 3);
        let b = ConsensusMatrix::from_partitions(9, &runs).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(consensus_partition(&a, 0.5, seed).unwrap(), consensus_partition(&b, 0.5, seed).unwrap());
    }
}

#[test]
fn sweep_on_planted_blocks_recovers_them() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let phi = block_matrix(&mut rng, 400, 4, 5, 0.6);
    let truth = Partition::new(&(0..20).map(|i| i / 5).collect::<Vec<_>>());
    let report = stability_sweep(&phi, &[3, 5], &[0.5, 1.0, 1.5], &planted_config(), Perturbation::bootstrap(), 10, 0.2, 4).unwrap();
    let s = report.selected();
    let mut cfg = planted_config();
    cfg.graph.sparsifier = Sparsifier::MutualTopK(s.k);
    cfg.resolution = s.resolution;
    let out = moi_core::pipeline::run(&phi, &cfg).unwrap();
    assert!(partition_agreement(&out.partition, &truth).unwrap().ari >= 0.9);
    assert!(modularity(&out.graph, &out.partition, s.resolution).unwrap() >= 0.2);
}
