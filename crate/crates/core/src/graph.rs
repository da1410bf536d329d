//! Sparse symmetric explanation graphs built from dense affinities.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::affinity::AffinityMatrix;
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Sparsifier {
    TopK(usize),
    MutualTopK(usize),
    Threshold(f64),
}

impl Sparsifier {
    pub fn name(&self) -> &'static str {
        match self {
            Self::TopK(_) => "topk",
            Self::MutualTopK(_) => "mutual_topk",
            Self::Threshold(_) => "threshold",
        }
    }
}

/// When to add the `k0`-nearest-neighbour backbone.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Backbone {
    Off,
    /// `k0 = 2` once more than 10% of nodes are isolated.
    Auto,
    Fixed(usize),
}

pub const AUTO_BACKBONE_K0: usize = 2;
pub const AUTO_BACKBONE_SINGLETON_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GraphConfig {
    pub sparsifier: Sparsifier,
    pub min_degree: usize,
    pub backbone: Backbone,
    pub degree_norm: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { sparsifier: Sparsifier::MutualTopK(20), min_degree: 0, backbone: Backbone::Auto, degree_norm: 0.5 }
    }
}

/// How a graph was built.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GraphMeta {
    pub edge_rule: String,
    pub signed: bool,
    pub sparsifier: Option<Sparsifier>,
    pub min_degree: usize,
    /// Backbone size actually applied; 0 when none was added.
    pub backbone_k0: usize,
    pub degree_norm: f64,
    pub order: String,
}

/// Undirected weighted graph over `d` features.
///
/// Neighbour lists are sorted by id, there are no self-loops, and every
/// stored weight is finite and nonzero. Negative weights are allowed for
/// signed graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationGraph {
    d: usize,
    adj: Vec<Vec<(usize, f64)>>,
    pub meta: GraphMeta,
}

impl ExplanationGraph {
    pub fn empty(d: usize) -> Self {
        Self { d, adj: vec![Vec::new(); d], meta: GraphMeta::default() }
    }

    /// Builds from undirected edges `(i, j, w)`; each pair may appear once.
    pub fn from_edges(d: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); d];
        for &(i, j, w) in edges {
            if i >= d || j >= d {
                return Err(invalid(format!("edge ({i}, {j}) out of range for d = {d}")));
            }
            if i == j {
                return Err(invalid(format!("self-loop at node {i}")));
            }
            if !w.is_finite() || w == 0.0 {
                return Err(invalid(format!("edge ({i}, {j}) has invalid weight {w}")));
            }
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for (i, list) in adj.iter_mut().enumerate() {
            list.sort_by_key(|e| e.0);
            if list.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(invalid(format!("duplicate edge at node {i}")));
            }
        }
        Ok(Self { d, adj, meta: GraphMeta::default() })
    }

    fn from_edge_set(d: usize, w: &Matrix, keep: &[Vec<usize>]) -> Self {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); d];
        for (i, nbrs) in keep.iter().enumerate() {
            for &j in nbrs {
                adj[i].push((j, sym(w, i, j)));
            }
        }
        Self { d, adj, meta: GraphMeta::default() }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match self.adj[i].binary_search_by_key(&j, |e| e.0) {
            Ok(p) => self.adj[i][p].1,
            Err(_) => 0.0,
        }
    }

    /// Undirected edges with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, list) in self.adj.iter().enumerate() {
            for &(j, w) in list {
                if i < j {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// `s_i = Σ_j |w_ij|`.
    pub fn strengths(&self) -> Vec<f64> {
        self.adj.iter().map(|l| l.iter().map(|e| math::abs(e.1)).sum()).collect()
    }

    pub fn has_negative(&self) -> bool {
        self.adj.iter().flatten().any(|e| e.1 < 0.0)
    }

    /// Unsigned projection `|W|`.
    pub fn project_abs(&self) -> Self {
        let adj = self.adj.iter().map(|l| l.iter().map(|&(j, w)| (j, math::abs(w))).collect()).collect();
        Self { d: self.d, adj, meta: GraphMeta { signed: false, ..self.meta.clone() } }
    }

    /// Positive and negative layers as unsigned graphs.
    pub fn split_layers(&self) -> (Self, Self) {
        let pick = |neg: bool| -> Vec<Vec<(usize, f64)>> {
            self.adj
                .iter()
                .map(|l| l.iter().filter(|e| (e.1 < 0.0) == neg).map(|&(j, w)| (j, math::abs(w))).collect())
                .collect()
        };
        let meta = GraphMeta { signed: false, ..self.meta.clone() };
        (Self { d: self.d, adj: pick(false), meta: meta.clone() }, Self { d: self.d, adj: pick(true), meta })
    }

    /// Dense `d×d` weight matrix.
    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.d, self.d);
        for (i, list) in self.adj.iter().enumerate() {
            for &(j, w) in list {
                m.set(i, j, w);
            }
        }
        m
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.adj.len() != self.d {
            return Err(Error::DimensionMismatch { context: "adjacency", expected: self.d, found: self.adj.len() });
        }
        for (i, list) in self.adj.iter().enumerate() {
            for (p, &(j, w)) in list.iter().enumerate() {
                if j >= self.d || j == i {
                    return Err(invalid(format!("bad neighbour {j} of node {i}")));
                }
                if p > 0 && list[p - 1].0 >= j {
                    return Err(invalid(format!("neighbours of node {i} not strictly sorted")));
                }
                if !w.is_finite() || w == 0.0 {
                    return Err(invalid(format!("edge ({i}, {j}) has invalid weight {w}")));
                }
                if self.weight(j, i).to_bits() != w.to_bits() {
                    return Err(invalid(format!("edge ({i}, {j}) is not symmetric")));
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn sym(w: &Matrix, i: usize, j: usize) -> f64 {
    let (a, b) = (w.get(i, j), w.get(j, i));
    if a.to_bits() == b.to_bits() {
        a
    } else {
        0.5 * (a + b)
    }
}

/// Nonzero neighbours of `i` by decreasing `|w|`, ties by smaller id.
fn ranked_neighbors(w: &Matrix, i: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.cols()).filter(|&j| j != i && sym(w, i, j) != 0.0).collect();
    order.sort_by(|&a, &b| math::abs(sym(w, i, b)).total_cmp(&math::abs(sym(w, i, a))).then(a.cmp(&b)));
    order
}

fn top_k(w: &Matrix, i: usize, k: usize) -> Vec<usize> {
    let mut r = ranked_neighbors(w, i);
    r.truncate(k);
    r
}

fn insert_sorted(list: &mut Vec<usize>, j: usize) -> bool {
    match list.binary_search(&j) {
        Ok(_) => false,
        Err(p) => {
            list.insert(p, j);
            true
        }
    }
}

/// Sparsifies `W`, ranking neighbours by `|w|`; signs are kept.
pub fn sparsify(w: &AffinityMatrix, rule: Sparsifier, min_degree: usize) -> Result<ExplanationGraph> {
    let d = w.d();
    let wm = &w.values;
    let mut keep: Vec<Vec<usize>> = vec![Vec::new(); d];
    match rule {
        Sparsifier::TopK(k) | Sparsifier::MutualTopK(k) => {
            if k < 1 || k >= d {
                return Err(invalid(format!("k must satisfy 1 <= k < d, found k = {k}, d = {d}")));
            }
            let mutual = matches!(rule, Sparsifier::MutualTopK(_));
            let mut tops: Vec<Vec<usize>> = crate::par::map_indexed(d, |i| top_k(wm, i, k));
            for t in &mut tops {
                t.sort_unstable();
            }
            for i in 0..d {
                for &j in &tops[i] {
                    let back = tops[j].binary_search(&i).is_ok();
                    if back || !mutual {
                        insert_sorted(&mut keep[i], j);
                        insert_sorted(&mut keep[j], i);
                    }
                }
            }
        }
        Sparsifier::Threshold(theta) => {
            if !(theta > 0.0) {
                return Err(invalid(format!("threshold must be positive, found {theta}")));
            }
            for i in 0..d {
                for j in (i + 1)..d {
                    let v = sym(wm, i, j);
                    if v != 0.0 && math::abs(v) >= theta {
                        keep[i].push(j);
                        keep[j].push(i);
                    }
                }
            }
            for list in &mut keep {
                list.sort_unstable();
            }
        }
    }
    if min_degree > 0 {
        for i in 0..d {
            if keep[i].len() >= min_degree {
                continue;
            }
            for j in ranked_neighbors(wm, i) {
                if keep[i].len() >= min_degree {
                    break;
                }
                if insert_sorted(&mut keep[i], j) {
                    insert_sorted(&mut keep[j], i);
                }
            }
        }
    }
    let mut g = ExplanationGraph::from_edge_set(d, wm, &keep);
    g.meta = GraphMeta {
        edge_rule: String::from(w.rule.name()),
        signed: w.signed,
        sparsifier: Some(rule),
        min_degree,
        backbone_k0: 0,
        degree_norm: 0.0,
        order: String::from("sparsify>backbone>normalize"),
    };
    let isolated = (0..d).filter(|&i| g.degree(i) == 0).count();
    if isolated > 0 {
        log::warn!("sparsified graph has {isolated} isolated node(s)");
    }
    Ok(g)
}

/// Unions each node's top-`k0` neighbours from `W` into `G` when `G` is disconnected.
pub fn add_backbone(g: &ExplanationGraph, w: &AffinityMatrix, k0: usize) -> Result<ExplanationGraph> {
    if k0 == 0 || connected_components(g).len() <= 1 {
        return Ok(g.clone());
    }
    if w.d() != g.d() {
        return Err(Error::DimensionMismatch { context: "backbone affinity", expected: g.d(), found: w.d() });
    }
    let d = g.d();
    let mut keep: Vec<Vec<usize>> = (0..d).map(|i| g.neighbors(i).iter().map(|e| e.0).collect()).collect();
    for i in 0..d {
        for j in top_k(&w.values, i, k0) {
            insert_sorted(&mut keep[i], j);
            insert_sorted(&mut keep[j], i);
        }
    }
    // Existing edges keep their current weights; new ones come from W.
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); d];
    for i in 0..d {
        for &j in &keep[i] {
            let current = g.weight(i, j);
            adj[i].push((j, if current != 0.0 { current } else { sym(&w.values, i, j) }));
        }
    }
    let mut meta = g.meta.clone();
    meta.backbone_k0 = k0;
    Ok(ExplanationGraph { d, adj, meta })
}

/// `(W + Wᵀ) / 2`.
pub fn symmetrize(w: &AffinityMatrix) -> AffinityMatrix {
    let d = w.d();
    let mut values = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            values.set(i, j, 0.5 * (w.get(i, j) + w.get(j, i)));
        }
    }
    AffinityMatrix { values, rule: w.rule.clone(), signed: w.signed }
}

/// `w_ij / (s_i^β s_j^β)` with pre-normalization strengths.
pub fn degree_normalize(g: &ExplanationGraph, beta: f64) -> Result<ExplanationGraph> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(invalid(format!("degree normalization exponent must lie in [0, 1], found {beta}")));
    }
    let mut out = g.clone();
    out.meta.degree_norm = beta;
    if beta == 0.0 {
        return Ok(out);
    }
    let scale: Vec<f64> = g.strengths().iter().map(|s| if *s > 0.0 { math::powf(*s, beta) } else { 1.0 }).collect();
    for (i, list) in out.adj.iter_mut().enumerate() {
        for e in list.iter_mut() {
            e.1 = e.1 / (scale[i] * scale[e.0]);
        }
    }
    Ok(out)
}

/// Components ordered by smallest member; members ascending.
pub fn connected_components(g: &ExplanationGraph) -> Vec<Vec<usize>> {
    let d = g.d();
    let mut seen = vec![false; d];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..d {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Vec::new();
        while let Some(u) = stack.pop() {
            comp.push(u);
            for &(v, _) in g.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Sparsify, then backbone, then degree-normalize.
pub fn build(w: &AffinityMatrix, cfg: &GraphConfig) -> Result<ExplanationGraph> {
    let g = sparsify(w, cfg.sparsifier, cfg.min_degree)?;
    let k0 = match cfg.backbone {
        Backbone::Off => 0,
        Backbone::Fixed(k0) => k0,
        Backbone::Auto => {
            let isolated = (0..g.d()).filter(|&i| g.degree(i) == 0).count();
            if isolated as f64 > AUTO_BACKBONE_SINGLETON_FRACTION * g.d() as f64 {
                AUTO_BACKBONE_K0
            } else {
                0
            }
        }
    };
    let g = add_backbone(&g, w, k0)?;
    degree_normalize(&g, cfg.degree_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::AffinityRule;

    fn aff(rows: &[&[f64]]) -> AffinityMatrix {
        AffinityMatrix { values: Matrix::from_rows(rows).unwrap(), rule: AffinityRule::CosineMagnitude, signed: false }
    }

    fn dense(d: usize, f: impl Fn(usize, usize) -> f64) -> AffinityMatrix {
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    m.set(i, j, f(i.min(j), i.max(j)));
                }
            }
        }
        AffinityMatrix { values: m, rule: AffinityRule::CosineMagnitude, signed: false }
    }

    #[test]
    fn mutual_topk_path() {
        let w = aff(&[&[0.0, 0.9, 0.0], &[0.9, 0.0, 0.5], &[0.0, 0.5, 0.0]]);
        let g = sparsify(&w, Sparsifier::MutualTopK(1), 0).unwrap();
        assert_eq!(g.edges(), vec![(0, 1, 0.9)]);
        let g = sparsify(&w, Sparsifier::TopK(1), 0).unwrap();
        assert_eq!(g.edges(), vec![(0, 1, 0.9), (1, 2, 0.5)]);
        g.validate().unwrap();
    }

    #[test]
    fn topk_full_and_threshold_empty() {
        let w = dense(5, |i, j| 0.1 + (i * 5 + j) as f64 / 100.0);
        assert_eq!(sparsify(&w, Sparsifier::TopK(4), 0).unwrap().edge_count(), 10);
        assert_eq!(sparsify(&w, Sparsifier::Threshold(2.0), 0).unwrap().edge_count(), 0);
        assert!(sparsify(&w, Sparsifier::TopK(5), 0).is_err());
        assert!(sparsify(&w, Sparsifier::Threshold(0.0), 0).is_err());
    }

    #[test]
    fn ties_prefer_smaller_id() {
        let w = dense(4, |_, _| 0.5);
        let g = sparsify(&w, Sparsifier::TopK(1), 0).unwrap();
        assert_eq!(g.edges(), vec![(0, 1, 0.5), (0, 2, 0.5), (0, 3, 0.5)]);
    }

    #[test]
    fn min_degree_fill() {
        let w = dense(4, |i, j| if (i, j) == (0, 1) { 0.9 } else { 0.1 * (i + j) as f64 });
        let g = sparsify(&w, Sparsifier::Threshold(0.8), 1).unwrap();
        assert!((0..4).all(|i| g.degree(i) >= 1));
        assert_eq!(g.weight(2, 3), 0.5);
    }

    #[test]
    fn signed_ranking_keeps_negative_ties() {
        let w = AffinityMatrix {
            values: Matrix::from_rows(&[&[0.0, -0.9, 0.2], &[-0.9, 0.0, 0.1], &[0.2, 0.1, 0.0]]).unwrap(),
            rule: AffinityRule::Pearson,
            signed: true,
        };
        let g = sparsify(&w, Sparsifier::MutualTopK(1), 0).unwrap();
        assert_eq!(g.edges(), vec![(0, 1, -0.9)]);
        assert!(g.has_negative());
        assert_eq!(g.project_abs().weight(0, 1), 0.9);
    }

    #[test]
    fn backbone_examples() {
        let w = aff(&[&[0.0, 0.2], &[0.2, 0.0]]);
        let g = ExplanationGraph::empty(2);
        assert_eq!(add_backbone(&g, &w, 1).unwrap().edges(), vec![(0, 1, 0.2)]);
        assert_eq!(add_backbone(&g, &w, 0).unwrap(), g);
        let tri = ExplanationGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let w3 = dense(3, |_, _| 0.3);
        assert_eq!(add_backbone(&tri, &w3, 2).unwrap(), tri);
    }

    #[test]
    fn symmetrize_examples() {
        let w = aff(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let s = symmetrize(&w);
        assert_eq!((s.get(0, 1), s.get(1, 0)), (0.5, 0.5));
        let anti = aff(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        assert_eq!(symmetrize(&anti).values, Matrix::zeros(2, 2));
        let sy = aff(&[&[0.0, 0.3], &[0.3, 0.0]]);
        assert_eq!(symmetrize(&sy), sy);
    }

    #[test]
    fn degree_normalize_examples() {
        let g = ExplanationGraph::from_edges(3, &[(0, 1, 0.4)]).unwrap();
        assert_eq!(degree_normalize(&g, 0.0).unwrap().edges(), g.edges());
        assert!((degree_normalize(&g, 0.5).unwrap().weight(0, 1) - 1.0).abs() < 1e-15);
        assert!((degree_normalize(&g, 1.0).unwrap().weight(0, 1) - 2.5).abs() < 1e-15);
        assert!(degree_normalize(&g, 1.5).is_err());
    }

    #[test]
    fn components() {
        assert_eq!(connected_components(&ExplanationGraph::empty(3)), vec![vec![0], vec![1], vec![2]]);
        let tri = ExplanationGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        assert_eq!(connected_components(&tri).len(), 1);
        let two = ExplanationGraph::from_edges(4, &[(0, 3, 1.0), (1, 2, 1.0)]).unwrap();
        assert_eq!(connected_components(&two), vec![vec![0, 3], vec![1, 2]]);
    }

    #[test]
    fn validator_rejects_bad_graphs() {
        assert!(ExplanationGraph::from_edges(2, &[(0, 0, 1.0)]).is_err());
        assert!(ExplanationGraph::from_edges(2, &[(0, 1, 0.0)]).is_err());
        assert!(ExplanationGraph::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0)]).is_err());
    }
}
