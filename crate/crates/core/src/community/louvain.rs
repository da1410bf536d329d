//! Louvain local moving plus Leiden refinement for generalized modularity
//! `Q(γ) = (1/2m) Σ_ij (A_ij − γ k_i k_j / 2m) 1[c_i = c_j]`.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::partition::Partition;
use super::quality;
use crate::error::{invalid, Error, Result};
use crate::graph::ExplanationGraph;
use crate::rng;

pub const GAIN_TOLERANCE: f64 = 1e-12;
pub const MAX_OUTER_ITERATIONS: usize = 100;
const MAX_PASSES: usize = 10_000;

/// Working graph with self-loops, as produced by aggregation.
#[derive(Debug, Clone)]
pub(crate) struct LevelGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_w: Vec<f64>,
    k: Vec<f64>,
    two_m: f64,
}

impl LevelGraph {
    pub(crate) fn new(g: &ExplanationGraph) -> Result<Self> {
        if g.has_negative() {
            return Err(Error::SignedGraph);
        }
        let adj: Vec<Vec<(usize, f64)>> = (0..g.d()).map(|i| g.neighbors(i).to_vec()).collect();
        let k: Vec<f64> = adj.iter().map(|l| l.iter().map(|e| e.1).sum()).collect();
        let two_m = k.iter().sum();
        Ok(Self { self_w: vec![0.0; adj.len()], adj, k, two_m })
    }

    fn n(&self) -> usize {
        self.adj.len()
    }

    /// Collapses each community into one node; `A'_cc` collects both
    /// directions of every internal edge.
    fn aggregate(&self, comm: &[usize], nc: usize) -> Self {
        let mut members = vec![Vec::new(); nc];
        for (i, &c) in comm.iter().enumerate() {
            members[c].push(i);
        }
        let mut acc = vec![0.0; nc];
        let mut mark = vec![false; nc];
        let mut touched: Vec<usize> = Vec::new();
        let mut adj = Vec::with_capacity(nc);
        let mut self_w = vec![0.0; nc];
        for (c, nodes) in members.iter().enumerate() {
            for &i in nodes {
                self_w[c] += self.self_w[i];
                for &(j, w) in &self.adj[i] {
                    let cj = comm[j];
                    if cj == c {
                        self_w[c] += w;
                    } else {
                        if !mark[cj] {
                            mark[cj] = true;
                            touched.push(cj);
                        }
                        acc[cj] += w;
                    }
                }
            }
            touched.sort_unstable();
            adj.push(touched.iter().map(|&cj| (cj, acc[cj])).collect::<Vec<_>>());
            for &cj in &touched {
                acc[cj] = 0.0;
                mark[cj] = false;
            }
            touched.clear();
        }
        let k = (0..nc).map(|c| members[c].iter().map(|&i| self.k[i]).sum()).collect();
        Self { adj, self_w, k, two_m: self.two_m }
    }
}

/// Relabels to `0..nc` by first occurrence.
fn relabel(comm: &mut [usize]) -> usize {
    let mut map = vec![usize::MAX; comm.len().max(comm.iter().copied().max().map_or(0, |m| m + 1))];
    let mut next = 0;
    for c in comm.iter_mut() {
        if map[*c] == usize::MAX {
            map[*c] = next;
            next += 1;
        }
        *c = map[*c];
    }
    next
}

/// Repeated passes of single-node moves until no move improves `Q(γ)`
/// by more than the gain tolerance. Returns whether anything moved.
fn local_moves(g: &LevelGraph, comm: &mut [usize], gamma: f64, rng: &mut rng::Rng) -> bool {
    let n = g.n();
    let mut tot = vec![0.0; n];
    let mut size = vec![0usize; n];
    for i in 0..n {
        tot[comm[i]] += g.k[i];
        size[comm[i]] += 1;
    }
    let mut empty: Vec<usize> = (0..n).filter(|&c| size[c] == 0).rev().collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut acc = vec![0.0; n];
    let mut mark = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();
    let scale = gamma / g.two_m;
    let mut any = false;
    for _ in 0..MAX_PASSES {
        let mut moved = false;
        for &i in &order {
            let ci = comm[i];
            let ki = g.k[i];
            for &(j, w) in &g.adj[i] {
                let cj = comm[j];
                if !mark[cj] {
                    mark[cj] = true;
                    touched.push(cj);
                }
                acc[cj] += w;
            }
            tot[ci] -= ki;
            size[ci] -= 1;
            let mut best = ci;
            let mut best_gain = acc[ci] - scale * ki * tot[ci];
            for &c in &touched {
                if c == ci {
                    continue;
                }
                let gain = acc[c] - scale * ki * tot[c];
                if gain > best_gain + GAIN_TOLERANCE {
                    best = c;
                    best_gain = gain;
                }
            }
            if size[ci] > 0 && 0.0 > best_gain + GAIN_TOLERANCE {
                best = empty.pop().expect("an empty community exists while ci is shared");
            }
            if best != ci {
                if size[ci] == 0 {
                    empty.push(ci);
                }
                moved = true;
            }
            tot[best] += ki;
            size[best] += 1;
            comm[i] = best;
            for &c in &touched {
                acc[c] = 0.0;
                mark[c] = false;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
        any = true;
    }
    any
}

fn check_args(g: &ExplanationGraph, gamma: f64) -> Result<()> {
    if g.d() == 0 {
        return Err(invalid("graph has no nodes"));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(invalid("resolution must be positive"));
    }
    Ok(())
}

/// Two-phase greedy modularity maximization at resolution `γ`.
pub fn louvain(g: &ExplanationGraph, gamma: f64, seed: u64) -> Result<Partition> {
    check_args(g, gamma)?;
    let mut level = LevelGraph::new(g)?;
    if level.two_m == 0.0 {
        return Ok(Partition::singletons(g.d()));
    }
    let mut rng = rng::rng(seed);
    let mut membership: Vec<usize> = (0..g.d()).collect();
    for _ in 0..MAX_OUTER_ITERATIONS {
        let mut comm: Vec<usize> = (0..level.n()).collect();
        if !local_moves(&level, &mut comm, gamma, &mut rng) {
            break;
        }
        let nc = relabel(&mut comm);
        for m in &mut membership {
            *m = comm[*m];
        }
        if nc == level.n() {
            break;
        }
        level = level.aggregate(&comm, nc);
    }
    Ok(Partition::new(&membership))
}

/// Merges singletons of the refined partition inside each community of
/// `part`, only between well-connected sets and only on nonnegative gain.
fn refine(g: &LevelGraph, part: &[usize], gamma: f64, rng: &mut rng::Rng) -> Vec<usize> {
    let n = g.n();
    let scale = gamma / g.two_m;
    let mut vol_s = vec![0.0; n];
    for i in 0..n {
        vol_s[part[i]] += g.k[i];
    }
    let mut refined: Vec<usize> = (0..n).collect();
    let mut r_tot = g.k.clone();
    let mut r_size = vec![1usize; n];
    // Weight from each refined community to the rest of its community.
    let mut r_ext: Vec<f64> = (0..n)
        .map(|i| g.adj[i].iter().filter(|e| part[e.0] == part[i]).map(|e| e.1).sum())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut acc = vec![0.0; n];
    let mut mark = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();
    for &v in &order {
        let rv = refined[v];
        if r_size[rv] != 1 {
            continue;
        }
        let s = part[v];
        let kv = g.k[v];
        if r_ext[rv] < scale * kv * (vol_s[s] - kv) {
            continue;
        }
        for &(j, w) in &g.adj[v] {
            if part[j] != s {
                continue;
            }
            let rj = refined[j];
            if !mark[rj] {
                mark[rj] = true;
                touched.push(rj);
            }
            acc[rj] += w;
        }
        let mut best = rv;
        let mut best_gain = 0.0;
        for &c in &touched {
            if c == rv {
                continue;
            }
            let well_connected = r_ext[c] >= scale * r_tot[c] * (vol_s[s] - r_tot[c]);
            if !well_connected {
                continue;
            }
            let gain = acc[c] - scale * kv * r_tot[c];
            if gain >= 0.0 && (best == rv || gain > best_gain + GAIN_TOLERANCE) {
                best = c;
                best_gain = gain;
            }
        }
        if best != rv {
            r_ext[best] = r_ext[best] + r_ext[rv] - 2.0 * acc[best];
            r_tot[best] += kv;
            r_size[best] += 1;
            r_tot[rv] = 0.0;
            r_size[rv] = 0;
            refined[v] = best;
        }
        for &c in &touched {
            acc[c] = 0.0;
            mark[c] = false;
        }
        touched.clear();
    }
    refined
}

/// Splits every module into the connected components of its induced subgraph.
pub fn split_disconnected(g: &ExplanationGraph, p: &Partition) -> Partition {
    let d = g.d();
    let mut label = vec![usize::MAX; d];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..d {
        if label[start] != usize::MAX {
            continue;
        }
        let m = p.module_of(start);
        label[start] = next;
        stack.push(start);
        while let Some(u) = stack.pop() {
            for &(v, _) in g.neighbors(u) {
                if label[v] == usize::MAX && p.module_of(v) == m {
                    label[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    Partition::new(&label)
}

/// Leiden iterations started from `partition`: fast local moves, refinement,
/// aggregation on the refined partition. `Q(γ)` never decreases and every
/// output module is connected.
pub fn leiden_refine(g: &ExplanationGraph, partition: &Partition, gamma: f64, seed: u64) -> Result<Partition> {
    check_args(g, gamma)?;
    if partition.d() != g.d() {
        return Err(Error::DimensionMismatch { context: "partition", expected: g.d(), found: partition.d() });
    }
    let mut level = LevelGraph::new(g)?;
    if level.two_m == 0.0 {
        return Ok(split_disconnected(g, partition));
    }
    let mut rng = rng::rng(seed);
    let mut membership: Vec<usize> = (0..g.d()).collect();
    let mut part: Vec<usize> = partition.assignment().to_vec();
    for _ in 0..MAX_OUTER_ITERATIONS {
        local_moves(&level, &mut part, gamma, &mut rng);
        let nc = relabel(&mut part);
        if nc == level.n() {
            break;
        }
        let mut refined = refine(&level, &part, gamma, &mut rng);
        let nr = relabel(&mut refined);
        if nr == level.n() {
            break;
        }
        let mut next_part = vec![0; nr];
        for i in 0..level.n() {
            next_part[refined[i]] = part[i];
        }
        level = level.aggregate(&refined, nr);
        for m in &mut membership {
            *m = refined[*m];
        }
        part = next_part;
    }
    let labels: Vec<usize> = membership.iter().map(|&m| part[m]).collect();
    Ok(split_disconnected(g, &Partition::new(&labels)))
}

/// One vertex-mover sweep: every node is moved exactly once, each time taking
/// the best available move even when it lowers `Q(γ)`, and the sweep is rolled
/// back to its best prefix. Escapes local optima that need a short chain of
/// moves. Returns whether the partition improved.
fn vertex_mover_sweep(g: &LevelGraph, comm: &mut [usize], gamma: f64) -> bool {
    let n = g.n();
    let scale = gamma / g.two_m;
    let mut tot = vec![0.0; n];
    let mut size = vec![0usize; n];
    for i in 0..n {
        tot[comm[i]] += g.k[i];
        size[comm[i]] += 1;
    }
    let mut locked = vec![false; n];
    let mut acc = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut history: Vec<(usize, usize)> = Vec::with_capacity(n);
    let (mut running, mut best_total, mut best_len) = (0.0, 0.0, 0);
    for _ in 0..n {
        let mut pick: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| !locked[i]) {
            let (ci, ki) = (comm[i], g.k[i]);
            for &(j, w) in &g.adj[i] {
                if acc[comm[j]] == 0.0 {
                    touched.push(comm[j]);
                }
                acc[comm[j]] += w;
            }
            let stay = acc[ci] - scale * ki * (tot[ci] - ki);
            let mut consider = |c: usize, gain: f64| {
                if pick.is_none_or(|(g0, _, _)| gain > g0 + GAIN_TOLERANCE) {
                    pick = Some((gain, i, c));
                }
            };
            for &c in &touched {
                if c != ci {
                    consider(c, acc[c] - scale * ki * tot[c] - stay);
                }
            }
            if size[ci] > 1 {
                consider(usize::MAX, -stay);
            }
            for &c in &touched {
                acc[c] = 0.0;
            }
            touched.clear();
        }
        let Some((gain, i, mut c)) = pick else { break };
        if c == usize::MAX {
            c = (0..n).find(|&c| size[c] == 0).expect("a community is empty while a node shares one");
        }
        let ci = comm[i];
        tot[ci] -= g.k[i];
        size[ci] -= 1;
        tot[c] += g.k[i];
        size[c] += 1;
        comm[i] = c;
        locked[i] = true;
        history.push((i, ci));
        running += gain;
        if running > best_total + GAIN_TOLERANCE {
            best_total = running;
            best_len = history.len();
        }
    }
    for &(i, from) in history[best_len..].iter().rev() {
        comm[i] = from;
    }
    best_len > 0
}

/// Vertex-mover sweeps until one fails to improve, followed by splitting
/// disconnected modules. Never lowers `Q(γ)` on a nonnegative graph.
pub fn vertex_mover(g: &ExplanationGraph, partition: &Partition, gamma: f64) -> Result<Partition> {
    check_args(g, gamma)?;
    if partition.d() != g.d() {
        return Err(Error::DimensionMismatch { context: "partition", expected: g.d(), found: partition.d() });
    }
    let level = LevelGraph::new(g)?;
    let mut comm = partition.assignment().to_vec();
    if level.two_m > 0.0 {
        for _ in 0..MAX_OUTER_ITERATIONS {
            if !vertex_mover_sweep(&level, &mut comm, gamma) {
                break;
            }
        }
    }
    Ok(split_disconnected(g, &Partition::new(&comm)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Algorithm {
    Louvain,
    /// Louvain followed by Leiden refinement and vertex-mover sweeps.
    Leiden,
}

/// Runs the configured algorithm.
pub fn detect(g: &ExplanationGraph, algorithm: Algorithm, gamma: f64, seed: u64) -> Result<Partition> {
    let p = louvain(g, gamma, rng::derive(seed, 0))?;
    if algorithm == Algorithm::Louvain {
        return Ok(p);
    }
    let mut best = leiden_refine(g, &p, gamma, rng::derive(seed, 1))?;
    if g.has_negative() || g.edge_count() == 0 {
        return Ok(best);
    }
    let mut q = quality::modularity(g, &best, gamma)?;
    for round in 0..MAX_OUTER_ITERATIONS as u64 {
        let moved = vertex_mover(g, &best, gamma)?;
        let next = leiden_refine(g, &moved, gamma, rng::derive(seed, 2 + round))?;
        let q_next = quality::modularity(g, &next, gamma)?;
        if q_next <= q + GAIN_TOLERANCE {
            break;
        }
        best = next;
        q = q_next;
    }
    Ok(best)
}
