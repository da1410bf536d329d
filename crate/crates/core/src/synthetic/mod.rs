//! Synthetic datasets with planted feature modules, built-in models and
//! exact attributions.

mod models;
mod shap;

pub use models::{fit_ridge, fit_tree_ensemble, LinearModel, Tree, TreeEnsemble, TreeNode, TreeParams};
pub use shap::{exhaustive_shap, exhaustive_shap_matrix, linear_shap, MAX_EXHAUSTIVE_FEATURES};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::community::Partition;
use crate::error::{invalid, Result};
use crate::interventions::Predictor;
use crate::math;
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Family {
    Additive,
    LogicalXor,
    CrossModule,
    Environments,
}

/// Mean shift of one module's features for the second protected group,
/// applied along the sign of each feature's weight.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupShift {
    pub module: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticSpec {
    pub sizes: Vec<usize>,
    pub rho: f64,
    /// Signal-to-noise variance ratio; `f64::INFINITY` means no noise.
    pub snr: f64,
    pub n: usize,
    pub seed: u64,
    /// Interacting module pairs for the cross-module family.
    pub interactions: Vec<(usize, usize)>,
    /// Per-module multiplier on the linear effect; all ones when `None`.
    pub module_scales: Option<Vec<f64>>,
    pub group_shift: Option<GroupShift>,
}

impl SyntheticSpec {
    pub fn new(sizes: Vec<usize>, rho: f64, snr: f64, n: usize, seed: u64) -> Self {
        Self { sizes, rho, snr, n, seed, interactions: Vec::new(), module_scales: None, group_shift: None }
    }

    pub fn d(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn truth(&self) -> Partition {
        let labels: Vec<usize> = self.sizes.iter().enumerate().flat_map(|(k, &m)| core::iter::repeat(k).take(m)).collect();
        Partition::new(&labels)
    }

    fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(invalid("module sizes must be positive"));
        }
        if !(0.0..=0.9).contains(&self.rho) {
            return Err(invalid(format!("rho must lie in [0, 0.9], found {}", self.rho)));
        }
        if !(self.snr > 0.0) {
            return Err(invalid("snr must be positive"));
        }
        if self.n == 0 {
            return Err(invalid("n must be positive"));
        }
        let k = self.sizes.len();
        if let Some(s) = &self.module_scales {
            if s.len() != k {
                return Err(invalid("module_scales must have one entry per module"));
            }
        }
        if let Some(g) = self.group_shift {
            if g.module >= k {
                return Err(invalid("group shift module out of range"));
            }
        }
        for &(a, b) in &self.interactions {
            if a >= k || b >= k || a == b {
                return Err(invalid(format!("bad interaction pair ({a}, {b})")));
            }
        }
        Ok(())
    }

    fn scale(&self, k: usize) -> f64 {
        self.module_scales.as_ref().map_or(1.0, |s| s[k])
    }
}

/// Noise-free response of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrueFunction {
    pub family: Family,
    pub modules: Vec<Vec<usize>>,
    /// Full-length linear weights (zero for XOR).
    pub weights: Vec<f64>,
    pub interactions: Vec<(usize, usize)>,
}

fn block_mean(x: &[f64], members: &[usize]) -> f64 {
    members.iter().map(|&i| x[i]).sum::<f64>() / members.len() as f64
}

impl Predictor for TrueFunction {
    fn predict_row(&self, x: &[f64]) -> f64 {
        match self.family {
            Family::LogicalXor => {
                let and = |m: &[usize]| m.iter().all(|&i| x[i] > 0.0);
                (and(&self.modules[0]) != and(&self.modules[1])) as u8 as f64
            }
            _ => {
                let linear: f64 = self.weights.iter().zip(x).map(|(w, v)| w * v).sum();
                let cross: f64 = self
                    .interactions
                    .iter()
                    .map(|&(a, b)| block_mean(x, &self.modules[a]) * block_mean(x, &self.modules[b]))
                    .sum();
                linear + cross
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub group: Vec<String>,
    pub environment: Option<usize>,
    pub truth: Partition,
    pub truth_interactions: Vec<(usize, usize)>,
    pub function: TrueFunction,
}

pub const GROUP_NAMES: [&str; 2] = ["g0", "g1"];

fn equicorrelated_factor(m: usize, rho: f64) -> DMatrix<f64> {
    let sigma = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { rho });
    sigma.cholesky().expect("equicorrelation with rho < 1 is positive definite").l()
}

/// Gaussian blocks with within-block equicorrelation `rho`.
fn sample_x(spec: &SyntheticSpec, rng: &mut rng::Rng) -> Matrix {
    let factors: Vec<DMatrix<f64>> = spec.sizes.iter().map(|&m| equicorrelated_factor(m, spec.rho)).collect();
    let d = spec.d();
    let mut x = Matrix::zeros(spec.n, d);
    for s in 0..spec.n {
        let row = x.row_mut(s);
        let mut offset = 0;
        for (k, &m) in spec.sizes.iter().enumerate() {
            let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut *rng)).collect();
            let l = &factors[k];
            for i in 0..m {
                row[offset + i] = (0..=i).map(|j| l[(i, j)] * z[j]).sum();
            }
            offset += m;
        }
    }
    x
}

fn unit_weights(spec: &SyntheticSpec, rng: &mut rng::Rng) -> Vec<f64> {
    let mut w = Vec::with_capacity(spec.d());
    for (k, &m) in spec.sizes.iter().enumerate() {
        let raw: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let norm = math::sqrt(math::dot(&raw, &raw));
        w.extend(raw.iter().map(|v| spec.scale(k) * v / norm));
    }
    w
}

fn sample_groups(n: usize, rng: &mut rng::Rng) -> Vec<String> {
    (0..n).map(|_| String::from(GROUP_NAMES[rng.random_range(0..2usize)])).collect()
}

fn apply_group_shift(spec: &SyntheticSpec, x: &mut Matrix, group: &[String], weights: &[f64]) {
    let Some(shift) = spec.group_shift else { return };
    let members = &spec.truth().modules()[shift.module];
    for (s, g) in group.iter().enumerate() {
        if g == GROUP_NAMES[1] {
            let row = x.row_mut(s);
            for &i in members {
                let sign = if weights[i] < 0.0 { -1.0 } else { 1.0 };
                row[i] += shift.magnitude * sign;
            }
        }
    }
}

/// Theoretical variance of `wᵀx` under the block model.
fn linear_signal_variance(spec: &SyntheticSpec, w: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut offset = 0;
    for &m in &spec.sizes {
        let block = &w[offset..offset + m];
        let sum: f64 = block.iter().sum();
        let sq: f64 = block.iter().map(|v| v * v).sum();
        total += (1.0 - spec.rho) * sq + spec.rho * sum * sum;
        offset += m;
    }
    total
}

fn block_mean_variance(spec: &SyntheticSpec, k: usize) -> f64 {
    let m = spec.sizes[k] as f64;
    (1.0 + (m - 1.0) * spec.rho) / m
}

fn add_noise(y: &mut [f64], signal_var: f64, snr: f64, rng: &mut rng::Rng) {
    if snr.is_infinite() {
        return;
    }
    let sd = math::sqrt(signal_var / snr);
    for v in y {
        let z: f64 = StandardNormal.sample(&mut *rng);
        *v += sd * z;
    }
}

fn linear_dataset(spec: &SyntheticSpec, family: Family, env: Option<(usize, usize, f64)>) -> Result<SyntheticDataset> {
    spec.validate()?;
    let truth = spec.truth();
    let modules = truth.modules();
    let weights = unit_weights(spec, &mut rng::child(spec.seed, 0));
    let stream = env.map_or(1, |(e, _, _)| 2 + e as u64);
    let mut rng = rng::child(spec.seed, stream);
    let mut x = sample_x(spec, &mut rng);
    let group = sample_groups(spec.n, &mut rng);
    apply_group_shift(spec, &mut x, &group, &weights);
    if let Some((e, module, shift)) = env {
        for s in 0..spec.n {
            let row = x.row_mut(s);
            for &i in &modules[module] {
                row[i] += shift * e as f64;
            }
        }
    }
    let interactions = if family == Family::CrossModule { spec.interactions.clone() } else { Vec::new() };
    let function = TrueFunction { family, modules, weights, interactions: interactions.clone() };
    let mut y = function.predict(&x);
    let mut signal_var = linear_signal_variance(spec, &function.weights);
    for &(a, b) in &interactions {
        signal_var += block_mean_variance(spec, a) * block_mean_variance(spec, b);
    }
    add_noise(&mut y, signal_var, spec.snr, &mut rng);
    Ok(SyntheticDataset {
        x,
        y,
        group,
        environment: env.map(|e| e.0),
        truth,
        truth_interactions: interactions,
        function,
    })
}

/// `y = Σ_k w_kᵀ x_{M_k} + ε` with unit-norm block weights and
/// `var(signal) / var(ε) = snr`.
pub fn gen_additive(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    linear_dataset(spec, Family::Additive, None)
}

/// Additive part plus `mean(x_{M_a}) · mean(x_{M_b})` for each interacting pair.
pub fn gen_cross_module(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    linear_dataset(spec, Family::CrossModule, None)
}

/// `y = AND(x_{M₁} > 0) XOR AND(x_{M₂} > 0)`; each label flips with
/// probability `0.5 / (1 + snr)`.
pub fn gen_xor(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    if spec.sizes.len() != 2 {
        return Err(invalid("the XOR family needs exactly 2 planted modules"));
    }
    let truth = spec.truth();
    let function = TrueFunction {
        family: Family::LogicalXor,
        modules: truth.modules(),
        weights: vec![0.0; spec.d()],
        interactions: vec![(0, 1)],
    };
    let mut rng = rng::child(spec.seed, 1);
    let x = sample_x(spec, &mut rng);
    let group = sample_groups(spec.n, &mut rng);
    let mut y = function.predict(&x);
    let flip = 0.5 / (1.0 + spec.snr);
    if flip > 0.0 {
        for v in &mut y {
            if rng.random::<f64>() < flip {
                *v = 1.0 - *v;
            }
        }
    }
    Ok(SyntheticDataset { x, y, group, environment: None, truth, truth_interactions: vec![(0, 1)], function })
}

/// `E` additive replicas sharing weights and truth; environment `e` shifts
/// every feature of `module` by `shift · e`.
pub fn gen_environments(spec: &SyntheticSpec, environments: usize, module: usize, shift: f64) -> Result<Vec<SyntheticDataset>> {
    if environments < 2 {
        return Err(invalid("need at least 2 environments"));
    }
    if module >= spec.sizes.len() {
        return Err(invalid("shift module out of range"));
    }
    (0..environments).map(|e| linear_dataset(spec, Family::Environments, Some((e, module, shift)))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_additive_is_exact() {
        let spec = SyntheticSpec::new(vec![2, 3], 0.5, f64::INFINITY, 50, 4);
        let ds = gen_additive(&spec).unwrap();
        let f = ds.function.predict(&ds.x);
        assert_eq!(f, ds.y);
        assert_eq!(ds.truth.modules(), vec![vec![0, 1], vec![2, 3, 4]]);
        for m in ds.truth.modules() {
            let norm: f64 = m.iter().map(|&i| ds.function.weights[i].powi(2)).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn xor_truth_table() {
        let spec = SyntheticSpec::new(vec![1, 1], 0.0, f64::INFINITY, 10, 1);
        let ds = gen_xor(&spec).unwrap();
        for (row, expected) in [([1.0, 1.0], 0.0), ([1.0, -1.0], 1.0), ([-1.0, 1.0], 1.0), ([-1.0, -1.0], 0.0)] {
            assert_eq!(ds.function.predict_row(&row), expected);
        }
        assert!(gen_xor(&SyntheticSpec::new(vec![1, 1, 1], 0.0, 1.0, 10, 1)).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = SyntheticSpec::new(vec![3, 3], 0.3, 5.0, 20, 11);
        assert_eq!(gen_additive(&spec).unwrap(), gen_additive(&spec).unwrap());
    }

    #[test]
    fn spec_validation() {
        assert!(gen_additive(&SyntheticSpec::new(vec![2], 0.95, 1.0, 10, 0)).is_err());
        assert!(gen_additive(&SyntheticSpec::new(vec![2], 0.5, 0.0, 10, 0)).is_err());
        assert!(gen_environments(&SyntheticSpec::new(vec![2], 0.5, 1.0, 10, 0), 1, 0, 1.0).is_err());
    }
}
