//! Dense feature–feature co-influence matrices.
//!
//! Every affinity is symmetric with a zero diagonal. Correlation-type rules
//! are signed; cosine, co-exceedance, Jaccard and mutual information are not.

use alloc::borrow::Cow;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

use crate::attribution::{SampleWeights, WorkingMatrix};
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::matrix::Matrix;
use crate::par;
use crate::rng;

pub const DEFAULT_EXCEEDANCE_Q: f64 = 0.9;
pub const DEFAULT_MI_BINS: usize = 16;

/// Edge rule used to turn a working matrix into affinities.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum AffinityRule {
    CosineMagnitude,
    Pearson,
    Spearman,
    CoexceedFreq { q: f64 },
    Jaccard { q: f64 },
    MutualInfo { bins: usize },
    /// Partial correlation given a fixed control set; a pair that contains a
    /// control feature conditions on the remaining controls.
    PartialCorr { controls: Vec<usize> },
}

impl AffinityRule {
    pub fn is_signed(&self) -> bool {
        matches!(self, Self::Pearson | Self::Spearman | Self::PartialCorr { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::CosineMagnitude => "cosine_mag",
            Self::Pearson => "pearson",
            Self::Spearman => "spearman",
            Self::CoexceedFreq { .. } => "coexceed_freq",
            Self::Jaccard { .. } => "jaccard",
            Self::MutualInfo { .. } => "mi_binned",
            Self::PartialCorr { .. } => "pcorr",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub values: Matrix,
    pub rule: AffinityRule,
    pub signed: bool,
}

impl AffinityMatrix {
    pub fn d(&self) -> usize {
        self.values.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }
}

/// Binary high-attribution indicators `z_si = 1{|A_si| > τ_s}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExceedanceIndicators {
    n: usize,
    d: usize,
    z: Vec<u8>,
    pub q: f64,
}

impl ExceedanceIndicators {
    pub fn from_rows(rows: &[&[u8]], q: f64) -> Self {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.len());
        let z = rows.iter().flat_map(|r| r.iter().map(|v| (*v != 0) as u8)).collect();
        Self { n, d, z, q }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, s: usize, i: usize) -> bool {
        self.z[s * self.d + i] != 0
    }

    fn column_f64(&self, i: usize) -> Vec<f64> {
        (0..self.n).map(|s| self.get(s, i) as u8 as f64).collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        (0..self.d).map(|i| (0..self.n).filter(|&s| self.get(s, i)).count()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedLayers {
    pub positive: AffinityMatrix,
    pub negative: AffinityMatrix,
}

/// Fills the upper triangle with `f(i, j)` and mirrors it; diagonal is zero.
fn pairwise(d: usize, f: impl Fn(usize, usize) -> f64 + Sync + Send) -> Matrix {
    let rows = par::map_indexed(d, |i| ((i + 1)..d).map(|j| f(i, j)).collect::<Vec<f64>>());
    let mut m = Matrix::zeros(d, d);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m
}

fn unit_columns(columns: Vec<Vec<f64>>, center: bool, label: &str) -> Vec<Vec<f64>> {
    columns
        .into_iter()
        .enumerate()
        .map(|(i, col)| {
            let unit = if center {
                math::center_unit(&col)
            } else {
                let norm = math::sqrt(math::dot(&col, &col));
                (norm > 0.0).then(|| col.iter().map(|v| v / norm).collect())
            };
            unit.unwrap_or_else(|| {
                log::warn!("{label}: feature {i} is constant; its affinities are set to 0");
                vec![0.0; col.len()]
            })
        })
        .collect()
}

fn magnitude_unit_columns(a: &Matrix) -> Vec<Vec<f64>> {
    let cols = a.columns().into_iter().map(|c| c.into_iter().map(math::abs).collect()).collect();
    // A zero column has no direction; its row and column stay zero.
    cols_or_zero(cols)
}

fn cols_or_zero(cols: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    cols.into_iter()
        .map(|col| {
            let norm = math::sqrt(math::dot(&col, &col));
            if norm > 0.0 {
                col.iter().map(|v| v / norm).collect()
            } else {
                vec![0.0; col.len()]
            }
        })
        .collect()
}

fn rank_columns(a: &Matrix) -> Vec<Vec<f64>> {
    a.columns().iter().map(|c| math::average_ranks(c)).collect()
}

/// `⟨|A_i|, |A_j|⟩ / (‖A_i‖ ‖A_j‖)`.
pub fn cosine_magnitude(a: &WorkingMatrix) -> AffinityMatrix {
    let cols = magnitude_unit_columns(&a.values);
    AffinityMatrix {
        values: pairwise(a.d(), |i, j| math::dot(&cols[i], &cols[j]).clamp(0.0, 1.0)),
        rule: AffinityRule::CosineMagnitude,
        signed: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrMethod {
    Pearson,
    Spearman,
}

/// Sample Pearson or average-tie Spearman correlation between columns.
pub fn corr_signed(a: &WorkingMatrix, method: CorrMethod) -> Result<AffinityMatrix> {
    if a.n() < 3 {
        return Err(invalid(format!("correlation needs n >= 3, found {}", a.n())));
    }
    let (cols, rule) = match method {
        CorrMethod::Pearson => (a.values.columns(), AffinityRule::Pearson),
        CorrMethod::Spearman => (rank_columns(&a.values), AffinityRule::Spearman),
    };
    let cols = unit_columns(cols, true, rule.name());
    Ok(AffinityMatrix {
        values: pairwise(a.d(), |i, j| math::dot(&cols[i], &cols[j]).clamp(-1.0, 1.0)),
        rule,
        signed: true,
    })
}

/// Row-wise exceedance of the type-7 `q`-quantile of `|A_s·|`.
pub fn exceedance(a: &WorkingMatrix, q: f64) -> Result<ExceedanceIndicators> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid(format!("exceedance quantile must lie in (0, 1), found {q}")));
    }
    let (n, d) = (a.n(), a.d());
    let mut z = Vec::with_capacity(n * d);
    for s in 0..n {
        let mags: Vec<f64> = a.values.row(s).iter().map(|v| math::abs(*v)).collect();
        let tau = math::quantile(&mags, q);
        z.extend(mags.iter().map(|m| (*m > tau) as u8));
    }
    Ok(ExceedanceIndicators { n, d, z, q })
}

fn weighted_indicator_columns(z: &ExceedanceIndicators, w: &SampleWeights) -> Result<Vec<Vec<f64>>> {
    if w.len() != z.n() {
        return Err(Error::DimensionMismatch { context: "sample weights", expected: z.n(), found: w.len() });
    }
    Ok((0..z.d()).map(|i| z.column_f64(i)).collect())
}

/// Weighted frequency of joint exceedance.
pub fn coexceedance(z: &ExceedanceIndicators, w: &SampleWeights) -> Result<AffinityMatrix> {
    let cols = weighted_indicator_columns(z, w)?;
    let ws = w.as_slice();
    let total: f64 = ws.iter().sum();
    if !(total > 0.0) {
        return Err(invalid("sample weights sum to zero"));
    }
    let weighted: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().zip(ws).map(|(a, b)| a * b).collect()).collect();
    Ok(AffinityMatrix {
        values: pairwise(z.d(), |i, j| math::dot(&weighted[i], &cols[j]) / total),
        rule: AffinityRule::CoexceedFreq { q: z.q },
        signed: false,
    })
}

#[inline]
fn jaccard_ratio(inter: f64, mass_i: f64, mass_j: f64) -> f64 {
    let union = mass_i + mass_j - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Weighted intersection over weighted union of exceedance sets; `0/0 = 0`.
pub fn jaccard(z: &ExceedanceIndicators, w: &SampleWeights) -> Result<AffinityMatrix> {
    let cols = weighted_indicator_columns(z, w)?;
    let ws = w.as_slice();
    let weighted: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().zip(ws).map(|(a, b)| a * b).collect()).collect();
    let mass: Vec<f64> = weighted.iter().map(|c| c.iter().sum()).collect();
    Ok(AffinityMatrix {
        values: pairwise(z.d(), |i, j| jaccard_ratio(math::dot(&weighted[i], &cols[j]), mass[i], mass[j])),
        rule: AffinityRule::Jaccard { q: z.q },
        signed: false,
    })
}

/// Equal-frequency bin index of each value; tied values share a bin.
fn equal_frequency_bins(xs: &[f64], bins: usize) -> Vec<usize> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
    let mut out = vec![0; n];
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && xs[order[end + 1]] == xs[order[start]] {
            end += 1;
        }
        let bin = (start * bins / n).min(bins - 1);
        for &idx in &order[start..=end] {
            out[idx] = bin;
        }
        start = end + 1;
    }
    out
}

fn plugin_mi(a: &[usize], b: &[usize], bins: usize) -> f64 {
    let n = a.len() as f64;
    let mut joint = vec![0usize; bins * bins];
    let mut pa = vec![0usize; bins];
    let mut pb = vec![0usize; bins];
    for (&x, &y) in a.iter().zip(b) {
        joint[x * bins + y] += 1;
        pa[x] += 1;
        pb[y] += 1;
    }
    let mut mi = 0.0;
    for x in 0..bins {
        for y in 0..bins {
            let c = joint[x * bins + y];
            if c > 0 {
                let pxy = c as f64 / n;
                mi += pxy * math::ln(pxy * n * n / (pa[x] as f64 * pb[y] as f64));
            }
        }
    }
    mi.max(0.0)
}

/// Plug-in mutual information (nats) between equal-frequency binned `|A_i|`, `|A_j|`.
pub fn mutual_info_binned(a: &WorkingMatrix, bins: usize) -> Result<AffinityMatrix> {
    if bins < 2 {
        return Err(invalid("mutual information needs at least 2 bins"));
    }
    if a.n() < bins {
        return Err(invalid(format!("mutual information needs n >= bins ({} < {bins})", a.n())));
    }
    let binned: Vec<Vec<usize>> = a
        .values
        .columns()
        .iter()
        .map(|c| equal_frequency_bins(&c.iter().map(|v| math::abs(*v)).collect::<Vec<_>>(), bins))
        .collect();
    Ok(AffinityMatrix {
        values: pairwise(a.d(), |i, j| plugin_mi(&binned[i], &binned[j], bins)),
        rule: AffinityRule::MutualInfo { bins },
        signed: false,
    })
}

/// Least-squares residual of `y` on `[1, controls]` via the pseudo-inverse.
fn residualize(y: &[f64], design: &DMatrix<f64>, pinv: &DMatrix<f64>) -> Vec<f64> {
    let yv = DVector::from_column_slice(y);
    let fitted = design * (pinv * &yv);
    y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect()
}

struct ControlDesign {
    design: DMatrix<f64>,
    pinv: DMatrix<f64>,
}

impl ControlDesign {
    fn new(a: &Matrix, controls: &[usize]) -> Self {
        let n = a.rows();
        let design = DMatrix::from_fn(n, controls.len() + 1, |r, c| if c == 0 { 1.0 } else { a.get(r, controls[c - 1]) });
        let pinv = design.clone().pseudo_inverse(1e-10).expect("pseudo-inverse with nonnegative epsilon");
        Self { design, pinv }
    }

    /// Residual of `y`; numerically zero residuals collapse to exact zeros.
    fn residual(&self, y: &[f64]) -> Vec<f64> {
        let r = residualize(y, &self.design, &self.pinv);
        let scale = math::sqrt(math::dot(y, y));
        if math::sqrt(math::dot(&r, &r)) <= 1e-10 * scale {
            vec![0.0; r.len()]
        } else {
            r
        }
    }
}

fn check_pcorr_args(a: &WorkingMatrix, i: usize, j: usize, control: &[usize]) -> Result<()> {
    let d = a.d();
    if i >= d || j >= d || control.iter().any(|&c| c >= d) {
        return Err(invalid("partial correlation index out of range"));
    }
    if control.contains(&i) || control.contains(&j) {
        return Err(invalid("control set must exclude the target pair"));
    }
    if control.len() + 2 >= a.n() {
        return Err(invalid(format!(
            "control set of size {} too large for n = {}",
            control.len(),
            a.n()
        )));
    }
    Ok(())
}

/// Correlation of the residuals of `A_i` and `A_j` after regressing on
/// `[1, A_control]`. A zero-variance residual gives 0.
pub fn partial_corr(a: &WorkingMatrix, i: usize, j: usize, control: &[usize]) -> Result<f64> {
    check_pcorr_args(a, i, j, control)?;
    let design = ControlDesign::new(&a.values, control);
    let ri = design.residual(&a.values.column(i));
    let rj = design.residual(&a.values.column(j));
    Ok(math::pearson(&ri, &rj).unwrap_or(0.0))
}

fn residual_pair(a: &Matrix, i: usize, j: usize, controls: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let ctl: Vec<usize> = controls.iter().copied().filter(|&c| c != i && c != j).collect();
    let design = ControlDesign::new(a, &ctl);
    (design.residual(&a.column(i)), design.residual(&a.column(j)))
}

/// Partial-correlation affinity over all pairs.
pub fn partial_corr_matrix(a: &WorkingMatrix, controls: &[usize]) -> Result<AffinityMatrix> {
    if controls.iter().any(|&c| c >= a.d()) {
        return Err(invalid("control index out of range"));
    }
    if controls.len() + 2 >= a.n() {
        return Err(invalid("control set too large for the number of instances"));
    }
    let shared = ControlDesign::new(&a.values, controls);
    let resid: Vec<Option<Vec<f64>>> = (0..a.d())
        .map(|i| (!controls.contains(&i)).then(|| shared.residual(&a.values.column(i))))
        .collect();
    let values = pairwise(a.d(), |i, j| match (&resid[i], &resid[j]) {
        (Some(ri), Some(rj)) => math::pearson(ri, rj).unwrap_or(0.0),
        _ => {
            let (ri, rj) = residual_pair(&a.values, i, j, controls);
            math::pearson(&ri, &rj).unwrap_or(0.0)
        }
    });
    Ok(AffinityMatrix { values, rule: AffinityRule::PartialCorr { controls: controls.to_vec() }, signed: true })
}

/// `A_si ← A_si · ln(n / #exceedances_i)`; never-exceeding features use `ln(n)`.
pub fn tfidf_rescale(a: &WorkingMatrix, z: &ExceedanceIndicators) -> Result<WorkingMatrix> {
    if z.n() != a.n() || z.d() != a.d() {
        return Err(Error::DimensionMismatch { context: "exceedance indicators", expected: a.n() * a.d(), found: z.n() * z.d() });
    }
    let n = a.n() as f64;
    let factors: Vec<f64> = z
        .counts()
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            if c == 0 {
                log::warn!("tf-idf: feature {i} never exceeds its threshold; using ln(n)");
                math::ln(n)
            } else {
                math::ln(n / c as f64)
            }
        })
        .collect();
    let mut out = a.clone();
    for s in 0..a.n() {
        for (v, f) in out.values.row_mut(s).iter_mut().zip(&factors) {
            *v *= f;
        }
    }
    Ok(out)
}

/// Computes the affinity for `rule`. Exceedance rules use `weights`
/// (uniform when `None`).
pub fn compute(a: &WorkingMatrix, rule: &AffinityRule, weights: Option<&SampleWeights>) -> Result<AffinityMatrix> {
    let uniform;
    let w = match weights {
        Some(w) => w,
        None => {
            uniform = SampleWeights::uniform(a.n());
            &uniform
        }
    };
    match rule {
        AffinityRule::CosineMagnitude => Ok(cosine_magnitude(a)),
        AffinityRule::Pearson => corr_signed(a, CorrMethod::Pearson),
        AffinityRule::Spearman => corr_signed(a, CorrMethod::Spearman),
        AffinityRule::CoexceedFreq { q } => coexceedance(&exceedance(a, *q)?, w),
        AffinityRule::Jaccard { q } => jaccard(&exceedance(a, *q)?, w),
        AffinityRule::MutualInfo { bins } => mutual_info_binned(a, *bins),
        AffinityRule::PartialCorr { controls } => partial_corr_matrix(a, controls),
    }
}

/// `w̃ = α w + (1 − α) w̄` off the diagonal, then `|w̃| < floor` → 0.
pub fn shrink(w: &AffinityMatrix, alpha: f64, floor: f64) -> Result<AffinityMatrix> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("shrinkage alpha must lie in [0, 1], found {alpha}")));
    }
    if !(floor >= 0.0) {
        return Err(invalid("shrinkage floor must be nonnegative"));
    }
    let d = w.d();
    let off = (d * d.saturating_sub(1)) as f64;
    let mut sum = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                sum += w.get(i, j);
            }
        }
    }
    let mean = if off > 0.0 { sum / off } else { 0.0 };
    let mut values = w.values.clone();
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let v = if alpha == 1.0 { w.get(i, j) } else { alpha * w.get(i, j) + (1.0 - alpha) * mean };
            values.set(i, j, if math::abs(v) < floor { 0.0 } else { v });
        }
    }
    Ok(AffinityMatrix { values, rule: w.rule.clone(), signed: w.signed })
}

/// Per-column transform under which a pair statistic is a function of the
/// two transformed columns, so permuting one transformed column permutes the
/// rows of the underlying feature.
enum PairStat {
    Dot(Vec<Vec<f64>>),
    Freq(Vec<Vec<f64>>),
    Jaccard(Vec<Vec<f64>>),
    Mi { binned: Vec<Vec<usize>>, bins: usize },
    Pcorr { a: Matrix, controls: Vec<usize> },
}

enum PairData<'a> {
    Float(Cow<'a, [f64]>, Vec<f64>),
    Bins(&'a [usize], Vec<usize>),
}

impl PairStat {
    fn prepare(a: &WorkingMatrix, rule: &AffinityRule) -> Result<Self> {
        Ok(match rule {
            AffinityRule::CosineMagnitude => Self::Dot(magnitude_unit_columns(&a.values)),
            AffinityRule::Pearson => Self::Dot(unit_columns(a.values.columns(), true, "pearson")),
            AffinityRule::Spearman => Self::Dot(unit_columns(rank_columns(&a.values), true, "spearman")),
            AffinityRule::CoexceedFreq { q } => {
                let z = exceedance(a, *q)?;
                Self::Freq((0..z.d()).map(|i| z.column_f64(i)).collect())
            }
            AffinityRule::Jaccard { q } => {
                let z = exceedance(a, *q)?;
                Self::Jaccard((0..z.d()).map(|i| z.column_f64(i)).collect())
            }
            AffinityRule::MutualInfo { bins } => {
                if a.n() < *bins {
                    return Err(invalid("mutual information needs n >= bins"));
                }
                let binned = a
                    .values
                    .columns()
                    .iter()
                    .map(|c| equal_frequency_bins(&c.iter().map(|v| math::abs(*v)).collect::<Vec<_>>(), *bins))
                    .collect();
                Self::Mi { binned, bins: *bins }
            }
            AffinityRule::PartialCorr { controls } => Self::Pcorr { a: a.values.clone(), controls: controls.clone() },
        })
    }

    fn pair(&self, i: usize, j: usize) -> PairData<'_> {
        match self {
            Self::Dot(c) | Self::Freq(c) | Self::Jaccard(c) => PairData::Float(Cow::Borrowed(&c[i]), c[j].clone()),
            Self::Mi { binned, .. } => PairData::Bins(&binned[i], binned[j].clone()),
            Self::Pcorr { a, controls } => {
                let (ri, rj) = residual_pair(a, i, j, controls);
                let ui = math::center_unit(&ri).unwrap_or_else(|| vec![0.0; ri.len()]);
                let uj = math::center_unit(&rj).unwrap_or_else(|| vec![0.0; rj.len()]);
                PairData::Float(Cow::Owned(ui), uj)
            }
        }
    }

    fn eval_float(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Self::Dot(_) | Self::Pcorr { .. } => math::dot(a, b),
            Self::Freq(_) => math::dot(a, b) / a.len() as f64,
            Self::Jaccard(_) => {
                let inter = math::dot(a, b);
                jaccard_ratio(inter, a.iter().sum(), b.iter().sum())
            }
            Self::Mi { .. } => unreachable!(),
        }
    }

    fn eval_bins(&self, a: &[usize], b: &[usize]) -> f64 {
        match self {
            Self::Mi { bins, .. } => plugin_mi(a, b, *bins),
            _ => unreachable!(),
        }
    }
}

fn shuffle<T>(rng: &mut rng::Rng, xs: &mut [T]) {
    for i in (1..xs.len()).rev() {
        let j = rng.random_range(0..=i);
        xs.swap(i, j);
    }
}

/// Permutation p-value of one pair: `(1 + #{|w_perm| ≥ |w_obs|}) / (P + 1)`.
fn pair_p_value(stat: &PairStat, i: usize, j: usize, permutations: usize, seed: u64) -> f64 {
    let mut rng = rng::rng(seed);
    let mut exceed = 0usize;
    match stat.pair(i, j) {
        PairData::Float(a, mut b) => {
            let observed = math::abs(stat.eval_float(&a, &b));
            for _ in 0..permutations {
                shuffle(&mut rng, &mut b);
                if math::abs(stat.eval_float(&a, &b)) >= observed {
                    exceed += 1;
                }
            }
        }
        PairData::Bins(a, mut b) => {
            let observed = stat.eval_bins(a, &b);
            for _ in 0..permutations {
                shuffle(&mut rng, &mut b);
                if stat.eval_bins(a, &b) >= observed {
                    exceed += 1;
                }
            }
        }
    }
    (1 + exceed) as f64 / (permutations + 1) as f64
}

/// Benjamini–Hochberg step-up: rejected flags at FDR level `q`.
pub fn benjamini_hochberg(p_values: &[f64], q: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut cutoff = None;
    for (rank, &idx) in order.iter().enumerate() {
        if p_values[idx] <= (rank + 1) as f64 * q / m as f64 {
            cutoff = Some(p_values[idx]);
        }
    }
    match cutoff {
        Some(c) => p_values.iter().map(|p| *p <= c).collect(),
        None => vec![false; m],
    }
}

/// Per-pair p-values of `rule` on `a`, pairs in lexicographic `(i < j)` order.
pub fn permutation_p_values(a: &WorkingMatrix, rule: &AffinityRule, permutations: usize, seed: u64) -> Result<Vec<f64>> {
    if permutations < 19 {
        return Err(invalid("permutations must be ≥ 19"));
    }
    let stat = PairStat::prepare(a, rule)?;
    let d = a.d();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| ((i + 1)..d).map(move |j| (i, j))).collect();
    Ok(par::map_indexed(pairs.len(), |k| {
        let (i, j) = pairs[k];
        pair_p_value(&stat, i, j, permutations, rng::derive(seed, k as u64))
    }))
}

/// Zeroes every pair whose permutation p-value is not rejected by BH at `fdr_q`.
pub fn significance_filter(
    w: &AffinityMatrix,
    a: &WorkingMatrix,
    permutations: usize,
    fdr_q: f64,
    seed: u64,
) -> Result<AffinityMatrix> {
    if !(fdr_q > 0.0 && fdr_q < 1.0) {
        return Err(invalid(format!("FDR level must lie in (0, 1), found {fdr_q}")));
    }
    if w.d() != a.d() {
        return Err(Error::DimensionMismatch { context: "significance filter", expected: w.d(), found: a.d() });
    }
    let p = permutation_p_values(a, &w.rule, permutations, seed)?;
    let keep = benjamini_hochberg(&p, fdr_q);
    let d = w.d();
    let mut values = w.values.clone();
    let mut k = 0;
    for i in 0..d {
        for j in (i + 1)..d {
            if !keep[k] {
                values.set(i, j, 0.0);
                values.set(j, i, 0.0);
            }
            k += 1;
        }
    }
    Ok(AffinityMatrix { values, rule: w.rule.clone(), signed: w.signed })
}

/// `W = W⁺ − W⁻` with both layers nonnegative.
pub fn split_signed(w: &AffinityMatrix) -> SignedLayers {
    let pos = w.values.map(|v| if v > 0.0 { v } else { 0.0 });
    let neg = w.values.map(|v| if v < 0.0 { -v } else { 0.0 });
    SignedLayers {
        positive: AffinityMatrix { values: pos, rule: w.rule.clone(), signed: false },
        negative: AffinityMatrix { values: neg, rule: w.rule.clone(), signed: false },
    }
}
