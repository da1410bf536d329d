//! Attribution matrices, working views and cohort slicing.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math;
use crate::matrix::Matrix;
use crate::metrics::fairness::GroupLabels;

pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Per-instance, per-feature attributions `Φ` (n × d).
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMatrix {
    values: Matrix,
    feature_names: Vec<String>,
    instance_ids: Vec<String>,
}

impl AttributionMatrix {
    /// Validates finiteness, `d ≥ 2`, `n ≥ 1` and unique feature names.
    pub fn new(values: Matrix, feature_names: Vec<String>, instance_ids: Option<Vec<String>>) -> Result<Self> {
        if values.cols() != feature_names.len() {
            return Err(Error::DimensionMismatch {
                context: "feature names",
                expected: values.cols(),
                found: feature_names.len(),
            });
        }
        if values.cols() < 2 {
            return Err(invalid(format!("need at least 2 features, found {}", values.cols())));
        }
        if values.rows() < 1 {
            return Err(invalid("need at least 1 instance"));
        }
        if let Some((row, col)) = values.find_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        let mut seen = BTreeSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateFeature(name.clone()));
            }
        }
        let instance_ids = match instance_ids {
            Some(ids) => {
                if ids.len() != values.rows() {
                    return Err(Error::DimensionMismatch {
                        context: "instance ids",
                        expected: values.rows(),
                        found: ids.len(),
                    });
                }
                ids
            }
            None => (0..values.rows()).map(|i| i.to_string()).collect(),
        };
        Ok(Self { values, feature_names, instance_ids })
    }

    /// Feature names default to `f0..f{d-1}`.
    pub fn from_matrix(values: Matrix) -> Result<Self> {
        let names = (0..values.cols()).map(|i| format!("f{i}")).collect();
        Self::new(values, names, None)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn instance_ids(&self) -> &[String] {
        &self.instance_ids
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn d(&self) -> usize {
        self.values.cols()
    }

    /// Row subset preserving column order and names.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(rows),
            feature_names: self.feature_names.clone(),
            instance_ids: rows.iter().map(|&r| self.instance_ids[r].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum View {
    Signed,
    Magnitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum ColumnScaling {
    None,
    L2,
    /// Raw median absolute deviation, no consistency constant.
    Mad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum RowScaling {
    None,
    L1,
}

/// Normalized view `A` of `Φ` used for edge construction.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingMatrix {
    pub values: Matrix,
    pub view: View,
    pub column_scaling: ColumnScaling,
    pub row_scaling: RowScaling,
    pub epsilon: f64,
}

impl WorkingMatrix {
    /// Wraps an already prepared matrix without further scaling.
    pub fn raw(values: Matrix) -> Self {
        Self {
            values,
            view: View::Signed,
            column_scaling: ColumnScaling::None,
            row_scaling: RowScaling::None,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn d(&self) -> usize {
        self.values.cols()
    }
}

/// Applies view, then column scaling, then row scaling.
pub fn make_working_matrix(
    phi: &Matrix,
    view: View,
    column_scaling: ColumnScaling,
    row_scaling: RowScaling,
    epsilon: f64,
) -> Result<WorkingMatrix> {
    // ε = 0 is allowed for exact hand computations; all-zero columns are still safe.
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(invalid("epsilon must be finite and nonnegative"));
    }
    let mut a = match view {
        View::Signed => phi.clone(),
        View::Magnitude => phi.map(math::abs),
    };
    let (n, d) = (a.rows(), a.cols());
    if column_scaling != ColumnScaling::None {
        for c in 0..d {
            let col = a.column(c);
            let scale = match column_scaling {
                ColumnScaling::L2 => math::sqrt(math::dot(&col, &col)),
                ColumnScaling::Mad => {
                    let med = math::median(&col);
                    let dev: Vec<f64> = col.iter().map(|v| math::abs(v - med)).collect();
                    math::median(&dev)
                }
                ColumnScaling::None => unreachable!(),
            } + epsilon;
            for r in 0..n {
                let v = a.get(r, c);
                // All-zero columns stay zero instead of 0/0.
                a.set(r, c, if v == 0.0 { 0.0 } else { v / scale });
            }
        }
    }
    if row_scaling == RowScaling::L1 {
        for r in 0..n {
            let row = a.row_mut(r);
            let norm = row.iter().map(|v| math::abs(*v)).sum::<f64>() + epsilon;
            for v in row.iter_mut() {
                if *v != 0.0 {
                    *v /= norm;
                }
            }
        }
    }
    Ok(WorkingMatrix { values: a, view, column_scaling, row_scaling, epsilon })
}

/// Nonnegative instance weights with positive total.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeights(Vec<f64>);

impl SampleWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid("sample weights must be finite and nonnegative"));
        }
        if !(w.iter().sum::<f64>() > 0.0) {
            return Err(invalid("sample weights must have positive sum"));
        }
        Ok(Self(w))
    }

    pub fn uniform(n: usize) -> Self {
        Self(alloc::vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Row selection for group/class-conditional analyses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CohortSelector {
    All,
    ByGroup(String),
    ByClass(String),
    ByIndex(Vec<usize>),
}

/// Label table rows keyed by instance id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelTable {
    pub instance_ids: Vec<String>,
    pub group: Vec<String>,
    pub class: Option<Vec<String>>,
    pub y: Option<Vec<f64>>,
    pub yhat: Option<Vec<f64>>,
}

impl LabelTable {
    fn index(&self) -> BTreeMap<&str, usize> {
        self.instance_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }

    /// Reorders the table to match `ids`; every id must be present.
    pub fn align(&self, ids: &[String]) -> Result<GroupLabels> {
        let index = self.index();
        let mut rows = Vec::with_capacity(ids.len());
        for id in ids {
            let r = *index
                .get(id.as_str())
                .ok_or_else(|| invalid(format!("instance {id}: missing from label table")))?;
            rows.push(r);
        }
        Ok(GroupLabels {
            group: rows.iter().map(|&r| self.group[r].clone()).collect(),
            y: self.y.as_ref().map(|y| rows.iter().map(|&r| y[r]).collect()),
            yhat: self.yhat.as_ref().map(|y| rows.iter().map(|&r| y[r] > 0.5).collect()),
            score: None,
        })
    }

    fn class_of(&self, id: &str, index: &BTreeMap<&str, usize>) -> Option<&str> {
        let r = *index.get(id)?;
        self.class.as_ref().map(|c| c[r].as_str())
    }
}

/// Row subset of `phi` selected by `selector`, joined to `labels` on instance id.
pub fn slice_cohort(phi: &AttributionMatrix, labels: &LabelTable, selector: &CohortSelector) -> Result<AttributionMatrix> {
    let rows: Vec<usize> = match selector {
        CohortSelector::All => (0..phi.n()).collect(),
        CohortSelector::ByIndex(idx) => {
            if let Some(bad) = idx.iter().find(|&&i| i >= phi.n()) {
                return Err(invalid(format!("index {bad} out of range for {} instances", phi.n())));
            }
            idx.clone()
        }
        CohortSelector::ByGroup(key) => {
            let index = labels.index();
            phi.instance_ids()
                .iter()
                .enumerate()
                .filter(|(_, id)| index.get(id.as_str()).is_some_and(|&r| labels.group[r] == *key))
                .map(|(i, _)| i)
                .collect()
        }
        CohortSelector::ByClass(key) => {
            if labels.class.is_none() {
                return Err(invalid("label table has no class column"));
            }
            let index = labels.index();
            phi.instance_ids()
                .iter()
                .enumerate()
                .filter(|(_, id)| labels.class_of(id, &index) == Some(key.as_str()))
                .map(|(i, _)| i)
                .collect()
        }
    };
    if rows.is_empty() {
        let name = match selector {
            CohortSelector::All => "all".into(),
            CohortSelector::ByGroup(g) => format!("group {g}"),
            CohortSelector::ByClass(c) => format!("class {c}"),
            CohortSelector::ByIndex(_) => "index set".into(),
        };
        return Err(Error::EmptySelection(name));
    }
    Ok(phi.select_rows(&rows))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdditivityReport {
    pub max_abs_residual: f64,
    pub pass: bool,
}

/// Largest `|Σ_i Φ_si − (prediction_s − base_value)|` over instances.
pub fn check_additivity(phi: &Matrix, predictions: &[f64], base_value: f64, tol: f64) -> Result<AdditivityReport> {
    if predictions.len() != phi.rows() {
        return Err(Error::DimensionMismatch {
            context: "predictions",
            expected: phi.rows(),
            found: predictions.len(),
        });
    }
    let max_abs_residual = phi
        .row_sums()
        .iter()
        .zip(predictions)
        .map(|(s, p)| math::abs(s - (p - base_value)))
        .fold(0.0, f64::max);
    Ok(AdditivityReport { max_abs_residual, pass: max_abs_residual <= tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn magnitude_view_takes_absolute_values() {
        let a = make_working_matrix(&m(&[&[-1.0, 2.0]]), View::Magnitude, ColumnScaling::None, RowScaling::None, 1e-12)
            .unwrap();
        assert_eq!(a.values.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn l2_and_mad_column_scaling() {
        let l2 = make_working_matrix(&m(&[&[3.0, 1.0], &[4.0, 1.0]]), View::Signed, ColumnScaling::L2, RowScaling::None, 0.0)
            .unwrap();
        assert!((l2.values.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((l2.values.get(1, 0) - 0.8).abs() < 1e-15);

        let mad = make_working_matrix(
            &m(&[&[0.0, 1.0], &[2.0, 1.0], &[4.0, 1.0]]),
            View::Signed,
            ColumnScaling::Mad,
            RowScaling::None,
            0.0,
        )
        .unwrap();
        assert_eq!(mad.values.column(0), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn zero_column_stays_zero() {
        let a = make_working_matrix(&m(&[&[0.0, 1.0], &[0.0, 2.0]]), View::Signed, ColumnScaling::L2, RowScaling::L1, 1e-12)
            .unwrap();
        assert_eq!(a.values.column(0), vec![0.0, 0.0]);
        assert!(a.values.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_duplicate_names_and_non_finite() {
        let e = AttributionMatrix::new(m(&[&[1.0, 2.0]]), vec!["a".into(), "a".into()], None).unwrap_err();
        assert_eq!(e, Error::DuplicateFeature("a".into()));
        let e = AttributionMatrix::new(m(&[&[1.0, f64::NAN]]), vec!["a".into(), "b".into()], None).unwrap_err();
        assert_eq!(e, Error::NonFinite { row: 0, col: 1 });
    }

    #[test]
    fn cohort_by_group() {
        let phi = AttributionMatrix::from_matrix(m(&[&[1.0, 0.0], &[2.0, 0.0], &[3.0, 0.0]])).unwrap();
        let labels = LabelTable {
            instance_ids: vec!["0".into(), "1".into(), "2".into()],
            group: vec!["a".into(), "b".into(), "a".into()],
            ..Default::default()
        };
        let s = slice_cohort(&phi, &labels, &CohortSelector::ByGroup("a".into())).unwrap();
        assert_eq!(s.values().column(0), vec![1.0, 3.0]);
        assert_eq!(s.instance_ids(), &["0".to_string(), "2".to_string()]);
        let all = slice_cohort(&phi, &labels, &CohortSelector::All).unwrap();
        assert_eq!(all, phi);
        let err = slice_cohort(&phi, &labels, &CohortSelector::ByGroup("z".into())).unwrap_err();
        assert_eq!(err.to_string(), "group z: no instances");
    }

    #[test]
    fn additivity_residual() {
        let phi = m(&[&[1.0, 2.0], &[0.5, 0.5]]);
        let ok = check_additivity(&phi, &[4.0, 2.0], 1.0, 1e-12).unwrap();
        assert!(ok.pass);
        let mut bad = phi.clone();
        bad.set(0, 0, 2.0);
        let r = check_additivity(&bad, &[4.0, 2.0], 1.0, 0.5).unwrap();
        assert!(!r.pass);
        assert_eq!(r.max_abs_residual, 1.0);
        assert!(check_additivity(&bad, &[4.0, 2.0], 1.0, f64::INFINITY).unwrap().pass);
    }
}
