use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::models::LinearModel;
use crate::error::{invalid, Error, Result};
use crate::interventions::Predictor;
use crate::matrix::Matrix;
use crate::par;

pub const MAX_EXHAUSTIVE_FEATURES: usize = 15;

/// `φ_i = w_i (x_i − mean_background(x_i))`.
pub fn linear_shap(model: &LinearModel, x: &Matrix, background: &Matrix) -> Result<Matrix> {
    let d = model.weights.len();
    if x.cols() != d || background.cols() != d {
        return Err(Error::DimensionMismatch { context: "linear attribution", expected: d, found: x.cols() });
    }
    if background.rows() == 0 {
        return Err(invalid("background is empty"));
    }
    let mu = background.column_means();
    let mut phi = Matrix::zeros(x.rows(), d);
    for s in 0..x.rows() {
        for (i, out) in phi.row_mut(s).iter_mut().enumerate() {
            *out = model.weights[i] * (x.get(s, i) - mu[i]);
        }
    }
    Ok(phi)
}

/// Exact interventional Shapley values of one instance by enumerating all
/// `2^d` coalitions, with `v(S) = mean_b f(x_S, b_{S̄})`.
pub fn exhaustive_shap(model: &dyn Predictor, x: &[f64], background: &Matrix) -> Result<Vec<f64>> {
    let d = x.len();
    if d > MAX_EXHAUSTIVE_FEATURES {
        return Err(invalid(format!("exhaustive attribution supports d <= {MAX_EXHAUSTIVE_FEATURES}, found {d}")));
    }
    if background.rows() == 0 {
        return Err(invalid("background is empty"));
    }
    if background.cols() != d {
        return Err(Error::DimensionMismatch { context: "background", expected: d, found: background.cols() });
    }
    let coalitions = 1usize << d;
    let value: Vec<f64> = par::map_indexed(coalitions, |mask| {
        let mut row = vec![0.0; d];
        let mut total = 0.0;
        for b in 0..background.rows() {
            let bg = background.row(b);
            for i in 0..d {
                row[i] = if mask & (1 << i) != 0 { x[i] } else { bg[i] };
            }
            total += model.predict_row(&row);
        }
        total / background.rows() as f64
    });
    // weight(|S|) = |S|! (d − |S| − 1)! / d!
    let mut weight = vec![0.0; d];
    for (s, w) in weight.iter_mut().enumerate() {
        let mut v = 1.0;
        for t in 1..=s {
            v *= t as f64;
        }
        for t in 1..=(d - s - 1) {
            v *= t as f64;
        }
        for t in 1..=d {
            v /= t as f64;
        }
        *w = v;
    }
    let mut phi = vec![0.0; d];
    for mask in 0..coalitions {
        let size = mask.count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if mask & (1 << i) == 0 {
                *p += weight[size] * (value[mask | (1 << i)] - value[mask]);
            }
        }
    }
    Ok(phi)
}

/// Row-wise [`exhaustive_shap`].
pub fn exhaustive_shap_matrix(model: &dyn Predictor, x: &Matrix, background: &Matrix) -> Result<Matrix> {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for s in 0..x.rows() {
        let phi = exhaustive_shap(model, x.row(s), background)?;
        out.row_mut(s).copy_from_slice(&phi);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn background_mean_gives_zero() {
        let m = LinearModel { weights: vec![1.0, -2.0], intercept: 0.3, lambda: 0.0 };
        let bg = Matrix::from_rows(&[&[0.0, 1.0], &[2.0, 3.0]]).unwrap();
        let x = Matrix::from_rows(&[&[1.0, 2.0]]).unwrap();
        assert_eq!(linear_shap(&m, &x, &bg).unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn constant_model_and_efficiency() {
        let bg = Matrix::from_rows(&[&[0.0, 1.0, 2.0], &[1.0, -1.0, 0.5]]).unwrap();
        let c = |_: &[f64]| 3.0;
        assert_eq!(exhaustive_shap(&c, &[1.0, 2.0, 3.0], &bg).unwrap(), vec![0.0; 3]);
        let f = |x: &[f64]| x[0] * x[1] + x[2].sin();
        let x = [0.3, -1.2, 2.0];
        let phi = exhaustive_shap(&f, &x, &bg).unwrap();
        let base = (f(bg.row(0)) + f(bg.row(1))) / 2.0;
        assert!((phi.iter().sum::<f64>() - (f(&x) - base)).abs() < 1e-12);
    }

    #[test]
    fn symmetric_players_share_equally() {
        let bg = Matrix::from_rows(&[&[0.5, 0.5, 1.0], &[-1.0, -1.0, 0.0]]).unwrap();
        let f = |x: &[f64]| x[0] * x[1] + x[2];
        let phi = exhaustive_shap(&f, &[2.0, 2.0, 0.0], &bg).unwrap();
        assert!((phi[0] - phi[1]).abs() < 1e-12);
    }

    #[test]
    fn too_many_features() {
        let bg = Matrix::zeros(1, 16);
        assert!(exhaustive_shap(&|_: &[f64]| 0.0, &[0.0; 16], &bg).is_err());
    }
}
