//! Held-out evaluation.

use crate::error::{Error, Result};
use crate::sparse::{observed_values, LowRankModel, ObservedMatrix};

/// Percentage of test entries whose predicted sign matches the ±1 label.
/// A prediction of exactly zero counts as `+1`.
pub fn sign_accuracy(model: &LowRankModel, test: &ObservedMatrix) -> Result<f64> {
    if let Some(bad) = test.values().iter().find(|&&o| o != 1.0 && o != -1.0) {
        return Err(Error::Data(format!(
            "sign accuracy needs ±1 labels, found {bad}"
        )));
    }
    if test.nnz() == 0 {
        return Err(Error::Data("empty test set".into()));
    }
    let pred = observed_values(model, test)?;
    let hits = pred
        .iter()
        .zip(test.values())
        .filter(|&(&p, &o)| (if p >= 0.0 { 1.0 } else { -1.0 }) == o)
        .count();
    Ok(100.0 * hits as f64 / test.nnz() as f64)
}

/// Mean absolute error over the test entries.
pub fn mabs(model: &LowRankModel, test: &ObservedMatrix) -> Result<f64> {
    if test.nnz() == 0 {
        return Err(Error::Data("empty test set".into()));
    }
    let pred = observed_values(model, test)?;
    let total: f64 = pred
        .iter()
        .zip(test.values())
        .map(|(p, o)| (p - o).abs())
        .sum();
    Ok(total / test.nnz() as f64)
}

/// Root mean squared error over the test entries.
pub fn rmse(model: &LowRankModel, test: &ObservedMatrix) -> Result<f64> {
    if test.nnz() == 0 {
        return Err(Error::Data("empty test set".into()));
    }
    let pred = observed_values(model, test)?;
    let total: f64 = pred
        .iter()
        .zip(test.values())
        .map(|(p, o)| (p - o) * (p - o))
        .sum();
    Ok((total / test.nnz() as f64).sqrt())
}

/// Sample mean and standard deviation (`n − 1` denominator; 0 for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed_test() -> ObservedMatrix {
        ObservedMatrix::new(
            2,
            2,
            vec![(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)],
        )
        .unwrap()
    }

    fn diag_model(scale: f64) -> LowRankModel {
        let mut m = LowRankModel::zeros(2, 2);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        m.push(scale, vec![r, -r], vec![r, -r]).unwrap();
        m
    }

    #[test]
    fn perfect_and_negated_signs() {
        let t = signed_test();
        assert_eq!(sign_accuracy(&diag_model(2.0), &t).unwrap(), 100.0);
        assert_eq!(sign_accuracy(&diag_model(-2.0), &t).unwrap(), 0.0);
    }

    #[test]
    fn zero_prediction_counts_positive() {
        let t = signed_test();
        assert_eq!(sign_accuracy(&LowRankModel::zeros(2, 2), &t).unwrap(), 50.0);
    }

    #[test]
    fn non_sign_labels_rejected() {
        let t = ObservedMatrix::new(1, 1, vec![(0, 0, 3.0)]).unwrap();
        assert!(sign_accuracy(&LowRankModel::zeros(1, 1), &t).is_err());
    }

    #[test]
    fn mabs_of_zero_model() {
        let t = ObservedMatrix::new(2, 2, vec![(0, 0, 3.0), (1, 1, 3.0), (1, 0, 3.0)]).unwrap();
        assert_eq!(mabs(&LowRankModel::zeros(2, 2), &t).unwrap(), 3.0);
        assert_eq!(rmse(&LowRankModel::zeros(2, 2), &t).unwrap(), 3.0);
    }

    #[test]
    fn mabs_exact_and_empty() {
        let m = diag_model(2.0);
        let t = ObservedMatrix::new(2, 2, vec![(0, 0, 1.0), (1, 0, -1.0)]).unwrap();
        assert!(mabs(&m, &t).unwrap() < 1e-15);
        let empty = ObservedMatrix::new(2, 2, vec![]).unwrap();
        assert!(mabs(&m, &empty).is_err());
    }

    #[test]
    fn mean_std_basic() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }
}
