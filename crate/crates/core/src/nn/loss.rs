use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax, stabilized by subtracting each row's maximum.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    let cols = out.cols();
    if cols == 0 {
        return out;
    }
    for row in out.as_mut_slice().chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn check_labels(probs: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != probs.rows() {
        return Err(Error::LengthMismatch {
            context: "labels vs probability rows",
            left: labels.len(),
            right: probs.rows(),
        });
    }
    let classes = probs.cols();
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::LabelOutOfRange { row, label, classes });
    }
    Ok(())
}

/// Per-row negative log-likelihood of the true label.
pub fn cross_entropy_per_row(probs: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    check_labels(probs, labels)?;
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs.get(i, y).max(PROB_FLOOR).ln())
        .collect())
}

/// Gradient of the mean softmax cross-entropy w.r.t. the logits:
/// `(p − onehot(y)) / N`.
pub fn softmax_cross_entropy_grad(probs: &Matrix, labels: &[usize]) -> Result<Matrix> {
    check_labels(probs, labels)?;
    let n = probs.rows().max(1) as f64;
    let mut grad = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        let row = grad.row_mut(i);
        row[y] -= 1.0;
        row.iter_mut().for_each(|g| *g /= n);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        let p = softmax_rows(&Matrix::from_rows(&[[0.0, 0.0]]).unwrap());
        assert_eq!(p.as_slice(), &[0.5, 0.5]);
        let p = softmax_rows(&Matrix::from_rows(&[[7.5, 7.5, 7.5]]).unwrap());
        for v in p.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        // exp(-1000) underflows to 0; the stabilized form never overflows
        let p = softmax_rows(&Matrix::from_rows(&[[1000.0, 0.0]]).unwrap());
        assert_eq!(p.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn cross_entropy_examples() {
        let probs = Matrix::from_rows(&[[1.0, 0.0], [0.5, 0.5]]).unwrap();
        let ce = cross_entropy_per_row(&probs, &[0, 1]).unwrap();
        assert_eq!(ce[0], 0.0);
        assert!((ce[1] - std::f64::consts::LN_2).abs() < 1e-12);

        let uniform = Matrix::from_rows(&[[0.1; 10]]).unwrap();
        let ce = cross_entropy_per_row(&uniform, &[3]).unwrap();
        assert!((ce[0] - std::f64::consts::LN_10).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_floors_zero_probability() {
        let probs = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let ce = cross_entropy_per_row(&probs, &[1]).unwrap();
        assert!((ce[0] + PROB_FLOOR.ln()).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        let probs = Matrix::from_rows(&[[0.5, 0.5]]).unwrap();
        let err = cross_entropy_per_row(&probs, &[2]).unwrap_err();
        assert!(matches!(
            err,
            Error::LabelOutOfRange {
                row: 0,
                label: 2,
                classes: 2
            }
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn softmax_rows_sum_to_one(row in prop::collection::vec(-500.0f64..500.0, 1..12)) {
            let m = Matrix::from_rows(&[row]).unwrap();
            let p = softmax_rows(&m);
            let s: f64 = p.as_slice().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(p.as_slice().iter().all(|v| v.is_finite() && *v >= 0.0));
        }

        #[test]
        fn cross_entropy_lower_bounds(
            row in prop::collection::vec(-20.0f64..20.0, 2..10),
            pick in 0usize..100,
        ) {
            let c = row.len();
            let p = softmax_rows(&Matrix::from_rows(&[row]).unwrap());
            let y = pick % c;
            let ce = cross_entropy_per_row(&p, &[y]).unwrap()[0];
            let max_p = p.as_slice().iter().copied().fold(0.0, f64::max);
            prop_assert!(ce >= 0.0);
            prop_assert!(ce >= -max_p.ln() - 1e-12);
        }
    }
}
