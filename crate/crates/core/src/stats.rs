//! Shared summary statistics used by tests, reports, and recipes.

use ndarray::{Array1, Array2};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n-1 denominator); 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Empirical covariance matrix of row-wise samples (population normalization).
pub fn covariance_matrix(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows() as f64;
    let mu = x.mean_axis(ndarray::Axis(0)).expect("non-empty");
    let centered = x - &mu.broadcast((x.nrows(), x.ncols())).unwrap();
    centered.t().dot(&centered) / n
}

pub fn pearson(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va.sqrt() * vb.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn std_matches_hand_value() {
        assert_abs_diff_eq!(sample_std(&[1.0, 2.0, 3.0]), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn covariance_of_identity_samples() {
        let x = array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let c = covariance_matrix(&x);
        assert_abs_diff_eq!(c[[0, 0]], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(c[[0, 1]], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pearson_perfect_correlation() {
        let a = array![1.0, 2.0, 3.0];
        let b = array![2.0, 4.0, 6.0];
        assert_abs_diff_eq!(pearson(&a, &b), 1.0, epsilon = 1e-12);
    }
}
