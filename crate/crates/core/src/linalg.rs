//! Small dense linear algebra, backed by nalgebra.
//!
//! Everything here operates on matrices of modest size (feature counts,
//! community counts), so dense factorizations are fine.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Least-squares solution of `x * beta ≈ y` via SVD.
pub fn least_squares(x: &Array2<f64>, y: &Array1<f64>) -> Result<Array1<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
            context: "least_squares rows",
        });
    }
    let a = to_na(x);
    let b = DVector::from_iterator(y.len(), y.iter().copied());
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::Linalg(e.to_string()))?;
    Ok(Array1::from_iter(sol.iter().copied()))
}

/// Ordinary least squares through the normal equations. Preferred over
/// [`least_squares`] when rows vastly outnumber columns.
pub fn ols(x: &Array2<f64>, y: &Array1<f64>) -> Result<Array1<f64>> {
    let xtx = x.t().dot(x);
    let xty = x.t().dot(y);
    least_squares(&xtx, &xty)
}

/// Moore-Penrose pseudo-inverse with singular values below `tol` dropped.
pub fn pseudo_inverse(a: &Array2<f64>, tol: f64) -> Result<Array2<f64>> {
    let m = to_na(a);
    let pinv = m
        .pseudo_inverse(tol)
        .map_err(|e| Error::Linalg(e.to_string()))?;
    Ok(from_na(&pinv))
}

/// Numerical rank: singular values above `tol` relative to the largest.
pub fn rank(a: &Array2<f64>, tol: f64) -> usize {
    let svd = to_na(a).svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|&&s| s > tol * smax).count()
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as columns,
/// each sign-fixed so its first component of magnitude > 1e-12 is
/// positive. The sign convention makes embeddings reproducible across
/// runs and backends.
pub fn symmetric_eigen_ascending(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    if a.nrows() != a.ncols() {
        return Err(Error::Linalg(format!(
            "symmetric eigen needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let eig = to_na(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let mut values = Vec::with_capacity(n);
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (col, &idx) in order.iter().enumerate() {
        values.push(eig.eigenvalues[idx]);
        let v = eig.eigenvectors.column(idx);
        let sign = v
            .iter()
            .find(|x| x.abs() > 1e-12)
            .map_or(1.0, |x| if *x < 0.0 { -1.0 } else { 1.0 });
        for row in 0..n {
            vectors[[row, col]] = sign * v[row];
        }
    }
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn least_squares_recovers_exact_solution() {
        // x * [2, -1] = y, square well-conditioned system
        let x = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let y = array![2.0, -1.0, 1.0];
        let beta = least_squares(&x, &y).unwrap();
        assert_abs_diff_eq!(beta[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(beta[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn pseudo_inverse_roundtrip() {
        let a = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let p = pseudo_inverse(&a, 1e-12).unwrap();
        let prod = p.dot(&a); // should be I_2
        assert_abs_diff_eq!(prod[[0, 0]], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(prod[[1, 1]], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(prod[[0, 1]], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn rank_detects_deficiency() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        assert_eq!(rank(&a, 1e-9), 1);
        let b = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(rank(&b, 1e-9), 2);
    }

    #[test]
    fn eigen_path_graph_spectrum() {
        // P3 with unit weights: Laplacian eigenvalues {0, 1, 3}
        let l = array![[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]];
        let (vals, vecs) = symmetric_eigen_ascending(&l).unwrap();
        assert_abs_diff_eq!(vals[0], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(vals[1], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(vals[2], 3.0, epsilon = 1e-10);
        // first eigenvector is constant; sign convention makes it positive
        assert!(vecs[[0, 0]] > 0.0);
        assert_abs_diff_eq!(vecs[[0, 0]], vecs[[1, 0]], epsilon = 1e-10);
    }
}
