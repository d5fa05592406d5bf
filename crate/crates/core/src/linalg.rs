//! Small dense linear-algebra helpers shared by the solver, selection and
//! simulation layers. Everything works on `nalgebra::DMatrix<f64>`.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// `(A + A^T) / 2`, written entry-wise so the result is exactly symmetric.
pub fn symmetrize(a: &Mat) -> Mat {
    let n = a.nrows();
    let mut out = a.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

pub fn cholesky(a: &Mat, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(a.clone()).ok_or_else(|| Error::NonPositiveDefinite(what.to_string()))
}

pub fn is_pd(a: &Mat) -> bool {
    a.nrows() == 0 || Cholesky::new(a.clone()).is_some()
}

/// Log-determinant of a symmetric positive-definite matrix.
pub fn logdet_pd(a: &Mat, what: &str) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let chol = cholesky(a, what)?;
    let l = chol.l_dirty();
    Ok(2.0 * (0..a.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

/// Inverse of a symmetric positive-definite matrix, symmetrized.
pub fn inverse_pd(a: &Mat, what: &str) -> Result<Mat> {
    if a.nrows() == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    Ok(symmetrize(&cholesky(a, what)?.inverse()))
}

pub fn trace_product(a: &Mat, b: &Mat) -> f64 {
    // tr(A B) = sum_ij A_ij B_ji
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn frobenius_sq(a: &Mat) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Eigenpairs of a symmetric matrix sorted by non-increasing eigenvalue.
/// Ties keep the decomposition's original order. Each eigenvector is signed
/// so that its largest-magnitude entry (first on ties) is positive.
pub fn sorted_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .partial_cmp(&eig.eigenvalues[x])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut vecs = Mat::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[src]);
        let col = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for i in 0..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vecs[(i, dst)] = sign * col[i];
        }
    }
    (vals, vecs)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
