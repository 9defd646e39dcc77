//! Dense linear-algebra helpers built on `nalgebra`: conversions, symmetric
//! (generalized) eigen-decomposition, inversion and principal angles.
//!
//! Nothing on the streaming hot path goes through here; these routines back the
//! batch solver, diagnostics and the test oracles.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{OksirError, Result};

pub fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn view_to_na(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn from_na(a: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

pub fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim(), "shape mismatch");
    a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
}

/// Dense inverse via LU; used for drift diagnostics and oracles only.
pub fn inverse(a: &Array2<f64>) -> Result<Array2<f64>> {
    to_na(a)
        .try_inverse()
        .map(|m| from_na(&m))
        .ok_or_else(|| OksirError::EigenSolver("matrix is singular".into()))
}

/// Eigen-pairs of a symmetric matrix sorted by decreasing eigenvalue.
pub fn symmetric_eigen_desc(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let mut m = to_na(a);
    m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Top-`d` solutions of the symmetric-definite pencil `A v = λ B v`.
///
/// `B` only needs to be positive semi-definite: the problem is solved on the range of
/// `B` (eigenvalues below `rel_floor · λ_max(B)` are discarded), which is where the
/// pencil is well posed. Eigenvectors are returned as columns, normalized so that
/// `vᵀ B v = 1`, eigenvalues sorted descending.
pub fn generalized_eigen_top(
    a: &Array2<f64>,
    b: &Array2<f64>,
    d: usize,
    rel_floor: f64,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.dim() != (n, n) || b.dim() != (n, n) {
        return Err(OksirError::input("generalized eigenproblem needs square matrices of equal size"));
    }
    let (bvals, bvecs) = symmetric_eigen_desc(b);
    let top = bvals.first().copied().unwrap_or(0.0);
    if !(top > 0.0) || !top.is_finite() {
        return Err(OksirError::EigenSolver("right-hand matrix has no positive spectrum".into()));
    }
    let keep: Vec<usize> = (0..n).filter(|&i| bvals[i] > rel_floor * top).collect();
    let r = keep.len();
    if r < d {
        return Err(OksirError::EigenSolver(format!(
            "right-hand matrix has numerical rank {r} < requested dimension {d}; increase the ridge"
        )));
    }
    // W = U_r Λ_r^{-1/2}; the reduced problem Wᵀ A W z = λ z is an ordinary symmetric one.
    let w = Array2::from_shape_fn((n, r), |(i, c)| bvecs[[i, keep[c]]] / bvals[keep[c]].sqrt());
    let reduced = w.t().dot(a).dot(&w);
    let (vals, vecs) = symmetric_eigen_desc(&reduced);
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(OksirError::EigenSolver("non-finite eigenvalues; increase the ridge".into()));
    }
    let top_vecs = w.dot(&vecs.slice(ndarray::s![.., ..d]));
    Ok((vals.slice(ndarray::s![..d]).to_owned(), top_vecs))
}

/// Orthonormal basis for the column span of `a` (thin QR).
pub fn orthonormal_basis(a: &Array2<f64>) -> Array2<f64> {
    let qr = to_na(a).qr();
    from_na(&qr.q())
}

/// Principal (canonical) angles in radians between the column spans of `a` and `b`,
/// sorted ascending. Both must have the same number of rows. Angles below `π/4` come
/// from the sines (`‖(I - QₐQₐᵀ)Q_b‖` singular values), the rest from the cosines, since
/// `acos` loses half the digits near zero.
pub fn principal_angles(a: &Array2<f64>, b: &Array2<f64>) -> Vec<f64> {
    assert_eq!(a.nrows(), b.nrows(), "principal angles need a common ambient dimension");
    let (qa, qb) = {
        let (qa, qb) = (orthonormal_basis(a), orthonormal_basis(b));
        if qb.ncols() <= qa.ncols() { (qa, qb) } else { (qb, qa) }
    };
    let cross = qa.t().dot(&qb);
    let mut cosines: Vec<f64> = to_na(&cross).svd(false, false).singular_values.iter().copied().collect();
    cosines.sort_by(|x, y| y.total_cmp(x));
    let residual = &qb - &qa.dot(&cross);
    let mut sines: Vec<f64> = to_na(&residual).svd(false, false).singular_values.iter().copied().collect();
    sines.sort_by(f64::total_cmp);
    cosines
        .iter()
        .zip(&sines)
        .map(|(&c, &s)| {
            let from_cos = c.clamp(-1.0, 1.0).acos();
            if from_cos < std::f64::consts::FRAC_PI_4 { s.clamp(0.0, 1.0).asin() } else { from_cos }
        })
        .collect()
}

/// Largest principal angle between two column spans.
pub fn max_principal_angle(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    principal_angles(a, b).into_iter().fold(0.0, f64::max)
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(a: &Array2<f64>) -> f64 {
    to_na(a).svd(false, false).singular_values.max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn generalized_eigen_of_diagonal_pencil() {
        let a = Array2::from_diag(&array![3.0, 8.0, 1.0]);
        let b = Array2::from_diag(&array![1.0, 2.0, 1.0]);
        let (vals, vecs) = generalized_eigen_top(&a, &b, 2, 1e-12).unwrap();
        assert!((vals[0] - 4.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        assert!(vecs[[1, 0]].abs() > 0.7 && vecs[[0, 0]].abs() < 1e-12);
        let btb = vecs.t().dot(&b).dot(&vecs);
        assert!(max_abs_diff(&btb, &Array2::eye(2)) < 1e-12);
    }

    #[test]
    fn rank_deficient_rhs_reports_error() {
        let a = Array2::eye(3);
        let b = Array2::from_diag(&array![1.0, 0.0, 0.0]);
        assert!(generalized_eigen_top(&a, &b, 2, 1e-12).is_err());
    }

    #[test]
    fn angles_between_identical_and_orthogonal_spans() {
        let a = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        let b = array![[2.0, 1.0], [0.0, 3.0], [0.0, 0.0]];
        assert!(max_principal_angle(&a, &b) < 1e-15);
        let c = array![[0.0], [0.0], [1.0]];
        let ang = principal_angles(&a.slice(ndarray::s![.., 0..1]).to_owned(), &c);
        assert!((ang[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn small_angle_is_accurate() {
        let t = 1e-9f64;
        let a = array![[1.0], [0.0]];
        let b = array![[t.cos()], [t.sin()]];
        assert!((max_principal_angle(&a, &b) - t).abs() < 1e-20);
    }

    #[test]
    fn inverse_roundtrip() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let inv = inverse(&a).unwrap();
        assert!(max_abs_diff(&a.dot(&inv), &Array2::eye(2)) < 1e-14);
    }
}
