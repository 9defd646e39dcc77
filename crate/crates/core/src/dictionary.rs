//! Approximate-linear-dependence (ALD) dictionary.
//!
//! Holds the retained atoms `x̃_j`, the reduced Gram matrix `K̃` over them, its inverse
//! (maintained recursively, never re-inverted on the hot path) and the coefficient Gram
//! `AᵀA` accumulated from every sample's expansion coefficients. The per-sample rows of
//! `A` are not kept.
//!
//! The ALD solve itself goes through a lower Cholesky factor `K̃ = LLᵀ` that gains one
//! row per admitted atom. With small `ν` the reduced Gram matrix becomes badly
//! conditioned, and residuals computed as `k - k̃ᵀK̃⁻¹k̃` through the recursive inverse
//! then pick up errors far above the rounding guard; `k - ‖L⁻¹k̃‖²` does not.

use ndarray::{s, Array1, Array2, ArrayView1};

use crate::error::{check_dims, OksirError, Result};
use crate::kernel::KernelConfig;
use crate::linalg;

/// Residuals at or above `-NEG_EPS_TOL · max(1, k(x, x))` are rounding noise and
/// clamp to zero; anything more negative means the factorization has broken down.
pub const NEG_EPS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct AldResult {
    /// Optimal expansion coefficients `ã = K̃⁻¹ k̃(x)`.
    pub a_tilde: Array1<f64>,
    /// Squared feature-space residual `ε = k(x, x) - k̃(x)ᵀ ã`, clamped at zero.
    pub epsilon: f64,
    pub admitted: bool,
    /// `k̃(x)` against the current atoms; reused when the sample is admitted.
    pub k_vec: Array1<f64>,
    pub k_self: f64,
    /// `L⁻¹ k̃(x)`; becomes the new row of the factor on admission.
    pub whitened: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    samples: Array2<f64>,
    k_tilde: Array2<f64>,
    k_tilde_inv: Array2<f64>,
    chol: Array2<f64>,
    ata: Array2<f64>,
    nu: f64,
}

impl Dictionary {
    /// One-atom dictionary `{x₁}` with `K̃ = [k₁₁]`, `K̃⁻¹ = [1/k₁₁]` and `AᵀA = [1]`.
    pub fn new(first: ArrayView1<f64>, kernel: &KernelConfig, nu: f64) -> Result<Self> {
        if first.is_empty() {
            return Err(OksirError::input("samples need at least one coordinate"));
        }
        if nu.is_nan() {
            return Err(OksirError::input("ALD threshold must not be NaN"));
        }
        let k11 = kernel.eval(first, first)?;
        if !(k11 > 0.0 && k11.is_finite()) {
            return Err(OksirError::InvalidKernel(format!(
                "k(x1, x1) must be positive, got {k11}"
            )));
        }
        let mut samples = Array2::zeros((0, first.len()));
        samples.push_row(first).expect("row length matches");
        Ok(Dictionary {
            samples,
            k_tilde: Array2::from_elem((1, 1), k11),
            k_tilde_inv: Array2::from_elem((1, 1), 1.0 / k11),
            chol: Array2::from_elem((1, 1), k11.sqrt()),
            ata: Array2::from_elem((1, 1), 1.0),
            nu,
        })
    }

    /// Rebuilds a dictionary from persisted parts. Checks shapes and refactors `K̃`; the
    /// row-by-row factorization repeats the incremental one operation for operation.
    pub fn from_parts(
        samples: Array2<f64>,
        k_tilde: Array2<f64>,
        k_tilde_inv: Array2<f64>,
        ata: Array2<f64>,
        nu: f64,
    ) -> Result<Self> {
        let m = samples.nrows();
        if m == 0 {
            return Err(OksirError::Format("dictionary has no atoms".into()));
        }
        for (name, mat) in [("k_tilde", &k_tilde), ("k_tilde_inv", &k_tilde_inv), ("ata", &ata)] {
            if mat.dim() != (m, m) {
                return Err(OksirError::Format(format!(
                    "{name} has shape {:?}, expected ({m}, {m})",
                    mat.dim()
                )));
            }
        }
        let chol = cholesky_rows(&k_tilde)?;
        Ok(Dictionary {
            samples,
            k_tilde,
            k_tilde_inv,
            chol,
            ata,
            nu,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn k_tilde(&self) -> &Array2<f64> {
        &self.k_tilde
    }

    pub fn k_tilde_inv(&self) -> &Array2<f64> {
        &self.k_tilde_inv
    }

    pub fn ata(&self) -> &Array2<f64> {
        &self.ata
    }

    pub(crate) fn set_ata(&mut self, ata: Array2<f64>) {
        self.ata = ata;
    }

    pub fn kernel_vector(&self, x: ArrayView1<f64>, kernel: &KernelConfig) -> Result<Array1<f64>> {
        kernel.vector(self.samples.view(), x)
    }

    /// ALD test for a candidate `x` against the current atoms.
    pub fn ald_test(&self, x: ArrayView1<f64>, kernel: &KernelConfig) -> Result<AldResult> {
        let k_vec = self.kernel_vector(x, kernel)?;
        let k_self = kernel.eval_unchecked(x, x);
        let whitened = forward_solve(&self.chol, &k_vec);
        let raw = k_self - whitened.dot(&whitened);
        let a_tilde = back_solve(&self.chol, &whitened);
        let tol = NEG_EPS_TOL * k_self.abs().max(1.0);
        let epsilon = if raw >= 0.0 {
            raw
        } else if raw >= -tol {
            0.0
        } else {
            return Err(OksirError::NumericalDegeneracy(format!(
                "ALD residual {raw:e} is negative beyond rounding; K̃ is numerically singular"
            )));
        };
        if !epsilon.is_finite() {
            return Err(OksirError::NumericalDegeneracy("non-finite ALD residual".into()));
        }
        Ok(AldResult {
            admitted: epsilon > self.nu,
            a_tilde,
            epsilon,
            k_vec,
            k_self,
            whitened,
        })
    }

    /// Admits `x` as a new atom: borders `K̃` with `k̃(x)` and `k(x, x)`, applies the
    /// block inverse update
    ///
    /// ```text
    /// K̃⁻¹ ← (1/ε) [ ε K̃⁻¹ + ã ãᵀ   -ã ]
    ///              [ -ãᵀ            1 ]
    /// ```
    ///
    /// and appends a unit diagonal entry to `AᵀA`.
    pub fn grow(&mut self, x: ArrayView1<f64>, ald: &AldResult) -> Result<()> {
        let m = self.len();
        check_dims("new atom", self.input_dim(), x.len())?;
        check_dims("ALD coefficients", m, ald.a_tilde.len())?;
        check_dims("ALD kernel vector", m, ald.k_vec.len())?;
        check_dims("ALD whitened vector", m, ald.whitened.len())?;
        if !(ald.epsilon > 0.0) {
            return Err(OksirError::NumericalDegeneracy(format!(
                "cannot admit a sample with ALD residual {}",
                ald.epsilon
            )));
        }
        let eps = ald.epsilon;
        let a = &ald.a_tilde;

        let mut k_tilde = Array2::zeros((m + 1, m + 1));
        k_tilde.slice_mut(s![..m, ..m]).assign(&self.k_tilde);
        k_tilde.slice_mut(s![..m, m]).assign(&ald.k_vec);
        k_tilde.slice_mut(s![m, ..m]).assign(&ald.k_vec);
        k_tilde[[m, m]] = ald.k_self;

        let inv_eps = 1.0 / eps;
        let mut inv = Array2::zeros((m + 1, m + 1));
        {
            let mut top = inv.slice_mut(s![..m, ..m]);
            for i in 0..m {
                for j in 0..m {
                    top[[i, j]] = self.k_tilde_inv[[i, j]] + a[i] * a[j] * inv_eps;
                }
            }
        }
        for i in 0..m {
            inv[[i, m]] = -a[i] * inv_eps;
            inv[[m, i]] = -a[i] * inv_eps;
        }
        inv[[m, m]] = inv_eps;

        let mut chol = Array2::zeros((m + 1, m + 1));
        chol.slice_mut(s![..m, ..m]).assign(&self.chol);
        chol.slice_mut(s![m, ..m]).assign(&ald.whitened);
        chol[[m, m]] = eps.sqrt();

        let mut ata = Array2::zeros((m + 1, m + 1));
        ata.slice_mut(s![..m, ..m]).assign(&self.ata);
        ata[[m, m]] = 1.0;

        self.samples.push_row(x).expect("row length checked");
        self.k_tilde = k_tilde;
        self.k_tilde_inv = inv;
        self.chol = chol;
        self.ata = ata;
        Ok(())
    }

    /// Keeps the atoms and accumulates `AᵀA += ã ãᵀ`.
    pub fn absorb(&mut self, ald: &AldResult) -> Result<()> {
        check_dims("ALD coefficients", self.len(), ald.a_tilde.len())?;
        add_outer(&mut self.ata, &ald.a_tilde, 1.0);
        Ok(())
    }

    /// Max-abs entry of `K̃ K̃⁻¹ - I`.
    pub fn inverse_residual(&self) -> f64 {
        let prod = self.k_tilde.dot(&self.k_tilde_inv);
        linalg::max_abs_diff(&prod, &Array2::eye(self.len()))
    }

    /// Max-abs difference between the recursive inverse and a dense re-inversion of `K̃`.
    pub fn inverse_drift(&self) -> Result<f64> {
        let dense = linalg::inverse(&self.k_tilde)?;
        Ok(linalg::max_abs_diff(&dense, &self.k_tilde_inv))
    }
}

/// Solves `L z = b` for lower-triangular `L`.
fn forward_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = b.len();
    let mut z = Array1::zeros(n);
    for i in 0..n {
        let row = l.row(i);
        let mut acc = b[i];
        for j in 0..i {
            acc -= row[j] * z[j];
        }
        z[i] = acc / row[i];
    }
    z
}

/// Solves `Lᵀ a = z` for lower-triangular `L`.
fn back_solve(l: &Array2<f64>, z: &Array1<f64>) -> Array1<f64> {
    let n = z.len();
    let mut a = z.clone();
    for i in (0..n).rev() {
        a[i] /= l[[i, i]];
        let ai = a[i];
        for j in 0..i {
            a[j] -= l[[i, j]] * ai;
        }
    }
    a
}

/// Row-by-row Cholesky factor of `k`, built exactly as successive admissions build it.
fn cholesky_rows(k: &Array2<f64>) -> Result<Array2<f64>> {
    let n = k.nrows();
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        let head = l.slice(s![..i, ..i]).to_owned();
        let z = forward_solve(&head, &k.slice(s![i, ..i]).to_owned());
        let pivot = k[[i, i]] - z.dot(&z);
        if !(pivot > 0.0 && pivot.is_finite()) {
            return Err(OksirError::Format(format!("k_tilde is not positive definite (pivot {i} is {pivot:e})")));
        }
        l.slice_mut(s![i, ..i]).assign(&z);
        l[[i, i]] = pivot.sqrt();
    }
    Ok(l)
}

/// `target += scale · v vᵀ`, written out so the update stays exactly symmetric.
pub(crate) fn add_outer(target: &mut Array2<f64>, v: &Array1<f64>, scale: f64) {
    let n = v.len();
    for i in 0..n {
        let vi = v[i] * scale;
        if vi == 0.0 {
            continue;
        }
        let mut row = target.row_mut(i);
        for j in 0..n {
            row[j] += vi * v[j];
        }
    }
}
