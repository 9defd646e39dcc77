//! Offline kernel SIR on a full training set.
//!
//! Solves `KᶜJKᶜ c = λ (Kᶜ² + r Kᶜ + r² I) c` densely, with `Kᶜ` the doubly centered
//! Gram matrix, `J` the slice-averaging matrix and `r` a ridge. New points map to
//! `v̂ = Cᵀ kᶜ(x)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dims, OksirError, Result};
use crate::kernel::KernelConfig;
use crate::linalg;
use crate::slicing::SliceConfig;

/// Default ridge as a fraction of `tr(Kᶜ)/n`.
pub const DEFAULT_RIDGE_FRACTION: f64 = 1e-8;
/// Largest training set solved densely by the command-line baseline.
pub const MAX_BASIS: usize = 1000;
/// Relative eigenvalue floor of the right-hand matrix.
const RANGE_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchKsirResult {
    /// `n × d`; column `j` is `c_j`.
    pub coeffs: Array2<f64>,
    pub eigenvalues: Array1<f64>,
    pub ridge: f64,
    pub kernel: KernelConfig,
    pub cutpoints: Vec<f64>,
    /// Column means of the uncentered training Gram matrix.
    pub gram_col_means: Array1<f64>,
    pub gram_mean: f64,
}

/// `K - 1ₙK - K1ₙ + 1ₙK1ₙ` with `1ₙ = 11ᵀ/n`.
pub fn center_gram(k: &Array2<f64>) -> (Array2<f64>, Array1<f64>, f64) {
    let col = k.mean_axis(Axis(0)).expect("non-empty");
    let row = k.mean_axis(Axis(1)).expect("non-empty");
    let all = col.mean().expect("non-empty");
    let n = k.nrows();
    let kc = Array2::from_shape_fn((n, n), |(i, j)| k[[i, j]] - row[i] - col[j] + all);
    (kc, col, all)
}

/// `G J G` for symmetric `G` and slice labels, as `Σ_h s_h s_hᵀ / n_h` with `s_h` the sum
/// of the columns of `G` in slice `h`.
pub fn between_slice(g: &Array2<f64>, labels: &[usize], num_slices: usize) -> Array2<f64> {
    let n = g.nrows();
    let mut sums = Array2::<f64>::zeros((num_slices, n));
    let mut counts = vec![0usize; num_slices];
    for (i, &h) in labels.iter().enumerate() {
        let mut row = sums.row_mut(h);
        row += &g.column(i);
        counts[h] += 1;
    }
    let mut out = Array2::zeros((n, n));
    for (h, s) in sums.rows().into_iter().enumerate() {
        if counts[h] == 0 {
            continue;
        }
        let s = s.to_owned().insert_axis(Axis(1));
        out.scaled_add(1.0 / counts[h] as f64, &s.dot(&s.t()));
    }
    out
}

/// Dense kernel SIR. `ridge = None` uses `DEFAULT_RIDGE_FRACTION · tr(Kᶜ)/n`; cut-points
/// default to the `H`-quantiles of `y`.
pub fn batch_ksir(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    num_slices: usize,
    d: usize,
    kernel: &KernelConfig,
    ridge: Option<f64>,
    cutpoints: Option<&SliceConfig>,
) -> Result<BatchKsirResult> {
    let n = x.nrows();
    check_dims("responses", n, y.len())?;
    if d == 0 || n < d {
        return Err(OksirError::input(format!("need 1 <= d <= n, got d = {d}, n = {n}")));
    }
    if let Some(r) = ridge {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(OksirError::input("ridge must be finite and non-negative"));
        }
    }
    let slices = match cutpoints {
        Some(c) => c.clone(),
        None => SliceConfig::from_quantiles(y.as_slice().map_or(&y.to_vec(), |s| s), num_slices)?,
    };
    let k = kernel.gram(x, x)?;
    let (kc, col, all) = center_gram(&k);
    let ridge = ridge.unwrap_or_else(|| DEFAULT_RIDGE_FRACTION * kc.diag().sum() / n as f64);
    let labels: Vec<usize> = y.iter().map(|&v| slices.slice_index(v)).collect();
    let lhs = between_slice(&kc, &labels, slices.num_slices());
    let mut rhs = kc.dot(&kc);
    rhs.scaled_add(ridge, &kc);
    for i in 0..n {
        rhs[[i, i]] += ridge * ridge;
    }
    linalg::symmetrize(&mut rhs);
    let (eigenvalues, coeffs) = linalg::generalized_eigen_top(&lhs, &rhs, d, RANGE_FLOOR).map_err(|e| {
        OksirError::EigenSolver(format!("{e}; try a larger ridge (current {ridge:e})"))
    })?;
    Ok(BatchKsirResult {
        coeffs,
        eigenvalues,
        ridge,
        kernel: kernel.clone(),
        cutpoints: slices.cutpoints().to_vec(),
        gram_col_means: col,
        gram_mean: all,
    })
}

/// `v̂ = Cᵀ kᶜ(x)` for each row of `xs`, where `kᶜ` is the kernel vector against the
/// training points centered consistently with the training Gram matrix.
pub fn batch_transform(result: &BatchKsirResult, x_train: ArrayView2<f64>, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_dims("training points", result.coeffs.nrows(), x_train.nrows())?;
    let mut kx = result.kernel.gram(xs, x_train)?;
    for mut row in kx.rows_mut() {
        let rm = row.mean().expect("non-empty");
        row.zip_mut_with(&result.gram_col_means, |v, c| *v = *v - rm - c + result.gram_mean);
    }
    Ok(kx.dot(&result.coeffs))
}

/// Sorted indices of a seeded subsample of `limit` out of `n` (all indices if `n ≤ limit`).
pub fn subsample_indices(n: usize, limit: usize, seed: u64) -> Vec<usize> {
    if n <= limit {
        return (0..n).collect();
    }
    let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(seed), n, limit).into_vec();
    idx.sort_unstable();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn between_slice_matches_dense_j() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 9;
        let b = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
        let g = b.dot(&b.t());
        let labels = [0, 1, 2, 0, 1, 0, 2, 2, 0];
        let mut j = Array2::zeros((n, n));
        for a in 0..n {
            for c in 0..n {
                if labels[a] == labels[c] {
                    j[[a, c]] = 1.0 / labels.iter().filter(|&&l| l == labels[a]).count() as f64;
                }
            }
        }
        let dense = g.dot(&j).dot(&g);
        assert!(linalg::max_abs_diff(&dense, &between_slice(&g, &labels, 3)) < 1e-12);
    }

    #[test]
    fn centered_gram_has_zero_margins() {
        let k = array![[3.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 3.0]];
        let (kc, _, _) = center_gram(&k);
        for s in kc.sum_axis(Axis(0)).iter().chain(kc.sum_axis(Axis(1)).iter()) {
            assert!(s.abs() < 1e-14);
        }
    }

    #[test]
    fn single_slice_has_no_signal() {
        let x = array![[0.0, 1.0], [1.0, 0.5], [2.0, -1.0], [0.3, 0.3], [1.5, 2.0]];
        let y = array![1.0, 1.0, 1.0, 1.0, 1.0];
        let kernel = KernelConfig::default();
        let one_slice = SliceConfig::new(vec![]).unwrap();
        let r = batch_ksir(x.view(), y.view(), 2, 2, &kernel, Some(0.1), Some(&one_slice)).unwrap();
        assert!(r.eigenvalues.iter().all(|v| v.abs() < 1e-10), "{:?}", r.eigenvalues);
    }

    #[test]
    fn transform_reproduces_training_projection() {
        let x = array![[0.0, 1.0], [1.0, 0.5], [2.0, -1.0], [0.3, 0.3], [1.5, 2.0], [-1.0, 0.0]];
        let y = array![0.1, 0.5, 2.0, 0.2, 3.0, -1.0];
        let kernel = KernelConfig::default();
        let r = batch_ksir(x.view(), y.view(), 3, 1, &kernel, Some(0.05), None).unwrap();
        let (kc, _, _) = center_gram(&kernel.gram(x.view(), x.view()).unwrap());
        let direct = kc.dot(&r.coeffs);
        let via = batch_transform(&r, x.view(), x.view()).unwrap();
        assert!(linalg::max_abs_diff(&direct, &via) < 1e-12);
    }

    #[test]
    fn zero_coefficients_give_zero() {
        let x = array![[0.0], [1.0]];
        let r = BatchKsirResult {
            coeffs: Array2::zeros((2, 1)),
            eigenvalues: array![0.0],
            ridge: 0.0,
            kernel: KernelConfig::default(),
            cutpoints: vec![],
            gram_col_means: array![0.0, 0.0],
            gram_mean: 0.0,
        };
        assert_eq!(batch_transform(&r, x.view(), array![[0.4]].view()).unwrap(), array![[0.0]]);
    }

    #[test]
    fn subsample_is_seeded_sorted_and_distinct() {
        let a = subsample_indices(5000, 1000, 7);
        assert_eq!(a, subsample_indices(5000, 1000, 7));
        assert_eq!(a.len(), 1000);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(subsample_indices(10, 1000, 7), (0..10).collect::<Vec<_>>());
    }
}
