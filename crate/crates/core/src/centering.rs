//! Feature-space centering tracked in the dictionary subspace.
//!
//! The running mean of the expansion coefficients `ā_t = (1/t) Σ a_i` stands in for the
//! feature-space mean, giving
//! `K̃ᶜ = K̃ - 1 āᵀK̃ - K̃ā 1ᵀ + (āᵀK̃ā) 11ᵀ` and
//! `k̃ᶜ(x) = k̃(x) - (āᵀk̃(x)) 1 - K̃ā + (āᵀK̃ā) 1`.

use ndarray::{Array1, Array2};

use crate::error::{check_dims, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CenteringState {
    a_bar: Array1<f64>,
    enabled: bool,
    /// Number of coefficient rows averaged into `a_bar`.
    count: u64,
}

impl CenteringState {
    pub fn new(enabled: bool) -> Self {
        CenteringState {
            a_bar: Array1::zeros(0),
            enabled,
            count: 0,
        }
    }

    pub fn from_parts(a_bar: Array1<f64>, enabled: bool, count: u64) -> Self {
        CenteringState { a_bar, enabled, count }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn a_bar(&self) -> &Array1<f64> {
        &self.a_bar
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Folds `a_t` into the running mean. When the dictionary just grew, `ā` is first
    /// zero-padded: the new atom carried no weight in earlier expansions.
    pub fn update_mean(&mut self, a_t: &Array1<f64>, grew: bool) -> Result<()> {
        if grew {
            let m = self.a_bar.len();
            let mut padded = Array1::zeros(m + 1);
            padded.slice_mut(ndarray::s![..m]).assign(&self.a_bar);
            self.a_bar = padded;
        }
        check_dims("mean update coefficients", self.a_bar.len(), a_t.len())?;
        self.count += 1;
        let t = self.count as f64;
        self.a_bar.zip_mut_with(a_t, |mean, &a| *mean = ((t - 1.0) * *mean + a) / t);
        Ok(())
    }
}

/// Centered reduced Gram matrix.
pub fn center_matrix(k_tilde: &Array2<f64>, a_bar: &Array1<f64>) -> Result<Array2<f64>> {
    let m = k_tilde.nrows();
    check_dims("centering mean", m, a_bar.len())?;
    let k_a = k_tilde.dot(a_bar);
    let c = a_bar.dot(&k_a);
    Ok(Array2::from_shape_fn((m, m), |(i, j)| {
        k_tilde[[i, j]] - k_a[j] - k_a[i] + c
    }))
}

/// Centered kernel vector.
pub fn center_vector(k_vec: &Array1<f64>, k_tilde: &Array2<f64>, a_bar: &Array1<f64>) -> Result<Array1<f64>> {
    let m = k_tilde.nrows();
    check_dims("centering mean", m, a_bar.len())?;
    check_dims("kernel vector", m, k_vec.len())?;
    let k_a = k_tilde.dot(a_bar);
    Ok(centered_with(k_vec, &k_a, a_bar.dot(&k_a), a_bar))
}

/// `center_vector` with `K̃ā` and `āᵀK̃ā` precomputed, for batched transforms.
pub(crate) fn centered_with(k_vec: &Array1<f64>, k_a: &Array1<f64>, c: f64, a_bar: &Array1<f64>) -> Array1<f64> {
    let proj = a_bar.dot(k_vec);
    Array1::from_shape_fn(k_vec.len(), |i| k_vec[i] - proj - k_a[i] + c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, m: usize) -> Array2<f64> {
        let b = Array2::from_shape_fn((m, m), |_| rng.random_range(-1.0..1.0));
        b.dot(&b.t()) + Array2::<f64>::eye(m)
    }

    #[test]
    fn running_mean_small_cases() {
        let mut cs = CenteringState::new(true);
        cs.update_mean(&array![1.0], true).unwrap();
        assert_eq!(cs.a_bar(), &array![1.0]);
        cs.update_mean(&array![0.0], false).unwrap();
        assert_eq!(cs.a_bar(), &array![0.5]);
        cs.update_mean(&array![0.0, 1.0], true).unwrap();
        assert!(max_abs_diff(
            &cs.a_bar().clone().insert_axis(ndarray::Axis(0)),
            &array![[1.0 / 3.0, 1.0 / 3.0]]
        ) < 1e-15);
    }

    #[test]
    fn mean_dimension_mismatch() {
        let mut cs = CenteringState::new(true);
        cs.update_mean(&array![1.0], true).unwrap();
        assert!(cs.update_mean(&array![1.0, 2.0], false).is_err());
    }

    #[test]
    fn running_mean_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut cs = CenteringState::new(true);
        let mut rows: Vec<Array1<f64>> = Vec::new();
        let mut m = 0;
        for t in 0..100 {
            let grew = t == 0 || rng.random_bool(0.1);
            if grew {
                m += 1;
            }
            let a: Array1<f64> = if grew {
                let mut v = Array1::zeros(m);
                v[m - 1] = 1.0;
                v
            } else {
                (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()
            };
            cs.update_mean(&a, grew).unwrap();
            rows.push(a);
        }
        let mut mean = Array1::<f64>::zeros(m);
        for r in &rows {
            for (i, v) in r.iter().enumerate() {
                mean[i] += v;
            }
        }
        mean /= rows.len() as f64;
        for i in 0..m {
            assert!((mean[i] - cs.a_bar()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_mean_is_identity() {
        let k = array![[2.0, 0.5], [0.5, 3.0]];
        assert_eq!(center_matrix(&k, &array![0.0, 0.0]).unwrap(), k);
        let v = array![0.3, -0.1];
        assert_eq!(center_vector(&v, &k, &array![0.0, 0.0]).unwrap(), v);
    }

    #[test]
    fn single_atom_centers_to_zero() {
        let k = array![[3.7]];
        assert_eq!(center_matrix(&k, &array![1.0]).unwrap(), array![[0.0]]);
        assert_eq!(center_vector(&array![3.7], &k, &array![1.0]).unwrap(), array![0.0]);
    }

    #[test]
    fn matches_offline_centering_with_identity_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 4;
        let k = random_spd(&mut rng, n);
        // A = I → ā = (1/n) 1 and the online formula must equal the offline one.
        let a_bar = Array1::from_elem(n, 1.0 / n as f64);
        let ones = Array2::from_elem((n, n), 1.0 / n as f64);
        let offline = &k - &ones.dot(&k) - &k.dot(&ones) + &ones.dot(&k).dot(&ones);
        let online = center_matrix(&k, &a_bar).unwrap();
        assert!(max_abs_diff(&online, &offline) < 1e-12);

        let kx: Array1<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let ones_v = Array1::from_elem(n, 1.0);
        let off_v = &kx - &(&ones_v * (kx.sum() / n as f64)) - &(k.dot(&ones_v) / n as f64)
            + &(&ones_v * (k.sum() / (n * n) as f64));
        let on_v = center_vector(&kx, &k, &a_bar).unwrap();
        for i in 0..n {
            assert!((off_v[i] - on_v[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn centered_matrix_symmetric_and_annihilates_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let m = rng.random_range(1..7);
            let k = random_spd(&mut rng, m);
            let a_bar: Array1<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = center_matrix(&k, &a_bar).unwrap();
            assert!(max_abs_diff(&c, &c.t().to_owned()) < 1e-12);
            let scale = crate::linalg::max_abs(&k).max(1.0);
            // āᵀ K̃ᶜ ā vanishes only when Σā = 1; check the general identity instead:
            // āᵀK̃ᶜā = (1 - s)² āᵀK̃ā with s = Σ ā_j.
            let s: f64 = a_bar.sum();
            let lhs = a_bar.dot(&c.dot(&a_bar));
            let rhs = (1.0 - s).powi(2) * a_bar.dot(&k.dot(&a_bar));
            assert!((lhs - rhs).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn mean_of_unit_mass_is_annihilated() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = 5;
        let k = random_spd(&mut rng, m);
        let raw: Array1<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
        let a_bar = &raw / raw.sum();
        let c = center_matrix(&k, &a_bar).unwrap();
        assert!(a_bar.dot(&c.dot(&a_bar)).abs() < 1e-10);
    }

    #[test]
    fn vector_formula_termwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = 4;
        let k = random_spd(&mut rng, m);
        let a_bar: Array1<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let kx: Array1<f64> = (0..m).map(|_| rng.random_range(0.0..2.0)).collect();
        let got = center_vector(&kx, &k, &a_bar).unwrap();
        for i in 0..m {
            let mut abar_kx = 0.0;
            let mut k_abar_i = 0.0;
            let mut quad = 0.0;
            for j in 0..m {
                abar_kx += a_bar[j] * kx[j];
                k_abar_i += k[[i, j]] * a_bar[j];
                for l in 0..m {
                    quad += a_bar[j] * k[[j, l]] * a_bar[l];
                }
            }
            let expected = kx[i] - abar_kx - k_abar_i + quad;
            assert!((got[i] - expected).abs() < 1e-12);
        }
    }
}
