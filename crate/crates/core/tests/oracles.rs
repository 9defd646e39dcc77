//! Generators, metrics and the dense batch solver against independent computations.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{array, Array1, Array2};
use oksir::batch::{batch_ksir, batch_transform, between_slice, center_gram};
use oksir::evaluation::{direction_match, kernel_regression_cv, DEFAULT_BANDWIDTH_GRID};
use oksir::kernel::KernelConfig;
use oksir::simgen::{generate, generate_split, SimConfig, SimModel};
use oksir::slicing::SliceConfig;
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn moments(ys: impl Iterator<Item = f64>) -> [f64; 3] {
    let (mut n, mut m2, mut m4, mut abs) = (0.0, 0.0, 0.0, 0.0);
    for y in ys {
        n += 1.0;
        m2 += y * y;
        m4 += y.powi(4);
        abs += y.abs();
    }
    [m2 / n, m4 / n, abs / n]
}

#[test]
fn sine_product_moments_match_independent_simulation() {
    let n = 50_000;
    let data = generate(SimConfig::new(SimModel::SineProduct, 5, n, 1)).unwrap();
    let ours = moments(data.y.iter().copied());

    // E[sin²Z] = (1 - e⁻²)/2 for Z ~ N(0, 1) and E[sin Z] = 0.
    let s2 = (1.0 - (-2.0f64).exp()) / 2.0;
    let second = 2.0 * s2 * (1.0 + s2) + 0.01;
    assert!((ours[0] / second - 1.0).abs() <= 0.02, "E[y²] {} vs {second}", ours[0]);

    let mut rng = StdRng::seed_from_u64(2024);
    let z = Normal::new(0.0, 1.0).unwrap();
    let scripted = moments((0..n).map(|_| {
        let (a, b, c, e): (f64, f64, f64, f64) = (z.sample(&mut rng), z.sample(&mut rng), z.sample(&mut rng), z.sample(&mut rng));
        (a.sin() + b.sin()) * (1.0 + c.sin()) + 0.1 * e
    }));
    for (k, (o, s)) in ours.iter().zip(&scripted).enumerate() {
        assert!((o / s - 1.0).abs() <= 0.02, "moment {k}: {o} vs {s}");
    }
}

#[test]
fn cv_error_of_noise_statistics_is_near_one() {
    let mut rng = StdRng::seed_from_u64(5);
    let z = Normal::new(0.0, 1.0).unwrap();
    let n = 500;
    let v = Array2::from_shape_fn((n, 2), |_| z.sample(&mut rng));
    let y = Array1::from_shape_fn(n, |_| z.sample(&mut rng));
    let err = kernel_regression_cv(v.view(), y.view(), 5, &DEFAULT_BANDWIDTH_GRID, 1).unwrap();
    assert!((err - 1.0).abs() <= 0.15, "null error {err}");
}

#[test]
fn cv_is_deterministic_given_the_fold_seed() {
    let data = generate(SimConfig::new(SimModel::SineProduct, 5, 300, 3)).unwrap();
    let a = kernel_regression_cv(data.v.view(), data.y.view(), 5, &DEFAULT_BANDWIDTH_GRID, 9).unwrap();
    let b = kernel_regression_cv(data.v.view(), data.y.view(), 5, &DEFAULT_BANDWIDTH_GRID, 9).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    assert!(a < 0.1, "true statistics should predict y well, got {a}");
}

fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn batch_pairs_satisfy_the_regularized_eigen_equation() {
    let data = generate(SimConfig::new(SimModel::SineProduct, 5, 300, 4)).unwrap();
    let kernel = KernelConfig::default();
    let res = batch_ksir(data.x.view(), data.y.view(), 5, 2, &kernel, None, None).unwrap();
    let (kc, _, _) = center_gram(&kernel.gram(data.x.view(), data.x.view()).unwrap());
    let slices = SliceConfig::new(res.cutpoints.clone()).unwrap();
    let labels: Vec<usize> = data.y.iter().map(|&v| slices.slice_index(v)).collect();
    let lhs = between_slice(&kc, &labels, slices.num_slices());
    let n = kc.nrows();
    let rhs = kc.dot(&kc) + &kc * res.ridge + Array2::<f64>::eye(n) * res.ridge.powi(2);
    for j in 0..2 {
        let c = res.coeffs.column(j).to_owned().insert_axis(ndarray::Axis(1));
        let left = lhs.dot(&c);
        let resid = &left - &(rhs.dot(&c) * res.eigenvalues[j]);
        assert!(frobenius(&resid) <= 1e-6 * frobenius(&left), "pair {j}");
    }
    assert!(res.eigenvalues[0] >= res.eigenvalues[1]);
}

#[test]
fn three_point_problem_matches_whitened_solve() {
    let x = array![[0.0], [0.7], [2.0]];
    let y = array![0.0, 0.1, 1.0];
    let kernel = KernelConfig::default();
    let ridge = 0.05;
    let cut = SliceConfig::new(vec![0.5]).unwrap();
    let res = batch_ksir(x.view(), y.view(), 2, 1, &kernel, Some(ridge), Some(&cut)).unwrap();

    // Hand assembly: two slices {0, 1} and {2}; whiten the right-hand side by Cholesky.
    let k = Array2::from_shape_fn((3, 3), |(i, j)| (-(x[[i, 0]] - x[[j, 0]]).powi(2) / 8.0).exp());
    let one = Array2::from_elem((3, 3), 1.0 / 3.0);
    let h = Array2::<f64>::eye(3) - &one;
    let kc = h.dot(&k).dot(&h);
    let j = array![[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]];
    let lhs = kc.dot(&j).dot(&kc);
    let rhs = kc.dot(&kc) + &kc * ridge + Array2::<f64>::eye(3) * ridge * ridge;
    let to_na = |a: &Array2<f64>| DMatrix::from_fn(3, 3, |r, c| a[[r, c]]);
    let l = to_na(&rhs).cholesky().unwrap().l();
    let l_inv = l.clone().try_inverse().unwrap();
    let whitened = &l_inv * to_na(&lhs) * l_inv.transpose();
    let eig = SymmetricEigen::new(whitened);
    let top = eig.eigenvalues.imax();
    let c = l_inv.transpose() * eig.eigenvectors.column(top);

    assert!((res.eigenvalues[0] - eig.eigenvalues[top]).abs() <= 1e-10);
    let ours = res.coeffs.column(0);
    let dot: f64 = (0..3).map(|i| ours[i] * c[i]).sum();
    let cos = dot.abs() / (ours.dot(&ours).sqrt() * c.norm());
    assert!(cos >= 1.0 - 1e-10, "cos {cos}");
}

/// Uses the default ridge.
#[test]
fn batch_recovers_linear_model_directions() {
    let (train, test) = generate_split(SimConfig::new(SimModel::LinearRatio, 100, 1000, 1), 1000).unwrap();
    let kernel = KernelConfig::default();
    let res = batch_ksir(train.x.view(), train.y.view(), 10, 2, &kernel, None, None).unwrap();
    let est = batch_transform(&res, train.x.view(), test.x.view()).unwrap();
    let cors = direction_match(est.view(), test.v.view()).unwrap();
    assert!(cors[0] >= 0.66, "batch cor1 {:.3}", cors[0]);
}
