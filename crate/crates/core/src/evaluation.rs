//! Quality metrics for estimated summary statistics.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{OksirError, Result};

/// Bandwidth multipliers applied to each column's standard deviation.
pub const DEFAULT_BANDWIDTH_GRID: [f64; 6] = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0];
pub const DEFAULT_FOLDS: usize = 5;

/// `|Pearson correlation|` of two equally long vectors.
pub fn abs_correlation(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(OksirError::input(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(OksirError::input("correlation needs at least two observations"));
    }
    let ma = a.mean().expect("non-empty");
    let mb = b.mean().expect("non-empty");
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(OksirError::UndefinedMetric("correlation with a constant vector".into()));
    }
    if !(saa.is_finite() && sbb.is_finite() && sab.is_finite()) {
        return Err(OksirError::UndefinedMetric("non-finite values in correlation".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).abs().min(1.0))
}

/// Greedily pairs estimated columns with true columns by largest absolute correlation
/// and returns the matched correlation for each true column, in true-column order.
pub fn direction_match(estimated: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<Vec<f64>> {
    let (k, d) = (estimated.ncols(), truth.ncols());
    if k < d {
        return Err(OksirError::input(format!("{k} estimated columns cannot cover {d} true ones")));
    }
    let mut cor = Array2::zeros((k, d));
    for i in 0..k {
        for j in 0..d {
            cor[[i, j]] = abs_correlation(estimated.column(i), truth.column(j))?;
        }
    }
    let mut out = vec![f64::NAN; d];
    let mut used_est = vec![false; k];
    let mut used_true = vec![false; d];
    for _ in 0..d {
        let mut best = (-1.0, 0, 0);
        for i in (0..k).filter(|&i| !used_est[i]) {
            for j in (0..d).filter(|&j| !used_true[j]) {
                if cor[[i, j]] > best.0 {
                    best = (cor[[i, j]], i, j);
                }
            }
        }
        let (c, i, j) = best;
        used_est[i] = true;
        used_true[j] = true;
        out[j] = c;
    }
    Ok(out)
}

/// Nadaraya–Watson prediction at `query` from `(train, y)` with a Gaussian product
/// kernel of per-column widths `h`. Weights are formed in log space so distant queries
/// fall back to the nearest training points instead of dividing by zero.
fn nw_predict(train: ArrayView2<f64>, y: ArrayView1<f64>, query: ArrayView1<f64>, h: &[f64], skip: Option<usize>) -> f64 {
    let mut logw = Vec::with_capacity(train.nrows());
    let mut max = f64::NEG_INFINITY;
    for (i, row) in train.rows().into_iter().enumerate() {
        if skip == Some(i) {
            logw.push(f64::NEG_INFINITY);
            continue;
        }
        let mut s = 0.0;
        for ((a, b), w) in row.iter().zip(query).zip(h) {
            let u = (a - b) / w;
            s += u * u;
        }
        let l = -0.5 * s;
        max = max.max(l);
        logw.push(l);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (l, yi) in logw.iter().zip(y) {
        let w = (l - max).exp();
        num += w * yi;
        den += w;
    }
    num / den
}

fn column_sd(x: ArrayView2<f64>) -> Vec<f64> {
    x.axis_iter(Axis(1))
        .map(|c| {
            let sd = c.std(1.0);
            if sd > 0.0 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        })
        .collect()
}

/// Grid multiplier with the smallest leave-one-out squared error on `(x, y)`.
fn select_bandwidth(x: ArrayView2<f64>, y: ArrayView1<f64>, grid: &[f64]) -> Vec<f64> {
    let sd = column_sd(x);
    let mut best = (f64::INFINITY, grid[0]);
    for &g in grid {
        let h: Vec<f64> = sd.iter().map(|s| g * s).collect();
        let sse: f64 = (0..x.nrows())
            .map(|i| {
                let e = y[i] - nw_predict(x, y, x.row(i), &h, Some(i));
                e * e
            })
            .sum();
        if sse < best.0 {
            best = (sse, g);
        }
    }
    sd.iter().map(|s| best.1 * s).collect()
}

/// Seeded assignment of `n` items to `folds` groups of near-equal size.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (rank, &i) in idx.iter().enumerate() {
        fold[i] = rank % folds;
    }
    fold
}

/// K-fold cross-validated Nadaraya–Watson regression of `y` on the columns of `v`.
///
/// Within each training split the bandwidth multiplier (times the column standard
/// deviations) is picked from `grid` by leave-one-out. The error of a fold is
/// `Σ(y - ŷ)² / Σ(y - ȳ)²` over its held-out points; the mean over folds is returned.
pub fn kernel_regression_cv(v: ArrayView2<f64>, y: ArrayView1<f64>, folds: usize, grid: &[f64], seed: u64) -> Result<f64> {
    let n = y.len();
    if v.nrows() != n {
        return Err(OksirError::input(format!("{} rows of statistics for {n} responses", v.nrows())));
    }
    if folds < 2 {
        return Err(OksirError::input("need at least two folds"));
    }
    if grid.is_empty() || grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(OksirError::input("bandwidth grid must be nonempty and positive"));
    }
    if n < 2 * folds {
        return Err(OksirError::input(format!("{n} samples leave some of {folds} folds (or their complements) too small")));
    }
    if v.iter().chain(y.iter()).any(|x| !x.is_finite()) {
        return Err(OksirError::input("non-finite values in regression inputs"));
    }
    let assignment = fold_assignment(n, folds, seed);
    let errors: Vec<Result<f64>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
            let xt = v.select(Axis(0), &train);
            let yt = y.select(Axis(0), &train);
            let h = select_bandwidth(xt.view(), yt.view(), grid);
            let y_test: Array1<f64> = y.select(Axis(0), &test);
            let mean = y_test.mean().expect("non-empty fold");
            let (mut sse, mut sst) = (0.0, 0.0);
            for (k, &i) in test.iter().enumerate() {
                let pred = nw_predict(xt.view(), yt.view(), v.row(i), &h, None);
                sse += (y_test[k] - pred).powi(2);
                sst += (y_test[k] - mean).powi(2);
            }
            if sst == 0.0 {
                return Err(OksirError::UndefinedMetric(format!("response is constant in fold {f}")));
            }
            Ok(sse / sst)
        })
        .collect();
    let errors = errors.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(errors.iter().sum::<f64>() / folds as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn correlation_identities() {
        let a = array![1.0, 2.0, 4.0, 3.0];
        assert!((abs_correlation(a.view(), a.view()).unwrap() - 1.0).abs() < 1e-15);
        let neg = -&a;
        assert!((abs_correlation(a.view(), neg.view()).unwrap() - 1.0).abs() < 1e-15);
        let c = array![2.0, 2.0, 2.0, 2.0];
        assert!(matches!(abs_correlation(a.view(), c.view()), Err(OksirError::UndefinedMetric(_))));
        assert!(abs_correlation(array![1.0].view(), array![2.0].view()).is_err());
    }

    #[test]
    fn correlation_matches_textbook_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 37;
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..5.0)).collect();
        // r = (nΣab - ΣaΣb) / sqrt((nΣa² - (Σa)²)(nΣb² - (Σb)²))
        let nf = n as f64;
        let sa: f64 = a.iter().sum();
        let sb: f64 = b.iter().sum();
        let sab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let saa: f64 = a.iter().map(|x| x * x).sum();
        let sbb: f64 = b.iter().map(|x| x * x).sum();
        let r = (nf * sab - sa * sb) / ((nf * saa - sa * sa) * (nf * sbb - sb * sb)).sqrt();
        let got = abs_correlation(Array1::from(a).view(), Array1::from(b).view()).unwrap();
        assert!((got - r.abs()).abs() < 1e-12);
    }

    #[test]
    fn match_resolves_permutation_and_sign() {
        let v = array![[1.0, 0.0], [2.0, 1.0], [0.0, 3.0], [5.0, -1.0], [1.5, 2.5]];
        let swapped = array![[0.0, 1.0], [1.0, 2.0], [3.0, 0.0], [-1.0, 5.0], [2.5, 1.5]];
        for m in direction_match(swapped.view(), v.view()).unwrap() {
            assert!((m - 1.0).abs() < 1e-12);
        }
        let neg = -&v;
        for m in direction_match(neg.view(), v.view()).unwrap() {
            assert!((m - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_matches_brute_force_for_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let n = 50;
            let v = Array2::from_shape_fn((n, 2), |_| rng.sample::<f64, _>(StandardNormal));
            let mix = Array2::from_shape_fn((2, 2), |_| rng.random_range(-1.0..1.0));
            let noise = Array2::from_shape_fn((n, 2), |_| 0.3 * rng.sample::<f64, _>(StandardNormal));
            let est = v.dot(&mix) + noise;
            let c = |i: usize, j: usize| abs_correlation(est.column(i), v.column(j)).unwrap();
            // The greedy rule picks the single largest pair first; the other pair is forced.
            let options = [(c(0, 0), c(1, 1)), (c(1, 0), c(0, 1))];
            let pick = if options[0].0.max(options[0].1) >= options[1].0.max(options[1].1) {
                options[0]
            } else {
                options[1]
            };
            let got = direction_match(est.view(), v.view()).unwrap();
            assert_eq!(got, vec![pick.0, pick.1]);
        }
    }

    #[test]
    fn folds_are_balanced_and_seeded() {
        let a = fold_assignment(23, 5, 1);
        assert_eq!(a, fold_assignment(23, 5, 1));
        for f in 0..5 {
            let c = a.iter().filter(|&&x| x == f).count();
            assert!(c == 4 || c == 5);
        }
    }

    #[test]
    fn cv_interpolation_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 300;
        let v = Array2::from_shape_fn((n, 1), |_| rng.random_range(-2.0..2.0));
        let y = v.column(0).to_owned();
        let err = kernel_regression_cv(v.view(), y.view(), 5, &[0.001, 0.1, 1.0], 0).unwrap();
        assert!(err <= 0.05, "{err}");
    }

    #[test]
    fn cv_rejects_bad_input() {
        let v = Array2::zeros((6, 1));
        let y = Array1::zeros(6);
        assert!(kernel_regression_cv(v.view(), y.view(), 5, &DEFAULT_BANDWIDTH_GRID, 0).is_err());
        assert!(kernel_regression_cv(v.view(), y.view(), 1, &DEFAULT_BANDWIDTH_GRID, 0).is_err());
        assert!(kernel_regression_cv(v.view(), y.view(), 2, &[], 0).is_err());
    }
}
