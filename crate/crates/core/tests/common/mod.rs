//! Shared helpers for the integration suites: seeded streams and a recorder that keeps
//! the per-sample coefficient rows the model itself discards.

#![allow(dead_code)]

use ndarray::{s, Array1, Array2};
use oksir::{OksirModel, StepReport};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// `n × p` standard normal inputs with a smooth response plus noise.
pub fn gaussian_stream(n: usize, p: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Array2<f64> = Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut rng));
    let y = x
        .rows()
        .into_iter()
        .map(|r| {
            let e: f64 = StandardNormal.sample(&mut rng);
            r[0].sin() + 0.5 * r[p - 1] * r[p - 1] + 0.2 * e
        })
        .collect();
    (x, y)
}

/// Everything each executed step reported, in execution order.
#[derive(Debug, Default)]
pub struct Trace {
    pub reports: Vec<StepReport>,
}

impl Trace {
    pub fn record(&mut self, reports: Vec<StepReport>) {
        self.reports.extend(reports);
    }

    /// Coefficient rows zero-padded to `m` columns, one row per step.
    pub fn rows(&self, m: usize) -> Array2<f64> {
        let mut a = Array2::zeros((self.reports.len(), m));
        for (i, r) in self.reports.iter().enumerate() {
            a.slice_mut(s![i, ..r.a_t.len()]).assign(&r.a_t);
        }
        a
    }

    pub fn slices(&self) -> Vec<usize> {
        self.reports.iter().map(|r| r.slice).collect()
    }

    pub fn grows(&self) -> usize {
        self.reports.iter().filter(|r| r.grew).count()
    }
}

/// Streams every row through `model`, flushes a pending warm-up and returns the trace.
pub fn fit_recorded(model: &mut OksirModel, x: &Array2<f64>, y: &Array1<f64>) -> Trace {
    let mut trace = Trace::default();
    for (row, &yy) in x.rows().into_iter().zip(y) {
        trace.record(model.partial_fit(row.as_slice().unwrap(), yy).unwrap());
    }
    trace.record(model.flush_warmup().unwrap());
    trace
}

/// Dense `AᵀΔ_h` (slice sums), `AᵀΔ_hΔ_hᵀA` and counts from recorded rows.
pub fn dense_slice_stats(a: &Array2<f64>, labels: &[usize], h_count: usize) -> (Vec<u64>, Vec<Array1<f64>>, Vec<Array2<f64>>) {
    let m = a.ncols();
    let mut counts = vec![0u64; h_count];
    let mut vecs = vec![Array1::zeros(m); h_count];
    let mut mats = Vec::with_capacity(h_count);
    for h in 0..h_count {
        let delta: Array1<f64> = labels.iter().map(|&l| if l == h { 1.0 } else { 0.0 }).collect();
        counts[h] = labels.iter().filter(|&&l| l == h).count() as u64;
        let at_delta = a.t().dot(&delta);
        vecs[h] = at_delta.clone();
        let col = at_delta.insert_axis(ndarray::Axis(1));
        mats.push(col.dot(&col.t()));
    }
    (counts, vecs, mats)
}

/// Explicit slice-averaging matrix `J` with `J_ij = 1/n_h` when `i, j` share slice `h`.
pub fn slice_matrix(labels: &[usize]) -> Array2<f64> {
    let n = labels.len();
    let mut j = Array2::zeros((n, n));
    for a in 0..n {
        let nh = labels.iter().filter(|&&l| l == labels[a]).count() as f64;
        for b in 0..n {
            if labels[a] == labels[b] {
                j[[a, b]] = 1.0 / nh;
            }
        }
    }
    j
}

pub fn max_abs_diff1(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
