//! Response slicing and the recursive per-slice statistics.
//!
//! For slice `h` the state keeps `n_h` (sample count), `m_h = Aᵀ Δ_h` and
//! `M_h = Aᵀ Δ_h Δ_hᵀ A`, where `Δ_h` is the 0/1 membership indicator over all samples
//! seen so far. `Δ_h` itself is never stored. Together they give
//! `Q = Aᵀ J A = Σ_h M_h / n_h`.

use ndarray::{Array1, Array2};

use crate::error::{check_dims, OksirError, Result};

pub const DEFAULT_SLICES: usize = 10;

/// Number of warm-up samples buffered before cut-points are frozen.
pub fn warmup_len(num_slices: usize) -> usize {
    (10 * num_slices).max(100)
}

/// Cut-points `q_1 < … < q_{H-1}`; slice `h` (0-based) is `(q_h, q_{h+1}]` with
/// `q_0 = -∞` and `q_H = +∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceConfig {
    cutpoints: Vec<f64>,
}

impl SliceConfig {
    pub fn new(cutpoints: Vec<f64>) -> Result<Self> {
        if cutpoints.iter().any(|c| !c.is_finite()) {
            return Err(OksirError::input("cut-points must be finite"));
        }
        if cutpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(OksirError::input("cut-points must be strictly increasing"));
        }
        Ok(SliceConfig { cutpoints })
    }

    /// Cut-points at the empirical `h/H` quantiles of `ys` (linear interpolation between
    /// order statistics). When `ys` takes at most `H` distinct values, as for class
    /// labels, the cut-points are the midpoints between consecutive values instead, giving
    /// one slice per class. Duplicate quantiles are merged, so fewer than `H` slices can
    /// result.
    pub fn from_quantiles(ys: &[f64], num_slices: usize) -> Result<Self> {
        if num_slices < 2 {
            return Err(OksirError::input("need at least two slices"));
        }
        if ys.is_empty() {
            return Err(OksirError::input("cannot place cut-points without responses"));
        }
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(OksirError::input("responses must be finite"));
        }
        let mut sorted = ys.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        let mut cuts = if distinct.len() <= num_slices {
            distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect::<Vec<_>>()
        } else {
            (1..num_slices)
                .map(|h| quantile_sorted(&sorted, h as f64 / num_slices as f64))
                .collect()
        };
        cuts.dedup();
        SliceConfig::new(cuts)
    }

    pub fn cutpoints(&self) -> &[f64] {
        &self.cutpoints
    }

    pub fn num_slices(&self) -> usize {
        self.cutpoints.len() + 1
    }

    /// 0-based slice of `y`: the unique `h` with `q_h < y ≤ q_{h+1}`.
    pub fn slice_index(&self, y: f64) -> usize {
        self.cutpoints.partition_point(|&q| q < y)
    }
}

fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let pos = prob * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceState {
    counts: Vec<u64>,
    m_vecs: Vec<Array1<f64>>,
    m_mats: Vec<Array2<f64>>,
}

/// Copy of one slice's statistics, used to roll back a rejected step.
#[derive(Debug, Clone)]
pub(crate) struct SliceSnapshot {
    h: usize,
    count: u64,
    m_vec: Array1<f64>,
    m_mat: Array2<f64>,
}

impl SliceState {
    /// State after the first sample: `m = 1`, with the sample in slice `h`.
    pub fn first(num_slices: usize, h: usize) -> Result<Self> {
        if h >= num_slices {
            return Err(OksirError::input(format!("slice {h} out of range")));
        }
        let mut state = SliceState {
            counts: vec![0; num_slices],
            m_vecs: vec![Array1::zeros(1); num_slices],
            m_mats: vec![Array2::zeros((1, 1)); num_slices],
        };
        state.counts[h] = 1;
        state.m_vecs[h][0] = 1.0;
        state.m_mats[h][[0, 0]] = 1.0;
        Ok(state)
    }

    /// Empty state over `dim` dictionary coordinates.
    pub fn empty(num_slices: usize, dim: usize) -> Self {
        SliceState {
            counts: vec![0; num_slices],
            m_vecs: vec![Array1::zeros(dim); num_slices],
            m_mats: vec![Array2::zeros((dim, dim)); num_slices],
        }
    }

    pub fn from_parts(counts: Vec<u64>, m_vecs: Vec<Array1<f64>>, m_mats: Vec<Array2<f64>>) -> Result<Self> {
        let h = counts.len();
        if h < 1 || m_vecs.len() != h || m_mats.len() != h {
            return Err(OksirError::Format("slice arrays disagree in length".into()));
        }
        let m = m_vecs[0].len();
        if m_vecs.iter().any(|v| v.len() != m) || m_mats.iter().any(|a| a.dim() != (m, m)) {
            return Err(OksirError::Format("slice statistics disagree in dimension".into()));
        }
        Ok(SliceState { counts, m_vecs, m_mats })
    }

    pub fn num_slices(&self) -> usize {
        self.counts.len()
    }

    pub fn dim(&self) -> usize {
        self.m_vecs[0].len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn m_vecs(&self) -> &[Array1<f64>] {
        &self.m_vecs
    }

    pub fn m_mats(&self) -> &[Array2<f64>] {
        &self.m_mats
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Dictionary unchanged: slice `h` absorbs coefficients `a`,
    /// `M_h += a m_hᵀ + m_h aᵀ + a aᵀ`, `m_h += a`, `n_h += 1`.
    pub fn update_case1(&mut self, h: usize, a: &Array1<f64>) -> Result<()> {
        self.check_slice(h)?;
        check_dims("slice update coefficients", self.dim(), a.len())?;
        let m_prev = &self.m_vecs[h];
        let mat = &mut self.m_mats[h];
        let n = a.len();
        for i in 0..n {
            let (ai, mi) = (a[i], m_prev[i]);
            let mut row = mat.row_mut(i);
            for j in 0..n {
                row[j] += ai * m_prev[j] + mi * a[j] + ai * a[j];
            }
        }
        self.m_vecs[h] += a;
        self.counts[h] += 1;
        Ok(())
    }

    /// Dictionary grew by one atom and the sample is that atom (`a = e_m`): every slice is
    /// bordered, slice `g` with its own indicator `δ_g`:
    /// `M_g ← [[M_g, δ_g m_g], [δ_g m_gᵀ, δ_g]]`, `m_g ← [m_g; δ_g]`.
    pub fn update_case2(&mut self, h: usize) -> Result<()> {
        self.check_slice(h)?;
        let m = self.dim();
        for g in 0..self.num_slices() {
            let delta = if g == h { 1.0 } else { 0.0 };
            let mut mat = Array2::zeros((m + 1, m + 1));
            mat.slice_mut(ndarray::s![..m, ..m]).assign(&self.m_mats[g]);
            if delta != 0.0 {
                for i in 0..m {
                    let v = self.m_vecs[g][i] * delta;
                    mat[[i, m]] = v;
                    mat[[m, i]] = v;
                }
                mat[[m, m]] = delta;
            }
            self.m_mats[g] = mat;
            let mut vec = Array1::zeros(m + 1);
            vec.slice_mut(ndarray::s![..m]).assign(&self.m_vecs[g]);
            vec[m] = delta;
            self.m_vecs[g] = vec;
        }
        self.counts[h] += 1;
        Ok(())
    }

    /// `Q = Σ_{h: n_h > 0} M_h / n_h`. Empty slices are skipped.
    pub fn compute_q(&self) -> Result<Array2<f64>> {
        let m = self.dim();
        let mut q = Array2::zeros((m, m));
        let mut any = false;
        for (count, mat) in self.counts.iter().zip(&self.m_mats) {
            if *count > 0 {
                q.scaled_add(1.0 / *count as f64, mat);
                any = true;
            }
        }
        if !any {
            return Err(OksirError::state("all slices are empty"));
        }
        Ok(q)
    }

    pub(crate) fn snapshot(&self, h: usize) -> SliceSnapshot {
        SliceSnapshot {
            h,
            count: self.counts[h],
            m_vec: self.m_vecs[h].clone(),
            m_mat: self.m_mats[h].clone(),
        }
    }

    pub(crate) fn restore(&mut self, snap: SliceSnapshot) {
        self.counts[snap.h] = snap.count;
        self.m_vecs[snap.h] = snap.m_vec;
        self.m_mats[snap.h] = snap.m_mat;
    }

    fn check_slice(&self, h: usize) -> Result<()> {
        if h >= self.num_slices() {
            return Err(OksirError::input(format!(
                "slice {h} out of range for {} slices",
                self.num_slices()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn slice_index_right_closed() {
        let one = SliceConfig::new(vec![0.0]).unwrap();
        assert_eq!(one.slice_index(-1.0), 0);
        assert_eq!(one.slice_index(0.0), 0);
        assert_eq!(one.slice_index(1e-12), 1);
        let two = SliceConfig::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(two.slice_index(0.5), 1);
        assert_eq!(two.slice_index(1.0), 1);
        assert_eq!(two.slice_index(7.0), 2);
    }

    #[test]
    fn cutpoints_must_increase() {
        assert!(SliceConfig::new(vec![1.0, 1.0]).is_err());
        assert!(SliceConfig::new(vec![2.0, 1.0]).is_err());
        assert!(SliceConfig::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn quantile_cutpoints_balance_slices() {
        let ys: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let cfg = SliceConfig::from_quantiles(&ys, 4).unwrap();
        assert_eq!(cfg.num_slices(), 4);
        let mut counts = [0; 4];
        for y in &ys {
            counts[cfg.slice_index(*y)] += 1;
        }
        assert_eq!(counts, [25, 25, 25, 25]);
    }

    #[test]
    fn class_labels_get_one_slice_each() {
        let ys = [0.0, 1.0, 2.0, 1.0, 0.0, 2.0, 2.0];
        let cfg = SliceConfig::from_quantiles(&ys, 10).unwrap();
        assert_eq!(cfg.cutpoints(), &[0.5, 1.5]);
        assert_eq!(cfg.slice_index(0.0), 0);
        assert_eq!(cfg.slice_index(2.0), 2);
    }

    #[test]
    fn zero_coefficients_only_count() {
        let mut s = SliceState::first(3, 1).unwrap();
        let before = s.clone();
        s.update_case1(1, &array![0.0]).unwrap();
        assert_eq!(s.counts(), &[0, 2, 0]);
        assert_eq!(s.m_vecs(), before.m_vecs());
        assert_eq!(s.m_mats(), before.m_mats());
    }

    #[test]
    fn scalar_case_squares_the_sum() {
        let mut s = SliceState::from_parts(vec![1], vec![array![2.0]], vec![array![[4.0]]]).unwrap();
        s.update_case1(0, &array![1.0]).unwrap();
        assert_eq!(s.m_vecs()[0], array![3.0]);
        assert_eq!(s.m_mats()[0], array![[9.0]]);
    }

    #[test]
    fn case2_borders_every_slice() {
        let mut s = SliceState::first(3, 0).unwrap();
        s.update_case2(2).unwrap();
        assert_eq!(s.m_vecs()[0], array![1.0, 0.0]);
        assert_eq!(s.m_mats()[0], array![[1.0, 0.0], [0.0, 0.0]]);
        assert_eq!(s.m_vecs()[1], array![0.0, 0.0]);
        assert_eq!(s.m_vecs()[2], array![0.0, 1.0]);
        assert_eq!(s.m_mats()[2], array![[0.0, 0.0], [0.0, 1.0]]);
        assert_eq!(s.counts(), &[1, 0, 1]);
    }

    #[test]
    fn q_of_two_identical_atoms_in_one_slice() {
        // A = I₂, both samples in slice 0 → Q = ½ 11ᵀ.
        let mut s = SliceState::first(2, 0).unwrap();
        s.update_case2(0).unwrap();
        let q = s.compute_q().unwrap();
        assert!(max_abs_diff(&q, &array![[0.5, 0.5], [0.5, 0.5]]) < 1e-15);
    }

    #[test]
    fn single_sample_q_is_its_slice_matrix() {
        let s = SliceState::first(4, 3).unwrap();
        assert_eq!(s.compute_q().unwrap(), s.m_mats()[3]);
    }

    #[test]
    fn empty_state_has_no_q() {
        assert!(matches!(SliceState::empty(3, 2).compute_q(), Err(OksirError::State(_))));
    }

    /// Dense oracle: from recorded coefficient rows (zero-padded to the final width)
    /// build A, Δ_h and J explicitly.
    fn dense_stats(rows: &[Array1<f64>], slices: &[usize], h_count: usize) -> (Vec<Array2<f64>>, Array2<f64>) {
        let m = rows.last().unwrap().len();
        let t = rows.len();
        let a = Array2::from_shape_fn((t, m), |(i, j)| rows[i].get(j).copied().unwrap_or(0.0));
        let mut mats = Vec::new();
        let mut j = Array2::<f64>::zeros((t, t));
        for h in 0..h_count {
            let delta = Array1::from_shape_fn(t, |i| if slices[i] == h { 1.0 } else { 0.0 });
            let mh = a.t().dot(&delta);
            let outer = Array2::from_shape_fn((m, m), |(r, c)| mh[r] * mh[c]);
            mats.push(outer);
            let n_h = delta.sum();
            for r in 0..t {
                for c in 0..t {
                    if slices[r] == h && slices[c] == h {
                        j[[r, c]] = 1.0 / n_h;
                    }
                }
            }
        }
        let q = a.t().dot(&j).dot(&a);
        (mats, q)
    }

    #[test]
    fn interleaved_updates_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hs = 5;
        let mut state = SliceState::first(hs, 0).unwrap();
        let mut rows = vec![array![1.0]];
        let mut slices = vec![0usize];
        for _ in 0..60 {
            let h = rng.random_range(0..hs);
            slices.push(h);
            if rng.random_bool(0.2) {
                state.update_case2(h).unwrap();
                let m = state.dim();
                let mut row = Array1::zeros(m);
                row[m - 1] = 1.0;
                rows.push(row);
            } else {
                let a: Array1<f64> = (0..state.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                state.update_case1(h, &a).unwrap();
                rows.push(a);
            }
        }
        let (mats, q) = dense_stats(&rows, &slices, hs);
        for h in 0..hs {
            assert!(max_abs_diff(&state.m_mats()[h], &mats[h]) <= 1e-10);
        }
        assert!(max_abs_diff(&state.compute_q().unwrap(), &q) <= 1e-10);
        assert_eq!(state.total(), 61);
    }

    #[test]
    fn single_slice_random_walk_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = 3;
        let mut state = SliceState::empty(1, m);
        let mut rows = Vec::new();
        for _ in 0..30 {
            let a: Array1<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            state.update_case1(0, &a).unwrap();
            rows.push(a);
        }
        let (mats, _) = dense_stats(&rows, &vec![0; 30], 1);
        assert!(max_abs_diff(&state.m_mats()[0], &mats[0]) <= 1e-10);
    }
}
