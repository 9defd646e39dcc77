//! Stochastic generalized eigen-solver for the reduced pencil
//! `K̃QK̃ α = λ K̃AᵀAK̃ α`.
//!
//! The block `Φ` (m × d) follows the constrained stochastic update
//!
//! ```text
//! Φ ← Φ - η (C Φ Φᵀ - I) O Φ
//! ```
//!
//! whose stable fixed points span the top-`d` eigenvectors of `O v = λ C v` with
//! `Φᵀ C Φ = I` (`O` is the objective side, `C` the constraint side). No explicit
//! orthonormalization is applied between steps. Both sides are kept in factored
//! `K (M (K X))` form so a step costs `O(m² d)`.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, OksirError, Result};

/// Entries above this magnitude count as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e6;
pub const MAX_HALVINGS: u32 = 20;
/// Variance of the Gaussian initialization of `Φ`.
pub const INIT_VARIANCE: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaSchedule {
    /// `η_t = 1/t`.
    InverseT,
    /// `η_t = 1/t` up to `t0`, then the constant `eta`.
    InverseTThenFixed { t0: u64, eta: f64 },
}

impl Default for EtaSchedule {
    fn default() -> Self {
        EtaSchedule::InverseTThenFixed { t0: 100, eta: 0.01 }
    }
}

impl EtaSchedule {
    pub fn rate(&self, t: u64) -> f64 {
        let t = t.max(1);
        match *self {
            EtaSchedule::InverseT => 1.0 / t as f64,
            EtaSchedule::InverseTThenFixed { t0, eta } => {
                if t <= t0 {
                    1.0 / t as f64
                } else {
                    eta
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let EtaSchedule::InverseTThenFixed { eta, .. } = *self {
            if !(eta.is_finite() && eta >= 0.0) {
                return Err(OksirError::input("fixed learning rate must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for EtaSchedule {
    type Err = OksirError;

    /// `inverse-t` or `inverse-t-then-fixed:<t0>:<eta>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let sched = match parts.as_slice() {
            ["inverse-t"] | ["inverse_t"] => EtaSchedule::InverseT,
            ["inverse-t-then-fixed" | "inverse_t_then_fixed", t0, eta] => EtaSchedule::InverseTThenFixed {
                t0: t0.parse().map_err(|_| OksirError::input(format!("bad t0 `{t0}`")))?,
                eta: eta.parse().map_err(|_| OksirError::input(format!("bad eta `{eta}`")))?,
            },
            _ => {
                return Err(OksirError::input(format!(
                    "unknown schedule `{s}` (expected inverse-t or inverse-t-then-fixed:<t0>:<eta>)"
                )))
            }
        };
        sched.validate()?;
        Ok(sched)
    }
}

/// Which side of `K̃QK̃ α = λ K̃AᵀAK̃ α` the update maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PencilOrder {
    /// Objective `K̃QK̃`, constraint `K̃AᵀAK̃`: converges to the leading slice-mean
    /// directions relative to the total covariance.
    #[default]
    BetweenOverTotal,
    /// Objective `K̃AᵀAK̃`, constraint `K̃QK̃`, i.e. the update with the two matrices in
    /// the other roles. Kept for comparison; it targets the trailing directions of the
    /// pencil and is unstable when `Q` is rank deficient.
    TotalOverBetween,
}

/// How the two sides are scaled before each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PencilScaling {
    /// Divide each side by an estimate of its spectral norm. The eigenvectors of the
    /// pencil are unchanged and `η` becomes scale free.
    #[default]
    SpectralNorm,
    /// Use the raw matrices.
    None,
}

/// A symmetric linear operator acting on blocks of column vectors.
pub trait SymOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &Array2<f64>) -> Array2<f64>;

    fn apply_vec(&self, v: &Array1<f64>) -> Array1<f64> {
        let block = v.clone().insert_axis(ndarray::Axis(1));
        self.apply(&block).column(0).to_owned()
    }
}

/// `scale · K M K`, applied right to left.
#[derive(Debug, Clone, Copy)]
pub struct Sandwich<'a> {
    pub outer: &'a Array2<f64>,
    pub inner: &'a Array2<f64>,
    pub scale: f64,
}

impl<'a> Sandwich<'a> {
    pub fn new(outer: &'a Array2<f64>, inner: &'a Array2<f64>) -> Self {
        Sandwich { outer, inner, scale: 1.0 }
    }

    pub fn scaled(self, scale: f64) -> Self {
        Sandwich { scale, ..self }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.outer.dot(self.inner).dot(self.outer) * self.scale
    }
}

impl SymOperator for Sandwich<'_> {
    fn dim(&self) -> usize {
        self.outer.nrows()
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let y = self.outer.dot(&self.inner.dot(&self.outer.dot(x)));
        if self.scale == 1.0 {
            y
        } else {
            y * self.scale
        }
    }
}

/// Plain dense symmetric matrix.
#[derive(Debug, Clone, Copy)]
pub struct Dense<'a>(pub &'a Array2<f64>);

impl SymOperator for Dense<'_> {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        self.0.dot(x)
    }
}

/// One constrained stochastic step `Φ - η (C Φ Φᵀ - I) O Φ`.
pub fn constrained_step(
    phi: &Array2<f64>,
    constraint: &impl SymOperator,
    objective: &impl SymOperator,
    eta: f64,
) -> Array2<f64> {
    if eta == 0.0 {
        return phi.clone();
    }
    let o_phi = objective.apply(phi);
    // (CΦΦᵀ - I) OΦ = CΦ (Φᵀ OΦ) - OΦ
    let gram = phi.t().dot(&o_phi);
    let c_phi = constraint.apply(phi);
    let direction = c_phi.dot(&gram) - &o_phi;
    let mut next = phi.clone();
    next.scaled_add(-eta, &direction);
    next
}

/// Warm-started power iteration used to normalize a pencil side.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProbe {
    v: Array1<f64>,
}

impl PowerProbe {
    pub fn new(dim: usize) -> Self {
        PowerProbe {
            v: Array1::from_elem(dim, 1.0 / (dim.max(1) as f64).sqrt()),
        }
    }

    pub fn from_vector(v: Array1<f64>) -> Self {
        PowerProbe { v }
    }

    pub fn vector(&self) -> &Array1<f64> {
        &self.v
    }

    /// Appends a zero coordinate after the dictionary grows.
    pub fn pad(&mut self) {
        let m = self.v.len();
        let mut v = Array1::zeros(m + 1);
        v.slice_mut(ndarray::s![..m]).assign(&self.v);
        self.v = v;
    }

    /// Largest-eigenvalue estimate of a PSD operator after `iters` power steps from the
    /// stored vector. Returns 0 for the zero operator.
    pub fn estimate(&mut self, op: &impl SymOperator, iters: usize) -> f64 {
        let dim = op.dim();
        if self.v.len() != dim {
            *self = PowerProbe::new(dim);
        }
        let mut norm = self.v.dot(&self.v).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            *self = PowerProbe::new(dim);
            norm = 1.0;
        }
        self.v /= norm;
        let mut lambda = 0.0;
        for _ in 0..iters.max(1) {
            let w = op.apply_vec(&self.v);
            let wn = w.dot(&w).sqrt();
            if !(wn > 0.0) || !wn.is_finite() {
                // Zero (or broken) operator: keep a valid probe for the next call.
                *self = PowerProbe::new(dim);
                return 0.0;
            }
            lambda = wn;
            self.v = w / wn;
        }
        lambda
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionState {
    phi: Array2<f64>,
    schedule: EtaSchedule,
    /// Product of all divergence-guard halvings so far (1 when none happened).
    eta_scale: f64,
}

impl ProjectionState {
    /// `Φ₁ ~ N(0, 0.001 I)` with one row, drawn from a seeded generator.
    pub fn new(d: usize, schedule: EtaSchedule, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(OksirError::input("number of directions d must be at least 1"));
        }
        schedule.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_VARIANCE.sqrt()).expect("valid normal");
        let phi = Array2::from_shape_fn((1, d), |_| normal.sample(&mut rng));
        Ok(ProjectionState {
            phi,
            schedule,
            eta_scale: 1.0,
        })
    }

    pub fn from_parts(phi: Array2<f64>, schedule: EtaSchedule, eta_scale: f64) -> Result<Self> {
        if phi.ncols() == 0 || phi.iter().any(|v| !v.is_finite()) {
            return Err(OksirError::Format("projection block must be finite with d ≥ 1".into()));
        }
        schedule.validate()?;
        Ok(ProjectionState { phi, schedule, eta_scale })
    }

    pub fn phi(&self) -> &Array2<f64> {
        &self.phi
    }

    pub fn d(&self) -> usize {
        self.phi.ncols()
    }

    pub fn rows(&self) -> usize {
        self.phi.nrows()
    }

    pub fn schedule(&self) -> EtaSchedule {
        self.schedule
    }

    pub fn eta_scale(&self) -> f64 {
        self.eta_scale
    }

    /// Learning rate for global step `t`, including any divergence-guard halvings.
    pub fn learning_rate(&self, t: u64) -> f64 {
        self.schedule.rate(t) * self.eta_scale
    }

    /// Columns of `Φ`; column `j` holds the coefficients of direction `j`.
    pub fn extract_directions(&self) -> Array2<f64> {
        self.phi.clone()
    }

    /// Appends a zero row after the dictionary grows.
    pub fn pad_row(&mut self) {
        let (m, d) = self.phi.dim();
        let mut phi = Array2::zeros((m + 1, d));
        phi.slice_mut(ndarray::s![..m, ..]).assign(&self.phi);
        self.phi = phi;
    }

    /// Applies one guarded constrained step. On a non-finite or exploding iterate the
    /// step size is halved (persistently) and the step retried from the current `Φ`;
    /// after `MAX_HALVINGS` failures the state is left untouched and an error returned.
    pub fn step(
        &mut self,
        constraint: &impl SymOperator,
        objective: &impl SymOperator,
        eta: f64,
    ) -> Result<()> {
        check_dims("constraint operator", self.rows(), constraint.dim())?;
        check_dims("objective operator", self.rows(), objective.dim())?;
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(OksirError::input(format!("learning rate must be finite and ≥ 0, got {eta}")));
        }
        let mut factor = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let next = constrained_step(&self.phi, constraint, objective, eta * factor);
            if next.iter().all(|v| v.is_finite() && v.abs() <= DIVERGENCE_BOUND) {
                self.phi = next;
                self.eta_scale *= factor;
                return Ok(());
            }
            factor *= 0.5;
        }
        Err(OksirError::Divergence(format!(
            "iterate still explodes after {MAX_HALVINGS} halvings of η = {eta}"
        )))
    }

    /// The update as printed for a fixed dictionary: constraint `K̃QK̃`, objective `K̃AᵀAK̃`.
    pub fn phi_update_case1(&mut self, k_tilde: &Array2<f64>, q: &Array2<f64>, ata: &Array2<f64>, eta: f64) -> Result<()> {
        let constraint = Sandwich::new(k_tilde, q);
        let objective = Sandwich::new(k_tilde, ata);
        self.step(&constraint, &objective, eta)
    }

    /// Grown dictionary: pad `Φ` with a zero row, then the same step at the new size.
    pub fn phi_update_case2(&mut self, k_tilde: &Array2<f64>, q: &Array2<f64>, ata: &Array2<f64>, eta: f64) -> Result<()> {
        let saved = self.phi.clone();
        self.pad_row();
        let res = self.phi_update_case1(k_tilde, q, ata, eta);
        if res.is_err() {
            self.phi = saved;
        }
        res
    }
}
