//! The streaming estimator.
//!
//! Each sample runs the ALD test against the dictionary. A sample that is well
//! represented is absorbed: `AᵀA` and its slice's statistics take the expansion
//! coefficients and `Φ` makes one step at the current size. Otherwise the sample becomes
//! a new atom, every matrix is bordered by one row and column, `Φ` gains a zero row, and
//! then steps.
//!
//! Unless cut-points are supplied, the first [`warmup_len`] samples are buffered, the
//! cut-points are set from their responses, and the buffer is replayed in arrival order.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::centering::{self, CenteringState};
use crate::dictionary::{add_outer, AldResult, Dictionary};
use crate::eigensolver::{EtaSchedule, PencilOrder, PencilScaling, PowerProbe, ProjectionState, Sandwich};
use crate::error::{check_dims, OksirError, Result};
use crate::kernel::KernelConfig;
use crate::slicing::{warmup_len, SliceConfig, SliceState, DEFAULT_SLICES};

/// Default ALD threshold as a fraction of the kernel's self-similarity `k(x, x)`.
pub const DEFAULT_NU_FRACTION: f64 = 0.01;
/// Power-iteration steps per update when estimating the pencil norms.
pub const DEFAULT_POWER_ITERS: usize = 3;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OksirConfig {
    pub kernel: KernelConfig,
    /// ALD threshold. `None` picks `DEFAULT_NU_FRACTION · k(x, x)` from the first sample.
    pub nu: Option<f64>,
    pub d: usize,
    pub num_slices: usize,
    /// Explicit cut-points; skips the warm-up buffer.
    pub cutpoints: Option<Vec<f64>>,
    pub eta_schedule: EtaSchedule,
    pub seed: u64,
    pub center: bool,
    pub pencil_order: PencilOrder,
    pub pencil_scaling: PencilScaling,
    pub power_iters: usize,
}

impl OksirConfig {
    pub fn new(d: usize) -> Self {
        OksirConfig {
            kernel: KernelConfig::default(),
            nu: None,
            d,
            num_slices: DEFAULT_SLICES,
            cutpoints: None,
            eta_schedule: EtaSchedule::default(),
            seed: DEFAULT_SEED,
            center: true,
            pencil_order: PencilOrder::default(),
            pencil_scaling: PencilScaling::default(),
            power_iters: DEFAULT_POWER_ITERS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.eta_schedule.validate()?;
        if self.d == 0 {
            return Err(OksirError::input("d must be at least 1"));
        }
        if let Some(nu) = self.nu {
            if !nu.is_finite() {
                return Err(OksirError::input("nu must be finite"));
            }
        }
        match &self.cutpoints {
            Some(c) => {
                SliceConfig::new(c.clone())?;
            }
            None if self.num_slices < 2 => return Err(OksirError::input("need at least two slices")),
            None => {}
        }
        if self.power_iters == 0 && self.pencil_scaling == PencilScaling::SpectralNorm {
            return Err(OksirError::input("spectral scaling needs at least one power iteration"));
        }
        Ok(())
    }

    /// Effective number of slices (from explicit cut-points when given).
    pub fn slices(&self) -> usize {
        match &self.cutpoints {
            Some(c) => c.len() + 1,
            None => self.num_slices,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSample {
    pub x: Array1<f64>,
    pub y: f64,
}

/// What one `partial_fit` step did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Global step index (1-based).
    pub t: u64,
    pub grew: bool,
    /// Coefficient row `a_t` the sample contributed, at the post-step dictionary size.
    pub a_t: Array1<f64>,
    /// ALD residual (0 for the first sample).
    pub epsilon: f64,
    pub slice: usize,
    pub dict_size: usize,
    pub eta: f64,
}

/// Everything that exists once the first sample has been processed.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Fitted {
    pub(crate) dict: Dictionary,
    pub(crate) slices: SliceState,
    pub(crate) proj: ProjectionState,
    pub(crate) centering: CenteringState,
    pub(crate) probe_obj: PowerProbe,
    pub(crate) probe_con: PowerProbe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OksirModel {
    pub(crate) config: OksirConfig,
    pub(crate) nu: Option<f64>,
    pub(crate) p: Option<usize>,
    pub(crate) slice_config: Option<SliceConfig>,
    pub(crate) fitted: Option<Fitted>,
    pub(crate) warmup: Vec<StreamSample>,
    pub(crate) t: u64,
}

impl OksirModel {
    pub fn new(config: OksirConfig) -> Result<Self> {
        config.validate()?;
        let slice_config = match &config.cutpoints {
            Some(c) => Some(SliceConfig::new(c.clone())?),
            None => None,
        };
        Ok(OksirModel {
            nu: config.nu,
            config,
            p: None,
            slice_config,
            fitted: None,
            warmup: Vec::new(),
            t: 0,
        })
    }

    /// New model fed with its first sample.
    pub fn init(first: &[f64], y: f64, config: OksirConfig) -> Result<Self> {
        let mut model = OksirModel::new(config)?;
        model.partial_fit(first, y)?;
        Ok(model)
    }

    pub fn config(&self) -> &OksirConfig {
        &self.config
    }

    /// Number of samples consumed (processed plus buffered).
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.p
    }

    pub fn nu(&self) -> Option<f64> {
        self.nu
    }

    pub fn d(&self) -> usize {
        self.config.d
    }

    pub fn is_warming_up(&self) -> bool {
        self.slice_config.is_none()
    }

    pub fn warmup_buffered(&self) -> usize {
        self.warmup.len()
    }

    pub fn slice_config(&self) -> Option<&SliceConfig> {
        self.slice_config.as_ref()
    }

    pub fn dict_size(&self) -> usize {
        self.fitted.as_ref().map_or(0, |f| f.dict.len())
    }

    pub fn dictionary(&self) -> Option<&Dictionary> {
        self.fitted.as_ref().map(|f| &f.dict)
    }

    pub fn slice_state(&self) -> Option<&SliceState> {
        self.fitted.as_ref().map(|f| &f.slices)
    }

    pub fn projection(&self) -> Option<&ProjectionState> {
        self.fitted.as_ref().map(|f| &f.proj)
    }

    pub fn centering(&self) -> Option<&CenteringState> {
        self.fitted.as_ref().map(|f| &f.centering)
    }

    /// Consumes one sample. Returns the steps executed: none while the warm-up buffer
    /// fills, one normally, and the whole replay when the buffer is released. On error the
    /// model is unchanged.
    pub fn partial_fit(&mut self, x: &[f64], y: f64) -> Result<Vec<StepReport>> {
        self.check_sample(x, y)?;
        let sample = StreamSample {
            x: Array1::from(x.to_vec()),
            y,
        };
        if self.slice_config.is_none() {
            let need = warmup_len(self.config.num_slices);
            if self.warmup.len() + 1 < need {
                self.p.get_or_insert(x.len());
                self.warmup.push(sample);
                self.t += 1;
                return Ok(Vec::new());
            }
            let mut trial = self.clone();
            trial.p.get_or_insert(x.len());
            trial.warmup.push(sample);
            trial.t += 1;
            let reports = trial.release_warmup()?;
            *self = trial;
            return Ok(reports);
        }
        self.p.get_or_insert(x.len());
        let report = self.step(&sample)?;
        self.t += 1;
        Ok(vec![report])
    }

    /// Ends the warm-up early: sets cut-points from whatever is buffered and replays it.
    /// A no-op once cut-points exist.
    pub fn flush_warmup(&mut self) -> Result<Vec<StepReport>> {
        if self.slice_config.is_some() || self.warmup.is_empty() {
            return Ok(Vec::new());
        }
        let mut trial = self.clone();
        let reports = trial.release_warmup()?;
        *self = trial;
        Ok(reports)
    }

    fn release_warmup(&mut self) -> Result<Vec<StepReport>> {
        let ys: Vec<f64> = self.warmup.iter().map(|s| s.y).collect();
        self.slice_config = Some(SliceConfig::from_quantiles(&ys, self.config.num_slices)?);
        let buffer = std::mem::take(&mut self.warmup);
        buffer.iter().map(|s| self.step(s)).collect()
    }

    fn check_sample(&self, x: &[f64], y: f64) -> Result<()> {
        if x.is_empty() {
            return Err(OksirError::input("sample has no features"));
        }
        if let Some(p) = self.p {
            check_dims("sample", p, x.len())?;
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(OksirError::input("sample contains non-finite values"));
        }
        Ok(())
    }

    /// Index of the step about to run (warm-up samples still buffered are not counted).
    fn next_step_index(&self) -> u64 {
        self.fitted.as_ref().map_or(0, |f| f.slices.total()) + 1
    }

    fn step(&mut self, s: &StreamSample) -> Result<StepReport> {
        let h = self
            .slice_config
            .as_ref()
            .ok_or_else(|| OksirError::state("cut-points not set"))?
            .slice_index(s.y);
        let t = self.next_step_index();
        match self.fitted.as_mut() {
            None => self.first_step(s, h),
            Some(f) => {
                let ald = f.dict.ald_test(s.x.view(), &self.config.kernel)?;
                let eta = f.proj.learning_rate(t);
                let report = if ald.admitted {
                    grow_step(f, s.x.view(), &ald, h, eta, &self.config)?
                } else {
                    absorb_step(f, &ald, h, eta, &self.config)?
                };
                Ok(StepReport { t, slice: h, eta, ..report })
            }
        }
    }

    fn first_step(&mut self, s: &StreamSample, h: usize) -> Result<StepReport> {
        let k11 = self.config.kernel.eval(s.x.view(), s.x.view())?;
        let nu = match self.nu {
            Some(nu) => nu,
            None => DEFAULT_NU_FRACTION * k11,
        };
        let dict = Dictionary::new(s.x.view(), &self.config.kernel, nu)?;
        let slices = SliceState::first(self.slice_config.as_ref().map_or(1, |c| c.num_slices()), h)?;
        let proj = ProjectionState::new(self.config.d, self.config.eta_schedule, self.config.seed)?;
        let mut centering = CenteringState::new(self.config.center);
        let a_t = Array1::from_elem(1, 1.0);
        centering.update_mean(&a_t, true)?;
        self.nu = Some(nu);
        self.fitted = Some(Fitted {
            dict,
            slices,
            proj,
            centering,
            probe_obj: PowerProbe::new(1),
            probe_con: PowerProbe::new(1),
        });
        Ok(StepReport {
            t: 1,
            grew: true,
            a_t,
            epsilon: 0.0,
            slice: h,
            dict_size: 1,
            eta: 0.0,
        })
    }

    /// `k̃(x)` against the dictionary, centered when centering is on.
    pub fn feature_vector(&self, x: &[f64]) -> Result<Array1<f64>> {
        let f = self.fitted_or_err()?;
        check_dims("input", f.dict.input_dim(), x.len())?;
        let k = f.dict.kernel_vector(ArrayView1::from(x), &self.config.kernel)?;
        if f.centering.enabled() {
            centering::center_vector(&k, f.dict.k_tilde(), f.centering.a_bar())
        } else {
            Ok(k)
        }
    }

    /// `v̂ = Φᵀ k̃(x)`, with `k̃(x)` centered when centering is on.
    pub fn transform(&self, x: &[f64]) -> Result<Array1<f64>> {
        let k = self.feature_vector(x)?;
        Ok(self.fitted_or_err()?.proj.phi().t().dot(&k))
    }

    /// Number of reals held by the model state, warm-up buffer included.
    pub fn state_len(&self) -> usize {
        let buffered: usize = self.warmup.iter().map(|s| s.x.len() + 1).sum();
        let Some(f) = &self.fitted else { return buffered };
        let d = &f.dict;
        buffered
            + d.samples().len()
            + d.k_tilde().len()
            + d.k_tilde_inv().len()
            // `AᵀA` and the Cholesky factor of `K̃`.
            + 2 * d.ata().len()
            + f.slices.m_vecs().iter().map(|v| v.len()).sum::<usize>()
            + f.slices.m_mats().iter().map(|m| m.len()).sum::<usize>()
            + f.proj.phi().len()
            + f.centering.a_bar().len()
            + f.probe_obj.vector().len()
            + f.probe_con.vector().len()
    }

    /// Row-wise [`transform`](Self::transform) of an `n × p` matrix.
    pub fn transform_batch(&self, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let f = self.fitted_or_err()?;
        check_dims("input columns", f.dict.input_dim(), xs.ncols())?;
        let mut kx = self.config.kernel.gram(xs, f.dict.samples().view())?;
        if f.centering.enabled() {
            let a_bar = f.centering.a_bar();
            let k_a = f.dict.k_tilde().dot(a_bar);
            let c = a_bar.dot(&k_a);
            for mut row in kx.rows_mut() {
                let centered = centering::centered_with(&row.to_owned(), &k_a, c, a_bar);
                row.assign(&centered);
            }
        }
        Ok(kx.dot(f.proj.phi()))
    }

    /// `(K̃ or K̃ᶜ, Q, AᵀA)`: the reduced problem the eigen-solver is working on.
    pub fn reduced_problem(&self) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
        let f = self.fitted_or_err()?;
        Ok((pencil_gram(f)?, f.slices.compute_q()?, f.dict.ata().clone()))
    }

    /// Runs `iters` extra eigen-solver steps on the current (frozen) statistics at rate
    /// `eta`, without consuming samples.
    pub fn refine(&mut self, iters: usize, eta: f64) -> Result<()> {
        let config = self.config.clone();
        let f = self.fitted.as_mut().ok_or_else(|| OksirError::state("model has no samples yet"))?;
        let mut trial = f.clone();
        let gram = pencil_gram(&trial)?;
        let q = trial.slices.compute_q()?;
        let ata = trial.dict.ata().clone();
        for _ in 0..iters {
            eigen_step(&mut trial, &gram, &q, &ata, eta, &config)?;
        }
        *f = trial;
        Ok(())
    }

    /// Checks that all sub-states agree on the dictionary size and that the sample count
    /// adds up.
    pub fn check_consistency(&self) -> Result<()> {
        let buffered = self.warmup.len() as u64;
        let processed = self.fitted.as_ref().map_or(0, |f| f.slices.total());
        if processed + buffered != self.t {
            return Err(OksirError::state(format!(
                "sample count {} != processed {processed} + buffered {buffered}",
                self.t
            )));
        }
        let Some(f) = &self.fitted else { return Ok(()) };
        let m = f.dict.len();
        let sizes = [
            ("k_tilde", f.dict.k_tilde().nrows()),
            ("ata", f.dict.ata().nrows()),
            ("phi rows", f.proj.rows()),
            ("a_bar", f.centering.a_bar().len()),
            ("slice vectors", f.slices.dim()),
            ("objective probe", f.probe_obj.vector().len()),
            ("constraint probe", f.probe_con.vector().len()),
        ];
        for (name, got) in sizes {
            if got != m {
                return Err(OksirError::state(format!("{name} has size {got}, dictionary has {m}")));
            }
        }
        if f.proj.d() != self.config.d {
            return Err(OksirError::state("phi column count differs from d"));
        }
        if f.proj.phi().iter().any(|v| !v.is_finite()) {
            return Err(OksirError::state("phi has non-finite entries"));
        }
        Ok(())
    }

    fn fitted_or_err(&self) -> Result<&Fitted> {
        self.fitted.as_ref().ok_or_else(|| {
            if self.warmup.is_empty() {
                OksirError::state("model has no samples yet")
            } else {
                OksirError::state("model is still warming up; flush the warm-up buffer first")
            }
        })
    }
}

fn pencil_gram(f: &Fitted) -> Result<Array2<f64>> {
    if f.centering.enabled() {
        centering::center_matrix(f.dict.k_tilde(), f.centering.a_bar())
    } else {
        Ok(f.dict.k_tilde().clone())
    }
}

fn absorb_step(f: &mut Fitted, ald: &AldResult, h: usize, eta: f64, cfg: &OksirConfig) -> Result<StepReport> {
    let a = &ald.a_tilde;
    let ata_before = f.dict.ata().clone();
    let slice_before = f.slices.snapshot(h);
    let centering_before = f.centering.clone();
    let probes_before = (f.probe_obj.clone(), f.probe_con.clone());
    let result = (|| {
        f.dict.absorb(ald)?;
        f.slices.update_case1(h, a)?;
        f.centering.update_mean(a, false)?;
        let gram = pencil_gram(f)?;
        let q = f.slices.compute_q()?;
        let ata = f.dict.ata().clone();
        eigen_step(f, &gram, &q, &ata, eta, cfg)
    })();
    if let Err(e) = result {
        f.dict.set_ata(ata_before);
        f.slices.restore(slice_before);
        f.centering = centering_before;
        (f.probe_obj, f.probe_con) = probes_before;
        return Err(e);
    }
    Ok(StepReport {
        t: 0,
        grew: false,
        a_t: a.clone(),
        epsilon: ald.epsilon,
        slice: h,
        dict_size: f.dict.len(),
        eta,
    })
}

fn grow_step(
    f: &mut Fitted,
    x: ArrayView1<f64>,
    ald: &AldResult,
    h: usize,
    eta: f64,
    cfg: &OksirConfig,
) -> Result<StepReport> {
    let mut next = f.clone();
    next.dict.grow(x, ald)?;
    next.slices.update_case2(h)?;
    let m = next.dict.len();
    let mut a_t = Array1::zeros(m);
    a_t[m - 1] = 1.0;
    next.centering.update_mean(&a_t, true)?;
    next.proj.pad_row();
    next.probe_obj.pad();
    next.probe_con.pad();
    let gram = pencil_gram(&next)?;
    let q = next.slices.compute_q()?;
    let ata = next.dict.ata().clone();
    eigen_step(&mut next, &gram, &q, &ata, eta, cfg)?;
    *f = next;
    Ok(StepReport {
        t: 0,
        grew: true,
        a_t,
        epsilon: ald.epsilon,
        slice: h,
        dict_size: m,
        eta,
    })
}

/// One eigen-solver step on the pencil `(G Q G, G AᵀA G)`, `G` the (centered) reduced
/// Gram matrix.
fn eigen_step(
    f: &mut Fitted,
    gram: &Array2<f64>,
    q: &Array2<f64>,
    ata: &Array2<f64>,
    eta: f64,
    cfg: &OksirConfig,
) -> Result<()> {
    let between = Sandwich::new(gram, q);
    let total = Sandwich::new(gram, ata);
    let (objective, constraint, probe_obj, probe_con) = match cfg.pencil_order {
        PencilOrder::BetweenOverTotal => (between, total, &mut f.probe_obj, &mut f.probe_con),
        PencilOrder::TotalOverBetween => (total, between, &mut f.probe_obj, &mut f.probe_con),
    };
    let (objective, constraint) = match cfg.pencil_scaling {
        PencilScaling::None => (objective, constraint),
        PencilScaling::SpectralNorm => {
            let so = probe_obj.estimate(&objective, cfg.power_iters);
            let sc = probe_con.estimate(&constraint, cfg.power_iters);
            (
                objective.scaled(if so > 0.0 { 1.0 / so } else { 1.0 }),
                constraint.scaled(if sc > 0.0 { 1.0 / sc } else { 1.0 }),
            )
        }
    };
    f.proj.step(&constraint, &objective, eta)
}

/// `AᵀA` rebuilt from explicit coefficient rows (each zero-padded to the final size).
pub fn dense_ata(rows: &[Array1<f64>], m: usize) -> Array2<f64> {
    let mut out = Array2::zeros((m, m));
    for r in rows {
        let mut padded = Array1::zeros(m);
        padded.slice_mut(ndarray::s![..r.len()]).assign(r);
        add_outer(&mut out, &padded, 1.0);
    }
    out
}
