//! C ABI for the streaming estimator.
//!
//! Models live behind an opaque `OksirModel` handle created by `oksir_model_new` or
//! `oksir_model_load_json` and released with `oksir_model_free`. Every fallible call
//! returns an `OksirStatus`; on failure `oksir_last_error_message` describes the most
//! recent error on the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use oksir::{EtaSchedule, KernelConfig, KernelFamily, OksirConfig, OksirError};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OksirStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    State = 3,
    Numerical = 4,
    Format = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OksirKernel {
    AdditiveGaussian = 0,
    GaussianRbf = 1,
}

/// Construction options. Start from `oksir_options_default()` and override fields.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OksirOptions {
    /// Number of directions.
    pub d: usize,
    /// Number of slices when cut-points are learned from a warm-up buffer.
    pub num_slices: usize,
    pub kernel: OksirKernel,
    pub sigma: f64,
    /// ALD threshold; NaN selects 1% of `k(x, x)` of the first sample.
    pub nu: f64,
    pub seed: u64,
    pub center: bool,
    /// Optional explicit cut-points (`n_cutpoints` entries, ascending). NULL learns them.
    pub cutpoints: *const f64,
    pub n_cutpoints: usize,
    /// Step `t0` after which the learning rate is fixed at `eta`; 0 keeps `1/t` forever.
    pub eta_t0: u64,
    pub eta: f64,
}

/// Opaque model handle.
pub struct OksirModel {
    inner: oksir::OksirModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &OksirError) -> OksirStatus {
    match e {
        OksirError::Input(_) | OksirError::Data { .. } => OksirStatus::InvalidArgument,
        OksirError::State(_) => OksirStatus::State,
        OksirError::NumericalDegeneracy(_)
        | OksirError::Divergence(_)
        | OksirError::EigenSolver(_)
        | OksirError::UndefinedMetric(_)
        | OksirError::InvalidKernel(_) => OksirStatus::Numerical,
        OksirError::Format(_) => OksirStatus::Format,
        OksirError::Io(_) => OksirStatus::Io,
    }
}

struct Failure(OksirStatus, String);

impl From<OksirError> for Failure {
    fn from(e: OksirError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(OksirStatus::NullPointer, format!("{what} is NULL"))
}

/// Runs `f`, converting errors and panics into a status and the thread's last message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OksirStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OksirStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            OksirStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn model_mut<'a>(m: *mut OksirModel) -> Result<&'a mut OksirModel, Failure> {
    m.as_mut().ok_or_else(|| null("model"))
}

unsafe fn model_ref<'a>(m: *const OksirModel) -> Result<&'a OksirModel, Failure> {
    m.as_ref().ok_or_else(|| null("model"))
}

fn config_from(o: &OksirOptions) -> Result<OksirConfig, Failure> {
    let mut cfg = OksirConfig::new(o.d);
    let family = match o.kernel {
        OksirKernel::AdditiveGaussian => KernelFamily::AdditiveGaussian,
        OksirKernel::GaussianRbf => KernelFamily::GaussianRbf,
    };
    cfg.kernel = KernelConfig::new(family, o.sigma)?;
    cfg.num_slices = o.num_slices;
    cfg.nu = (!o.nu.is_nan()).then_some(o.nu);
    cfg.seed = o.seed;
    cfg.center = o.center;
    if !o.cutpoints.is_null() {
        cfg.cutpoints = Some(unsafe { slice(o.cutpoints, o.n_cutpoints, "cutpoints")? }.to_vec());
    }
    cfg.eta_schedule = if o.eta_t0 == 0 {
        EtaSchedule::InverseT
    } else {
        EtaSchedule::InverseTThenFixed { t0: o.eta_t0, eta: o.eta }
    };
    Ok(cfg)
}

/// Library defaults: two directions, ten slices, additive Gaussian kernel with σ = 2,
/// data-driven ν, seed 42, centering on, learning rate `1/t` then 0.01 after step 100.
#[no_mangle]
pub extern "C" fn oksir_options_default() -> OksirOptions {
    let cfg = OksirConfig::new(2);
    let (eta_t0, eta) = match cfg.eta_schedule {
        EtaSchedule::InverseTThenFixed { t0, eta } => (t0, eta),
        EtaSchedule::InverseT => (0, 0.0),
    };
    OksirOptions {
        d: cfg.d,
        num_slices: cfg.num_slices,
        kernel: OksirKernel::AdditiveGaussian,
        sigma: cfg.kernel.sigma,
        nu: f64::NAN,
        seed: cfg.seed,
        center: cfg.center,
        cutpoints: ptr::null(),
        n_cutpoints: 0,
        eta_t0,
        eta,
    }
}

/// Creates an empty model. On success `*out` owns a handle for `oksir_model_free`.
///
/// # Safety
/// `options` must point to a valid `OksirOptions` (its `cutpoints`, if not NULL, to
/// `n_cutpoints` readable doubles); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn oksir_model_new(options: *const OksirOptions, out: *mut *mut OksirModel) -> OksirStatus {
    guard(|| {
        let o = options.as_ref().ok_or_else(|| null("options"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = oksir::OksirModel::new(config_from(o)?)?;
        *out = Box::into_raw(Box::new(OksirModel { inner }));
        Ok(())
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oksir_model_free(model: *mut OksirModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Feeds one sample. On failure the model is unchanged.
///
/// # Safety
/// `model` must be a live handle and `x` must point to `p` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn oksir_model_partial_fit(model: *mut OksirModel, x: *const f64, p: usize, y: f64) -> OksirStatus {
    guard(|| {
        let m = model_mut(model)?;
        let x = slice(x, p, "x")?;
        m.inner.partial_fit(x, y)?;
        Ok(())
    })
}

/// Ends a pending warm-up: sets cut-points from the buffered responses and replays them.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn oksir_model_flush(model: *mut OksirModel) -> OksirStatus {
    guard(|| {
        model_mut(model)?.inner.flush_warmup()?;
        Ok(())
    })
}

/// Writes the `d` summary statistics of `x` to `out`.
///
/// # Safety
/// `model` must be a live handle, `x` must point to `p` readable doubles and `out` to
/// `d` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn oksir_model_transform(
    model: *const OksirModel,
    x: *const f64,
    p: usize,
    out: *mut f64,
    d: usize,
) -> OksirStatus {
    guard(|| {
        let m = model_ref(model)?;
        let x = slice(x, p, "x")?;
        if d != m.inner.d() {
            return Err(Failure(
                OksirStatus::InvalidArgument,
                format!("output has room for {d} values, model has {} directions", m.inner.d()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let v = m.inner.transform(x)?;
        std::slice::from_raw_parts_mut(out, d).copy_from_slice(v.as_slice().expect("contiguous"));
        Ok(())
    })
}

/// Current dictionary size (0 before the first sample leaves the warm-up buffer).
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn oksir_model_dict_size(model: *const OksirModel, out: *mut usize) -> OksirStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.inner.dict_size();
        Ok(())
    })
}

/// Number of samples consumed, including any still in the warm-up buffer.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn oksir_model_samples_seen(model: *const OksirModel, out: *mut u64) -> OksirStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.inner.t();
        Ok(())
    })
}

/// Serializes the model. `*out` receives a NUL-terminated string to release with
/// `oksir_string_free`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn oksir_model_save_json(model: *const OksirModel, out: *mut *mut c_char) -> OksirStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = m.inner.to_json()?;
        *out = CString::new(text).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// Restores a model from `oksir_model_save_json` output.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn oksir_model_load_json(json: *const c_char, out: *mut *mut OksirModel) -> OksirStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Failure(OksirStatus::Format, format!("model text is not UTF-8: {e}")))?;
        let inner = oksir::OksirModel::from_json(text)?;
        *out = Box::into_raw(Box::new(OksirModel { inner }));
        Ok(())
    })
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oksir_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the most recent failure on this thread, or NULL. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn oksir_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
