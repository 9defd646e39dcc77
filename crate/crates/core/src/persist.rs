//! Versioned JSON model files.
//!
//! Reals are written in scientific notation with 17 significant digits, so every `f64`
//! reads back bit for bit. Matrices are `{rows, cols, data}` with `data` row-major.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::batch::{batch_transform, BatchKsirResult};
use crate::centering::CenteringState;
use crate::dictionary::Dictionary;
use crate::eigensolver::{EtaSchedule, PencilOrder, PencilScaling, PowerProbe, ProjectionState};
use crate::error::{OksirError, Result};
use crate::kernel::KernelConfig;
use crate::model::{Fitted, OksirConfig, OksirModel, StreamSample};
use crate::slicing::{SliceConfig, SliceState};

pub const FORMAT_NAME: &str = "oksir-model";
pub const FORMAT_VERSION: u32 = 1;

/// An `f64` that serializes with 17 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(serde::ser::Error::custom(format!("cannot store non-finite value {}", self.0)));
        }
        let text = format!("{:.16e}", self.0);
        let num: serde_json::Number = text.parse().map_err(serde::ser::Error::custom)?;
        num.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(d).map(Real)
    }
}

fn reals(v: impl IntoIterator<Item = f64>) -> Vec<Real> {
    v.into_iter().map(Real).collect()
}

fn vec_of(v: &[Real]) -> Array1<f64> {
    v.iter().map(|r| r.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Real>,
}

impl Matrix {
    pub fn from_array(a: &Array2<f64>) -> Self {
        Matrix {
            rows: a.nrows(),
            cols: a.ncols(),
            data: reals(a.iter().copied()),
        }
    }

    pub fn to_array(&self, what: &str) -> Result<Array2<f64>> {
        Array2::from_shape_vec((self.rows, self.cols), self.data.iter().map(|r| r.0).collect())
            .map_err(|_| {
                OksirError::Format(format!(
                    "{what}: {} values do not fill a {}x{} matrix",
                    self.data.len(),
                    self.rows,
                    self.cols
                ))
            })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct KernelFile {
    family: crate::kernel::KernelFamily,
    sigma: Real,
}

#[derive(Debug, Serialize, Deserialize)]
struct DictFile {
    samples: Matrix,
    k_tilde: Matrix,
    k_tilde_inv: Matrix,
    ata: Matrix,
}

#[derive(Debug, Serialize, Deserialize)]
struct SlicesFile {
    counts: Vec<u64>,
    m_vecs: Matrix,
    m_mats: Vec<Matrix>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScheduleFile {
    kind: String,
    t0: Option<u64>,
    eta: Option<Real>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProbesFile {
    objective: Vec<Real>,
    constraint: Vec<Real>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleFile {
    x: Vec<Real>,
    y: Real,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    kernel: KernelFile,
    nu: Option<Real>,
    /// `nu` was derived from the first sample rather than configured.
    default_nu: bool,
    d: usize,
    #[serde(rename = "H")]
    num_slices: usize,
    cutpoints: Option<Vec<Real>>,
    fixed_cutpoints: bool,
    p: Option<usize>,
    t: u64,
    seed: u64,
    centering_enabled: bool,
    eta_schedule: ScheduleFile,
    eta_scale: Real,
    pencil_order: PencilOrder,
    pencil_scaling: PencilScaling,
    power_iters: usize,
    dict: Option<DictFile>,
    slices: Option<SlicesFile>,
    phi: Option<Matrix>,
    a_bar: Option<Vec<Real>>,
    centering_count: u64,
    scale_probes: Option<ProbesFile>,
    warmup_buffer: Vec<SampleFile>,
}

fn schedule_file(s: EtaSchedule) -> ScheduleFile {
    match s {
        EtaSchedule::InverseT => ScheduleFile {
            kind: "inverse_t".into(),
            t0: None,
            eta: None,
        },
        EtaSchedule::InverseTThenFixed { t0, eta } => ScheduleFile {
            kind: "inverse_t_then_fixed".into(),
            t0: Some(t0),
            eta: Some(Real(eta)),
        },
    }
}

fn schedule_from(f: &ScheduleFile) -> Result<EtaSchedule> {
    match (f.kind.as_str(), f.t0, f.eta) {
        ("inverse_t", _, _) => Ok(EtaSchedule::InverseT),
        ("inverse_t_then_fixed", Some(t0), Some(eta)) => Ok(EtaSchedule::InverseTThenFixed { t0, eta: eta.0 }),
        _ => Err(OksirError::Format(format!("unknown learning-rate schedule `{}`", f.kind))),
    }
}

fn to_file(model: &OksirModel) -> ModelFile {
    let cfg = &model.config;
    let fitted = model.fitted.as_ref();
    let proj = fitted.map(|f| &f.proj);
    ModelFile {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        kernel: KernelFile {
            family: cfg.kernel.family,
            sigma: Real(cfg.kernel.sigma),
        },
        nu: model.nu.map(Real),
        default_nu: cfg.nu.is_none(),
        d: cfg.d,
        num_slices: cfg.num_slices,
        cutpoints: model.slice_config.as_ref().map(|c| reals(c.cutpoints().iter().copied())),
        fixed_cutpoints: cfg.cutpoints.is_some(),
        p: model.p,
        t: model.t,
        seed: cfg.seed,
        centering_enabled: cfg.center,
        eta_schedule: schedule_file(cfg.eta_schedule),
        eta_scale: Real(proj.map_or(1.0, |p| p.eta_scale())),
        pencil_order: cfg.pencil_order,
        pencil_scaling: cfg.pencil_scaling,
        power_iters: cfg.power_iters,
        dict: fitted.map(|f| DictFile {
            samples: Matrix::from_array(f.dict.samples()),
            k_tilde: Matrix::from_array(f.dict.k_tilde()),
            k_tilde_inv: Matrix::from_array(f.dict.k_tilde_inv()),
            ata: Matrix::from_array(f.dict.ata()),
        }),
        slices: fitted.map(|f| {
            let m = f.slices.dim();
            let h = f.slices.num_slices();
            let mut m_vecs = Array2::zeros((h, m));
            for (mut row, v) in m_vecs.rows_mut().into_iter().zip(f.slices.m_vecs()) {
                row.assign(v);
            }
            SlicesFile {
                counts: f.slices.counts().to_vec(),
                m_vecs: Matrix::from_array(&m_vecs),
                m_mats: f.slices.m_mats().iter().map(Matrix::from_array).collect(),
            }
        }),
        phi: proj.map(|p| Matrix::from_array(p.phi())),
        a_bar: fitted.map(|f| reals(f.centering.a_bar().iter().copied())),
        centering_count: fitted.map_or(0, |f| f.centering.count()),
        scale_probes: fitted.map(|f| ProbesFile {
            objective: reals(f.probe_obj.vector().iter().copied()),
            constraint: reals(f.probe_con.vector().iter().copied()),
        }),
        warmup_buffer: model
            .warmup
            .iter()
            .map(|s| SampleFile {
                x: reals(s.x.iter().copied()),
                y: Real(s.y),
            })
            .collect(),
    }
}

fn from_file(file: ModelFile) -> Result<OksirModel> {
    if file.format != FORMAT_NAME {
        return Err(OksirError::Format(format!("not a model file (format `{}`)", file.format)));
    }
    if file.version != FORMAT_VERSION {
        return Err(OksirError::Format(format!(
            "model file version {} is not supported (expected {FORMAT_VERSION})",
            file.version
        )));
    }
    let kernel = KernelConfig::new(file.kernel.family, file.kernel.sigma.0)
        .map_err(|e| OksirError::Format(e.to_string()))?;
    let cutpoints = file.cutpoints.as_ref().map(|c| c.iter().map(|r| r.0).collect::<Vec<_>>());
    let schedule = schedule_from(&file.eta_schedule)?;
    let config = OksirConfig {
        kernel,
        nu: if file.default_nu { None } else { file.nu.map(|r| r.0) },
        d: file.d,
        num_slices: file.num_slices,
        cutpoints: if file.fixed_cutpoints { cutpoints.clone() } else { None },
        eta_schedule: schedule,
        seed: file.seed,
        center: file.centering_enabled,
        pencil_order: file.pencil_order,
        pencil_scaling: file.pencil_scaling,
        power_iters: file.power_iters,
    };
    config.validate().map_err(|e| OksirError::Format(e.to_string()))?;
    let slice_config = cutpoints
        .map(SliceConfig::new)
        .transpose()
        .map_err(|e| OksirError::Format(e.to_string()))?;

    let fitted = match (file.dict, file.slices, file.phi, file.a_bar, file.scale_probes) {
        (None, None, None, None, None) => None,
        (Some(dict), Some(slices), Some(phi), Some(a_bar), Some(probes)) => {
            let nu = file.nu.ok_or_else(|| OksirError::Format("fitted model without nu".into()))?.0;
            let dict = Dictionary::from_parts(
                dict.samples.to_array("dict.samples")?,
                dict.k_tilde.to_array("dict.k_tilde")?,
                dict.k_tilde_inv.to_array("dict.k_tilde_inv")?,
                dict.ata.to_array("dict.ata")?,
                nu,
            )?;
            let m_vecs = slices.m_vecs.to_array("slices.m_vecs")?;
            let m_mats = slices
                .m_mats
                .iter()
                .map(|m| m.to_array("slices.m_mats"))
                .collect::<Result<Vec<_>>>()?;
            let slices = SliceState::from_parts(slices.counts, m_vecs.rows().into_iter().map(|r| r.to_owned()).collect(), m_mats)?;
            let proj = ProjectionState::from_parts(phi.to_array("phi")?, schedule, file.eta_scale.0)
                .map_err(|e| OksirError::Format(e.to_string()))?;
            Some(Fitted {
                dict,
                slices,
                proj,
                centering: CenteringState::from_parts(vec_of(&a_bar), file.centering_enabled, file.centering_count),
                probe_obj: PowerProbe::from_vector(vec_of(&probes.objective)),
                probe_con: PowerProbe::from_vector(vec_of(&probes.constraint)),
            })
        }
        _ => return Err(OksirError::Format("fitted state is incomplete".into())),
    };
    if let (Some(f), Some(sc)) = (&fitted, &slice_config) {
        if f.slices.num_slices() != sc.num_slices() {
            return Err(OksirError::Format("slice statistics do not match the cut-points".into()));
        }
    }
    if fitted.is_some() && slice_config.is_none() {
        return Err(OksirError::Format("fitted model without cut-points".into()));
    }
    let warmup = file
        .warmup_buffer
        .into_iter()
        .map(|s| StreamSample { x: vec_of(&s.x), y: s.y.0 })
        .collect();
    let model = OksirModel {
        config,
        nu: file.nu.map(|r| r.0),
        p: file.p,
        slice_config,
        fitted,
        warmup,
        t: file.t,
    };
    model
        .check_consistency()
        .map_err(|e| OksirError::Format(format!("inconsistent model file: {e}")))?;
    if let (Some(p), Some(f)) = (model.p, &model.fitted) {
        if f.dict.input_dim() != p {
            return Err(OksirError::Format("dictionary atoms do not match p".into()));
        }
    }
    if model.warmup.iter().any(|s| Some(s.x.len()) != model.p) {
        return Err(OksirError::Format("buffered samples do not match p".into()));
    }
    Ok(model)
}

pub fn to_json(model: &OksirModel) -> Result<String> {
    serde_json::to_string_pretty(&to_file(model)).map_err(|e| OksirError::Format(e.to_string()))
}

pub fn from_json(text: &str) -> Result<OksirModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| OksirError::Format(e.to_string()))?;
    from_file(file)
}

pub fn save(model: &OksirModel, path: &Path) -> Result<()> {
    let mut text = to_json(model)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<OksirModel> {
    from_json(&std::fs::read_to_string(path)?)
}

pub const BATCH_FORMAT_NAME: &str = "oksir-batch";

/// A fitted batch solution together with the training points it expands over.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchModel {
    pub result: BatchKsirResult,
    pub train_x: Array2<f64>,
}

impl BatchModel {
    pub fn transform(&self, xs: ndarray::ArrayView2<f64>) -> Result<Array2<f64>> {
        crate::error::check_dims("input columns", self.train_x.ncols(), xs.ncols())?;
        batch_transform(&self.result, self.train_x.view(), xs)
    }

    pub fn d(&self) -> usize {
        self.result.coeffs.ncols()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BatchFile {
    format: String,
    version: u32,
    kernel: KernelFile,
    d: usize,
    cutpoints: Vec<Real>,
    ridge: Real,
    eigenvalues: Vec<Real>,
    train: Matrix,
    coeffs: Matrix,
    gram_col_means: Vec<Real>,
    gram_mean: Real,
}

pub fn batch_to_json(model: &BatchModel) -> Result<String> {
    let r = &model.result;
    let file = BatchFile {
        format: BATCH_FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        kernel: KernelFile {
            family: r.kernel.family,
            sigma: Real(r.kernel.sigma),
        },
        d: r.coeffs.ncols(),
        cutpoints: reals(r.cutpoints.iter().copied()),
        ridge: Real(r.ridge),
        eigenvalues: reals(r.eigenvalues.iter().copied()),
        train: Matrix::from_array(&model.train_x),
        coeffs: Matrix::from_array(&r.coeffs),
        gram_col_means: reals(r.gram_col_means.iter().copied()),
        gram_mean: Real(r.gram_mean),
    };
    serde_json::to_string_pretty(&file).map_err(|e| OksirError::Format(e.to_string()))
}

pub fn batch_from_json(text: &str) -> Result<BatchModel> {
    let f: BatchFile = serde_json::from_str(text).map_err(|e| OksirError::Format(e.to_string()))?;
    if f.format != BATCH_FORMAT_NAME || f.version != FORMAT_VERSION {
        return Err(OksirError::Format(format!("unsupported batch model `{}` v{}", f.format, f.version)));
    }
    let kernel = KernelConfig::new(f.kernel.family, f.kernel.sigma.0).map_err(|e| OksirError::Format(e.to_string()))?;
    let train_x = f.train.to_array("train")?;
    let coeffs = f.coeffs.to_array("coeffs")?;
    let n = train_x.nrows();
    if coeffs.dim() != (n, f.d) || f.gram_col_means.len() != n || f.eigenvalues.len() != f.d {
        return Err(OksirError::Format("batch model parts disagree in size".into()));
    }
    Ok(BatchModel {
        result: BatchKsirResult {
            coeffs,
            eigenvalues: vec_of(&f.eigenvalues),
            ridge: f.ridge.0,
            kernel,
            cutpoints: f.cutpoints.iter().map(|r| r.0).collect(),
            gram_col_means: vec_of(&f.gram_col_means),
            gram_mean: f.gram_mean.0,
        },
        train_x,
    })
}

/// Either kind of model file, told apart by its `format` field.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Online(Box<OksirModel>),
    Batch(Box<BatchModel>),
}

impl AnyModel {
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            format: String,
        }
        let probe: Probe = serde_json::from_str(text).map_err(|e| OksirError::Format(e.to_string()))?;
        match probe.format.as_str() {
            FORMAT_NAME => Ok(AnyModel::Online(Box::new(from_json(text)?))),
            BATCH_FORMAT_NAME => Ok(AnyModel::Batch(Box::new(batch_from_json(text)?))),
            other => Err(OksirError::Format(format!("unknown model format `{other}`"))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        AnyModel::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn transform(&self, xs: ndarray::ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            AnyModel::Online(m) => m.transform_batch(xs),
            AnyModel::Batch(m) => m.transform(xs),
        }
    }

    pub fn d(&self) -> usize {
        match self {
            AnyModel::Online(m) => m.d(),
            AnyModel::Batch(m) => m.d(),
        }
    }
}

impl OksirModel {
    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        from_json(text)
    }
}
