//! Synthetic streams with known summary statistics.
//!
//! * `linear_ratio`: `x ~ N_p(0, Σ)` with `Σ_ij = 0.5^|i-j|`,
//!   `y = (x₁+x₂+x₃) / (0.5 + (x₄+x₅+1.5)²) + ε`, truths `v₁ = x₁+x₂+x₃`, `v₂ = x₄+x₅`.
//! * `sine_product`: `x ~ N_p(0, I)`, `y = (sin x₁ + sin x₂)(1 + sin x₃) + 0.1 ε`,
//!   truths `v₁ = sin x₁ + sin x₂`, `v₂ = 1 + sin x₃`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{OksirError, Result};

pub const AR_COEF: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimModel {
    LinearRatio,
    SineProduct,
}

impl SimModel {
    pub fn min_p(self) -> usize {
        match self {
            SimModel::LinearRatio => 5,
            SimModel::SineProduct => 3,
        }
    }
}

impl std::str::FromStr for SimModel {
    type Err = OksirError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear_ratio" | "linear-ratio" | "linear" => Ok(SimModel::LinearRatio),
            "sine_product" | "sine-product" | "sine" => Ok(SimModel::SineProduct),
            _ => Err(OksirError::input(format!("unknown simulation model `{s}`"))),
        }
    }
}

/// How correlated predictors are drawn for `linear_ratio`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceSampling {
    /// Cholesky factor of the explicit covariance.
    #[default]
    Cholesky,
    /// `x₁ = z₁`, `x_j = 0.5 x_{j-1} + √0.75 z_j`; same distribution, `O(p)` per draw.
    Recursive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: SimModel,
    pub p: usize,
    pub n: usize,
    pub seed: u64,
    pub sampling: CovarianceSampling,
}

impl SimConfig {
    pub fn new(model: SimModel, p: usize, n: usize, seed: u64) -> Self {
        SimConfig {
            model,
            p,
            n,
            seed,
            sampling: CovarianceSampling::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSample {
    pub x: Array1<f64>,
    pub y: f64,
    pub v1: f64,
    pub v2: f64,
}

/// `Σ_ij = 0.5^|i-j|`.
pub fn ar_covariance(p: usize) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(i, j)| AR_COEF.powi((i as i32 - j as i32).abs()))
}

/// Response and truths for a given `x` and noise draw.
pub fn response(model: SimModel, x: &[f64], noise: f64) -> (f64, f64, f64) {
    match model {
        SimModel::LinearRatio => {
            let v1 = x[0] + x[1] + x[2];
            let v2 = x[3] + x[4];
            let y = v1 / (0.5 + (v2 + 1.5).powi(2)) + noise;
            (y, v1, v2)
        }
        SimModel::SineProduct => {
            let v1 = x[0].sin() + x[1].sin();
            let v2 = 1.0 + x[2].sin();
            (v1 * v2 + 0.1 * noise, v1, v2)
        }
    }
}

/// Seeded stream of `n` samples.
pub struct SimStream {
    cfg: SimConfig,
    rng: ChaCha8Rng,
    chol: Option<Array2<f64>>,
    emitted: usize,
}

impl SimStream {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        if cfg.p < cfg.model.min_p() {
            return Err(OksirError::input(format!(
                "{:?} needs p >= {}, got {}",
                cfg.model,
                cfg.model.min_p(),
                cfg.p
            )));
        }
        let chol = match (cfg.model, cfg.sampling) {
            (SimModel::LinearRatio, CovarianceSampling::Cholesky) => {
                let sigma = ar_covariance(cfg.p);
                let dm = DMatrix::from_fn(cfg.p, cfg.p, |i, j| sigma[[i, j]]);
                let l = dm
                    .cholesky()
                    .ok_or_else(|| OksirError::EigenSolver("covariance is not positive definite".into()))?
                    .l();
                Some(Array2::from_shape_fn((cfg.p, cfg.p), |(i, j)| l[(i, j)]))
            }
            _ => None,
        };
        Ok(SimStream {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            chol,
            emitted: 0,
        })
    }

    fn draw(&mut self) -> SimSample {
        let p = self.cfg.p;
        let z: Array1<f64> = (0..p).map(|_| StandardNormal.sample(&mut self.rng)).collect();
        let x = match (self.cfg.model, &self.chol) {
            (SimModel::SineProduct, _) => z,
            (SimModel::LinearRatio, Some(l)) => l.dot(&z),
            (SimModel::LinearRatio, None) => {
                let s = (1.0 - AR_COEF * AR_COEF).sqrt();
                let mut x = Array1::zeros(p);
                x[0] = z[0];
                for j in 1..p {
                    x[j] = AR_COEF * x[j - 1] + s * z[j];
                }
                x
            }
        };
        let noise: f64 = StandardNormal.sample(&mut self.rng);
        let (y, v1, v2) = response(self.cfg.model, x.as_slice().expect("contiguous"), noise);
        SimSample { x, y, v1, v2 }
    }
}

impl Iterator for SimStream {
    type Item = SimSample;

    fn next(&mut self) -> Option<SimSample> {
        if self.emitted >= self.cfg.n {
            return None;
        }
        self.emitted += 1;
        Some(self.draw())
    }
}

/// A generated data set held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    /// `n × 2` ground-truth summary statistics.
    pub v: Array2<f64>,
}

impl SimData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

pub fn generate(cfg: SimConfig) -> Result<SimData> {
    let (n, p) = (cfg.n, cfg.p);
    let mut x = Array2::zeros((n, p));
    let mut y = Array1::zeros(n);
    let mut v = Array2::zeros((n, 2));
    for (i, s) in SimStream::new(cfg)?.enumerate() {
        x.row_mut(i).assign(&s.x);
        y[i] = s.y;
        v[[i, 0]] = s.v1;
        v[[i, 1]] = s.v2;
    }
    Ok(SimData { x, y, v })
}

/// Training stream followed by a held-out block of `n_test` samples from the same
/// generator.
pub fn generate_split(cfg: SimConfig, n_test: usize) -> Result<(SimData, SimData)> {
    let n_train = cfg.n;
    let all = generate(SimConfig { n: n_train + n_test, ..cfg })?;
    let cut = |lo: usize, hi: usize| SimData {
        x: all.x.slice(ndarray::s![lo..hi, ..]).to_owned(),
        y: all.y.slice(ndarray::s![lo..hi]).to_owned(),
        v: all.v.slice(ndarray::s![lo..hi, ..]).to_owned(),
    };
    Ok((cut(0, n_train), cut(n_train, n_train + n_test)))
}
