//! Mercer kernels over real vectors.
//!
//! The additive Gaussian kernel sums one univariate Gaussian per coordinate,
//! `k(x, z) = Σ_j exp(-(x_j - z_j)² / (2σ²))`, so `k(x, x) = p` for every `x`.
//! The isotropic RBF kernel `exp(-‖x - z‖² / (2σ²))` is offered as an alternative.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, OksirError, Result};

pub const DEFAULT_SIGMA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    AdditiveGaussian,
    GaussianRbf,
}

impl std::str::FromStr for KernelFamily {
    type Err = OksirError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive_gaussian" | "additive-gaussian" | "additive" => Ok(KernelFamily::AdditiveGaussian),
            "gaussian_rbf" | "gaussian-rbf" | "rbf" => Ok(KernelFamily::GaussianRbf),
            other => Err(OksirError::input(format!("unknown kernel family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub family: KernelFamily,
    /// Window width σ.
    pub sigma: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            family: KernelFamily::AdditiveGaussian,
            sigma: DEFAULT_SIGMA,
        }
    }
}

impl KernelConfig {
    pub fn new(family: KernelFamily, sigma: f64) -> Result<Self> {
        let cfg = KernelConfig { family, sigma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn additive_gaussian(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::AdditiveGaussian, sigma)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(OksirError::InvalidKernel(format!(
                "sigma must be a positive finite number, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Evaluates `k(x, z)`; fails only on a length mismatch.
    pub fn eval(&self, x: ArrayView1<f64>, z: ArrayView1<f64>) -> Result<f64> {
        check_dims("kernel argument", x.len(), z.len())?;
        if x.is_empty() {
            return Err(OksirError::input("kernel arguments must have at least one coordinate"));
        }
        Ok(self.eval_unchecked(x, z))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: ArrayView1<f64>, z: ArrayView1<f64>) -> f64 {
        let scale = -0.5 / (self.sigma * self.sigma);
        match self.family {
            KernelFamily::AdditiveGaussian => x
                .iter()
                .zip(z.iter())
                .map(|(a, b)| {
                    let diff = a - b;
                    (scale * diff * diff).exp()
                })
                .sum(),
            KernelFamily::GaussianRbf => {
                let sq: f64 = x
                    .iter()
                    .zip(z.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (scale * sq).exp()
            }
        }
    }

    /// Kernel vector of `x` against every row of `atoms`.
    pub fn vector(&self, atoms: ArrayView2<f64>, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if atoms.nrows() == 0 {
            return Err(OksirError::state("kernel vector requested against an empty dictionary"));
        }
        check_dims("query point", atoms.ncols(), x.len())?;
        Ok(atoms.rows().into_iter().map(|row| self.eval_unchecked(row, x)).collect())
    }

    /// Dense Gram matrix between the rows of `a` and the rows of `b`.
    pub fn gram(&self, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<ndarray::Array2<f64>> {
        check_dims("gram operands", a.ncols(), b.ncols())?;
        Ok(ndarray::Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| {
            self.eval_unchecked(a.row(i), b.row(j))
        }))
    }
}
