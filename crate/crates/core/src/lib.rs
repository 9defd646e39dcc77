//! Online kernel sliced inverse regression.
//!
//! A streaming estimator of nonlinear sufficient-dimension-reduction directions. Samples
//! `(x, y)` arrive one at a time; an approximate-linear-dependence dictionary keeps the
//! kernel feature space finite, per-slice statistics are updated recursively, and a
//! stochastic generalized eigen-solver tracks `d` directions. [`OksirModel`] ties the
//! pieces together.
//!
//! ```
//! use oksir::{OksirConfig, OksirModel};
//!
//! let mut cfg = OksirConfig::new(1);
//! cfg.cutpoints = Some(vec![0.0]);
//! let mut model = OksirModel::new(cfg).unwrap();
//! for i in 0..50 {
//!     let x = [(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()];
//!     model.partial_fit(&x, x[0] + 0.1 * x[1]).unwrap();
//! }
//! let v = model.transform(&[0.2, 0.3]).unwrap();
//! assert_eq!(v.len(), 1);
//! ```

pub mod batch;
pub mod bench;
pub mod centering;
pub mod cli;
pub mod data;
pub mod dictionary;
pub mod eigensolver;
pub mod error;
pub mod evaluation;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod persist;
pub mod simgen;
pub mod slicing;

pub use batch::{batch_ksir, batch_transform, BatchKsirResult};
pub use eigensolver::{EtaSchedule, PencilOrder, PencilScaling, ProjectionState};
pub use error::{OksirError, Result};
pub use kernel::{KernelConfig, KernelFamily};
pub use model::{OksirConfig, OksirModel, StepReport};
pub use slicing::{SliceConfig, SliceState};
