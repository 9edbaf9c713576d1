//! Nonlinear convergence acceleration of fixed-point iterations.
//!
//! The crate bundles four layers:
//!
//! * [`tensor`]: dense tensor primitives and a seeded synthetic CP problem generator.
//! * [`cpd`]: the CP decomposition objective with its SD and ALS fixed-point maps,
//!   derivatives and fixed-point Jacobians.
//! * [`accel`]: Anderson, NGMRES and Nesterov-type accelerators (nonstationary and
//!   stationary), a Moré–Thuente line search and convergence-factor estimation.
//! * [`spectral`] and [`gmres`]: companion matrices, closed-form optimal coefficients
//!   and bounds, GMRES, degeneracy projection and field-of-values bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accel;
pub mod cpd;
pub mod error;
pub mod gmres;
pub mod linalg;
pub mod rng;
pub mod spectral;
pub mod tensor;

pub use accel::{
    estimate_convergence_factor, run_accelerated, run_stationary, FixedPointProblem, MethodKind,
    MethodSpec, StopCriteria, Trace, TraceRecord, Window,
};
pub use cpd::{CpdProblem, FactorPoint, FixedPointMapKind};
pub use error::{Error, Result};
pub use gmres::{FovReport, GmresHistory};
pub use spectral::{SpectralReport, StationaryKind};
pub use tensor::{DenseTensor, SyntheticSpec};

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;
