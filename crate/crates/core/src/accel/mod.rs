//! Accelerated fixed-point iterations.

mod estimate;
mod line_search;
mod mixing;
mod run;

pub use estimate::{
    estimate_convergence_factor, estimate_convergence_factor_with_floor, estimate_norm_factor,
    NormColumn, DEFAULT_NOISE_FLOOR,
};
pub use line_search::{line_search_cubic, LineSearchOutcome, LineSearchParams};
pub use mixing::{solve_mixing, MixingSolution, DROP_TOLERANCE};
pub use run::{run_accelerated, run_stationary};

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fixed-point iteration `x <- q(x)` for the equation `g(x) = 0`.
pub trait FixedPointProblem {
    fn dim(&self) -> usize;
    /// The fixed-point map `q`.
    fn map(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Merit function used for globalization and traces.
    fn objective(&self, x: &[f64]) -> Result<f64>;
    /// The nonlinear equation residual `g`.
    fn equation_residual(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// True when `g` is the gradient of `objective`, which line searches need.
    fn residual_is_gradient(&self) -> bool;
}

impl<P: FixedPointProblem + ?Sized> FixedPointProblem for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn map(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).map(x)
    }
    fn objective(&self, x: &[f64]) -> Result<f64> {
        (**self).objective(x)
    }
    fn equation_residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).equation_residual(x)
    }
    fn residual_is_gradient(&self) -> bool {
        (**self).residual_is_gradient()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodKind {
    FixedPoint,
    Aa,
    Ngmres,
    NesterovRestart,
    Saa,
    Sngmres,
    SngmresR,
}

impl MethodKind {
    pub fn is_stationary(self) -> bool {
        matches!(self, Self::Saa | Self::Sngmres | Self::SngmresR)
    }
}

/// History window `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Finite(usize),
    Unbounded,
}

impl Window {
    /// Number of past entries kept at iteration `k`.
    pub fn effective(self, k: usize) -> usize {
        match self {
            Self::Finite(m) => m.min(k),
            Self::Unbounded => k,
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(m) => write!(f, "{m}"),
            Self::Unbounded => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub kind: MethodKind,
    pub window: Window,
    /// Fixed coefficients of the stationary kinds; `beta_0` first for sNGMRES.
    pub betas: Vec<f64>,
    /// Safeguard nonstationary AA/NGMRES steps with a line search.
    pub globalize: bool,
    pub line_search: LineSearchParams,
}

impl MethodSpec {
    fn with(kind: MethodKind, window: Window, betas: Vec<f64>) -> Self {
        Self {
            kind,
            window,
            betas,
            globalize: false,
            line_search: LineSearchParams::default(),
        }
    }

    pub fn fixed_point() -> Self {
        Self::with(MethodKind::FixedPoint, Window::Finite(0), vec![])
    }

    pub fn aa(window: Window) -> Self {
        Self::with(MethodKind::Aa, window, vec![])
    }

    pub fn ngmres(window: Window) -> Self {
        Self::with(MethodKind::Ngmres, window, vec![])
    }

    pub fn nesterov() -> Self {
        Self::with(MethodKind::NesterovRestart, Window::Finite(1), vec![])
    }

    /// sAA(m) with `betas = [beta_1, ..., beta_m]`.
    pub fn saa(betas: Vec<f64>) -> Self {
        Self::with(MethodKind::Saa, Window::Finite(betas.len()), betas)
    }

    /// sNGMRES(m) with `betas = [beta_0, ..., beta_m]`.
    pub fn sngmres(betas: Vec<f64>) -> Self {
        let m = betas.len().saturating_sub(1);
        Self::with(MethodKind::Sngmres, Window::Finite(m), betas)
    }

    /// sNGMRES-R(m) with `betas = [beta_1, ..., beta_m]`.
    pub fn sngmres_r(betas: Vec<f64>) -> Self {
        Self::with(MethodKind::SngmresR, Window::Finite(betas.len()), betas)
    }

    pub fn globalized(mut self, on: bool) -> Self {
        self.globalize = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.line_search.validate()?;
        if self.kind.is_stationary() {
            let Window::Finite(m) = self.window else {
                return Err(Error::Argument(format!("{self} needs a finite window")));
            };
            let need = if self.kind == MethodKind::Sngmres { m + 1 } else { m };
            if self.betas.len() != need {
                return Err(Error::Argument(format!(
                    "{self} needs {need} coefficients, got {}",
                    self.betas.len()
                )));
            }
            if self.betas.iter().any(|b| !b.is_finite()) {
                return Err(Error::Argument(format!("{self} has non-finite coefficients")));
            }
        } else if !self.betas.is_empty() {
            return Err(Error::Argument(format!("{self} takes no fixed coefficients")));
        }
        Ok(())
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            MethodKind::FixedPoint => f.write_str("FP"),
            MethodKind::Aa => write!(f, "AA({})", self.window),
            MethodKind::Ngmres => write!(f, "NGMRES({})", self.window),
            MethodKind::NesterovRestart => f.write_str("Nesterov"),
            MethodKind::Saa => write!(f, "sAA({})", self.window),
            MethodKind::Sngmres => write!(f, "sNGMRES({})", self.window),
            MethodKind::SngmresR => write!(f, "sNGMRES-R({})", self.window),
        }
    }
}

/// Stopping rules; a zero tolerance disables its test.
#[derive(Debug, Clone, PartialEq)]
pub struct StopCriteria {
    pub max_iter: usize,
    /// Stop when `|f_{k-1} - f_k| <= f_tol * max(1, |f_k|)`.
    pub f_tol: f64,
    /// Stop when `||g(x_k)|| <= g_tol`.
    pub g_tol: f64,
    /// Optimal value used for gap-based stopping.
    pub f_star: Option<f64>,
    /// Stop when `f_k - f_star <= gap_tol`.
    pub gap_tol: f64,
    /// Keep a copy of every iterate in the trace.
    pub keep_iterates: bool,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            f_tol: 0.0,
            g_tol: 0.0,
            f_star: None,
            gap_tol: 0.0,
            keep_iterates: false,
        }
    }
}

impl StopCriteria {
    pub fn max_iter(max_iter: usize) -> Self {
        Self {
            max_iter,
            ..Self::default()
        }
    }

    fn check(&self, f: f64, prev_f: Option<f64>, gnorm: f64) -> Option<TraceStatus> {
        if self.g_tol > 0.0 && gnorm <= self.g_tol {
            return Some(TraceStatus::GradientTolerance);
        }
        if let Some(fs) = self.f_star {
            if self.gap_tol > 0.0 && f - fs <= self.gap_tol {
                return Some(TraceStatus::GapTolerance);
            }
        }
        if let Some(pf) = prev_f {
            if self.f_tol > 0.0 && (pf - f).abs() <= self.f_tol * f.abs().max(1.0) {
                return Some(TraceStatus::FunctionTolerance);
            }
        }
        None
    }
}

/// How the iterate of a record was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Initial,
    /// `x_{k+1} = q(x_k)`, including warm-start steps.
    Plain,
    Accelerated,
    LineSearch,
    /// Globalization rejected the accelerated candidate.
    Fallback,
    /// Nesterov function restart.
    Restart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStatus {
    MaxIterations,
    FunctionTolerance,
    GradientTolerance,
    GapTolerance,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub f: f64,
    /// `||g(x_k)||`
    pub gnorm: f64,
    /// `||x_k - q(x_k)||`
    pub rnorm: f64,
    /// Square root of the mixing objective of the step taken from `x_k`.
    pub mix_rnorm: Option<f64>,
    pub step: StepKind,
    pub x: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub method: String,
    pub records: Vec<TraceRecord>,
    pub status: TraceStatus,
    /// Last iterate reached.
    pub final_x: Vec<f64>,
}

impl Trace {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn f_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.f).collect()
    }

    /// CSV with header `k,f,gnorm,rnorm,fgap`; `fgap` is empty without `f_star`.
    pub fn write_csv<W: Write>(&self, mut w: W, f_star: Option<f64>) -> Result<()> {
        writeln!(w, "k,f,gnorm,rnorm,fgap")?;
        for r in &self.records {
            let gap = f_star.map(|fs| fmt_float(r.f - fs)).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{}",
                r.k,
                fmt_float(r.f),
                fmt_float(r.gnorm),
                fmt_float(r.rnorm),
                gap
            )?;
        }
        Ok(())
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}
