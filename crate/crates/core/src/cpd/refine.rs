use super::{CpdProblem, FactorPoint, FixedPointMapKind};
use crate::error::{Error, Result};
use crate::linalg;

/// Iterates `map` until `||grad f|| <= tol * (1 + ||grad f(x0)||)`.
pub fn refine_fixed_point(
    p: &CpdProblem,
    x0: &FactorPoint,
    method: FixedPointMapKind,
    max_iter: usize,
    tol: f64,
) -> Result<FactorPoint> {
    let mut x = x0.clone();
    let g0 = linalg::norm(&p.gradient(&x)?);
    let target = tol * (1.0 + g0);
    let mut best = (g0, x.clone());
    let mut gnorm = g0;
    for it in 0..=max_iter {
        if gnorm <= target {
            log::debug!("refinement converged after {it} sweeps, gradient norm {gnorm:e}");
            return Ok(x);
        }
        if it == max_iter {
            break;
        }
        x = p.apply_map(&x, method)?;
        gnorm = linalg::norm(&p.gradient(&x)?);
        if !gnorm.is_finite() {
            break;
        }
        if gnorm < best.0 {
            best = (gnorm, x.clone());
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        best_gnorm: best.0,
        best: best.1.flatten(),
    })
}
