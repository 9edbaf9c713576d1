use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CpdProblem, FactorPoint, FixedPointMapKind};
use crate::error::{Error, Result};
use crate::linalg;

/// How derivatives of the CP problem are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    #[default]
    Analytic,
    FiniteDifference,
}

/// `kappa_bar = L / ell` after dropping the degenerate eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub kappa_bar: f64,
    #[serde(rename = "L")]
    pub l_max: f64,
    pub ell: f64,
}

/// Lower block triangular part of `h`, block diagonal included.
pub fn lower_block_triangular(h: &DMatrix<f64>, block_sizes: &[usize]) -> DMatrix<f64> {
    let mut starts = Vec::with_capacity(block_sizes.len());
    let mut acc = 0;
    for &b in block_sizes {
        starts.push(acc);
        acc += b;
    }
    let block_of = |i: usize| starts.iter().rposition(|&s| s <= i).unwrap_or(0);
    DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| {
        if block_of(j) <= block_of(i) {
            h[(i, j)]
        } else {
            0.0
        }
    })
}

/// `I - M^{-1} H` with `M` the lower block triangular part of `H`.
pub fn gauss_seidel_jacobian(h: &DMatrix<f64>, block_sizes: &[usize]) -> Result<DMatrix<f64>> {
    if block_sizes.iter().sum::<usize>() != h.nrows() || !h.is_square() {
        return Err(Error::Argument(format!(
            "block sizes {block_sizes:?} do not partition a {}x{} matrix",
            h.nrows(),
            h.ncols()
        )));
    }
    let m = lower_block_triangular(h, block_sizes);
    let lu = m.lu();
    let minv_h = lu.solve(h).ok_or_else(|| {
        Error::Numerical("lower block triangular part of the Hessian is singular".into())
    })?;
    if minv_h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "lower block triangular solve produced non-finite entries".into(),
        ));
    }
    Ok(DMatrix::identity(h.nrows(), h.ncols()) - minv_h)
}

/// Jacobian of a fixed-point map at a fixed point `xstar`.
pub fn jacobian_fixed_point(
    p: &CpdProblem,
    map: FixedPointMapKind,
    xstar: &FactorPoint,
    mode: DerivativeMode,
) -> Result<DMatrix<f64>> {
    let gnorm = linalg::norm(&p.gradient(xstar)?);
    let tol = p.fixed_point_tolerance();
    if gnorm > tol {
        return Err(Error::Precondition(format!(
            "point is not a fixed point: gradient norm {gnorm:e} exceeds {tol:e}"
        )));
    }
    match mode {
        DerivativeMode::Analytic => {
            let h = p.hessian(xstar, DerivativeMode::Analytic)?;
            match map {
                FixedPointMapKind::Sd { alpha } => {
                    Ok(DMatrix::identity(h.nrows(), h.ncols()) - h * alpha)
                }
                FixedPointMapKind::Als => gauss_seidel_jacobian(&h, &xstar.block_sizes()),
            }
        }
        DerivativeMode::FiniteDifference => map_jacobian_fd(p, map, xstar),
    }
}

fn map_jacobian_fd(p: &CpdProblem, map: FixedPointMapKind, x: &FactorPoint) -> Result<DMatrix<f64>> {
    let flat = x.flatten();
    let n = flat.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut probe = flat.clone();
    for i in 0..n {
        let step = 1e-6 * (1.0 + flat[i].abs());
        probe[i] = flat[i] + step;
        let qp = p.apply_map(&p.point(&probe)?, map)?.flatten();
        probe[i] = flat[i] - step;
        let qm = p.apply_map(&p.point(&probe)?, map)?.flatten();
        probe[i] = flat[i];
        for (row, (a, b)) in qp.iter().zip(&qm).enumerate() {
            jac[(row, i)] = (a - b) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// Condition number of `h` with its `num_zero` smallest-magnitude eigenvalues excluded.
pub fn modified_condition_number(h: &DMatrix<f64>, num_zero: usize) -> Result<ConditionReport> {
    if !h.is_square() || num_zero >= h.nrows() {
        return Err(Error::Argument(format!(
            "cannot drop {num_zero} eigenvalues of a {}x{} matrix",
            h.nrows(),
            h.ncols()
        )));
    }
    let mut eigs = linalg::symmetric_eigenvalues(h);
    eigs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let kept = &eigs[num_zero..];
    let bad: Vec<f64> = kept.iter().copied().filter(|&v| v <= 0.0).collect();
    if !bad.is_empty() {
        log::warn!("nonpositive eigenvalues remain after exclusion: {bad:?}");
        return Err(Error::DegenerateSpectrum(bad));
    }
    let l_max = kept.iter().copied().fold(f64::MIN, f64::max);
    let ell = kept.iter().copied().fold(f64::MAX, f64::min);
    Ok(ConditionReport {
        kappa_bar: l_max / ell,
        l_max,
        ell,
    })
}
