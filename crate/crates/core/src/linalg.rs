//! Small dense linear-algebra helpers shared by the analysis modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

const SCHUR_EPS: f64 = 1e-15;
/// QR sweeps allowed per row before a Schur attempt is abandoned.
const SCHUR_ITER_PER_ROW: usize = 60;
/// Deflation thresholds tried in turn. Defective eigenvalues stall the strict one.
const SCHUR_RETRY_EPS: [f64; 3] = [1e-14, 1e-12, 1e-10];

/// Eigenvalues of a general real square matrix, via the real Schur form.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::Argument(format!(
            "eigenvalues of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entry".into()));
    }
    let n = m.nrows();
    let budget = SCHUR_ITER_PER_ROW * n;
    if let Some(s) = m.clone().try_schur(SCHUR_EPS, budget) {
        return Ok(s.complex_eigenvalues().iter().copied().collect());
    }
    for (attempt, &eps) in SCHUR_RETRY_EPS.iter().enumerate() {
        let mut rng = SeededRng::new(0x5eed ^ attempt as u64);
        let q = DMatrix::from_vec(n, n, rng.normal_vec(n * n)).qr().q();
        let t = q.transpose() * m * &q;
        if let Some(s) = t.try_schur(eps, budget) {
            log::debug!("Schur iteration converged after {} similarity retries", attempt + 1);
            return Ok(s.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(Error::Numerical("Schur iteration did not converge".into()))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut eigs: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(f64::total_cmp);
    eigs
}

/// Splits `eigs` into (kept, excluded) where `excluded` holds the `count`
/// values closest to `target`. Ties are broken by original position.
pub fn exclude_nearest(
    eigs: &[Complex64],
    count: usize,
    target: f64,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut order: Vec<usize> = (0..eigs.len()).collect();
    order.sort_by(|&a, &b| {
        let da = (eigs[a] - target).norm();
        let db = (eigs[b] - target).norm();
        da.total_cmp(&db).then(a.cmp(&b))
    });
    let mut excluded_mask = vec![false; eigs.len()];
    for &i in order.iter().take(count) {
        excluded_mask[i] = true;
    }
    let mut kept = Vec::with_capacity(eigs.len().saturating_sub(count));
    let mut excluded = Vec::with_capacity(count);
    for (i, e) in eigs.iter().enumerate() {
        if excluded_mask[i] {
            excluded.push(*e);
        } else {
            kept.push(*e);
        }
    }
    (kept, excluded)
}

/// Roots of the monic polynomial `z^d + c[0] z^{d-1} + ... + c[d-1]`.
pub fn monic_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    // exact zero roots are split off first
    let nz = coeffs.iter().rev().take_while(|c| c.norm() == 0.0).count();
    let head = &coeffs[..coeffs.len() - nz];
    let mut roots = nonzero_tail_roots(head);
    roots.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), nz));
    roots
}

fn nonzero_tail_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    match coeffs.len() {
        0 => Vec::new(),
        1 => vec![-coeffs[0]],
        2 => {
            // z^2 + b z + c, written to avoid cancellation
            let (b, c) = (coeffs[0], coeffs[1]);
            let disc = (b * b - 4.0 * c).sqrt();
            let s = if (b.conj() * disc).re >= 0.0 { -b - disc } else { -b + disc };
            if s.norm() == 0.0 {
                return vec![Complex64::new(0.0, 0.0); 2];
            }
            vec![s / 2.0, 2.0 * c / s]
        }
        d => {
            let mut comp = DMatrix::<Complex64>::zeros(d, d);
            for (j, c) in coeffs.iter().enumerate() {
                comp[(0, j)] = -c;
            }
            for i in 1..d {
                comp[(i, i - 1)] = Complex64::new(1.0, 0.0);
            }
            comp.try_schur(SCHUR_EPS, 100 * d)
                .and_then(|s| s.eigenvalues())
                .map(|v| v.iter().copied().collect())
                .unwrap_or_else(|| durand_kerner(coeffs))
        }
    }
}

fn durand_kerner(coeffs: &[Complex64]) -> Vec<Complex64> {
    let d = coeffs.len();
    let eval = |z: Complex64| coeffs.iter().fold(Complex64::new(1.0, 0.0), |acc, c| acc * z + c);
    let radius = 1.0 + coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..d).map(|k| seed.powu(k as u32) * radius).collect();
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..d {
            let mut den = Complex64::new(1.0, 0.0);
            for j in (0..d).filter(|&j| j != i) {
                den *= z[i] - z[j];
            }
            if den.norm() == 0.0 {
                continue;
            }
            let delta = eval(z[i]) / den;
            z[i] -= delta;
            moved = moved.max(delta.norm());
        }
        if moved <= 1e-15 * radius {
            break;
        }
    }
    z
}

/// Solves `X * gamma = rhs` for symmetric positive (semi)definite `gamma`.
///
/// Falls back to a ridge of `1e-12 * trace(gamma) / r` when the Cholesky
/// factorization fails.
pub fn solve_right_spd(rhs: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = gamma.nrows();
    let factor = match gamma.clone().cholesky() {
        Some(c) => c,
        None => {
            let ridge = 1e-12 * gamma.trace() / r as f64;
            let mut reg = gamma.clone();
            for i in 0..r {
                reg[(i, i)] += ridge;
            }
            reg.cholesky().ok_or_else(|| {
                Error::Numerical(format!(
                    "Gram matrix singular beyond ridge {ridge:.3e} (diag {:?})",
                    gamma.diagonal().as_slice()
                ))
            })?
        }
    };
    // X gamma = rhs  <=>  gamma X^T = rhs^T
    let xt = factor.solve(&rhs.transpose());
    Ok(xt.transpose())
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a + s * b`
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn quadratic_roots_match_definition() {
        // (z - 1)(z - 2) = z^2 - 3z + 2
        let mut roots = monic_roots(&[c(-3.0, 0.0), c(2.0, 0.0)]);
        roots.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!((roots[0] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((roots[1] - c(2.0, 0.0)).norm() < 1e-14);
        // z^2 + 1
        let roots = monic_roots(&[c(0.0, 0.0), c(1.0, 0.0)]);
        for z in roots {
            assert!((z * z + 1.0).norm() < 1e-14);
        }
    }

    #[test]
    fn cubic_roots_satisfy_polynomial() {
        let coeffs = [c(0.3, -0.1), c(-0.7, 0.2), c(0.05, 0.0)];
        let roots = monic_roots(&coeffs);
        assert_eq!(roots.len(), 3);
        for z in roots {
            let p = z * z * z + coeffs[0] * z * z + coeffs[1] * z + coeffs[2];
            assert!(p.norm() < 1e-12, "residual {}", p.norm());
        }
    }

    #[test]
    fn zero_polynomials_terminate() {
        let z = c(0.0, 0.0);
        assert_eq!(monic_roots(&[z, z, z]), vec![z; 3]);
        let roots = monic_roots(&[c(-1.0, 0.0), z, z]);
        assert_eq!(roots.len(), 3);
        assert_eq!(roots.iter().filter(|r| r.norm() == 0.0).count(), 2);
        assert!((roots[0] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn durand_kerner_fallback_finds_roots() {
        let coeffs = [c(0.3, -0.1), c(-0.7, 0.2), c(0.05, 0.0), c(0.01, 0.02)];
        for z in durand_kerner(&coeffs) {
            let p = coeffs.iter().fold(c(1.0, 0.0), |a, k| a * z + k);
            assert!(p.norm() < 1e-12);
        }
    }

    #[test]
    fn exclusion_picks_nearest() {
        let eigs = [c(1.0, 0.0), c(0.5, 0.0), c(1.0 - 1e-9, 0.0), c(0.3, 0.0)];
        let (kept, excluded) = exclude_nearest(&eigs, 2, 1.0);
        assert_eq!(excluded.len(), 2);
        assert_eq!(kept, vec![c(0.5, 0.0), c(0.3, 0.0)]);
    }

    #[test]
    fn spd_solve_with_singular_gram_uses_ridge() {
        let gamma = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let rhs = DMatrix::from_row_slice(1, 2, &[2.0, 2.0]);
        let x = solve_right_spd(&rhs, &gamma).unwrap();
        let back = &x * &gamma;
        assert!((back - rhs).norm() < 1e-3);
    }
}
