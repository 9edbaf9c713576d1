//! GMRES, degeneracy projection, field of values and the Beckermann bound.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::accel::{fmt_float, FixedPointProblem};
use crate::error::{Error, Result};
use crate::linalg;

/// The affine map `q(x) = (I - P A) x + P b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    jacobian: DMatrix<f64>,
    shift: DVector<f64>,
    system: DMatrix<f64>,
    rhs: DVector<f64>,
}

pub fn linear_fixed_point_map(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<AffineMap> {
    let n = a.nrows();
    if !a.is_square() || p.shape() != (n, n) || b.len() != n {
        return Err(Error::Argument(format!(
            "dimension mismatch: P {:?}, A {:?}, b {}",
            p.shape(),
            a.shape(),
            b.len()
        )));
    }
    let system = p * a;
    Ok(AffineMap {
        jacobian: DMatrix::identity(n, n) - &system,
        shift: p * b,
        rhs: p * b,
        system,
    })
}

impl AffineMap {
    /// `I - P A`
    pub fn jacobian(&self) -> &DMatrix<f64> {
        &self.jacobian
    }

    /// The preconditioned system `(P A, P b)` whose residual is `x - q(x)`.
    pub fn preconditioned_system(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.system, &self.rhs)
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.jacobian * x + &self.shift
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.shift.len() {
            return Err(Error::Argument(format!(
                "point of length {} for a map of dimension {}",
                x.len(),
                self.shift.len()
            )));
        }
        Ok(())
    }
}

impl FixedPointProblem for AffineMap {
    fn dim(&self) -> usize {
        self.shift.len()
    }

    fn map(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self.apply(&DVector::from_column_slice(x)).as_slice().to_vec())
    }

    /// `½‖x - q(x)‖²`
    fn objective(&self, x: &[f64]) -> Result<f64> {
        let g = self.equation_residual(x)?;
        Ok(0.5 * linalg::dot(&g, &g))
    }

    fn equation_residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let q = self.map(x)?;
        Ok(linalg::sub(x, &q))
    }

    fn residual_is_gradient(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmresHistory {
    /// `‖r_k‖` for `k = 0, 1, ...`
    pub rnorms: Vec<f64>,
    pub solution: Vec<f64>,
    pub converged: bool,
}

impl GmresHistory {
    pub fn iterations(&self) -> usize {
        self.rnorms.len().saturating_sub(1)
    }

    pub fn relative(&self) -> Vec<f64> {
        let r0 = self.rnorms[0];
        self.rnorms
            .iter()
            .map(|r| if r0 > 0.0 { r / r0 } else { 0.0 })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,rnorm")?;
        for (k, r) in self.rnorms.iter().enumerate() {
            writeln!(w, "{k},{}", fmt_float(*r))?;
        }
        Ok(())
    }
}

struct Arnoldi {
    /// Orthonormal Krylov basis, one column per vector.
    basis: Vec<DVector<f64>>,
    /// Hessenberg columns, column `j` has length `j + 2`.
    hess: Vec<Vec<f64>>,
}

impl Arnoldi {
    /// Extends the basis by one vector. Returns false on breakdown.
    fn step(&mut self, a: &DMatrix<f64>) -> bool {
        let j = self.basis.len() - 1;
        let mut w = a * &self.basis[j];
        let scale = w.norm();
        let mut h = vec![0.0; j + 2];
        for _ in 0..2 {
            for (i, v) in self.basis.iter().enumerate() {
                let c = v.dot(&w);
                h[i] += c;
                w.axpy(-c, v, 1.0);
            }
        }
        let beta = w.norm();
        h[j + 1] = beta;
        self.hess.push(h);
        if beta <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return false;
        }
        self.basis.push(w / beta);
        true
    }
}

/// Unrestarted GMRES on `A x = b`. Stops once `‖r_k‖ <= tol ‖r_0‖`.
pub fn gmres(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x0: &DVector<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<GmresHistory> {
    let n = a.nrows();
    if !a.is_square() || b.len() != n || x0.len() != n {
        return Err(Error::Argument(format!(
            "dimension mismatch: A {:?}, b {}, x0 {}",
            a.shape(),
            b.len(),
            x0.len()
        )));
    }
    if b.iter().chain(x0.iter()).chain(a.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Argument("non-finite input to GMRES".into()));
    }
    let r0 = b - a * x0;
    let r0n = r0.norm();
    let mut rnorms = vec![r0n];
    if r0n == 0.0 {
        return Ok(GmresHistory {
            rnorms,
            solution: x0.as_slice().to_vec(),
            converged: true,
        });
    }
    let mut arn = Arnoldi {
        basis: vec![&r0 / r0n],
        hess: Vec::new(),
    };
    // Givens-rotated Hessenberg columns and right-hand side
    let mut rcols: Vec<Vec<f64>> = Vec::new();
    let mut rot: Vec<(f64, f64)> = Vec::new();
    let mut g = vec![r0n];
    let mut converged = false;
    while rcols.len() < max_iter.min(n) {
        let ok = arn.step(a);
        let mut h = arn.hess.last().cloned().unwrap_or_default();
        let j = h.len() - 2;
        for (i, &(c, s)) in rot.iter().enumerate() {
            let (x, y) = (h[i], h[i + 1]);
            h[i] = c * x + s * y;
            h[i + 1] = -s * x + c * y;
        }
        let (x, y) = (h[j], h[j + 1]);
        let d = x.hypot(y);
        let (c, s) = if d == 0.0 { (1.0, 0.0) } else { (x / d, y / d) };
        h[j] = d;
        h[j + 1] = 0.0;
        rot.push((c, s));
        let gj = g[j];
        g[j] = c * gj;
        g.push(-s * gj);
        h.truncate(j + 1);
        rcols.push(h);
        let rk = g[j + 1].abs();
        rnorms.push(rk);
        if rk <= tol * r0n || !ok {
            converged = rk <= tol * r0n || !ok && rk <= 1e-12 * r0n;
            if !ok && !converged && d == 0.0 {
                return Err(Error::Numerical(format!(
                    "Arnoldi breakdown at step {} with residual {rk:.3e}",
                    j + 1
                )));
            }
            break;
        }
    }
    let k = rcols.len();
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for (jj, col) in rcols.iter().enumerate().skip(i + 1) {
            s -= col[i] * y[jj];
        }
        y[i] = if rcols[i][i] != 0.0 { s / rcols[i][i] } else { 0.0 };
    }
    let mut x = x0.clone();
    for (yi, v) in y.iter().zip(&arn.basis) {
        x.axpy(*yi, v, 1.0);
    }
    Ok(GmresHistory {
        rnorms,
        solution: x.as_slice().to_vec(),
        converged,
    })
}

/// Restricts a singular `A` to its range.
///
/// Returns `(B, Q)` with `Q` an orthonormal basis of the range and `B = Qᵀ A Q`,
/// whose eigenvalues are those of `A` with the `num_zero` zero eigenvalues removed.
pub fn project_nonsingular(a: &DMatrix<f64>, num_zero: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if !a.is_square() || num_zero > n {
        return Err(Error::Argument(format!(
            "cannot remove {num_zero} eigenvalues from a {:?} matrix",
            a.shape()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entry".into()));
    }
    let keep = n - num_zero;
    let svd = a.clone().svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD did not return singular vectors".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let smax = svd.singular_values[order[0]];
    if keep > 0 {
        let kept_min = svd.singular_values[order[keep - 1]];
        if !(kept_min > 1e-12 * smax) {
            return Err(Error::Numerical(format!(
                "range has dimension below {keep}: singular value ratio {:.3e}",
                kept_min / smax
            )));
        }
    }
    let cols: Vec<_> = order[..keep].iter().map(|&i| u.column(i).into_owned()).collect();
    let q = if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    let b = q.transpose() * a * &q;
    let leak = (a * &q - &q * &b).norm();
    if leak > 1e-8 * a.norm() {
        return Err(Error::Numerical(format!(
            "retained subspace is not invariant (leak {leak:.3e}); are there {num_zero} zero eigenvalues?"
        )));
    }
    if keep > 0 {
        let eigs = linalg::eigenvalues(&b)?;
        let big = eigs.iter().map(|e| e.norm()).fold(0.0, f64::max);
        let small = eigs.iter().map(|e| e.norm()).fold(f64::INFINITY, f64::min);
        if !(small > 1e-12 * big) {
            return Err(Error::Numerical(format!(
                "zero eigenvalue is not semisimple: projected spectrum reaches {small:.3e} (largest {big:.3e})"
            )));
        }
    }
    Ok((b, q))
}

/// `[x_min, x_max] × [-y_half, y_half]`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FovRect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_half: f64,
}

impl FovRect {
    pub fn contains(&self, z: Complex64, margin: f64) -> bool {
        z.re >= self.x_min - margin && z.re <= self.x_max + margin && z.im.abs() <= self.y_half + margin
    }

    /// Distance from the origin and largest modulus over the rectangle.
    pub fn nu_r(&self) -> (f64, f64) {
        let dx = if self.x_min > 0.0 {
            self.x_min
        } else if self.x_max < 0.0 {
            -self.x_max
        } else {
            0.0
        };
        let nu = if self.y_half > 0.0 || dx > 0.0 { dx } else { 0.0 };
        let far = self.x_min.abs().max(self.x_max.abs());
        (nu, far.hypot(self.y_half))
    }
}

fn symmetric_parts(b: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let bt = b.transpose();
    ((b + &bt) * 0.5, (b - &bt) * 0.5)
}

pub fn fov_bounding_rect(b: &DMatrix<f64>) -> Result<FovRect> {
    if !b.is_square() || b.nrows() == 0 {
        return Err(Error::Argument(format!("FOV of a {:?} matrix", b.shape())));
    }
    let (bs, ba) = symmetric_parts(b);
    let eigs = linalg::symmetric_eigenvalues(&bs);
    // B_a is real skew, so i B_a is Hermitian with the same spectral radius
    let y_half = if ba.iter().all(|v| *v == 0.0) {
        0.0
    } else {
        linalg::eigenvalues(&ba)?
            .iter()
            .map(|e| e.norm())
            .fold(0.0, f64::max)
    };
    Ok(FovRect {
        x_min: eigs[0],
        x_max: eigs[eigs.len() - 1],
        y_half,
    })
}

/// `(ρ_β, c_β)` for the angle `β` with `cos β = ν / r`.
pub fn beckermann_factor(nu: f64, r: f64) -> Result<(f64, f64)> {
    if !(nu > 0.0) {
        return Err(Error::ZeroInFov { nu });
    }
    if !(nu <= r * (1.0 + 1e-12)) || !r.is_finite() {
        return Err(Error::Argument(format!("need 0 < nu <= r, got nu = {nu}, r = {r}")));
    }
    let beta = (nu / r).min(1.0).acos();
    let rho = 2.0 * (beta / (4.0 - 2.0 * beta / PI)).sin();
    Ok((rho, (2.0 + 2.0 / 3f64.sqrt()) * (2.0 + rho)))
}

pub const DEFAULT_FOV_ANGLES: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FovReport {
    pub boundary_re: Vec<f64>,
    pub boundary_im: Vec<f64>,
    pub rect: FovRect,
    pub nu: f64,
    pub r: f64,
    /// Angle with `cos = nu / r`, absent when 0 lies in the FOV.
    pub theta: Option<f64>,
    pub rho_beta: Option<f64>,
    pub c_beta: Option<f64>,
    pub zero_in_fov: bool,
}

impl FovReport {
    pub fn boundary(&self) -> Vec<Complex64> {
        self.boundary_re
            .iter()
            .zip(&self.boundary_im)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "boundary_re": self.boundary_re,
            "boundary_im": self.boundary_im,
            "rect": self.rect,
            "nu": self.nu,
            "r": self.r,
            "rho_beta": self.rho_beta,
            "c_beta": self.c_beta,
            "zero_in_fov": self.zero_in_fov,
        })
    }

    /// `(ρ_β, c_β)` from the bounding rectangle instead of the polygon.
    pub fn rect_factor(&self) -> Result<(f64, f64)> {
        let (nu, r) = self.rect.nu_r();
        beckermann_factor(nu, r)
    }
}

fn segment_distance(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    let t = if len2 > 0.0 {
        ((p - a) * d.conj()).re / len2
    } else {
        0.0
    };
    (p - (a + d * t.clamp(0.0, 1.0))).norm()
}

/// Winding test for a closed polygon, boundary counts as inside.
fn polygon_contains(poly: &[Complex64], p: Complex64, tol: f64) -> bool {
    let n = poly.len();
    if (0..n).any(|i| segment_distance(p, poly[i], poly[(i + 1) % n]) <= tol) {
        return true;
    }
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.im > p.im) != (b.im > p.im) {
            let x = a.re + (p.im - a.im) / (b.im - a.im) * (b.re - a.re);
            if p.re < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Field of values of `B` sampled by the rotation method at `n_angles` angles.
fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc })
}

/// Largest eigenvalue of a Hermitian matrix with a unit eigenvector, by Lanczos
/// with full reorthogonalization. `None` when the residual never reaches `tol`.
fn top_eigenpair(
    h: &DMatrix<Complex64>,
    start: &DVector<Complex64>,
    tol: f64,
) -> Option<(f64, DVector<Complex64>)> {
    let n = h.nrows();
    let norm = start.norm();
    if n == 0 || !(norm > 0.0) {
        return None;
    }
    let mut basis: Vec<DVector<Complex64>> = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    let mut beta: Vec<f64> = Vec::with_capacity(n);
    let mut v = start / Complex64::new(norm, 0.0);
    loop {
        let mut w = h * &v;
        alpha.push(v.dotc(&w).re);
        basis.push(v);
        for _ in 0..2 {
            for q in &basis {
                let c = q.dotc(&w);
                w.axpy(-c, q, Complex64::new(1.0, 0.0));
            }
        }
        let b = w.norm();
        let k = basis.len();
        if k.is_multiple_of(8) || k == n || b <= tol {
            let t = DMatrix::from_fn(k, k, |i, j| match i.abs_diff(j) {
                0 => alpha[i],
                1 => beta[i.min(j)],
                _ => 0.0,
            });
            let eig = t.symmetric_eigen();
            let (imax, lmax) = argmax(eig.eigenvalues.iter().copied());
            let y = eig.eigenvectors.column(imax);
            if b * y[k - 1].abs() <= tol || b <= tol {
                let mut x = DVector::<Complex64>::zeros(n);
                for (q, &yi) in basis.iter().zip(y.iter()) {
                    x.axpy(Complex64::new(yi, 0.0), q, Complex64::new(1.0, 0.0));
                }
                let nx = x.norm();
                return Some((lmax, x / Complex64::new(nx, 0.0)));
            }
            if k == n {
                return None;
            }
        }
        beta.push(b);
        v = w / Complex64::new(b, 0.0);
    }
}

pub fn fov_numeric(b: &DMatrix<f64>, n_angles: usize) -> Result<FovReport> {
    if n_angles < 8 {
        return Err(Error::Argument(format!("need at least 8 angles, got {n_angles}")));
    }
    let rect = fov_bounding_rect(b)?;
    let n = b.nrows();
    let (bs, ba) = symmetric_parts(b);
    let bc = b.map(|v| Complex64::new(v, 0.0));
    let mut boundary: Vec<Complex64> = Vec::with_capacity(n_angles);
    let mut r = 0.0f64;
    let nudge = DVector::from_fn(n, |j, _| Complex64::new(1.0, (0.7 * j as f64).sin()) * (1e-2 / (n as f64).sqrt()));
    let mut previous = DVector::<Complex64>::zeros(n);
    for k in 0..n_angles {
        let theta = 2.0 * PI * k as f64 / n_angles as f64;
        let (c, s) = (theta.cos(), theta.sin());
        // Hermitian part of e^{iθ} B
        let h = DMatrix::from_fn(n, n, |i, j| Complex64::new(c * bs[(i, j)], s * ba[(i, j)]));
        let tol = 1e-13 * h.norm().max(f64::MIN_POSITIVE);
        let start = &previous + &nudge;
        let (lmax, v) = match top_eigenpair(&h, &start, tol) {
            Some(pair) => pair,
            None => {
                let eig = h.symmetric_eigen();
                let (imax, lmax) = argmax(eig.eigenvalues.iter().copied());
                (lmax, eig.eigenvectors.column(imax).into_owned())
            }
        };
        if !lmax.is_finite() {
            return Err(Error::Numerical(format!("eigensolver failed at angle {theta}")));
        }
        r = r.max(lmax);
        let z = v.dotc(&(&bc * &v));
        boundary.push(z);
        previous = v;
    }
    // angles advance counterclockwise, support points run clockwise
    boundary.reverse();
    r = r.max(boundary.iter().map(|z| z.norm()).fold(0.0, f64::max));
    let scale = r.max(f64::MIN_POSITIVE);
    let origin = Complex64::new(0.0, 0.0);
    let nv = boundary.len();
    let nu = (0..nv)
        .map(|i| segment_distance(origin, boundary[i], boundary[(i + 1) % nv]))
        .fold(f64::INFINITY, f64::min);
    let zero_in_fov = polygon_contains(&boundary, origin, 1e-14 * scale);
    let (theta, rho_beta, c_beta) = if zero_in_fov {
        (None, None, None)
    } else {
        let (rho, c) = beckermann_factor(nu, r)?;
        (Some((nu / r).min(1.0).acos()), Some(rho), Some(c))
    };
    Ok(FovReport {
        boundary_re: boundary.iter().map(|z| z.re).collect(),
        boundary_im: boundary.iter().map(|z| z.im).collect(),
        rect,
        nu: if zero_in_fov { 0.0 } else { nu },
        r,
        theta,
        rho_beta,
        c_beta,
        zero_in_fov,
    })
}
