//! CP decomposition as a smooth optimization problem.
//!
//! `f(x) = 1/2 || Z - [[A_1, ..., A_N]] ||_F^2` where `x` stacks the
//! column-major vectorizations of `A_1, ..., A_N` in mode order. That block
//! order is also the ALS sweep order and the block order of the
//! lower-triangular splitting used for the ALS Jacobian.

mod io;
mod jacobian;
mod refine;

pub use io::{read_factor_point, write_factor_point};
pub use jacobian::{
    gauss_seidel_jacobian, jacobian_fixed_point, lower_block_triangular, modified_condition_number,
    ConditionReport, DerivativeMode,
};
pub use refine::refine_fixed_point;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::accel::FixedPointProblem;
use crate::error::{arg, Result};
use crate::linalg;
use crate::rng::SeededRng;
use crate::tensor::{for_each_index, hadamard_gram, kruskal_full, mttkrp, DenseTensor};

/// Factor matrices `A_1, ..., A_N` of a rank-`r` CP model.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPoint {
    factors: Vec<DMatrix<f64>>,
}

impl FactorPoint {
    pub fn new(factors: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = factors.first() else {
            return arg("a factor point needs at least one factor");
        };
        let r = first.ncols();
        if r == 0 || factors.iter().any(|f| f.ncols() != r || f.nrows() == 0) {
            return arg("factor matrices must be non-empty and share a column count");
        }
        Ok(Self { factors })
    }

    /// Rebuilds a point from its flattened form.
    pub fn unflatten(dims: &[usize], rank: usize, flat: &[f64]) -> Result<Self> {
        let len = rank * dims.iter().sum::<usize>();
        if flat.len() != len {
            return arg(format!(
                "flattened point has {} entries, expected {len}",
                flat.len()
            ));
        }
        let mut offset = 0;
        let factors = dims
            .iter()
            .map(|&n| {
                let m = DMatrix::from_column_slice(n, rank, &flat[offset..offset + n * rank]);
                offset += n * rank;
                m
            })
            .collect();
        Self::new(factors)
    }

    /// Entries uniform in `[0, 1)`.
    pub fn random_uniform(dims: &[usize], rank: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let factors = dims
            .iter()
            .map(|&n| DMatrix::from_vec(n, rank, rng.uniform_vec(n * rank)))
            .collect();
        Self { factors }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for f in &self.factors {
            out.extend_from_slice(f.as_slice());
        }
        out
    }

    pub fn factors(&self) -> &[DMatrix<f64>] {
        &self.factors
    }

    pub fn into_factors(self) -> Vec<DMatrix<f64>> {
        self.factors
    }

    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn modes(&self) -> usize {
        self.factors.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    /// Flattened length `r * sum(n_m)`.
    pub fn len(&self) -> usize {
        self.rank() * self.factors.iter().map(|f| f.nrows()).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sizes of the per-mode blocks of the flattened vector.
    pub fn block_sizes(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.len()).collect()
    }

    /// Rescales each rank-one component so its columns have equal norm in every mode.
    ///
    /// The represented tensor is unchanged. Components with a zero column are left as is.
    pub fn balanced(&self) -> FactorPoint {
        let mut factors = self.factors.clone();
        let n = factors.len() as f64;
        for j in 0..self.rank() {
            let norms: Vec<f64> = factors.iter().map(|a| a.column(j).norm()).collect();
            if norms.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                continue;
            }
            let target = (norms.iter().map(|v| v.ln()).sum::<f64>() / n).exp();
            for (a, nm) in factors.iter_mut().zip(&norms) {
                a.column_mut(j).scale_mut(target / nm);
            }
        }
        FactorPoint { factors }
    }

    pub fn full(&self) -> DenseTensor {
        kruskal_full(&self.factors).expect("factor point invariants guarantee consistent ranks")
    }
}

/// A fixed-point map for the CP problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FixedPointMapKind {
    /// `x - alpha * grad f(x)`
    Sd { alpha: f64 },
    /// One block Gauss–Seidel sweep over the modes.
    Als,
}

#[derive(Debug, Clone)]
pub struct CpdProblem {
    data: DenseTensor,
    rank: usize,
}

impl CpdProblem {
    pub fn new(data: DenseTensor, rank: usize) -> Result<Self> {
        if rank == 0 {
            return arg("rank must be at least 1");
        }
        if data.is_empty() {
            return arg("data tensor is empty");
        }
        Ok(Self { data, rank })
    }

    pub fn data(&self) -> &DenseTensor {
        &self.data
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dims(&self) -> &[usize] {
        self.data.shape()
    }

    pub fn num_variables(&self) -> usize {
        self.rank * self.dims().iter().sum::<usize>()
    }

    /// Number of zero Hessian eigenvalues forced by the scaling indeterminacy, `(N - 1) r`.
    pub fn degeneracy(&self) -> usize {
        (self.dims().len() - 1) * self.rank
    }

    pub fn point(&self, flat: &[f64]) -> Result<FactorPoint> {
        FactorPoint::unflatten(self.dims(), self.rank, flat)
    }

    fn check(&self, x: &FactorPoint) -> Result<()> {
        if x.rank() != self.rank || x.dims() != self.dims() {
            return arg(format!(
                "point has dims {:?} rank {}, problem has dims {:?} rank {}",
                x.dims(),
                x.rank(),
                self.dims(),
                self.rank
            ));
        }
        Ok(())
    }

    pub fn objective(&self, x: &FactorPoint) -> Result<f64> {
        self.check(x)?;
        let model = x.full();
        let sq: f64 = self
            .data
            .values()
            .iter()
            .zip(model.values())
            .map(|(z, m)| (z - m) * (z - m))
            .sum();
        Ok(0.5 * sq)
    }

    /// Per-mode gradient blocks `A_n Gamma_n - Z_(n) KR_n`.
    pub fn gradient_blocks(&self, x: &FactorPoint) -> Result<Vec<DMatrix<f64>>> {
        self.check(x)?;
        let f = x.factors();
        (0..f.len())
            .map(|n| {
                let gamma = hadamard_gram(f, n, None);
                Ok(&f[n] * gamma - mttkrp(&self.data, f, n)?)
            })
            .collect()
    }

    pub fn gradient(&self, x: &FactorPoint) -> Result<Vec<f64>> {
        let blocks = self.gradient_blocks(x)?;
        Ok(blocks.iter().flat_map(|b| b.iter().copied()).collect())
    }

    /// Hessian at `x`, symmetrized.
    pub fn hessian(&self, x: &FactorPoint, mode: DerivativeMode) -> Result<DMatrix<f64>> {
        let h = match mode {
            DerivativeMode::Analytic => self.hessian_analytic(x)?,
            DerivativeMode::FiniteDifference => self.hessian_fd(x)?,
        };
        Ok((&h + h.transpose()) * 0.5)
    }

    fn hessian_analytic(&self, x: &FactorPoint) -> Result<DMatrix<f64>> {
        self.check(x)?;
        let f = x.factors();
        let r = self.rank;
        let dims = self.dims().to_vec();
        let offsets: Vec<usize> = dims
            .iter()
            .scan(0, |acc, &n| {
                let o = *acc;
                *acc += n * r;
                Some(o)
            })
            .collect();
        let idx = |mode: usize, row: usize, col: usize| offsets[mode] + col * dims[mode] + row;
        let total = x.len();
        let mut h = DMatrix::zeros(total, total);

        // d G_n[a,j] / d A_n[b,k] = delta_ab Gamma_n[k,j]
        for n in 0..dims.len() {
            let gamma = hadamard_gram(f, n, None);
            for a in 0..dims[n] {
                for j in 0..r {
                    for k in 0..r {
                        h[(idx(n, a, j), idx(n, a, k))] = gamma[(k, j)];
                    }
                }
            }
        }

        let residual = x.full().sub(&self.data)?;
        for n in 0..dims.len() {
            for p in (n + 1)..dims.len() {
                // Gauss-Newton part: A_n[a,k] A_p[b,j] Gamma_np[k,j]
                let gamma_np = hadamard_gram(f, n, Some(p));
                // Residual part: delta_jk sum_{i_n=a, i_p=b} R * prod_{m != n,p} A_m[i_m, j]
                let mut contracted = vec![0.0; dims[n] * dims[p] * r];
                for_each_index(&dims, |lin, ix| {
                    let rv = residual.values()[lin];
                    let base = (ix[n] * dims[p] + ix[p]) * r;
                    for j in 0..r {
                        let mut prod = rv;
                        for (m, fm) in f.iter().enumerate() {
                            if m != n && m != p {
                                prod *= fm[(ix[m], j)];
                            }
                        }
                        contracted[base + j] += prod;
                    }
                });
                for a in 0..dims[n] {
                    for b in 0..dims[p] {
                        for j in 0..r {
                            for k in 0..r {
                                let mut v = f[n][(a, k)] * f[p][(b, j)] * gamma_np[(k, j)];
                                if j == k {
                                    v += contracted[(a * dims[p] + b) * r + j];
                                }
                                let (row, col) = (idx(n, a, j), idx(p, b, k));
                                h[(row, col)] = v;
                                h[(col, row)] = v;
                            }
                        }
                    }
                }
            }
        }
        Ok(h)
    }

    /// Central differences of the analytic gradient.
    fn hessian_fd(&self, x: &FactorPoint) -> Result<DMatrix<f64>> {
        self.check(x)?;
        let flat = x.flatten();
        let n = flat.len();
        let mut h = DMatrix::zeros(n, n);
        let mut probe = flat.clone();
        for i in 0..n {
            let step = 1e-6 * (1.0 + flat[i].abs());
            probe[i] = flat[i] + step;
            let gp = self.gradient(&self.point(&probe)?)?;
            probe[i] = flat[i] - step;
            let gm = self.gradient(&self.point(&probe)?)?;
            probe[i] = flat[i];
            for (row, (a, b)) in gp.iter().zip(&gm).enumerate() {
                h[(row, i)] = (a - b) / (2.0 * step);
            }
        }
        Ok(h)
    }

    pub fn q_sd(&self, x: &FactorPoint, alpha: f64) -> Result<FactorPoint> {
        let g = self.gradient(x)?;
        let next = linalg::axpy(&x.flatten(), -alpha, &g);
        self.point(&next)
    }

    /// One ALS sweep, updating `A_1` through `A_N` with the latest blocks.
    pub fn q_als(&self, x: &FactorPoint) -> Result<FactorPoint> {
        self.check(x)?;
        let mut factors = x.factors().to_vec();
        for n in 0..factors.len() {
            let rhs = mttkrp(&self.data, &factors, n)?;
            let gamma = hadamard_gram(&factors, n, None);
            factors[n] = linalg::solve_right_spd(&rhs, &gamma)?;
        }
        FactorPoint::new(factors)
    }

    pub fn apply_map(&self, x: &FactorPoint, map: FixedPointMapKind) -> Result<FactorPoint> {
        match map {
            FixedPointMapKind::Sd { alpha } => self.q_sd(x, alpha),
            FixedPointMapKind::Als => self.q_als(x),
        }
    }

    /// Tolerance on `||grad f||` below which a point is accepted as a fixed point.
    pub fn fixed_point_tolerance(&self) -> f64 {
        let s = self.data.frobenius_norm();
        1e-8 * (1.0 + s * s)
    }

    /// View of this problem as a flat-vector fixed-point iteration.
    pub fn fixed_point(&self, map: FixedPointMapKind) -> CpdFixedPoint<'_> {
        CpdFixedPoint { problem: self, map }
    }
}

/// A CP problem paired with one of its fixed-point maps.
#[derive(Debug, Clone, Copy)]
pub struct CpdFixedPoint<'a> {
    pub problem: &'a CpdProblem,
    pub map: FixedPointMapKind,
}

impl FixedPointProblem for CpdFixedPoint<'_> {
    fn dim(&self) -> usize {
        self.problem.num_variables()
    }

    fn map(&self, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.problem.point(x)?;
        Ok(self.problem.apply_map(&p, self.map)?.flatten())
    }

    fn objective(&self, x: &[f64]) -> Result<f64> {
        self.problem.objective(&self.problem.point(x)?)
    }

    fn equation_residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.problem.gradient(&self.problem.point(x)?)
    }

    fn residual_is_gradient(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{generate_synthetic, SyntheticSpec};

    pub(crate) fn small_problem(seed: u64, dims: &[usize], rank: usize) -> (CpdProblem, FactorPoint) {
        let mut rng = SeededRng::new(seed);
        let count = dims.iter().product();
        let data = DenseTensor::new(dims.to_vec(), rng.normal_vec(count)).unwrap();
        let p = CpdProblem::new(data, rank).unwrap();
        let factors = dims
            .iter()
            .map(|&n| DMatrix::from_vec(n, rank, rng.normal_vec(n * rank)))
            .collect();
        (p, FactorPoint::new(factors).unwrap())
    }

    #[test]
    fn flatten_round_trip_and_length() {
        let x = FactorPoint::random_uniform(&[3, 4, 5], 2, 1);
        assert_eq!(x.len(), 2 * 12);
        let flat = x.flatten();
        assert_eq!(flat.len(), 24);
        let back = FactorPoint::unflatten(&[3, 4, 5], 2, &flat).unwrap();
        assert_eq!(back, x);
        assert!(FactorPoint::unflatten(&[3, 4, 5], 2, &flat[1..]).is_err());
    }

    #[test]
    fn balancing_keeps_the_tensor() {
        let (p, x) = small_problem(3, &[4, 5, 3], 2);
        let mut f = x.clone().into_factors();
        f[0] *= 40.0;
        f[2] /= 40.0;
        let x = FactorPoint::new(f).unwrap();
        let b = x.balanced();
        let diff = x.full().sub(&b.full()).unwrap().frobenius_norm();
        assert!(diff < 1e-12 * x.full().frobenius_norm());
        for j in 0..2 {
            let n: Vec<f64> = b.factors().iter().map(|a| a.column(j).norm()).collect();
            assert!((n[0] - n[1]).abs() < 1e-12 * n[0] && (n[0] - n[2]).abs() < 1e-12 * n[0]);
        }
        assert!((p.objective(&x).unwrap() - p.objective(&b).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn objective_zero_at_exact_fit() {
        let x = FactorPoint::random_uniform(&[3, 3, 2], 2, 4);
        let p = CpdProblem::new(x.full(), 2).unwrap();
        assert_eq!(p.objective(&x).unwrap(), 0.0);

        let zero = FactorPoint::new(vec![DMatrix::zeros(2, 1); 3]).unwrap();
        let pz = CpdProblem::new(DenseTensor::zeros(vec![2, 2, 2]).unwrap(), 1).unwrap();
        assert_eq!(pz.objective(&zero).unwrap(), 0.0);
    }

    #[test]
    fn objective_matches_loop_oracle() {
        let (p, x) = small_problem(8, &[2, 2, 2], 2);
        let f = x.factors();
        let mut acc = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let mut m = 0.0;
                    for c in 0..2 {
                        m += f[0][(i, c)] * f[1][(j, c)] * f[2][(k, c)];
                    }
                    acc += (p.data().get(&[i, j, k]) - m).powi(2);
                }
            }
        }
        assert!((p.objective(&x).unwrap() - 0.5 * acc).abs() < 1e-13);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (p, _) = small_problem(1, &[2, 3, 2], 2);
        let wrong = FactorPoint::random_uniform(&[2, 3, 3], 2, 0);
        assert!(p.objective(&wrong).is_err());
        assert!(p.gradient(&wrong).is_err());
        assert!(p.q_als(&wrong).is_err());
    }

    fn fd_gradient(p: &CpdProblem, x: &FactorPoint) -> Vec<f64> {
        let flat = x.flatten();
        let mut probe = flat.clone();
        (0..flat.len())
            .map(|i| {
                let h = 1e-6 * (1.0 + flat[i].abs());
                probe[i] = flat[i] + h;
                let fp = p.objective(&p.point(&probe).unwrap()).unwrap();
                probe[i] = flat[i] - h;
                let fm = p.objective(&p.point(&probe).unwrap()).unwrap();
                probe[i] = flat[i];
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (p, x) = small_problem(12, &[3, 3, 3], 2);
        let g = p.gradient(&x).unwrap();
        let fd = fd_gradient(&p, &x);
        let rel = linalg::norm(&linalg::sub(&g, &fd)) / linalg::norm(&g);
        assert!(rel < 1e-6, "relative error {rel}");
    }

    #[test]
    fn gradient_vanishes_at_exact_fit() {
        let x = FactorPoint::random_uniform(&[4, 3, 5], 2, 21);
        let p = CpdProblem::new(x.full(), 2).unwrap();
        let g = p.gradient(&x).unwrap();
        assert!(linalg::norm(&g) < 1e-10 * (1.0 + p.data().frobenius_norm()));
    }

    #[test]
    fn directional_derivative_along_x() {
        let (p, x) = small_problem(13, &[3, 2, 4], 2);
        let flat = x.flatten();
        let g = p.gradient(&x).unwrap();
        let h = 1e-6;
        let fp = p.objective(&p.point(&linalg::axpy(&flat, h, &flat)).unwrap()).unwrap();
        let fm = p.objective(&p.point(&linalg::axpy(&flat, -h, &flat)).unwrap()).unwrap();
        let fd = (fp - fm) / (2.0 * h);
        let exact = linalg::dot(&g, &flat);
        assert!((fd - exact).abs() < 1e-6 * (1.0 + exact.abs()), "{fd} vs {exact}");
    }

    #[test]
    fn hessian_is_symmetric_and_matches_fd() {
        let (p, x) = small_problem(14, &[3, 2, 3], 2);
        let ha = p.hessian(&x, DerivativeMode::Analytic).unwrap();
        let hf = p.hessian(&x, DerivativeMode::FiniteDifference).unwrap();
        assert_eq!(ha, ha.transpose());
        assert_eq!(hf, hf.transpose());
        let lmax = linalg::symmetric_eigenvalues(&ha).last().copied().unwrap().abs();
        assert!((&ha - &hf).amax() < 1e-5 * (1.0 + lmax), "{}", (&ha - &hf).amax());
    }

    #[test]
    fn hessian_four_mode_matches_fd() {
        let (p, x) = small_problem(15, &[2, 3, 2, 2], 2);
        let ha = p.hessian(&x, DerivativeMode::Analytic).unwrap();
        let hf = p.hessian(&x, DerivativeMode::FiniteDifference).unwrap();
        assert!((&ha - &hf).amax() < 1e-5 * (1.0 + ha.amax()));
    }

    #[test]
    fn q_sd_is_gradient_step() {
        let (p, x) = small_problem(16, &[3, 3, 2], 2);
        assert_eq!(p.q_sd(&x, 0.0).unwrap(), x);
        let alpha = 0.01;
        let next = p.q_sd(&x, alpha).unwrap().flatten();
        let want = linalg::axpy(&x.flatten(), -alpha, &p.gradient(&x).unwrap());
        assert_eq!(next, want);
    }

    #[test]
    fn q_als_keeps_exact_truth() {
        let spec = SyntheticSpec {
            dims: vec![6, 5, 4],
            rank: 2,
            collinearity: 0.3,
            noise_homo: 0.0,
            noise_hetero: 0.0,
            seed: 5,
        };
        let sp = generate_synthetic(&spec).unwrap();
        let p = CpdProblem::new(sp.data, 2).unwrap();
        let x = FactorPoint::new(sp.truth).unwrap();
        let y = p.q_als(&x).unwrap();
        let diff = linalg::norm(&linalg::sub(&y.flatten(), &x.flatten()));
        assert!(diff < 1e-10, "moved by {diff}");
    }

    #[test]
    fn q_als_decreases_objective_monotonically() {
        let spec = SyntheticSpec {
            dims: vec![10, 10, 10],
            rank: 2,
            collinearity: 0.2,
            noise_homo: 0.0,
            noise_hetero: 0.0,
            seed: 6,
        };
        let sp = generate_synthetic(&spec).unwrap();
        let p = CpdProblem::new(sp.data, 2).unwrap();
        let mut x = FactorPoint::random_uniform(&[10, 10, 10], 2, 99);
        let mut f = p.objective(&x).unwrap();
        for _ in 0..500 {
            x = p.q_als(&x).unwrap();
            let next = p.objective(&x).unwrap();
            assert!(next <= f * (1.0 + 1e-12) + 1e-300, "{next} > {f}");
            f = next;
            if f < 1e-20 {
                break;
            }
        }
        assert!(f < 1e-20, "final objective {f}");
    }

    #[test]
    fn sd_fixed_point_view_matches_direct_calls() {
        let (p, x) = small_problem(17, &[2, 3, 2], 1);
        let view = p.fixed_point(FixedPointMapKind::Sd { alpha: 0.1 });
        let flat = x.flatten();
        assert_eq!(view.map(&flat).unwrap(), p.q_sd(&x, 0.1).unwrap().flatten());
        assert_eq!(view.objective(&flat).unwrap(), p.objective(&x).unwrap());
        assert_eq!(view.dim(), flat.len());
    }
}
