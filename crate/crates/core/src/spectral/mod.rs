//! Companion matrices of stationary accelerators and their spectra.

mod brute;
mod closed_form;

pub use brute::{brute_force_beta, brute_force_beta_spectrum, BetaGrid, BruteForceResult};
pub use closed_form::{
    complex_lower_bound, default_a_grid, optimal_beta_step1_real, optimal_sd_params,
    rect_bounds_sngmres_r1, spectrum_box, weaker_lower_bound, LowerBound, RectBounds, SdParams,
    SdVariant, StepOptimum,
};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::accel::MethodSpec;
use crate::cpd::ConditionReport;
use crate::error::{Error, Result};
use crate::linalg;

/// Stationary accelerator whose companion matrix is analysed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationaryKind {
    Saa,
    Sngmres,
    SngmresR,
}

impl StationaryKind {
    /// Number of coefficients for window `m`.
    pub fn coefficient_count(self, m: usize) -> usize {
        match self {
            Self::Sngmres => m + 1,
            Self::Saa | Self::SngmresR => m,
        }
    }

    /// Window implied by a coefficient vector.
    pub fn window(self, betas: &[f64]) -> Result<usize> {
        match self {
            Self::Sngmres if betas.is_empty() => Err(Error::Argument(
                "sNGMRES needs at least the coefficient beta_0".into(),
            )),
            Self::Sngmres => Ok(betas.len() - 1),
            Self::Saa | Self::SngmresR => Ok(betas.len()),
        }
    }

    pub fn method_spec(self, betas: Vec<f64>) -> MethodSpec {
        match self {
            Self::Saa => MethodSpec::saa(betas),
            Self::Sngmres => MethodSpec::sngmres(betas),
            Self::SngmresR => MethodSpec::sngmres_r(betas),
        }
    }

    /// Monic characteristic polynomial of the companion matrix restricted to an
    /// eigenvalue `mu` of `q'`, in the coefficient layout of [`linalg::monic_roots`].
    pub fn polynomial(self, mu: Complex64, betas: &[f64]) -> Vec<Complex64> {
        let sum: f64 = betas.iter().sum();
        let mut c = Vec::with_capacity(betas.len() + 1);
        match self {
            Self::Saa => {
                c.push(-(1.0 + sum) * mu);
                c.extend(betas.iter().map(|b| *b * mu));
            }
            Self::Sngmres => {
                c.push(-((1.0 + sum) * mu - betas[0]));
                c.extend(betas[1..].iter().map(|b| Complex64::new(*b, 0.0)));
            }
            Self::SngmresR => {
                c.push(-(1.0 + sum) * mu);
                c.extend(betas.iter().map(|b| Complex64::new(*b, 0.0)));
            }
        }
        c
    }
}

/// Block companion matrix `T` of a stationary iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionMatrix {
    pub matrix: DMatrix<f64>,
    pub kind: StationaryKind,
    pub m: usize,
    pub betas: Vec<f64>,
}

/// Builds `T` with first block row from `q'` and identity blocks on the subdiagonal.
pub fn build_companion(
    qprime: &DMatrix<f64>,
    kind: StationaryKind,
    betas: &[f64],
) -> Result<CompanionMatrix> {
    if !qprime.is_square() {
        return Err(Error::Argument("Jacobian must be square".into()));
    }
    let m = kind.window(betas)?;
    let n = qprime.nrows();
    let sum: f64 = betas.iter().sum();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut t = DMatrix::zeros((m + 1) * n, (m + 1) * n);
    let lead = match kind {
        StationaryKind::Sngmres => qprime * (1.0 + sum) - &eye * betas[0],
        _ => qprime * (1.0 + sum),
    };
    t.view_mut((0, 0), (n, n)).copy_from(&lead);
    for i in 1..=m {
        let block = match kind {
            StationaryKind::Saa => qprime * (-betas[i - 1]),
            StationaryKind::Sngmres => &eye * (-betas[i]),
            StationaryKind::SngmresR => &eye * (-betas[i - 1]),
        };
        t.view_mut((0, i * n), (n, n)).copy_from(&block);
        t.view_mut((i * n, (i - 1) * n), (n, n)).copy_from(&eye);
    }
    Ok(CompanionMatrix {
        matrix: t,
        kind,
        m,
        betas: betas.to_vec(),
    })
}

/// Eigenvalues of `T` assembled from the eigenvalues of `q'`.
pub fn companion_eigenvalues(
    qprime_eigs: &[Complex64],
    kind: StationaryKind,
    betas: &[f64],
) -> Result<Vec<Complex64>> {
    kind.window(betas)?;
    Ok(qprime_eigs
        .iter()
        .flat_map(|mu| linalg::monic_roots(&kind.polynomial(*mu, betas)))
        .collect())
}

/// Eigenvalues of a matrix split into the retained set and the excluded degeneracy images.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub eigenvalues: Vec<Complex64>,
    pub excluded: Vec<Complex64>,
    /// Largest modulus over the retained eigenvalues.
    pub rho: f64,
    /// Retained eigenvalue of largest modulus.
    pub dominant: Option<Complex64>,
    pub condition: Option<ConditionReport>,
}

impl SpectralReport {
    /// Splits `eigs` by removing the `num_excluded` values closest to `target`.
    pub fn from_eigenvalues(eigs: Vec<Complex64>, num_excluded: usize, target: f64) -> Result<Self> {
        if num_excluded > eigs.len() || (num_excluded == eigs.len() && !eigs.is_empty()) {
            return Err(Error::Argument(format!(
                "cannot exclude {num_excluded} of {} eigenvalues",
                eigs.len()
            )));
        }
        let (kept, excluded) = linalg::exclude_nearest(&eigs, num_excluded, target);
        for e in &excluded {
            if (e - target).norm() > 1e-6 {
                log::warn!("excluded eigenvalue {e} lies {:e} from {target}", (e - target).norm());
            }
        }
        let dominant = kept.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm()));
        Ok(Self {
            rho: dominant.map_or(0.0, |d| d.norm()),
            dominant,
            eigenvalues: kept,
            excluded,
            condition: None,
        })
    }

    pub fn num_excluded(&self) -> usize {
        self.excluded.len()
    }

    pub fn with_condition(mut self, c: ConditionReport) -> Self {
        self.condition = Some(c);
        self
    }

    /// All eigenvalues, retained first.
    pub fn all_eigenvalues(&self) -> Vec<Complex64> {
        self.eigenvalues.iter().chain(&self.excluded).copied().collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let all = self.all_eigenvalues();
        serde_json::json!({
            "eigs_re": all.iter().map(|e| e.re).collect::<Vec<_>>(),
            "eigs_im": all.iter().map(|e| e.im).collect::<Vec<_>>(),
            "excluded": self.excluded.len(),
            "rho": self.rho,
            "kappa_bar": self.condition.map(|c| c.kappa_bar),
            "L": self.condition.map(|c| c.l_max),
            "ell": self.condition.map(|c| c.ell),
            "dominant_re": self.dominant.map(|d| d.re),
            "dominant_im": self.dominant.map(|d| d.im),
        })
    }
}

/// Spectral radius of `m` after excluding `num_excluded` eigenvalues nearest `target`.
pub fn modified_spectral_radius(
    m: &DMatrix<f64>,
    num_excluded: usize,
    target: f64,
) -> Result<SpectralReport> {
    SpectralReport::from_eigenvalues(linalg::eigenvalues(m)?, num_excluded, target)
}

/// Same as [`modified_spectral_radius`] returning only the radius, without copying.
pub(crate) fn modified_radius_of(eigs: &[Complex64], num_excluded: usize, target: f64) -> f64 {
    if num_excluded == 0 {
        return eigs.iter().map(|e| e.norm()).fold(0.0, f64::max);
    }
    let mut keyed: Vec<(f64, f64)> = eigs.iter().map(|e| ((e - target).norm(), e.norm())).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    keyed[num_excluded.min(keyed.len())..]
        .iter()
        .map(|k| k.1)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accel::{run_stationary, FixedPointProblem, StopCriteria};
    use crate::rng::SeededRng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_beta_decouples() {
        let q = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]);
        let t = build_companion(&q, StationaryKind::Saa, &[0.0]).unwrap();
        assert_eq!(t.matrix.view((0, 0), (2, 2)), q);
        assert!(t.matrix.view((0, 2), (2, 2)).iter().all(|v| *v == 0.0));
        assert_eq!(t.matrix.view((2, 0), (2, 2)), DMatrix::<f64>::identity(2, 2));
        let rep = modified_spectral_radius(&t.matrix, 0, 1.0).unwrap();
        let rq = modified_spectral_radius(&q, 0, 1.0).unwrap();
        assert!((rep.rho - rq.rho).abs() < 1e-14);
    }

    #[test]
    fn scalar_quadratics() {
        for (kind, mu, beta) in [
            (StationaryKind::Saa, 0.7, 0.4),
            (StationaryKind::Saa, -0.5, -0.2),
            (StationaryKind::SngmresR, 0.6, 0.3),
            (StationaryKind::SngmresR, -0.9, 0.8),
        ] {
            let q = DMatrix::from_element(1, 1, mu);
            let t = build_companion(&q, kind, &[beta]).unwrap();
            let eigs = linalg::eigenvalues(&t.matrix).unwrap();
            let constant = if kind == StationaryKind::Saa { beta * mu } else { beta };
            for l in &eigs {
                let resid = l * l - (1.0 + beta) * mu * l + constant;
                assert!(resid.norm() < 1e-10, "{kind:?} {l}");
            }
            let from_poly = companion_eigenvalues(&[c(mu, 0.0)], kind, &[beta]).unwrap();
            for a in &from_poly {
                let d = eigs.iter().map(|b| (a - b).norm()).fold(f64::INFINITY, f64::min);
                assert!(d < 1e-8, "{kind:?} {a}");
            }
        }
    }

    #[test]
    fn spectral_route_matches_matrix_route() {
        let mut rng = SeededRng::new(3);
        let q = DMatrix::from_vec(5, 5, rng.normal_vec(25)) * 0.3;
        let qe = linalg::eigenvalues(&q).unwrap();
        for (kind, betas) in [
            (StationaryKind::Saa, vec![0.3, -0.2]),
            (StationaryKind::Sngmres, vec![0.1, 0.4, -0.3]),
            (StationaryKind::SngmresR, vec![0.25, 0.1]),
        ] {
            let t = build_companion(&q, kind, &betas).unwrap();
            assert_eq!(t.matrix.nrows(), (t.m + 1) * 5);
            let a = modified_spectral_radius(&t.matrix, 0, 1.0).unwrap().rho;
            let b = modified_radius_of(&companion_eigenvalues(&qe, kind, &betas).unwrap(), 0, 1.0);
            assert!((a - b).abs() < 1e-8, "{kind:?}: {a} vs {b}");
        }
    }

    /// Affine map `q(x) = J x` for checking companion matrices against iteration.
    struct Linear(DMatrix<f64>);

    impl FixedPointProblem for Linear {
        fn dim(&self) -> usize {
            self.0.nrows()
        }
        fn map(&self, x: &[f64]) -> Result<Vec<f64>> {
            Ok((&self.0 * linalg::to_dvector(x)).iter().copied().collect())
        }
        fn objective(&self, x: &[f64]) -> Result<f64> {
            Ok(0.5 * linalg::dot(x, x))
        }
        fn equation_residual(&self, x: &[f64]) -> Result<Vec<f64>> {
            Ok(linalg::sub(x, &self.map(x)?))
        }
        fn residual_is_gradient(&self) -> bool {
            false
        }
    }

    #[test]
    fn companion_propagates_stationary_errors() {
        let mut rng = SeededRng::new(11);
        let j = DMatrix::from_vec(4, 4, rng.normal_vec(16)) * 0.25;
        let x0 = rng.normal_vec(4);
        for (kind, betas) in [
            (StationaryKind::Saa, vec![0.3, -0.1]),
            (StationaryKind::Sngmres, vec![0.2, 0.3, 0.1]),
            (StationaryKind::SngmresR, vec![-0.2, 0.15]),
        ] {
            let spec = kind.method_spec(betas.clone());
            let stop = StopCriteria {
                keep_iterates: true,
                ..StopCriteria::max_iter(8)
            };
            let trace = run_stationary(&Linear(j.clone()), &spec, &x0, &stop).unwrap();
            let xs: Vec<Vec<f64>> = trace.records.iter().map(|r| r.x.clone().unwrap()).collect();
            let t = build_companion(&j, kind, &betas).unwrap().matrix;
            let m = betas.len() - usize::from(kind == StationaryKind::Sngmres);
            for k in m..7 {
                let stacked: Vec<f64> = (0..=m).flat_map(|i| xs[k - i].clone()).collect();
                let next = &t * linalg::to_dvector(&stacked);
                for (a, b) in next.iter().take(4).zip(&xs[k + 1]) {
                    assert!((a - b).abs() < 1e-12, "{kind:?} at k = {k}");
                }
            }
        }
    }

    #[test]
    fn exclusion_examples() {
        let eigs = vec![c(1.0, 0.0), c(0.3, 0.0), c(1.0, 0.0), c(0.5, 0.0)];
        let r = SpectralReport::from_eigenvalues(eigs.clone(), 2, 1.0).unwrap();
        assert_eq!(r.rho, 0.5);
        assert_eq!(r.num_excluded(), 2);
        let r = SpectralReport::from_eigenvalues(eigs.clone(), 0, 1.0).unwrap();
        assert_eq!(r.rho, 1.0);
        assert_eq!(modified_radius_of(&eigs, 2, 1.0), 0.5);
        assert!(SpectralReport::from_eigenvalues(eigs, 4, 1.0).is_err());
    }

    #[test]
    fn double_root_example() {
        let q = DMatrix::from_element(1, 1, 0.75);
        let t = build_companion(&q, StationaryKind::Saa, &[1.0 / 3.0]).unwrap();
        let r = modified_spectral_radius(&t.matrix, 0, 1.0).unwrap();
        assert!((r.rho - 0.5).abs() < 1e-7);
    }

    #[test]
    fn wrong_lengths_rejected() {
        let q = DMatrix::identity(2, 2);
        assert!(build_companion(&q, StationaryKind::Sngmres, &[]).is_err());
        assert!(build_companion(&DMatrix::zeros(2, 3), StationaryKind::Saa, &[0.1]).is_err());
    }

    #[test]
    fn json_fields() {
        let r = SpectralReport::from_eigenvalues(vec![c(0.5, 0.1), c(1.0, 0.0)], 1, 1.0).unwrap();
        let v = r.to_json();
        for key in ["eigs_re", "eigs_im", "excluded", "rho", "kappa_bar", "L", "ell"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["excluded"], 1);
    }
}
