//! Problem instances, refined fixed points and their linearization.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use fpaccel_core::cpd::{
    jacobian_fixed_point, modified_condition_number, read_factor_point, refine_fixed_point,
    write_factor_point, ConditionReport, DerivativeMode,
};
use fpaccel_core::linalg;
use fpaccel_core::spectral::{
    complex_lower_bound, modified_spectral_radius, rect_bounds_sngmres_r1, spectrum_box,
    weaker_lower_bound,
};
use fpaccel_core::tensor::{generate_synthetic, read_tensor};
use fpaccel_core::{
    CpdProblem, DMatrix, Error, FactorPoint, FixedPointMapKind, SpectralReport, StationaryKind,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, ProblemSource, X0_SEED_OFFSET};
use crate::error::CliResult;

/// A seeded problem with its reference fixed point.
#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub problem: CpdProblem,
    pub x0: FactorPoint,
    /// Refined ALS fixed point, columns balanced across modes.
    pub xstar: FactorPoint,
    pub f_star: f64,
    pub gnorm: f64,
}

impl Instance {
    /// Builds the problem for `seed` and refines its fixed point from `x0` with ALS.
    pub fn build(cfg: &ExperimentConfig, seed: u64) -> CliResult<Self> {
        let (problem, x0) = problem_for(cfg, seed)?;
        let refined = match refine_fixed_point(
            &problem,
            &x0,
            FixedPointMapKind::Als,
            cfg.budget.refine_max_iter,
            cfg.budget.refine_tol,
        ) {
            Ok(x) => x,
            Err(Error::NonConvergence { best, best_gnorm, iterations }) => {
                let tol = problem.fixed_point_tolerance();
                if best_gnorm > tol {
                    return Err(Error::NonConvergence { best, best_gnorm, iterations }.into());
                }
                log::warn!(
                    "seed {seed}: refinement stopped at gradient norm {best_gnorm:e}, accepted below {tol:e}"
                );
                problem.point(&best)?
            }
            Err(e) => return Err(e.into()),
        };
        Self::with_xstar(seed, problem, x0, refined)
    }

    /// Uses a stored fixed point when `path` exists, refining otherwise.
    pub fn load_or_build(cfg: &ExperimentConfig, seed: u64, path: Option<&Path>) -> CliResult<Self> {
        let default = xstar_path(cfg, seed);
        let path = path.map(Path::to_path_buf).unwrap_or(default);
        if !path.exists() {
            log::warn!("no fixed point at {}, refining", path.display());
            return Self::build(cfg, seed);
        }
        let (problem, x0) = problem_for(cfg, seed)?;
        let xstar = read_factor_point(BufReader::new(File::open(&path)?))?;
        if xstar.dims() != problem.dims() || xstar.rank() != problem.rank() {
            return Err(Error::Precondition(format!(
                "{} has shape {:?} rank {}, problem has {:?} rank {}",
                path.display(),
                xstar.dims(),
                xstar.rank(),
                problem.dims(),
                problem.rank()
            ))
            .into());
        }
        Self::with_xstar(seed, problem, x0, xstar)
    }

    fn with_xstar(seed: u64, problem: CpdProblem, x0: FactorPoint, x: FactorPoint) -> CliResult<Self> {
        let xstar = x.balanced();
        let f_star = problem.objective(&xstar)?;
        let gnorm = linalg::norm(&problem.gradient(&xstar)?);
        let tol = problem.fixed_point_tolerance();
        if gnorm > tol {
            return Err(Error::Precondition(format!(
                "seed {seed}: gradient norm {gnorm:e} at the fixed point exceeds {tol:e}"
            ))
            .into());
        }
        Ok(Self {
            seed,
            problem,
            x0,
            xstar,
            f_star,
            gnorm,
        })
    }

    pub fn write_xstar(&self, path: &Path) -> CliResult<()> {
        let mut f = File::create(path)?;
        write_factor_point(&mut f, &self.xstar)?;
        Ok(())
    }

    pub fn linearize(&self) -> CliResult<Linearization> {
        let p = &self.problem;
        let nz = p.degeneracy();
        let hessian = p.hessian(&self.xstar, DerivativeMode::Analytic)?;
        let condition = modified_condition_number(&hessian, nz)?;
        let mut h_eigs = linalg::symmetric_eigenvalues(&hessian);
        h_eigs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
        let q_als = jacobian_fixed_point(p, FixedPointMapKind::Als, &self.xstar, DerivativeMode::Analytic)?;
        let als = modified_spectral_radius(&q_als, nz, 1.0)?.with_condition(condition);
        Ok(Linearization {
            num_excluded: nz,
            hessian,
            hessian_eigs: h_eigs,
            condition,
            q_als,
            als,
        })
    }

    /// Relative Frobenius distance between the tensors of `x` and of `x*`.
    pub fn tensor_distance(&self, x: &FactorPoint) -> CliResult<f64> {
        let t = self.xstar.full();
        let d = x.full().sub(&t)?;
        Ok(d.frobenius_norm() / t.frobenius_norm().max(f64::MIN_POSITIVE))
    }
}

fn problem_for(cfg: &ExperimentConfig, seed: u64) -> CliResult<(CpdProblem, FactorPoint)> {
    let (data, rank) = match &cfg.problem {
        ProblemSource::Synthetic(s) => {
            let spec = cfg.synthetic_spec(s, seed);
            (generate_synthetic(&spec)?.data, spec.rank)
        }
        ProblemSource::TensorFile { path } => read_tensor(BufReader::new(File::open(path)?))?,
    };
    let problem = CpdProblem::new(data, rank)?;
    let x0 = FactorPoint::random_uniform(problem.dims(), rank, seed.wrapping_add(X0_SEED_OFFSET));
    Ok((problem, x0))
}

pub fn xstar_path(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.output_dir.join(format!("xstar_s{seed}.txt"))
}

/// Derivatives at `x*`.
#[derive(Debug, Clone)]
pub struct Linearization {
    /// Number of eigenvalues tied to the scaling degeneracy.
    pub num_excluded: usize,
    pub hessian: DMatrix<f64>,
    /// Hessian eigenvalues by increasing magnitude.
    pub hessian_eigs: Vec<f64>,
    pub condition: ConditionReport,
    pub q_als: DMatrix<f64>,
    pub als: SpectralReport,
}

impl Linearization {
    /// Nonzero Hessian eigenvalues.
    pub fn nonzero_hessian_eigs(&self) -> &[f64] {
        &self.hessian_eigs[self.num_excluded..]
    }

    /// `M^{-1} H = I - q'_ALS`.
    pub fn preconditioned_hessian(&self) -> DMatrix<f64> {
        DMatrix::identity(self.q_als.nrows(), self.q_als.ncols()) - &self.q_als
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::from_spectrum(&self.als)
    }
}

/// Lower and upper bounds on optimal one-step factors for an ALS spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bounds {
    pub rho_qprime: f64,
    pub rho_p: Option<f64>,
    pub rho_p_n: Option<f64>,
    pub rho_weaker: Option<f64>,
    pub r1: f64,
    pub r2: f64,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub a_star: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Bounds {
    pub fn from_spectrum(s: &SpectralReport) -> Self {
        let mut notes = Vec::new();
        let mut keep = |r: fpaccel_core::Result<f64>, what: &str| match r {
            Ok(v) => Some(v),
            Err(e) => {
                notes.push(format!("{what}: {e}"));
                None
            }
        };
        let rho = s.rho;
        let rho_p = keep(complex_lower_bound(rho, StationaryKind::Saa).map(|b| b.rho), "rho_p");
        let rho_p_n = keep(complex_lower_bound(rho, StationaryKind::SngmresR).map(|b| b.rho), "rho_p_n");
        let rho_weaker = keep(weaker_lower_bound(&s.eigenvalues).map(|b| b.rho), "rho_weaker");
        let (r1, r2) = spectrum_box(&s.eigenvalues);
        let (delta1, delta2, a_star) = match rect_bounds_sngmres_r1(r1, r2, None) {
            Ok(b) => (Some(b.delta1), b.delta2, b.a_star),
            Err(Error::BoundUnavailable { delta1 }) => {
                notes.push("delta2: no admissible ellipse parameter".into());
                (Some(delta1), None, None)
            }
            Err(e) => {
                notes.push(format!("delta: {e}"));
                (None, None, None)
            }
        };
        Self {
            rho_qprime: rho,
            rho_p,
            rho_p_n,
            rho_weaker,
            r1,
            r2,
            delta1,
            delta2,
            a_star,
            notes,
        }
    }
}
