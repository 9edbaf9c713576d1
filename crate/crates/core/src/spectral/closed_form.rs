//! Closed-form optimal coefficients and convergence-factor bounds.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::StationaryKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOptimum {
    pub beta: f64,
    pub rho: f64,
}

/// Optimal one-step coefficient for a single real eigenvalue `mu` of `q'`.
pub fn optimal_beta_step1_real(mu: f64, kind: StationaryKind) -> Result<StepOptimum> {
    if !mu.is_finite() {
        return Err(Error::Argument(format!("eigenvalue {mu} is not finite")));
    }
    match kind {
        StationaryKind::Saa => {
            if mu == 0.0 {
                return Err(Error::Argument("sAA optimum is degenerate at mu = 0".into()));
            }
            if mu >= 1.0 {
                return Ok(StepOptimum {
                    beta: -1.0,
                    rho: mu.sqrt(),
                });
            }
            let s = (1.0 - mu).sqrt();
            let beta = (1.0 - s) / (1.0 + s);
            let rho = if mu > 0.0 { 1.0 - s } else { s - 1.0 };
            Ok(StepOptimum { beta, rho })
        }
        StationaryKind::SngmresR => {
            if mu.abs() >= 1.0 {
                return Ok(StepOptimum {
                    beta: -1.0,
                    rho: 1.0,
                });
            }
            let s = (1.0 - mu * mu).sqrt();
            Ok(StepOptimum {
                beta: (1.0 - s) / (1.0 + s),
                rho: mu.abs() / (1.0 + s),
            })
        }
        StationaryKind::Sngmres => Err(Error::Argument(
            "no closed-form one-step optimum for sNGMRES; use sNGMRES-R".into(),
        )),
    }
}

/// Step-length choices for steepest descent, plain or accelerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdVariant {
    Sd,
    SaaAlphaOneOverL,
    SaaOptimal,
    SngmresROptimal,
}

impl SdVariant {
    pub const ALL: [SdVariant; 4] = [
        SdVariant::Sd,
        SdVariant::SaaAlphaOneOverL,
        SdVariant::SaaOptimal,
        SdVariant::SngmresROptimal,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdParams {
    pub alpha: f64,
    pub beta: Option<f64>,
    /// Optimal asymptotic factor.
    pub rho: f64,
    /// Spectral radius of `I - alpha H` on the nonzero spectrum.
    pub rho_qprime: f64,
}

/// Closed-form `(alpha, beta, rho)` for SD-based iterations on a Hessian spectrum in `[ell, L]`.
pub fn optimal_sd_params(big_l: f64, ell: f64, variant: SdVariant) -> Result<SdParams> {
    if !(ell > 0.0 && ell < big_l && big_l.is_finite()) {
        return Err(Error::Argument(format!(
            "need 0 < ell < L, got ell = {ell}, L = {big_l}"
        )));
    }
    let kappa = big_l / ell;
    let sd_rate = (kappa - 1.0) / (kappa + 1.0);
    Ok(match variant {
        SdVariant::Sd => SdParams {
            alpha: 2.0 / (big_l + ell),
            beta: None,
            rho: sd_rate,
            rho_qprime: sd_rate,
        },
        SdVariant::SaaAlphaOneOverL => {
            let s = (ell / big_l).sqrt();
            SdParams {
                alpha: 1.0 / big_l,
                beta: Some((1.0 - s) / (1.0 + s)),
                rho: 1.0 - s,
                rho_qprime: (kappa - 1.0) / kappa,
            }
        }
        SdVariant::SaaOptimal => {
            let s = (3.0 * kappa + 1.0).sqrt();
            SdParams {
                alpha: 4.0 / (3.0 * big_l + ell),
                beta: Some((s - 2.0) / (s + 2.0)),
                rho: (s - 2.0) / s,
                rho_qprime: 3.0 * (kappa - 1.0) / (3.0 * kappa + 1.0),
            }
        }
        SdVariant::SngmresROptimal => {
            let sk = kappa.sqrt();
            let rho = (sk - 1.0) / (sk + 1.0);
            SdParams {
                alpha: 2.0 / (big_l + ell),
                beta: Some(rho * rho),
                rho,
                rho_qprime: sd_rate,
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub rho: f64,
    /// Coefficient at which the bound would be attained.
    pub beta: f64,
}

/// Lower bound on the optimal one-step factor from the spectral radius of `q'`.
pub fn complex_lower_bound(rho_qprime: f64, kind: StationaryKind) -> Result<LowerBound> {
    if !(rho_qprime > 0.0 && rho_qprime < 1.0) {
        return Err(Error::Argument(format!(
            "spectral radius {rho_qprime} outside (0, 1)"
        )));
    }
    match kind {
        StationaryKind::Saa => {
            let s = (1.0 - rho_qprime).sqrt();
            Ok(LowerBound {
                rho: 1.0 - s,
                beta: (1.0 - s) / (1.0 + s),
            })
        }
        StationaryKind::SngmresR => {
            let s = (1.0 - rho_qprime * rho_qprime).sqrt();
            Ok(LowerBound {
                rho: rho_qprime / (1.0 + s),
                beta: (1.0 - s) / (1.0 + s),
            })
        }
        StationaryKind::Sngmres => Err(Error::Argument(
            "no lower bound available for sNGMRES; use sNGMRES-R".into(),
        )),
    }
}

/// sAA lower bound from the largest nonnegative real eigenvalue of `q'`.
///
/// Eigenvalues with `|Im| <= 1e-12 * (1 + |Re|)` count as real.
pub fn weaker_lower_bound(eigs: &[Complex64]) -> Result<LowerBound> {
    let rho_plus = eigs
        .iter()
        .filter(|e| e.im.abs() <= 1e-12 * (1.0 + e.re.abs()) && e.re >= 0.0)
        .map(|e| e.re)
        .fold(0.0, f64::max);
    if rho_plus >= 1.0 {
        return Err(Error::Argument(format!(
            "largest nonnegative eigenvalue {rho_plus} is not below 1"
        )));
    }
    let s = (1.0 - rho_plus).sqrt();
    Ok(LowerBound {
        rho: 1.0 - s,
        beta: (1.0 - s) / (1.0 + s),
    })
}

/// Half-widths `(r1, r2)` of the smallest origin-centred box holding `eigs`.
pub fn spectrum_box(eigs: &[Complex64]) -> (f64, f64) {
    eigs.iter()
        .fold((0.0, 0.0), |(r1, r2): (f64, f64), e| (r1.max(e.re.abs()), r2.max(e.im.abs())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectBounds {
    pub delta1: f64,
    /// Best upper bound over the scanned `a`, absent when `r1 == r2`.
    pub delta2: Option<f64>,
    pub a_star: Option<f64>,
}

/// 400 points in `(max(r1, r2) + 1e-6, 1 - 1e-6)` with log-spaced offsets from the left end.
pub fn default_a_grid(r1: f64, r2: f64) -> Vec<f64> {
    let n = 400;
    let lo = r1.max(r2) + 1e-6;
    let hi = 1.0 - 1e-6;
    (0..n)
        .map(|j| lo + (hi - lo) * 10f64.powf(-6.0 + 6.0 * j as f64 / (n - 1) as f64))
        .collect()
}

/// Bounds on the optimal sNGMRES-R(1) factor when the spectrum of `q'` fills the
/// box `[-r1, r1] x [-r2, r2]`. `a_grid` defaults to [`default_a_grid`].
pub fn rect_bounds_sngmres_r1(r1: f64, r2: f64, a_grid: Option<&[f64]>) -> Result<RectBounds> {
    let valid = |r: f64| (0.0..1.0).contains(&r);
    if !valid(r1) || !valid(r2) || (r1 == 0.0 && r2 == 0.0) {
        return Err(Error::Argument(format!(
            "box half-widths must lie in [0, 1) and not both vanish, got ({r1}, {r2})"
        )));
    }
    if r1 == r2 {
        return Ok(RectBounds {
            delta1: r1 / (1.0 + (1.0 - r1 * r1).sqrt()),
            delta2: None,
            a_star: None,
        });
    }
    let eta0 = 2.0 / (1.0 + (1.0 - r1 * r1 + r2 * r2).sqrt());
    let eta1 = 1.0 - eta0;
    let delta1 = 2.0 * eta1 / (r2 * eta0 - ((r2 * eta0).powi(2) - 4.0 * eta1).sqrt());

    let owned;
    let grid = match a_grid {
        Some(g) => g,
        None => {
            owned = default_a_grid(r1, r2);
            &owned
        }
    };
    let lower = r1.max(r2);
    let mut best: Option<(f64, f64)> = None;
    for &a in grid.iter().filter(|&&a| a > lower && a < 1.0) {
        let b = a * r2 / (a * a - r1 * r1).sqrt();
        let tau0 = 2.0 / (1.0 + (1.0 - a * a + b * b).sqrt());
        let tau1 = 1.0 - tau0;
        let d2 = if r1 > r2 {
            2.0 * tau1 / (-a * tau0 + ((a * tau0).powi(2) + 4.0 * tau1).sqrt())
        } else {
            2.0 * tau1 / (b * tau0 - ((b * tau0).powi(2) - 4.0 * tau1).sqrt())
        };
        if d2.is_finite() && d2 > 0.0 && best.is_none_or(|(v, _)| d2 < v) {
            best = Some((d2, a));
        }
    }
    match best {
        Some((d2, a)) => Ok(RectBounds {
            delta1,
            delta2: Some(d2),
            a_star: Some(a),
        }),
        None => Err(Error::BoundUnavailable { delta1 }),
    }
}
