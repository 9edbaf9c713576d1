//! Turning configured methods into runnable specs with theory values.

use fpaccel_core::accel::{MethodSpec, Window};
use fpaccel_core::spectral::{
    companion_eigenvalues, optimal_beta_step1_real, optimal_sd_params, SdVariant,
    SpectralReport,
};
use fpaccel_core::{Complex64, FixedPointMapKind, StationaryKind};
use serde::{Deserialize, Serialize};

use crate::config::{
    CoefficientRule, Coefficients, MapName, MethodEntry, MethodName, StepRule, StepSetting,
    WindowSetting,
};
use crate::error::CliResult;
use crate::instance::Linearization;

/// Closed forms a theory value can come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    /// Modified spectral radius of `q'_ALS`.
    AlsSpectralRadius,
    /// `max |1 - alpha lambda|` over the nonzero Hessian spectrum.
    SdStep,
    /// Gradient descent with `alpha = 2 / (L + ell)`.
    SdOptimal,
    /// sAA(1) on SD with `alpha = 1/L` and its optimal beta.
    SaaSdOneOverL,
    /// sAA(1) on SD with jointly optimal `(alpha, beta)`.
    SaaSdOptimal,
    /// sNGMRES-R(1) on SD with jointly optimal `(alpha, beta)`.
    SngmresRSdOptimal,
    /// sAA(1) optimum for a real positive dominant eigenvalue of `q'`.
    SaaRealDominant,
    /// sNGMRES-R(1) optimum for a real dominant eigenvalue of `q'`.
    SngmresRRealDominant,
    /// Modified spectral radius of the companion matrix for fixed coefficients.
    Companion,
}

impl Formula {
    pub fn provenance(self) -> &'static str {
        match self {
            Formula::AlsSpectralRadius => "modified spectral radius of the ALS Jacobian at x*",
            Formula::SdStep => "spectral radius of I - alpha H on the nonzero Hessian spectrum",
            Formula::SdOptimal => "optimal gradient-descent rate (kappa - 1) / (kappa + 1)",
            Formula::SaaSdOneOverL => "sAA(1)-SD optimum with alpha = 1/L: 1 - sqrt(1/kappa)",
            Formula::SaaSdOptimal => "sAA(1)-SD joint optimum: (s - 2)/s with s = sqrt(3 kappa + 1)",
            Formula::SngmresRSdOptimal => "sNGMRES-R(1)-SD joint optimum: (sqrt(kappa) - 1)/(sqrt(kappa) + 1)",
            Formula::SaaRealDominant => "sAA(1) optimum for a real dominant eigenvalue: 1 - sqrt(1 - rho_q')",
            Formula::SngmresRRealDominant => "sNGMRES-R(1) optimum for a real dominant eigenvalue: rho_q' / (1 + sqrt(1 - rho_q'^2))",
            Formula::Companion => "modified spectral radius of the companion matrix built from the q' spectrum",
        }
    }
}

/// Quantities a theory value is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub kappa_bar: f64,
    #[serde(rename = "L")]
    pub l_max: f64,
    pub ell: f64,
    pub rho_qprime: f64,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theory {
    pub formula: Formula,
    pub rho: f64,
    pub inputs: TheoryInputs,
    pub provenance: String,
}

impl Theory {
    fn new(formula: Formula, rho: f64, inputs: TheoryInputs) -> Self {
        Self {
            formula,
            rho,
            inputs,
            provenance: formula.provenance().to_string(),
        }
    }

    /// Recomputes the value from the stored inputs; `None` for [`Formula::Companion`].
    pub fn recompute(&self) -> Option<f64> {
        let i = &self.inputs;
        let k = i.kappa_bar;
        let q = i.rho_qprime;
        Some(match self.formula {
            Formula::AlsSpectralRadius => q,
            Formula::SdStep => {
                let a = i.alpha?;
                (1.0 - a * i.ell).abs().max((1.0 - a * i.l_max).abs())
            }
            Formula::SdOptimal => (k - 1.0) / (k + 1.0),
            Formula::SaaSdOneOverL => 1.0 - (1.0 / k).sqrt(),
            Formula::SaaSdOptimal => {
                let s = (3.0 * k + 1.0).sqrt();
                (s - 2.0) / s
            }
            Formula::SngmresRSdOptimal => (k.sqrt() - 1.0) / (k.sqrt() + 1.0),
            Formula::SaaRealDominant => 1.0 - (1.0 - q).sqrt(),
            Formula::SngmresRRealDominant => q / (1.0 + (1.0 - q * q).sqrt()),
            Formula::Companion => return None,
        })
    }
}

/// A configured method made concrete at a fixed point.
#[derive(Debug, Clone)]
pub struct ResolvedMethod {
    pub label: String,
    pub map: FixedPointMapKind,
    pub map_name: MapName,
    pub spec: MethodSpec,
    pub theory: Option<Theory>,
    /// Modified spectral radius of the companion matrix for the resolved coefficients.
    pub rho_companion: Option<f64>,
    pub warm_start: usize,
}

impl ResolvedMethod {
    pub fn alpha(&self) -> Option<f64> {
        match self.map {
            FixedPointMapKind::Sd { alpha } => Some(alpha),
            FixedPointMapKind::Als => None,
        }
    }
}

fn stationary_kind(m: MethodName) -> Option<StationaryKind> {
    match m {
        MethodName::Saa => Some(StationaryKind::Saa),
        MethodName::Sngmres => Some(StationaryKind::Sngmres),
        MethodName::SngmresR => Some(StationaryKind::SngmresR),
        _ => None,
    }
}

pub fn default_label(e: &MethodEntry) -> String {
    let name = match e.method {
        MethodName::Fp => "fp",
        MethodName::Aa => "aa",
        MethodName::Ngmres => "ngmres",
        MethodName::Nesterov => "nesterov",
        MethodName::Saa => "saa",
        MethodName::Sngmres => "sngmres",
        MethodName::SngmresR => "sngmres_r",
    };
    let window = match (e.window, &e.betas) {
        (Some(WindowSetting::Count(m)), _) => m.to_string(),
        (Some(WindowSetting::Unbounded(_)), _) => "inf".into(),
        (None, Some(Coefficients::Values(v))) if e.method == MethodName::Sngmres => (v.len() - 1).to_string(),
        (None, Some(Coefficients::Values(v))) => v.len().to_string(),
        (None, Some(Coefficients::Rule(_))) => "1".into(),
        (None, None) => String::new(),
    };
    let map = match e.map {
        MapName::Als => "als",
        MapName::Sd => "sd",
    };
    format!("{name}{window}_{map}")
}

/// Resolves step lengths, coefficients and the matching theory value.
pub fn resolve(e: &MethodEntry, lin: &Linearization) -> CliResult<ResolvedMethod> {
    let c = lin.condition;
    let mut inputs = TheoryInputs {
        kappa_bar: c.kappa_bar,
        l_max: c.l_max,
        ell: c.ell,
        rho_qprime: lin.als.rho,
        alpha: None,
    };
    let kind = stationary_kind(e.method);
    let optimal_betas = matches!(e.betas, Some(Coefficients::Rule(CoefficientRule::Optimal)));

    let sd_variant = |rule: StepRule| match (kind, rule) {
        (Some(StationaryKind::Saa), StepRule::OneOverL) => SdVariant::SaaAlphaOneOverL,
        (Some(StationaryKind::Saa), StepRule::Optimal) => SdVariant::SaaOptimal,
        (Some(StationaryKind::SngmresR), _) => SdVariant::SngmresROptimal,
        _ => SdVariant::Sd,
    };

    let mut betas: Vec<f64> = match &e.betas {
        Some(Coefficients::Values(v)) => v.clone(),
        _ => Vec::new(),
    };
    let mut theory = None;
    let map = match (e.map, e.alpha) {
        (MapName::Als, _) => {
            if optimal_betas {
                let k = kind.expect("validated: optimal betas need a stationary method");
                let opt = optimal_beta_step1_real(lin.als.rho, k)?;
                betas = vec![opt.beta];
                let f = match k {
                    StationaryKind::Saa => Formula::SaaRealDominant,
                    _ => Formula::SngmresRRealDominant,
                };
                theory = Some(Theory::new(f, opt.rho, inputs));
            } else if e.method == MethodName::Fp {
                theory = Some(Theory::new(Formula::AlsSpectralRadius, lin.als.rho, inputs));
            }
            FixedPointMapKind::Als
        }
        (MapName::Sd, Some(StepSetting::Rule(rule))) => {
            let variant = if kind.is_some() && !optimal_betas {
                if rule == StepRule::OneOverL { SdVariant::SaaAlphaOneOverL } else { SdVariant::Sd }
            } else {
                sd_variant(rule)
            };
            let params = optimal_sd_params(c.l_max, c.ell, variant)?;
            let alpha = match (rule, variant) {
                (StepRule::OneOverL, _) => 1.0 / c.l_max,
                _ => params.alpha,
            };
            inputs.alpha = Some(alpha);
            if optimal_betas {
                betas = vec![params.beta.expect("accelerated variants carry beta")];
                let f = match variant {
                    SdVariant::SaaAlphaOneOverL => Formula::SaaSdOneOverL,
                    SdVariant::SaaOptimal => Formula::SaaSdOptimal,
                    _ => Formula::SngmresRSdOptimal,
                };
                theory = Some(Theory::new(f, params.rho, inputs));
            } else if e.method == MethodName::Fp {
                let t = if rule == StepRule::Optimal {
                    Theory::new(Formula::SdOptimal, params.rho, inputs)
                } else {
                    let rho = sd_step_radius(alpha, c.ell, c.l_max);
                    Theory::new(Formula::SdStep, rho, inputs)
                };
                theory = Some(t);
            }
            FixedPointMapKind::Sd { alpha }
        }
        (MapName::Sd, Some(StepSetting::Value(alpha))) => {
            inputs.alpha = Some(alpha);
            if e.method == MethodName::Fp {
                let rho = sd_step_radius(alpha, c.ell, c.l_max);
                theory = Some(Theory::new(Formula::SdStep, rho, inputs));
            }
            FixedPointMapKind::Sd { alpha }
        }
        (MapName::Sd, None) => unreachable!("validated: SD needs alpha"),
    };

    let mut rho_companion = None;
    if let Some(k) = kind {
        let qprime_eigs: Vec<Complex64> = match map {
            FixedPointMapKind::Als => lin.als.all_eigenvalues(),
            FixedPointMapKind::Sd { alpha } => lin
                .hessian_eigs
                .iter()
                .map(|l| Complex64::new(1.0 - alpha * l, 0.0))
                .collect(),
        };
        let eigs = companion_eigenvalues(&qprime_eigs, k, &betas)?;
        let rep = SpectralReport::from_eigenvalues(eigs, lin.num_excluded, 1.0)?;
        rho_companion = Some(rep.rho);
        if !optimal_betas {
            theory = Some(Theory::new(Formula::Companion, rep.rho, inputs));
        }
    }

    let spec = match e.method {
        MethodName::Fp => MethodSpec::fixed_point(),
        MethodName::Aa | MethodName::Ngmres => {
            let w = match e.window.expect("validated: window required") {
                WindowSetting::Count(m) => Window::Finite(m),
                WindowSetting::Unbounded(_) => Window::Unbounded,
            };
            let s = if e.method == MethodName::Aa { MethodSpec::aa(w) } else { MethodSpec::ngmres(w) };
            s.globalized(e.globalize.unwrap_or(true))
        }
        MethodName::Nesterov => MethodSpec::nesterov(),
        _ => kind.expect("stationary").method_spec(betas),
    };
    spec.validate()?;
    Ok(ResolvedMethod {
        label: e.label.clone().unwrap_or_else(|| default_label(e)),
        map,
        map_name: e.map,
        spec,
        theory,
        rho_companion,
        warm_start: e.warm_start,
    })
}

fn sd_step_radius(alpha: f64, ell: f64, l_max: f64) -> f64 {
    (1.0 - alpha * ell).abs().max((1.0 - alpha * l_max).abs())
}
