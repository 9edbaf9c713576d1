//! Spectra, field-of-values bounds and the GMRES comparison.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fpaccel_core::accel::{MethodSpec, Trace, Window};
use fpaccel_core::gmres::{fov_numeric, gmres, project_nonsingular, FovReport, GmresHistory};
use fpaccel_core::spectral::{companion_eigenvalues, optimal_beta_step1_real, optimal_sd_params, SdVariant};
use fpaccel_core::{Complex64, DMatrix, DVector, Error, FixedPointMapKind, SpectralReport, StationaryKind};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, MapName, StepRule, StepSetting};
use crate::error::{CliError, CliResult};
use crate::format::{cell, write_json};
use crate::instance::{Bounds, Instance, Linearization};
use crate::run::{execute, stop_criteria};
use crate::methods::ResolvedMethod;

/// Beckermann quantities for the projected preconditioned Hessian.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FovSummary {
    pub nu: f64,
    pub r: f64,
    pub rho_beta: Option<f64>,
    pub c_beta: Option<f64>,
    /// Same bound from the bounding rectangle of the field of values.
    pub rho_beta_bb: Option<f64>,
    pub c_beta_bb: Option<f64>,
    pub zero_in_fov: bool,
}

impl FovSummary {
    pub fn from_report(f: &FovReport) -> Self {
        let bb = f.rect_factor().ok();
        Self {
            nu: f.nu,
            r: f.r,
            rho_beta: f.rho_beta,
            c_beta: f.c_beta,
            rho_beta_bb: bb.map(|b| b.0),
            c_beta_bb: bb.map(|b| b.1),
            zero_in_fov: f.zero_in_fov,
        }
    }
}

/// Projects `M^{-1} H` onto its nonsingular part.
pub fn projected_system(lin: &Linearization) -> CliResult<(DMatrix<f64>, DMatrix<f64>)> {
    Ok(project_nonsingular(&lin.preconditioned_hessian(), lin.num_excluded)?)
}

pub fn fov_analysis(lin: &Linearization, angles: usize) -> CliResult<(FovSummary, serde_json::Value)> {
    let (b, _) = projected_system(lin)?;
    let fov = fov_numeric(&b, angles)?;
    let summary = FovSummary::from_report(&fov);
    let mut json = fov.to_json();
    json["rho_beta_bb"] = serde_json::json!(summary.rho_beta_bb);
    json["c_beta_bb"] = serde_json::json!(summary.c_beta_bb);
    Ok((summary, json))
}

/// Mean ratio of consecutive values over the last `window` pairs above `floor`.
pub fn tail_rate(values: &[f64], window: usize, floor: f64) -> Option<f64> {
    let logs: Vec<f64> = values
        .windows(2)
        .filter(|w| w[0] > floor && w[1] > floor)
        .map(|w| (w[1] / w[0]).ln())
        .collect();
    let take = window.min(logs.len());
    if take == 0 {
        return None;
    }
    Some((logs[logs.len() - take..].iter().sum::<f64>() / take as f64).exp())
}

/// GMRES on the linearized ALS system and on its projection.
pub struct GmresRuns {
    pub full: GmresHistory,
    pub projected: GmresHistory,
    pub fov: FovReport,
}

pub fn linear_gmres(inst: &Instance, lin: &Linearization, max_iter: usize, angles: usize) -> CliResult<GmresRuns> {
    let a = lin.preconditioned_hessian();
    let xs = DVector::from_vec(inst.xstar.flatten());
    let x0 = DVector::from_vec(inst.x0.flatten());
    let b = &a * &xs;
    let iters = max_iter.min(a.nrows());
    let full = gmres(&a, &b, &x0, iters, 1e-13)?;
    let (bm, q) = project_nonsingular(&a, lin.num_excluded)?;
    let bq = q.transpose() * &b;
    let z0 = q.transpose() * &x0;
    let projected = gmres(&bm, &bq, &z0, iters.min(bm.nrows()), 1e-13)?;
    let fov = fov_numeric(&bm, angles)?;
    Ok(GmresRuns { full, projected, fov })
}

const COMPARE_METHODS: [(&str, bool, Window); 4] = [
    ("aa_inf", true, Window::Unbounded),
    ("aa_10", true, Window::Finite(10)),
    ("ngmres_inf", false, Window::Unbounded),
    ("ngmres_10", false, Window::Finite(10)),
];

/// Writes `gmres_s<seed>.csv` and `gmres_fov_s<seed>.json`; returns their paths.
pub fn gmres_compare(
    cfg: &ExperimentConfig,
    inst: &Instance,
    lin: &Linearization,
    pool: &rayon::ThreadPool,
) -> CliResult<Vec<PathBuf>> {
    let runs = linear_gmres(inst, lin, cfg.budget.max_iter, cfg.tables.fov_angles)?;
    let stop = stop_criteria(cfg, inst.f_star);
    let traces: Vec<Trace> = pool.install(|| {
        COMPARE_METHODS
            .par_iter()
            .map(|&(label, is_aa, w)| {
                let spec = if is_aa { MethodSpec::aa(w) } else { MethodSpec::ngmres(w) };
                let m = ResolvedMethod {
                    label: label.into(),
                    map: FixedPointMapKind::Als,
                    map_name: MapName::Als,
                    spec: spec.globalized(true),
                    theory: None,
                    rho_companion: None,
                    warm_start: 0,
                };
                let run = execute(inst, m, &stop);
                run.trace.ok_or_else(|| {
                    CliError::Core(Error::Numerical(format!("{label}: {}", run.error.unwrap_or_default())))
                })
            })
            .collect::<CliResult<_>>()
    })?;

    let mut columns: Vec<(String, Vec<f64>)> = vec![
        ("gmres".into(), runs.full.relative()),
        ("gmres_b".into(), runs.projected.relative()),
    ];
    for ((label, ..), t) in COMPARE_METHODS.iter().zip(&traces) {
        let r0 = t.records[0].rnorm;
        columns.push((label.to_string(), t.records.iter().map(|r| r.rnorm / r0).collect()));
    }
    let rows = columns.iter().map(|c| c.1.len()).max().unwrap_or(0);
    let bound = |k: usize| match (runs.fov.rho_beta, runs.fov.c_beta) {
        (Some(r), Some(c)) => Some(c * r.powi(k as i32)),
        _ => None,
    };
    let csv = cfg.output_dir.join(format!("gmres_s{}.csv", inst.seed));
    let mut w = BufWriter::new(File::create(&csv)?);
    let header: Vec<&str> = columns.iter().map(|c| c.0.as_str()).collect();
    writeln!(w, "k,{},bound", header.join(","))?;
    for k in 0..rows {
        let cells: Vec<String> = columns.iter().map(|c| cell(c.1.get(k).copied())).collect();
        writeln!(w, "{k},{},{}", cells.join(","), cell(bound(k)))?;
    }
    w.flush()?;

    let summary = FovSummary::from_report(&runs.fov);
    let mut json = runs.fov.to_json();
    json["rho_beta_bb"] = serde_json::json!(summary.rho_beta_bb);
    json["c_beta_bb"] = serde_json::json!(summary.c_beta_bb);
    json["rho_gmres"] = serde_json::json!(tail_rate(&runs.projected.relative(), cfg.estimate.window, 1e-13));
    let fov_path = cfg.output_dir.join(format!("gmres_fov_s{}.json", inst.seed));
    write_json(&fov_path, &json)?;
    Ok(vec![csv, fov_path])
}

/// Stationary one-step method analysed by `spectrum`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumMethod {
    Saa1,
    SngmresR1,
}

impl SpectrumMethod {
    pub fn kind(self) -> StationaryKind {
        match self {
            SpectrumMethod::Saa1 => StationaryKind::Saa,
            SpectrumMethod::SngmresR1 => StationaryKind::SngmresR,
        }
    }

    fn name(self) -> &'static str {
        match self {
            SpectrumMethod::Saa1 => "saa1",
            SpectrumMethod::SngmresR1 => "sngmresr1",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumOptions {
    pub map: MapName,
    pub method: SpectrumMethod,
    pub beta: Option<f64>,
    pub alpha: Option<StepSetting>,
    pub xstar: Option<PathBuf>,
    pub seed: Option<u64>,
}

fn sd_table(lin: &Linearization) -> CliResult<serde_json::Value> {
    let c = lin.condition;
    let mut rows = serde_json::Map::new();
    for v in SdVariant::ALL {
        let p = optimal_sd_params(c.l_max, c.ell, v)?;
        let key = serde_json::to_value(v).ok().and_then(|k| k.as_str().map(str::to_string)).unwrap_or_default();
        rows.insert(key, serde_json::to_value(p).map_err(|e| CliError::Usage(e.to_string()))?);
    }
    Ok(serde_json::Value::Object(rows))
}

/// Eigenvalues and bounds for one stationary method at `x*`.
pub fn spectrum_report(cfg: &ExperimentConfig, opts: &SpectrumOptions) -> CliResult<serde_json::Value> {
    let seed = opts.seed.unwrap_or(cfg.seed);
    if let Some(p) = &opts.xstar {
        if !p.exists() {
            return Err(CliError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("fixed point file {} not found", p.display()),
            )));
        }
    }
    let inst = Instance::load_or_build(cfg, seed, opts.xstar.as_deref())?;
    let lin = inst.linearize()?;
    let kind = opts.method.kind();
    let c = lin.condition;
    let nz = lin.num_excluded;

    let (alpha, qprime_eigs, default_beta, theory_rho) = match opts.map {
        MapName::Als => {
            if opts.alpha.is_some() {
                return Err(CliError::Usage("--alpha applies to the SD map only".into()));
            }
            let opt = optimal_beta_step1_real(lin.als.rho, kind)?;
            (None, lin.als.all_eigenvalues(), Some(opt.beta), Some(opt.rho))
        }
        MapName::Sd => {
            let setting = opts.alpha.unwrap_or(StepSetting::Rule(StepRule::Optimal));
            let (alpha, beta, rho) = match (setting, kind) {
                (StepSetting::Value(a), _) => (a, None, None),
                (StepSetting::Rule(StepRule::OneOverL), StationaryKind::Saa) => {
                    let p = optimal_sd_params(c.l_max, c.ell, SdVariant::SaaAlphaOneOverL)?;
                    (p.alpha, p.beta, Some(p.rho))
                }
                (StepSetting::Rule(StepRule::OneOverL), _) => {
                    return Err(CliError::Usage("alpha one_over_l has a closed form for saa1 only".into()))
                }
                (StepSetting::Rule(StepRule::Optimal), k) => {
                    let v = if k == StationaryKind::Saa { SdVariant::SaaOptimal } else { SdVariant::SngmresROptimal };
                    let p = optimal_sd_params(c.l_max, c.ell, v)?;
                    (p.alpha, p.beta, Some(p.rho))
                }
            };
            let eigs = lin.hessian_eigs.iter().map(|l| Complex64::new(1.0 - alpha * l, 0.0)).collect();
            (Some(alpha), eigs, beta, rho)
        }
    };
    let qprime = SpectralReport::from_eigenvalues(qprime_eigs.clone(), nz, 1.0)?.with_condition(c);
    let beta = match (opts.beta, default_beta) {
        (Some(b), _) | (None, Some(b)) => b,
        (None, None) => return Err(CliError::Usage("a numeric --alpha needs an explicit --beta".into())),
    };
    let companion = SpectralReport::from_eigenvalues(companion_eigenvalues(&qprime_eigs, kind, &[beta])?, nz, 1.0)?;
    let bounds = Bounds::from_spectrum(&qprime);

    let mut json = serde_json::json!({
        "seed": seed,
        "map": opts.map.to_string(),
        "method": opts.method.name(),
        "alpha": alpha,
        "beta": beta,
        "kappa_bar": c.kappa_bar,
        "L": c.l_max,
        "ell": c.ell,
        "excluded": nz,
        "rho_qprime": qprime.rho,
        "qprime": qprime.to_json(),
        "rho_companion": companion.rho,
        "companion": companion.to_json(),
        "theory_rho": if opts.beta.is_none() { theory_rho } else { None },
        "bounds": bounds,
        "sd_factors": sd_table(&lin)?,
    });
    if let Some(a) = alpha {
        json["rho_qprime_formula"] = serde_json::json!(1.0 - a * c.ell);
    }
    if opts.map == MapName::Als {
        json["hessian_eigs"] = serde_json::json!(lin.hessian_eigs);
    }
    Ok(json)
}

pub fn default_spectrum_path(cfg: &ExperimentConfig, opts: &SpectrumOptions) -> PathBuf {
    let map = match opts.map {
        MapName::Als => "als",
        MapName::Sd => "sd",
    };
    let seed = opts.seed.unwrap_or(cfg.seed);
    cfg.output_dir.join(format!("spectrum_{map}_{}_s{seed}.json", opts.method.name()))
}

pub fn cmd_spectrum(cfg: &ExperimentConfig, opts: &SpectrumOptions, out: Option<&Path>) -> CliResult<PathBuf> {
    let json = spectrum_report(cfg, opts)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| default_spectrum_path(cfg, opts));
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    write_json(&path, &json)?;
    Ok(path)
}

pub fn cmd_gmres_compare(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let pool = crate::run::thread_pool()?;
    let prepared = crate::run::prepare(cfg, &pool, true)?;
    let mut files = Vec::new();
    for (inst, lin) in &prepared {
        files.extend(gmres_compare(cfg, inst, lin, &pool)?);
    }
    Ok(files)
}

pub(crate) fn float_row(values: &[Option<f64>]) -> String {
    values.iter().map(|v| cell(*v)).collect::<Vec<_>>().join(",")
}

