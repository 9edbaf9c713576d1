//! The `run` command: method sweeps over seeded instances.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use fpaccel_core::accel::{
    estimate_convergence_factor_with_floor, estimate_norm_factor, run_accelerated, NormColumn,
    StopCriteria, Trace,
};
use fpaccel_core::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, RateQuantity};
use crate::error::{CliError, CliResult};
use crate::format::write_json;
use crate::instance::{xstar_path, Bounds, Instance, Linearization};
use crate::methods::{resolve, ResolvedMethod, Theory};
use crate::analysis::{fov_analysis, gmres_compare, FovSummary};

/// Relative tensor distance above which a run is flagged as another basin.
pub const BASIN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub seed: u64,
    pub instances: Vec<InstanceReport>,
    /// Every file written by the run, relative to the output directory.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceReport {
    pub seed: u64,
    pub dims: Vec<usize>,
    pub rank: usize,
    pub f_star: f64,
    pub gnorm_star: f64,
    pub kappa_bar: f64,
    #[serde(rename = "L")]
    pub l_max: f64,
    pub ell: f64,
    pub excluded: usize,
    pub rho_qprime_als: f64,
    /// `I - alpha H` with `alpha = 2 / (L + ell)`.
    pub rho_qprime_sd: f64,
    pub dominant_re: Option<f64>,
    pub dominant_im: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fov: Option<FovSummary>,
    pub methods: Vec<MethodReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub label: String,
    pub method: String,
    pub map: String,
    pub alpha: Option<f64>,
    pub betas: Vec<f64>,
    pub status: String,
    pub iterations: usize,
    pub final_f: Option<f64>,
    pub final_gnorm: Option<f64>,
    pub warm_start: usize,
    pub rho_measured: Option<f64>,
    pub theory: Option<Theory>,
    pub rho_companion: Option<f64>,
    /// Relative distance of the final tensor from the reference; absent when not converged.
    pub basin_distance: Option<f64>,
    pub multi_basin: bool,
    pub trace: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Outcome of one method on one instance.
pub struct MethodRun {
    pub resolved: ResolvedMethod,
    pub trace: Option<Trace>,
    pub diverged: bool,
    pub error: Option<String>,
}

pub fn stop_criteria(cfg: &ExperimentConfig, f_star: f64) -> StopCriteria {
    StopCriteria {
        max_iter: cfg.budget.max_iter,
        f_tol: cfg.budget.f_tol,
        g_tol: cfg.budget.g_tol,
        f_star: Some(f_star),
        ..StopCriteria::default()
    }
}

/// Runs a resolved method from the instance's `x0`. A warm start applies ALS
/// sweeps and then balances the column norms across modes.
pub fn execute(inst: &Instance, m: ResolvedMethod, stop: &StopCriteria) -> MethodRun {
    let mut start = inst.x0.clone();
    for _ in 0..m.warm_start {
        start = match inst.problem.q_als(&start) {
            Ok(x) => x,
            Err(e) => return MethodRun { resolved: m, trace: None, diverged: false, error: Some(e.to_string()) },
        };
    }
    if m.warm_start > 0 {
        start = start.balanced();
    }
    let fp = inst.problem.fixed_point(m.map);
    match run_accelerated(&fp, &m.spec, &start.flatten(), stop) {
        Ok(t) => MethodRun { resolved: m, trace: Some(t), diverged: false, error: None },
        Err(Error::Divergence { step, trace }) => MethodRun {
            resolved: m,
            trace: Some(*trace),
            diverged: true,
            error: Some(format!("diverged at step {step}")),
        },
        Err(e) => MethodRun { resolved: m, trace: None, diverged: false, error: Some(e.to_string()) },
    }
}

/// Asymptotic factor from the tail of the trace.
pub fn measured_rate(trace: &Trace, f_star: f64, cfg: &ExperimentConfig) -> Result<f64, Error> {
    let e = &cfg.estimate;
    match e.quantity {
        RateQuantity::Gnorm => {
            let g0 = trace.records.first().map_or(0.0, |r| r.gnorm);
            estimate_norm_factor(trace, NormColumn::Gradient, e.window, e.floor_rel * g0)
        }
        RateQuantity::Fgap => {
            estimate_convergence_factor_with_floor(trace, f_star, e.window, e.floor_rel * f_star.abs())
        }
    }
}

pub fn rho_qprime_sd(lin: &Linearization) -> f64 {
    let c = lin.condition;
    (c.kappa_bar - 1.0) / (c.kappa_bar + 1.0)
}

fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Builds a rayon pool limited by `FPACCEL_THREADS` when set.
pub fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("FPACCEL_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("FPACCEL_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(CliError::Usage("FPACCEL_THREADS must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Usage(e.to_string()))
}

/// Builds and linearizes every replicate instance in parallel.
pub fn prepare(cfg: &ExperimentConfig, pool: &rayon::ThreadPool, reuse: bool) -> CliResult<Vec<(Instance, Linearization)>> {
    pool.install(|| {
        cfg.seeds()
            .into_par_iter()
            .map(|seed| {
                let inst = if reuse {
                    Instance::load_or_build(cfg, seed, None)?
                } else {
                    Instance::build(cfg, seed)?
                };
                let lin = inst.linearize()?;
                Ok((inst, lin))
            })
            .collect()
    })
}

pub fn cmd_run(cfg: &ExperimentConfig) -> CliResult<RunReport> {
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    let pool = thread_pool()?;
    let prepared = prepare(cfg, &pool, false)?;
    let mut files = Vec::new();

    let mut jobs = Vec::new();
    for (i, (_, lin)) in prepared.iter().enumerate() {
        for (j, entry) in cfg.methods.iter().enumerate() {
            let resolved = resolve(entry, lin).map_err(|e| locate_method_error(j, e))?;
            jobs.push((i, j, resolved));
        }
    }
    let runs: Vec<(usize, usize, MethodRun)> = pool.install(|| {
        jobs.into_par_iter()
            .map(|(i, j, m)| {
                let inst = &prepared[i].0;
                let stop = stop_criteria(cfg, inst.f_star);
                (i, j, execute(inst, m, &stop))
            })
            .collect()
    });

    let mut diverged = Vec::new();
    let mut failures = Vec::new();
    let mut instances: Vec<InstanceReport> = Vec::new();
    for (i, (inst, lin)) in prepared.iter().enumerate() {
        let seed = inst.seed;
        let xs = xstar_path(cfg, seed);
        inst.write_xstar(&xs)?;
        files.push(rel(out, &xs));
        if cfg.analysis.spectrum {
            let path = out.join(format!("spectrum_s{seed}.json"));
            write_json(&path, &spectrum_json(lin))?;
            files.push(rel(out, &path));
        }
        let fov = if cfg.analysis.fov {
            let (summary, json) = fov_analysis(lin, cfg.tables.fov_angles)?;
            let path = out.join(format!("fov_s{seed}.json"));
            write_json(&path, &json)?;
            files.push(rel(out, &path));
            Some(summary)
        } else {
            None
        };
        if cfg.analysis.gmres_compare {
            for p in gmres_compare(cfg, inst, lin, &pool)? {
                files.push(rel(out, &p));
            }
        }

        let mut methods = Vec::new();
        for (_, j, run) in runs.iter().filter(|r| r.0 == i) {
            let m = &run.resolved;
            let mut note = run.error.clone();
            let trace_path = match &run.trace {
                Some(t) => {
                    let p = out.join(format!("trace_s{seed}_{j:02}_{}.csv", slug(&m.label)));
                    t.write_csv(BufWriter::new(File::create(&p)?), Some(inst.f_star))?;
                    files.push(rel(out, &p));
                    Some(rel(out, &p))
                }
                None => None,
            };
            if run.diverged {
                diverged.push(trace_path.clone().unwrap_or_default());
            } else if run.error.is_some() {
                failures.push(format!("seed {seed} {}: {}", m.label, run.error.as_deref().unwrap_or("")));
            }
            let (status, iterations, final_f, final_gnorm) = match &run.trace {
                Some(t) => {
                    let status = if run.diverged { "diverged".to_string() } else { status_name(t) };
                    (status, t.iterations(), t.last().map(|r| r.f), t.last().map(|r| r.gnorm))
                }
                None => ("error".to_string(), 0, None, None),
            };
            let rho_measured = match (&run.trace, run.diverged) {
                (Some(t), false) => match measured_rate(t, inst.f_star, cfg) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        note.get_or_insert_with(|| format!("rate: {e}"));
                        None
                    }
                },
                _ => None,
            };
            let converged = final_gnorm.is_some_and(|g| g <= inst.problem.fixed_point_tolerance());
            let basin_distance = match (&run.trace, converged) {
                (Some(t), true) => Some(inst.tensor_distance(&inst.problem.point(&t.final_x)?)?),
                _ => None,
            };
            let multi_basin = basin_distance.is_some_and(|d| d > BASIN_TOLERANCE);
            if multi_basin {
                log::warn!("seed {seed} {}: converged to a different minimizer", m.label);
            }
            methods.push(MethodReport {
                label: m.label.clone(),
                method: m.spec.to_string(),
                map: m.map_name.to_string(),
                alpha: m.alpha(),
                betas: m.spec.betas.clone(),
                status,
                iterations,
                final_f,
                final_gnorm,
                warm_start: m.warm_start,
                rho_measured,
                theory: m.theory.clone(),
                rho_companion: m.rho_companion,
                basin_distance,
                multi_basin,
                trace: trace_path,
                note,
            });
        }
        instances.push(InstanceReport {
            seed,
            dims: inst.problem.dims().to_vec(),
            rank: inst.problem.rank(),
            f_star: inst.f_star,
            gnorm_star: inst.gnorm,
            kappa_bar: lin.condition.kappa_bar,
            l_max: lin.condition.l_max,
            ell: lin.condition.ell,
            excluded: lin.num_excluded,
            rho_qprime_als: lin.als.rho,
            rho_qprime_sd: rho_qprime_sd(lin),
            dominant_re: lin.als.dominant.map(|d| d.re),
            dominant_im: lin.als.dominant.map(|d| d.im),
            bounds: cfg.analysis.bounds.then(|| lin.bounds()),
            fov,
            methods,
        });
    }

    let report_path = out.join("report.json");
    files.push(rel(out, &report_path));
    let report = RunReport {
        schema_version: crate::config::SCHEMA_VERSION,
        seed: cfg.seed,
        instances,
        files,
    };
    write_json(&report_path, &report)?;
    if !diverged.is_empty() {
        return Err(CliError::Diverged { count: diverged.len(), files: diverged });
    }
    if !failures.is_empty() {
        return Err(CliError::Core(Error::Numerical(failures.join("; "))));
    }
    Ok(report)
}

fn locate_method_error(j: usize, e: CliError) -> CliError {
    match e {
        CliError::Core(inner) => CliError::Core(Error::Argument(format!("methods[{j}]: {inner}"))),
        other => other,
    }
}

fn status_name(t: &Trace) -> String {
    serde_json::to_value(t.status)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn rel(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).display().to_string()
}

/// Eigenvalue data of `q'_ALS` and the Hessian at `x*`.
pub fn spectrum_json(lin: &Linearization) -> serde_json::Value {
    serde_json::json!({
        "qprime_als": lin.als.to_json(),
        "hessian_eigs": lin.hessian_eigs,
        "kappa_bar": lin.condition.kappa_bar,
        "L": lin.condition.l_max,
        "ell": lin.condition.ell,
        "rho_qprime_sd": rho_qprime_sd(lin),
    })
}
