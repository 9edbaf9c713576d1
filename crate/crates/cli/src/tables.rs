//! The `table` command: CSV tables over replicate instances.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use fpaccel_core::spectral::{brute_force_beta_spectrum, optimal_beta_step1_real, optimal_sd_params, BetaGrid, SdVariant};
use fpaccel_core::{FixedPointMapKind, StationaryKind};
use rayon::prelude::*;

use crate::analysis::{float_row, linear_gmres, tail_rate, FovSummary};
use crate::config::{ExperimentConfig, MapName};
use crate::error::CliResult;
use crate::instance::{Instance, Linearization};
use crate::methods::ResolvedMethod;
use crate::run::{execute, measured_rate, prepare, stop_criteria, thread_pool};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    SdFactors,
    AlsBounds,
    Bruteforce,
    GmresBounds,
}

impl TableKind {
    pub fn name(self) -> &'static str {
        match self {
            TableKind::SdFactors => "sd_factors",
            TableKind::AlsBounds => "als_bounds",
            TableKind::Bruteforce => "bruteforce",
            TableKind::GmresBounds => "gmres_bounds",
        }
    }
}

pub const SD_FACTORS_HEADER: &str = "seed,kappa_bar,rho_sd,rho_saa_one_over_l,rho_saa_opt,rho_sngmres_r,\
alpha_sd,alpha_saa_one_over_l,beta_saa_one_over_l,alpha_saa_opt,beta_saa_opt,alpha_sngmres_r,beta_sngmres_r,\
rho_qprime_als,rho_saa1_als,rho_hat_als,rho_hat_saa1_als";
pub const ALS_BOUNDS_HEADER: &str =
    "seed,rho_qprime,r1,r2,rho_p,rho_p_n,rho_weaker,delta1,delta2,a_star,rho_bf,beta_bf";
pub const BRUTEFORCE_HEADER: &str = "seed,method,m,beta_0,beta_1,rho_bf,rho_hat";
pub const GMRES_BOUNDS_HEADER: &str =
    "seed,nu,r,rho_beta_num,c_beta,rho_beta_bb,c_beta_bb,zero_in_fov,rho_gmres";

pub fn cmd_table(cfg: &ExperimentConfig, kind: TableKind) -> CliResult<PathBuf> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let pool = thread_pool()?;
    let path = cfg.output_dir.join(format!("table_{}.csv", kind.name()));
    let rows: Vec<String> = if kind == TableKind::SdFactors && !cfg.tables.kappa_bar.is_empty() {
        cfg.tables
            .kappa_bar
            .iter()
            .map(|&k| sd_row(None, k, 1.0, [None; 4]))
            .collect::<CliResult<_>>()?
    } else {
        let prepared = prepare(cfg, &pool, true)?;
        pool.install(|| {
            prepared
                .par_iter()
                .map(|(inst, lin)| match kind {
                    TableKind::SdFactors => sd_instance_row(cfg, inst, lin),
                    TableKind::AlsBounds => als_bounds_row(cfg, inst, lin),
                    TableKind::Bruteforce => bruteforce_rows(cfg, inst, lin),
                    TableKind::GmresBounds => gmres_bounds_row(cfg, inst, lin),
                })
                .collect::<CliResult<Vec<String>>>()
        })?
    };
    let header = match kind {
        TableKind::SdFactors => SD_FACTORS_HEADER,
        TableKind::AlsBounds => ALS_BOUNDS_HEADER,
        TableKind::Bruteforce => BRUTEFORCE_HEADER,
        TableKind::GmresBounds => GMRES_BOUNDS_HEADER,
    };
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "{header}")?;
    for r in rows {
        write!(w, "{r}")?;
        if !r.ends_with('\n') {
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(path)
}

/// One `sd_factors` row; `l_max = kappa * ell`.
fn sd_row(seed: Option<u64>, kappa: f64, ell: f64, als: [Option<f64>; 4]) -> CliResult<String> {
    let l = kappa * ell;
    let p: Vec<_> = SdVariant::ALL
        .iter()
        .map(|&v| optimal_sd_params(l, ell, v))
        .collect::<Result<_, _>>()?;
    let mut cells = vec![
        Some(kappa),
        Some(p[0].rho),
        Some(p[1].rho),
        Some(p[2].rho),
        Some(p[3].rho),
        Some(p[0].alpha),
        Some(p[1].alpha),
        p[1].beta,
        Some(p[2].alpha),
        p[2].beta,
        Some(p[3].alpha),
        p[3].beta,
    ];
    cells.extend(als);
    Ok(format!("{},{}", seed.map(|s| s.to_string()).unwrap_or_default(), float_row(&cells)))
}

fn run_rate(cfg: &ExperimentConfig, inst: &Instance, m: ResolvedMethod) -> Option<f64> {
    let label = m.label.clone();
    let run = execute(inst, m, &stop_criteria(cfg, inst.f_star));
    if run.diverged || run.trace.is_none() {
        log::warn!("seed {} {label}: {}", inst.seed, run.error.unwrap_or_default());
        return None;
    }
    measured_rate(run.trace.as_ref()?, inst.f_star, cfg)
        .map_err(|e| log::warn!("seed {} {label}: {e}", inst.seed))
        .ok()
}

fn als_method(label: &str, kind: Option<StationaryKind>, betas: Vec<f64>) -> ResolvedMethod {
    ResolvedMethod {
        label: label.into(),
        map: FixedPointMapKind::Als,
        map_name: MapName::Als,
        spec: match kind {
            Some(k) => k.method_spec(betas),
            None => fpaccel_core::MethodSpec::fixed_point(),
        },
        theory: None,
        rho_companion: None,
        warm_start: 0,
    }
}

fn sd_instance_row(cfg: &ExperimentConfig, inst: &Instance, lin: &Linearization) -> CliResult<String> {
    let c = lin.condition;
    let opt = optimal_beta_step1_real(lin.als.rho, StationaryKind::Saa)?;
    let rho_als = run_rate(cfg, inst, als_method("fp_als", None, vec![]));
    let rho_saa = run_rate(cfg, inst, als_method("saa1_als", Some(StationaryKind::Saa), vec![opt.beta]));
    sd_row(Some(inst.seed), c.kappa_bar, c.ell, [Some(lin.als.rho), Some(opt.rho), rho_als, rho_saa])
}

fn als_bounds_row(cfg: &ExperimentConfig, inst: &Instance, lin: &Linearization) -> CliResult<String> {
    let b = lin.bounds();
    let grid = BetaGrid::new(-1.0, 1.0, cfg.tables.bound_grid_step)?;
    let bf = brute_force_beta_spectrum(&lin.als.all_eigenvalues(), StationaryKind::SngmresR, 1, &grid, lin.num_excluded)?;
    Ok(format!(
        "{},{}",
        inst.seed,
        float_row(&[
            Some(b.rho_qprime),
            Some(b.r1),
            Some(b.r2),
            b.rho_p,
            b.rho_p_n,
            b.rho_weaker,
            b.delta1,
            b.delta2,
            b.a_star,
            Some(bf.rho),
            Some(bf.betas[0]),
        ])
    ))
}

pub const BRUTEFORCE_METHODS: [(StationaryKind, usize, &str); 6] = [
    (StationaryKind::Saa, 1, "saa"),
    (StationaryKind::Saa, 2, "saa"),
    (StationaryKind::SngmresR, 1, "sngmres_r"),
    (StationaryKind::SngmresR, 2, "sngmres_r"),
    (StationaryKind::Sngmres, 0, "sngmres"),
    (StationaryKind::Sngmres, 1, "sngmres"),
];

fn bruteforce_rows(cfg: &ExperimentConfig, inst: &Instance, lin: &Linearization) -> CliResult<String> {
    let grid = cfg.tables.beta_grid.grid()?;
    let eigs = lin.als.all_eigenvalues();
    let mut out = String::new();
    for (kind, m, name) in BRUTEFORCE_METHODS {
        let bf = brute_force_beta_spectrum(&eigs, kind, m, &grid, lin.num_excluded)?;
        let rho_hat = run_rate(cfg, inst, als_method(name, Some(kind), bf.betas.clone()));
        let b = |i: usize| bf.betas.get(i).copied();
        out.push_str(&format!(
            "{},{name},{m},{}\n",
            inst.seed,
            float_row(&[b(0), b(1), Some(bf.rho), rho_hat])
        ));
    }
    Ok(out)
}

fn gmres_bounds_row(cfg: &ExperimentConfig, inst: &Instance, lin: &Linearization) -> CliResult<String> {
    let runs = linear_gmres(inst, lin, cfg.budget.max_iter, cfg.tables.fov_angles)?;
    let s = FovSummary::from_report(&runs.fov);
    let rho = tail_rate(&runs.projected.relative(), cfg.estimate.window, 1e-13);
    Ok(format!(
        "{},{},{},{}",
        inst.seed,
        float_row(&[Some(s.nu), Some(s.r), s.rho_beta, s.c_beta, s.rho_beta_bb, s.c_beta_bb]),
        s.zero_in_fov,
        float_row(&[rho])
    ))
}
