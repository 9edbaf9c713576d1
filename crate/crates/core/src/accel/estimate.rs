use super::Trace;
use crate::error::{Error, Result};

/// Gaps `f_k - f*` at or below this are treated as noise.
pub const DEFAULT_NOISE_FLOOR: f64 = 1e-26;

const MIN_RATIOS: usize = 5;

/// Asymptotic factor from objective gaps, which contract like `rho^2`.
pub fn estimate_convergence_factor(trace: &Trace, f_star: f64, window: usize) -> Result<f64> {
    estimate_convergence_factor_with_floor(trace, f_star, window, DEFAULT_NOISE_FLOOR)
}

pub fn estimate_convergence_factor_with_floor(
    trace: &Trace,
    f_star: f64,
    window: usize,
    floor: f64,
) -> Result<f64> {
    let gaps: Vec<f64> = trace.records.iter().map(|r| r.f - f_star).collect();
    Ok((0.5 * tail_log_mean(&gaps, floor, window)?).exp())
}

/// Which per-record norm to use for [`estimate_norm_factor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormColumn {
    Gradient,
    FixedPointResidual,
}

/// Asymptotic factor from a norm column, which contracts like `rho`.
pub fn estimate_norm_factor(
    trace: &Trace,
    column: NormColumn,
    window: usize,
    floor: f64,
) -> Result<f64> {
    let v: Vec<f64> = trace
        .records
        .iter()
        .map(|r| match column {
            NormColumn::Gradient => r.gnorm,
            NormColumn::FixedPointResidual => r.rnorm,
        })
        .collect();
    Ok(tail_log_mean(&v, floor, window)?.exp())
}

/// Mean of `ln(v_k / v_{k-1})` over the last `window` consecutive pairs above `floor`.
fn tail_log_mean(values: &[f64], floor: f64, window: usize) -> Result<f64> {
    let logs: Vec<f64> = values
        .windows(2)
        .filter(|w| w[0] > floor && w[1] > floor && w[0].is_finite() && w[1].is_finite())
        .map(|w| (w[1] / w[0]).ln())
        .collect();
    let take = window.max(1).min(logs.len());
    if take < MIN_RATIOS {
        return Err(Error::InsufficientData(format!(
            "{} usable ratios above the noise floor {floor:e}, need {MIN_RATIOS}",
            logs.len().min(take)
        )));
    }
    let tail = &logs[logs.len() - take..];
    Ok(tail.iter().sum::<f64>() / take as f64)
}
