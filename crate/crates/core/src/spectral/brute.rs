use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{companion_eigenvalues, modified_radius_of, StationaryKind};
use crate::error::{Error, Result};
use crate::linalg;

/// Inclusive grid `start:step:stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl BetaGrid {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && stop >= start && start.is_finite() && stop.is_finite()) {
            return Err(Error::Argument(format!(
                "invalid grid {start}:{step}:{stop}"
            )));
        }
        Ok(Self { start, stop, step })
    }

    /// The grid `-1:0.05:1`.
    pub fn standard() -> Self {
        Self {
            start: -1.0,
            stop: 1.0,
            step: 0.05,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        if n == 0 {
            return vec![self.start];
        }
        let end = self.start + n as f64 * self.step;
        (0..=n)
            .map(|i| (self.start * (n - i) as f64 + end * i as f64) / n as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub betas: Vec<f64>,
    pub rho: f64,
}

/// Exhaustive grid minimization of the modified spectral radius of the companion matrix.
pub fn brute_force_beta(
    qprime: &DMatrix<f64>,
    kind: StationaryKind,
    m: usize,
    grid: &BetaGrid,
    num_excluded: usize,
) -> Result<BruteForceResult> {
    let eigs = linalg::eigenvalues(qprime)?;
    brute_force_beta_spectrum(&eigs, kind, m, grid, num_excluded)
}

/// [`brute_force_beta`] from the eigenvalues of `q'`. Ties go to the lexicographically smallest vector.
pub fn brute_force_beta_spectrum(
    qprime_eigs: &[Complex64],
    kind: StationaryKind,
    m: usize,
    grid: &BetaGrid,
    num_excluded: usize,
) -> Result<BruteForceResult> {
    let dims = kind.coefficient_count(m);
    if dims == 0 || dims > 3 {
        return Err(Error::Argument(format!(
            "grid search supports 1 to 3 coefficients, {kind:?}({m}) has {dims}"
        )));
    }
    let values = grid.values();
    let mut idx = vec![0usize; dims];
    let mut betas = vec![0.0; dims];
    let mut best = BruteForceResult {
        betas: vec![],
        rho: f64::INFINITY,
    };
    loop {
        for (b, &i) in betas.iter_mut().zip(&idx) {
            *b = values[i];
        }
        let eigs = companion_eigenvalues(qprime_eigs, kind, &betas)?;
        let rho = modified_radius_of(&eigs, num_excluded, 1.0);
        if rho < best.rho {
            best = BruteForceResult {
                betas: betas.clone(),
                rho,
            };
        }
        // odometer, last coordinate fastest
        let mut d = dims;
        loop {
            if d == 0 {
                return Ok(best);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < values.len() {
                break;
            }
            idx[d] = 0;
        }
    }
}
