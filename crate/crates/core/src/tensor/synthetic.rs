use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{kruskal_full, DenseTensor};
use crate::error::{arg, Error, Result};
use crate::rng::SeededRng;

/// Recipe for a noisy rank-`r` test tensor with controlled factor collinearity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dims: Vec<usize>,
    pub rank: usize,
    /// Cosine between any two factor columns of the same mode, in `[0, 1)`.
    pub collinearity: f64,
    /// Homoscedastic noise ratio (percent); 0 disables the stage.
    pub noise_homo: f64,
    /// Heteroscedastic noise ratio (percent); 0 disables the stage.
    pub noise_hetero: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return arg(format!("dims must be positive, got {:?}", self.dims));
        }
        if self.rank == 0 {
            return arg("rank must be at least 1");
        }
        let min_dim = *self.dims.iter().min().unwrap_or(&0);
        if self.rank > min_dim {
            return arg(format!(
                "rank {} exceeds the smallest extent {min_dim}",
                self.rank
            ));
        }
        if !(0.0..1.0).contains(&self.collinearity) {
            return arg(format!("collinearity must lie in [0,1), got {}", self.collinearity));
        }
        for (name, l) in [("noise_homo", self.noise_homo), ("noise_hetero", self.noise_hetero)] {
            if !(0.0..100.0).contains(&l) {
                return arg(format!("{name} must lie in [0,100), got {l}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    pub data: DenseTensor,
    /// Noise-free factor matrices (unit columns, pairwise cosine = collinearity).
    pub truth: Vec<DMatrix<f64>>,
    /// The noise-free rank-`r` tensor.
    pub clean: DenseTensor,
}

/// Generates the data tensor.
///
/// Draw order from the seeded stream: uniform entries of each factor (mode by
/// mode, column-major), then the homoscedastic normal tensor, then the
/// heteroscedastic one. Disabled noise stages draw nothing.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticProblem> {
    spec.validate()?;
    let r = spec.rank;
    let c = spec.collinearity;
    let k = DMatrix::from_fn(r, r, |i, j| if i == j { 1.0 } else { c });
    // Upper Cholesky factor R with R^T R = K, so that (Q R)^T (Q R) = K.
    let chol_upper = k
        .cholesky()
        .ok_or_else(|| Error::Numerical("collinearity Gram matrix is not positive definite".into()))?
        .l()
        .transpose();

    let mut rng = SeededRng::new(spec.seed);
    let mut truth = Vec::with_capacity(spec.dims.len());
    for &n in &spec.dims {
        let raw = DMatrix::from_vec(n, r, rng.uniform_vec(n * r));
        let q = raw.qr().q();
        truth.push(q * &chol_upper);
    }
    let clean = kruskal_full(&truth)?;
    let total = clean.len();

    let mut noisy = clean.clone();
    if spec.noise_homo > 0.0 {
        let n1 = rng.normal_vec(total);
        let n1_norm = crate::linalg::norm(&n1);
        let scale = (100.0 / spec.noise_homo - 1.0).powf(-0.5) * clean.frobenius_norm() / n1_norm;
        noisy.values_mut().iter_mut().zip(&n1).for_each(|(z, e)| *z += scale * e);
    }
    if spec.noise_hetero > 0.0 {
        let n2 = rng.normal_vec(total);
        let masked: Vec<f64> = n2.iter().zip(noisy.values()).map(|(e, z)| e * z).collect();
        let masked_norm = crate::linalg::norm(&masked);
        let scale =
            (100.0 / spec.noise_hetero - 1.0).powf(-0.5) * noisy.frobenius_norm() / masked_norm;
        noisy.values_mut().iter_mut().zip(&masked).for_each(|(z, e)| *z += scale * e);
    }

    Ok(SyntheticProblem { data: noisy, truth, clean })
}
