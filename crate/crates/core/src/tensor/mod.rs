//! Dense tensors and CP building blocks.
//!
//! Storage is first-index-fastest: entry `(i_1, ..., i_N)` lives at
//! `i_1 + n_1 * (i_2 + n_2 * (i_3 + ...))`. The mode-`n` unfolding places
//! `i_n` on the rows and linearizes the remaining indices first-index-fastest
//! on the columns, which makes
//!
//! ```text
//! unfold(kruskal_full(A), n) = A_n * khatri_rao(A_N, ..., A_{n+1}, A_{n-1}, ..., A_1)^T
//! ```
//!
//! Modes are zero-based throughout.

mod io;
mod synthetic;

pub(crate) use io::header_fields;
pub use io::{read_tensor, write_tensor};
pub use synthetic::{generate_synthetic, SyntheticProblem, SyntheticSpec};

use nalgebra::DMatrix;

use crate::error::{arg, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return arg(format!("tensor extents must be positive, got {shape:?}"));
        }
        let count: usize = shape.iter().product();
        if count != values.len() {
            return arg(format!(
                "shape {shape:?} needs {count} values, got {}",
                values.len()
            ));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let count = shape.iter().product();
        Self::new(shape, vec![0.0; count])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn linear_index(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut lin = 0;
        for (i, n) in index.iter().zip(&self.shape).rev() {
            lin = lin * n + i;
        }
        lin
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.values[self.linear_index(index)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        if self.shape != other.shape {
            return arg(format!("shape mismatch {:?} vs {:?}", self.shape, other.shape));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(DenseTensor { shape: self.shape.clone(), values })
    }
}

/// Visits every multi-index in storage order.
pub(crate) fn for_each_index(shape: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let total: usize = shape.iter().product();
    let mut idx = vec![0usize; shape.len()];
    for lin in 0..total {
        f(lin, &idx);
        for (d, n) in shape.iter().enumerate() {
            idx[d] += 1;
            if idx[d] < *n {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Column-wise Kronecker product: column `j` is `kron(a_j, b_j)` (rows of `b` vary fastest).
pub fn khatri_rao(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return arg(format!(
            "khatri_rao column counts differ: {} vs {}",
            a.ncols(),
            b.ncols()
        ));
    }
    let (i_rows, j_rows) = (a.nrows(), b.nrows());
    Ok(DMatrix::from_fn(i_rows * j_rows, a.ncols(), |row, col| {
        a[(row / j_rows, col)] * b[(row % j_rows, col)]
    }))
}

/// Khatri–Rao product of all factors except `skip`, ordered last-to-first,
/// matching the column order of [`unfold`].
pub fn khatri_rao_except(factors: &[DMatrix<f64>], skip: usize) -> Result<DMatrix<f64>> {
    let mut acc: Option<DMatrix<f64>> = None;
    for (m, f) in factors.iter().enumerate().rev() {
        if m == skip {
            continue;
        }
        acc = Some(match acc {
            None => f.clone(),
            Some(prev) => khatri_rao(&prev, f)?,
        });
    }
    match acc {
        Some(m) => Ok(m),
        None => {
            let r = factors.first().map_or(0, |f| f.ncols());
            Ok(DMatrix::from_element(1, r, 1.0))
        }
    }
}

/// Mode-`mode` matricization, `n_mode x prod_{m != mode} n_m`.
pub fn unfold(t: &DenseTensor, mode: usize) -> Result<DMatrix<f64>> {
    if mode >= t.order() {
        return arg(format!("mode {mode} out of range for order {}", t.order()));
    }
    let rows = t.shape[mode];
    let cols = t.len() / rows;
    let mut out = DMatrix::zeros(rows, cols);
    for_each_index(&t.shape, |lin, idx| {
        out[(idx[mode], unfold_column(&t.shape, idx, mode))] = t.values[lin];
    });
    Ok(out)
}

/// Inverse of [`unfold`].
pub fn refold(m: &DMatrix<f64>, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
    if mode >= shape.len() {
        return arg(format!("mode {mode} out of range for order {}", shape.len()));
    }
    let total: usize = shape.iter().product();
    if m.nrows() != shape[mode] || m.nrows() * m.ncols() != total {
        return arg(format!(
            "{}x{} matrix does not refold into {shape:?} along mode {mode}",
            m.nrows(),
            m.ncols()
        ));
    }
    let mut values = vec![0.0; total];
    for_each_index(shape, |lin, idx| {
        values[lin] = m[(idx[mode], unfold_column(shape, idx, mode))];
    });
    DenseTensor::new(shape.to_vec(), values)
}

fn unfold_column(shape: &[usize], idx: &[usize], mode: usize) -> usize {
    let mut col = 0;
    let mut stride = 1;
    for (d, (&i, &n)) in idx.iter().zip(shape).enumerate() {
        if d == mode {
            continue;
        }
        col += i * stride;
        stride *= n;
    }
    col
}

fn check_factors(factors: &[DMatrix<f64>]) -> Result<usize> {
    let Some(first) = factors.first() else {
        return arg("no factor matrices");
    };
    let r = first.ncols();
    if let Some((m, f)) = factors.iter().enumerate().find(|(_, f)| f.ncols() != r) {
        return arg(format!(
            "factor {m} has {} columns, expected {r}",
            f.ncols()
        ));
    }
    if factors.iter().any(|f| f.nrows() == 0) {
        return arg("factor with zero rows");
    }
    Ok(r)
}

/// Sum of `r` outer products of corresponding factor columns.
pub fn kruskal_full(factors: &[DMatrix<f64>]) -> Result<DenseTensor> {
    let r = check_factors(factors)?;
    let shape: Vec<usize> = factors.iter().map(|f| f.nrows()).collect();
    let total: usize = shape.iter().product();
    let mut values = vec![0.0; total];
    let mut prod = vec![0.0; r];
    for_each_index(&shape, |lin, idx| {
        prod.iter_mut().for_each(|p| *p = 1.0);
        for (f, &i) in factors.iter().zip(idx) {
            for (j, p) in prod.iter_mut().enumerate() {
                *p *= f[(i, j)];
            }
        }
        values[lin] = prod.iter().sum();
    });
    DenseTensor::new(shape, values)
}

/// Matricized tensor times Khatri–Rao product, `unfold(t, mode) * khatri_rao_except(factors, mode)`,
/// computed without forming either operand.
pub fn mttkrp(t: &DenseTensor, factors: &[DMatrix<f64>], mode: usize) -> Result<DMatrix<f64>> {
    let r = check_factors(factors)?;
    if factors.len() != t.order() || mode >= t.order() {
        return arg(format!(
            "mttkrp: {} factors for order-{} tensor, mode {mode}",
            factors.len(),
            t.order()
        ));
    }
    for (m, f) in factors.iter().enumerate() {
        if m != mode && f.nrows() != t.shape[m] {
            return arg(format!(
                "factor {m} has {} rows, tensor extent is {}",
                f.nrows(),
                t.shape[m]
            ));
        }
    }
    let mut out = DMatrix::zeros(t.shape[mode], r);
    let mut prod = vec![0.0; r];
    for_each_index(&t.shape, |lin, idx| {
        let z = t.values[lin];
        if z == 0.0 {
            return;
        }
        prod.iter_mut().for_each(|p| *p = z);
        for (m, (f, &i)) in factors.iter().zip(idx).enumerate() {
            if m == mode {
                continue;
            }
            for (j, p) in prod.iter_mut().enumerate() {
                *p *= f[(i, j)];
            }
        }
        let row = idx[mode];
        for (j, p) in prod.iter().enumerate() {
            out[(row, j)] += p;
        }
    });
    Ok(out)
}

/// Elementwise product of the factor Gram matrices, skipping `skip` (and `skip2` if set).
pub fn hadamard_gram(factors: &[DMatrix<f64>], skip: usize, skip2: Option<usize>) -> DMatrix<f64> {
    let r = factors.first().map_or(0, |f| f.ncols());
    let mut g = DMatrix::from_element(r, r, 1.0);
    for (m, f) in factors.iter().enumerate() {
        if m == skip || Some(m) == skip2 {
            continue;
        }
        g.component_mul_assign(&(f.transpose() * f));
    }
    g
}
