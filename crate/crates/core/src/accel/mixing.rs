use crate::linalg;

/// Relative threshold below which a projected mixing column is dropped.
pub const DROP_TOLERANCE: f64 = 1e-10;

/// Solution of a mixing least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingSolution {
    /// One coefficient per history entry; dropped columns get 0.
    pub beta: Vec<f64>,
    /// `|| anchor + sum_i beta_i (anchor - history_i) ||^2`
    pub objective: f64,
    pub dropped: usize,
}

/// Minimizes `|| anchor + sum_i beta_i (anchor - history_i) ||`.
///
/// For AA the anchor is `r(x_k)` and the history holds `r(x_{k-i})`, `i >= 1`.
/// For NGMRES the anchor is `g(q(x_k))` and the history holds `g(x_{k-i})`, `i >= 0`.
pub fn solve_mixing(anchor: &[f64], history: &[&[f64]]) -> MixingSolution {
    let columns: Vec<Vec<f64>> = history.iter().map(|h| linalg::sub(anchor, h)).collect();
    let largest = columns.iter().map(|c| linalg::norm(c)).fold(0.0, f64::max);

    // Modified Gram-Schmidt with one reorthogonalization pass.
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut r: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let mut v = col.clone();
        let mut coeffs = vec![0.0; q.len()];
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = linalg::dot(qi, &v);
                coeffs[i] += c;
                v = linalg::axpy(&v, -c, qi);
            }
        }
        let nv = linalg::norm(&v);
        if largest == 0.0 || nv < DROP_TOLERANCE * largest {
            continue;
        }
        coeffs.push(nv);
        q.push(v.iter().map(|x| x / nv).collect());
        r.push(coeffs);
        kept.push(j);
    }

    // R beta = -Q^T anchor, with r[j] holding column j of R.
    let rhs: Vec<f64> = q.iter().map(|qi| -linalg::dot(qi, anchor)).collect();
    let mut sol = vec![0.0; q.len()];
    for i in (0..q.len()).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..q.len() {
            s -= r[j][i] * sol[j];
        }
        sol[i] = s / r[i][i];
    }

    let mut beta = vec![0.0; history.len()];
    for (slot, value) in kept.iter().zip(&sol) {
        beta[*slot] = *value;
    }
    let mut resid = anchor.to_vec();
    for (c, b) in columns.iter().zip(&beta) {
        if *b != 0.0 {
            resid = linalg::axpy(&resid, *b, c);
        }
    }
    let objective = linalg::dot(&resid, &resid);
    MixingSolution {
        beta,
        objective,
        dropped: history.len() - kept.len(),
    }
}
