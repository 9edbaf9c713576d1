use std::collections::VecDeque;

use super::{
    line_search_cubic, solve_mixing, FixedPointProblem, MethodKind, MethodSpec, StepKind,
    StopCriteria, Trace, TraceRecord, TraceStatus, Window,
};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, sub};

/// Runs any method, nonstationary or stationary, from `x0`.
///
/// The trace holds one record per visited iterate `x_0, ..., x_K`.
pub fn run_accelerated<P: FixedPointProblem + ?Sized>(
    problem: &P,
    spec: &MethodSpec,
    x0: &[f64],
    stop: &StopCriteria,
) -> Result<Trace> {
    spec.validate()?;
    if x0.len() != problem.dim() {
        return Err(Error::Argument(format!(
            "initial point has length {}, problem dimension is {}",
            x0.len(),
            problem.dim()
        )));
    }
    let mut stepper = Stepper::new(spec);
    let mut trace = Trace {
        method: spec.to_string(),
        records: Vec::with_capacity(stop.max_iter.min(1 << 16) + 1),
        status: TraceStatus::MaxIterations,
        final_x: Vec::new(),
    };
    let mut x = x0.to_vec();
    let mut how = StepKind::Initial;
    let mut prev_f = None;

    for k in 0..=stop.max_iter {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(diverged(trace, k, x));
        }
        let qx = problem.map(&x)?;
        let f = problem.objective(&x)?;
        let g = problem.equation_residual(&x)?;
        let r = sub(&x, &qx);
        let gnorm = norm(&g);
        trace.records.push(TraceRecord {
            k,
            f,
            gnorm,
            rnorm: norm(&r),
            mix_rnorm: None,
            step: how,
            x: stop.keep_iterates.then(|| x.clone()),
        });
        if !f.is_finite() || !gnorm.is_finite() || qx.iter().any(|v| !v.is_finite()) {
            return Err(diverged(trace, k, x));
        }
        if let Some(status) = stop.check(f, prev_f, gnorm) {
            trace.status = status;
            break;
        }
        if k == stop.max_iter {
            break;
        }
        let step = stepper.step(problem, k, &x, qx, r, g, f)?;
        if let Some(last) = trace.records.last_mut() {
            last.mix_rnorm = step.mix_rnorm;
        }
        prev_f = Some(f);
        x = step.x;
        how = step.kind;
    }
    trace.final_x = x;
    Ok(trace)
}

/// Runs one of the stationary methods sAA, sNGMRES or sNGMRES-R.
pub fn run_stationary<P: FixedPointProblem + ?Sized>(
    problem: &P,
    spec: &MethodSpec,
    x0: &[f64],
    stop: &StopCriteria,
) -> Result<Trace> {
    if !spec.kind.is_stationary() {
        return Err(Error::Argument(format!("{spec} is not a stationary method")));
    }
    run_accelerated(problem, spec, x0, stop)
}

fn diverged(mut trace: Trace, step: usize, x: Vec<f64>) -> Error {
    trace.status = TraceStatus::Diverged;
    trace.final_x = x;
    Error::Divergence {
        step,
        trace: Box::new(trace),
    }
}

struct StepResult {
    x: Vec<f64>,
    kind: StepKind,
    mix_rnorm: Option<f64>,
}

impl StepResult {
    fn plain(q: Vec<f64>) -> Self {
        Self {
            x: q,
            kind: StepKind::Plain,
            mix_rnorm: None,
        }
    }
}

/// Newest-first history of vector pairs, bounded by the method window.
struct History {
    entries: VecDeque<(Vec<f64>, Vec<f64>)>,
    cap: Option<usize>,
}

impl History {
    fn new(cap: Option<usize>) -> Self {
        Self {
            entries: VecDeque::new(),
            cap,
        }
    }

    fn push(&mut self, a: Vec<f64>, b: Vec<f64>) {
        self.entries.push_front((a, b));
        if let Some(c) = self.cap {
            self.entries.truncate(c);
        }
    }
}

struct Stepper<'a> {
    spec: &'a MethodSpec,
    history: History,
    nesterov: Option<(Vec<f64>, f64)>,
}

impl<'a> Stepper<'a> {
    fn new(spec: &'a MethodSpec) -> Self {
        let m = match spec.window {
            Window::Finite(m) => Some(m),
            Window::Unbounded => None,
        };
        // AA keeps (q, r) of x_{k-1..k-m}; the others also keep the current iterate.
        let cap = match spec.kind {
            MethodKind::Aa => m,
            _ => m.map(|m| m + 1),
        };
        Self {
            spec,
            history: History::new(cap),
            nesterov: None,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn step<P: FixedPointProblem + ?Sized>(
        &mut self,
        p: &P,
        k: usize,
        x: &[f64],
        q: Vec<f64>,
        r: Vec<f64>,
        g: Vec<f64>,
        f: f64,
    ) -> Result<StepResult> {
        match self.spec.kind {
            MethodKind::FixedPoint => Ok(StepResult::plain(q)),
            MethodKind::Aa => {
                let older: Vec<&[f64]> =
                    self.history.entries.iter().map(|(_, r)| r.as_slice()).collect();
                let mix = solve_mixing(&r, &older);
                let mut cand = q.clone();
                for ((qi, _), b) in self.history.entries.iter().zip(&mix.beta) {
                    if *b != 0.0 {
                        cand = axpy(&cand, *b, &sub(&q, qi));
                    }
                }
                let mix_rnorm = Some(mix.objective.sqrt());
                self.history.push(q.clone(), r);
                let (x, kind) = self.globalize(p, cand, q)?;
                Ok(StepResult { x, kind, mix_rnorm })
            }
            MethodKind::Ngmres => {
                self.history.push(x.to_vec(), g);
                let gq = p.equation_residual(&q)?;
                let older: Vec<&[f64]> =
                    self.history.entries.iter().map(|(_, g)| g.as_slice()).collect();
                let mix = solve_mixing(&gq, &older);
                let mut cand = q.clone();
                for ((xi, _), b) in self.history.entries.iter().zip(&mix.beta) {
                    if *b != 0.0 {
                        cand = axpy(&cand, *b, &sub(&q, xi));
                    }
                }
                let mix_rnorm = Some(mix.objective.sqrt());
                let (x, kind) = self.globalize(p, cand, q)?;
                Ok(StepResult { x, kind, mix_rnorm })
            }
            MethodKind::NesterovRestart => {
                let gnorm = norm(&g);
                let Some((prev_q, prev_gnorm)) = self.nesterov.take() else {
                    self.nesterov = Some((q.clone(), gnorm));
                    return Ok(StepResult::plain(q));
                };
                let beta = if prev_gnorm > 0.0 {
                    (gnorm / prev_gnorm).min(1.0)
                } else {
                    0.0
                };
                let cand = axpy(&q, beta, &sub(&q, &prev_q));
                let fc = p.objective(&cand)?;
                if !(fc <= f) {
                    return Ok(StepResult {
                        x: q,
                        kind: StepKind::Restart,
                        mix_rnorm: None,
                    });
                }
                self.nesterov = Some((q, gnorm));
                Ok(StepResult {
                    x: cand,
                    kind: StepKind::Accelerated,
                    mix_rnorm: None,
                })
            }
            MethodKind::Saa | MethodKind::Sngmres | MethodKind::SngmresR => {
                self.history.push(x.to_vec(), q.clone());
                let Window::Finite(m) = self.spec.window else {
                    unreachable!("validated stationary window");
                };
                if k < m {
                    return Ok(StepResult::plain(q));
                }
                let entries = &self.history.entries;
                let mut next = q.clone();
                match self.spec.kind {
                    MethodKind::Saa => {
                        for (i, b) in self.spec.betas.iter().enumerate() {
                            next = axpy(&next, *b, &sub(&q, &entries[i + 1].1));
                        }
                    }
                    MethodKind::Sngmres => {
                        for (i, b) in self.spec.betas.iter().enumerate() {
                            next = axpy(&next, *b, &sub(&q, &entries[i].0));
                        }
                    }
                    _ => {
                        for (i, b) in self.spec.betas.iter().enumerate() {
                            next = axpy(&next, *b, &sub(&q, &entries[i + 1].0));
                        }
                    }
                }
                Ok(StepResult {
                    x: next,
                    kind: StepKind::Accelerated,
                    mix_rnorm: None,
                })
            }
        }
    }

    fn globalize<P: FixedPointProblem + ?Sized>(
        &self,
        p: &P,
        cand: Vec<f64>,
        q: Vec<f64>,
    ) -> Result<(Vec<f64>, StepKind)> {
        if !self.spec.globalize {
            return Ok((cand, StepKind::Accelerated));
        }
        let fq = p.objective(&q)?;
        let fc = p.objective(&cand)?;
        if fc <= fq {
            return Ok((cand, StepKind::Accelerated));
        }
        if !p.residual_is_gradient() {
            return Ok((q, StepKind::Fallback));
        }
        let d = sub(&cand, &q);
        let phi = |t: f64| -> Result<(f64, f64)> {
            let y = axpy(&q, t, &d);
            let fy = p.objective(&y)?;
            let gy = p.equation_residual(&y)?;
            Ok((fy, dot(&gy, &d)))
        };
        match line_search_cubic(phi, 1.0, &self.spec.line_search) {
            Ok(out) if out.t > 0.0 && out.phi < fq => Ok((axpy(&q, out.t, &d), StepKind::LineSearch)),
            Ok(_) | Err(Error::NotDescent(_)) => Ok((q, StepKind::Fallback)),
            Err(e) => Err(e),
        }
    }
}
