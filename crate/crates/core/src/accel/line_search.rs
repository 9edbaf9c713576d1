//! Moré–Thuente line search enforcing the strong Wolfe conditions.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchParams {
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_steps: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.9,
            max_steps: 20,
        }
    }
}

impl LineSearchParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Argument(format!(
                "line search needs 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOutcome {
    pub t: f64,
    pub phi: f64,
    pub dphi: f64,
    /// Whether both strong Wolfe conditions hold at `t`.
    pub wolfe: bool,
    pub evaluations: usize,
}

const XTOL: f64 = 1e-14;
const STPMIN: f64 = 0.0;
const STPMAX: f64 = 1e10;
const XTRAPL: f64 = 1.1;
const XTRAPU: f64 = 4.0;

/// Searches along `phi`, which returns `(phi(t), phi'(t))`, starting from `t0`.
///
/// After `max_steps` evaluations without a Wolfe point the best step seen is
/// returned with `wolfe == false`.
pub fn line_search_cubic(
    mut phi: impl FnMut(f64) -> Result<(f64, f64)>,
    t0: f64,
    params: &LineSearchParams,
) -> Result<LineSearchOutcome> {
    params.validate()?;
    let (finit, ginit) = phi(0.0)?;
    if !(ginit < 0.0) {
        return Err(Error::NotDescent(ginit));
    }
    let gtest = params.c1 * ginit;
    let mut width = STPMAX - STPMIN;
    let mut width1 = 2.0 * width;
    let mut brackt = false;
    let mut stage1 = true;
    let (mut stx, mut fx, mut gx) = (0.0, finit, ginit);
    let (mut sty, mut fy, mut gy) = (0.0, finit, ginit);
    let mut stp = t0.clamp(STPMIN, STPMAX);
    let mut stmin = 0.0;
    let mut stmax = stp + XTRAPU * stp;
    let mut best = LineSearchOutcome {
        t: 0.0,
        phi: finit,
        dphi: ginit,
        wolfe: false,
        evaluations: 0,
    };

    for eval in 1..=params.max_steps {
        let (f, g) = phi(stp)?;
        let ftest = finit + stp * gtest;
        if f.is_finite() && f < best.phi {
            best = LineSearchOutcome {
                t: stp,
                phi: f,
                dphi: g,
                wolfe: false,
                evaluations: eval,
            };
        }
        best.evaluations = eval;
        if f <= ftest && g.abs() <= params.c2 * (-ginit) {
            return Ok(LineSearchOutcome {
                t: stp,
                phi: f,
                dphi: g,
                wolfe: true,
                evaluations: eval,
            });
        }
        if !f.is_finite() {
            // Shrink toward the last good step.
            brackt = true;
            sty = stp;
            fy = f64::MAX;
            gy = 0.0;
            stp = stx + 0.5 * (stp - stx);
            stmin = stx.min(sty);
            stmax = stx.max(sty);
            continue;
        }
        if brackt && (stp <= stmin || stp >= stmax || stmax - stmin <= XTOL * stmax) {
            break;
        }
        if stage1 && f <= ftest && g >= 0.0 {
            stage1 = false;
        }

        if stage1 && f <= fx && f > ftest {
            let mut s = Step {
                stx,
                fx: fx - stx * gtest,
                dx: gx - gtest,
                sty,
                fy: fy - sty * gtest,
                dy: gy - gtest,
                brackt,
            };
            stp = s.update(stp, f - stp * gtest, g - gtest, stmin, stmax);
            stx = s.stx;
            sty = s.sty;
            fx = s.fx + stx * gtest;
            fy = s.fy + sty * gtest;
            gx = s.dx + gtest;
            gy = s.dy + gtest;
            brackt = s.brackt;
        } else {
            let mut s = Step {
                stx,
                fx,
                dx: gx,
                sty,
                fy,
                dy: gy,
                brackt,
            };
            stp = s.update(stp, f, g, stmin, stmax);
            (stx, fx, gx, sty, fy, gy, brackt) = (s.stx, s.fx, s.dx, s.sty, s.fy, s.dy, s.brackt);
        }

        if brackt {
            if (sty - stx).abs() >= 0.66 * width1 {
                stp = stx + 0.5 * (sty - stx);
            }
            width1 = width;
            width = (sty - stx).abs();
            stmin = stx.min(sty);
            stmax = stx.max(sty);
        } else {
            stmin = stp + XTRAPL * (stp - stx);
            stmax = stp + XTRAPU * (stp - stx);
        }
        stp = stp.clamp(STPMIN, STPMAX);
        if brackt && (stp <= stmin || stp >= stmax || stmax - stmin <= XTOL * stmax) {
            stp = stx;
        }
    }
    Ok(best)
}

struct Step {
    stx: f64,
    fx: f64,
    dx: f64,
    sty: f64,
    fy: f64,
    dy: f64,
    brackt: bool,
}

impl Step {
    /// Safeguarded cubic/quadratic step; updates the interval and returns the new trial step.
    fn update(&mut self, stp: f64, fp: f64, dp: f64, stpmin: f64, stpmax: f64) -> f64 {
        let (stx, fx, dx) = (self.stx, self.fx, self.dx);
        let sgnd = dp * dx.signum();
        let stpf;
        if fp > fx {
            let theta = 3.0 * (fx - fp) / (stp - stx) + dx + dp;
            let s = theta.abs().max(dx.abs()).max(dp.abs());
            let mut gamma = s * ((theta / s).powi(2) - (dx / s) * (dp / s)).max(0.0).sqrt();
            if stp < stx {
                gamma = -gamma;
            }
            let p = (gamma - dx) + theta;
            let q = ((gamma - dx) + gamma) + dp;
            let stpc = stx + (p / q) * (stp - stx);
            let stpq = stx + ((dx / ((fx - fp) / (stp - stx) + dx)) / 2.0) * (stp - stx);
            stpf = if (stpc - stx).abs() < (stpq - stx).abs() {
                stpc
            } else {
                stpc + (stpq - stpc) / 2.0
            };
            self.brackt = true;
        } else if sgnd < 0.0 {
            let theta = 3.0 * (fx - fp) / (stp - stx) + dx + dp;
            let s = theta.abs().max(dx.abs()).max(dp.abs());
            let mut gamma = s * ((theta / s).powi(2) - (dx / s) * (dp / s)).max(0.0).sqrt();
            if stp > stx {
                gamma = -gamma;
            }
            let p = (gamma - dp) + theta;
            let q = ((gamma - dp) + gamma) + dx;
            let stpc = stp + (p / q) * (stx - stp);
            let stpq = stp + (dp / (dp - dx)) * (stx - stp);
            stpf = if (stpc - stp).abs() > (stpq - stp).abs() {
                stpc
            } else {
                stpq
            };
            self.brackt = true;
        } else if dp.abs() < dx.abs() {
            let theta = 3.0 * (fx - fp) / (stp - stx) + dx + dp;
            let s = theta.abs().max(dx.abs()).max(dp.abs());
            let mut gamma = s * ((theta / s).powi(2) - (dx / s) * (dp / s)).max(0.0).sqrt();
            if stp > stx {
                gamma = -gamma;
            }
            let p = (gamma - dp) + theta;
            let q = (gamma + (dx - dp)) + gamma;
            let r = p / q;
            let stpc = if r < 0.0 && gamma != 0.0 {
                stp + r * (stx - stp)
            } else if stp > stx {
                stpmax
            } else {
                stpmin
            };
            let stpq = stp + (dp / (dp - dx)) * (stx - stp);
            if self.brackt {
                let mut t = if (stpc - stp).abs() < (stpq - stp).abs() {
                    stpc
                } else {
                    stpq
                };
                t = if stp > stx {
                    t.min(stp + 0.66 * (self.sty - stp))
                } else {
                    t.max(stp + 0.66 * (self.sty - stp))
                };
                stpf = t;
            } else {
                let t = if (stpc - stp).abs() > (stpq - stp).abs() {
                    stpc
                } else {
                    stpq
                };
                stpf = t.clamp(stpmin, stpmax);
            }
        } else if self.brackt {
            let (sty, fy, dy) = (self.sty, self.fy, self.dy);
            let theta = 3.0 * (fp - fy) / (sty - stp) + dy + dp;
            let s = theta.abs().max(dy.abs()).max(dp.abs());
            let mut gamma = s * ((theta / s).powi(2) - (dy / s) * (dp / s)).max(0.0).sqrt();
            if stp > sty {
                gamma = -gamma;
            }
            let p = (gamma - dp) + theta;
            let q = ((gamma - dp) + gamma) + dy;
            stpf = stp + (p / q) * (sty - stp);
        } else if stp > stx {
            stpf = stpmax;
        } else {
            stpf = stpmin;
        }

        if fp > fx {
            self.sty = stp;
            self.fy = fp;
            self.dy = dp;
        } else {
            if sgnd < 0.0 {
                self.sty = stx;
                self.fy = fx;
                self.dy = dx;
            }
            self.stx = stp;
            self.fx = fp;
            self.dx = dp;
        }
        if stpf.is_finite() {
            stpf
        } else {
            0.5 * (self.stx + self.sty)
        }
    }
}
