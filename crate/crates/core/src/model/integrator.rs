//! Linearly implicit Rosenbrock 2(3) integrator (the L-stable pair of
//! Shampine & Reichelt, as in `ode23s`) for autonomous systems with a
//! banded Jacobian.
//!
//! The Jacobian is rebuilt every step by coloured forward differences, so a
//! step costs `kl + ku + 2` right-hand-side evaluations, one banded LU and
//! three banded solves.

use serde::{Deserialize, Serialize};

use super::banded::BandMatrix;
use crate::error::{Error, Result};

pub(crate) trait BandedSystem {
    fn dim(&self) -> usize;
    fn bandwidth(&self) -> (usize, usize);
    fn eval(&self, y: &[f64], dy: &mut [f64]);
    /// Restores algebraic components after an accepted step.
    fn project(&self, _y: &mut [f64]) {}
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

/// An accepted step `[t, t + h]` with the state at both ends and at the
/// midpoint (from the method's continuous extension).
pub(crate) struct AcceptedStep<'a> {
    pub t: f64,
    pub h: f64,
    pub y_start: &'a [f64],
    pub y_mid: &'a [f64],
    pub y_end: &'a [f64],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

const D: f64 = 0.292_893_218_813_452_5; // 1/(2 + √2)
const E32: f64 = 7.414_213_562_373_095; // 6 + √2

struct Workspace {
    n: usize,
    jac: Vec<f64>,
    jac_width: usize,
    kl: usize,
    ku: usize,
    w: BandMatrix,
    f0: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    y_trial: Vec<f64>,
    y_new: Vec<f64>,
    y_mid: Vec<f64>,
    scratch: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, kl: usize, ku: usize) -> Self {
        let jac_width = kl + ku + 1;
        Self {
            n,
            jac: vec![0.0; n * jac_width],
            jac_width,
            kl,
            ku,
            w: BandMatrix::zeros(n, kl, ku),
            f0: vec![0.0; n],
            f1: vec![0.0; n],
            f2: vec![0.0; n],
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            y_trial: vec![0.0; n],
            y_new: vec![0.0; n],
            y_mid: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }

    /// Coloured finite-difference Jacobian around `y` (with `f0 = f(y)`).
    fn jacobian<S: BandedSystem>(&mut self, sys: &S, y: &[f64], stats: &mut IntegratorStats) {
        let n = self.n;
        let colors = self.jac_width;
        let eps = f64::EPSILON.sqrt();
        for color in 0..colors.min(n) {
            self.y_trial.copy_from_slice(y);
            let mut c = color;
            while c < n {
                self.y_trial[c] += eps * y[c].abs().max(1.0);
                c += colors;
            }
            sys.eval(&self.y_trial, &mut self.scratch);
            stats.rhs_evals += 1;
            let mut c = color;
            while c < n {
                let delta = self.y_trial[c] - y[c];
                let r_lo = c.saturating_sub(self.ku);
                let r_hi = (c + self.kl).min(n - 1);
                for r in r_lo..=r_hi {
                    let off = c + self.kl - r;
                    self.jac[r * self.jac_width + off] = (self.scratch[r] - self.f0[r]) / delta;
                }
                c += colors;
            }
        }
    }

    /// Forms and factors `W = I − h·d·J`.
    fn factor_w(&mut self, h: f64) -> bool {
        let n = self.n;
        self.w.clear();
        let hd = h * D;
        for r in 0..n {
            let c_lo = r.saturating_sub(self.kl);
            let c_hi = (r + self.ku).min(n - 1);
            for c in c_lo..=c_hi {
                let off = c + self.kl - r;
                let mut v = -hd * self.jac[r * self.jac_width + off];
                if r == c {
                    v += 1.0;
                }
                self.w.set(r, c, v);
            }
        }
        self.w.factorize()
    }
}

/// Integrates from `t_out[0]` through every time in `t_out` (increasing),
/// returning the state at each. `y` is projected before the first output.
pub(crate) fn integrate<S, F>(
    sys: &S,
    y0: &[f64],
    t_out: &[f64],
    tol: &Tolerances,
    mut on_step: F,
) -> Result<(Vec<Vec<f64>>, IntegratorStats)>
where
    S: BandedSystem,
    F: FnMut(&AcceptedStep<'_>) -> Result<()>,
{
    let n = sys.dim();
    let (kl, ku) = sys.bandwidth();
    let mut ws = Workspace::new(n, kl, ku);
    let mut stats = IntegratorStats::default();
    let mut y = y0.to_vec();
    sys.project(&mut y);

    let mut out = Vec::with_capacity(t_out.len());
    let Some(&t_start) = t_out.first() else {
        return Ok((out, stats));
    };
    out.push(y.clone());

    let mut t = t_start;
    let mut h = tol.h_init;
    sys.eval(&y, &mut ws.f0);
    stats.rhs_evals += 1;

    for &t_target in &t_out[1..] {
        while t < t_target {
            if stats.accepted + stats.rejected >= tol.max_steps {
                return Err(Error::TooManySteps {
                    max_steps: tol.max_steps,
                    t,
                });
            }
            let remaining = t_target - t;
            let last = h >= remaining * (1.0 - 1e-12);
            let h_step = if last { remaining } else { h };
            if h_step < tol.h_min {
                return Err(Error::StepUnderflow { t });
            }

            ws.jacobian(sys, &y, &mut stats);
            if !ws.factor_w(h_step) {
                h = 0.25 * h_step;
                stats.rejected += 1;
                continue;
            }

            // stage 1
            ws.k1.copy_from_slice(&ws.f0);
            ws.w.solve(&mut ws.k1);
            // stage 2
            for i in 0..n {
                ws.y_trial[i] = y[i] + 0.5 * h_step * ws.k1[i];
            }
            sys.eval(&ws.y_trial, &mut ws.f1);
            for i in 0..n {
                ws.k2[i] = ws.f1[i] - ws.k1[i];
            }
            ws.w.solve(&mut ws.k2);
            for i in 0..n {
                ws.k2[i] += ws.k1[i];
                ws.y_new[i] = y[i] + h_step * ws.k2[i];
            }
            sys.eval(&ws.y_new, &mut ws.f2);
            // stage 3 (error estimate)
            for i in 0..n {
                ws.k3[i] = ws.f2[i] - E32 * (ws.k2[i] - ws.f1[i]) - 2.0 * (ws.k1[i] - ws.f0[i]);
            }
            ws.w.solve(&mut ws.k3);
            stats.rhs_evals += 2;

            let mut acc = 0.0;
            let mut finite = true;
            for i in 0..n {
                let e = h_step / 6.0 * (ws.k1[i] - 2.0 * ws.k2[i] + ws.k3[i]);
                let sc = tol.atol + tol.rtol * y[i].abs().max(ws.y_new[i].abs());
                let r = e / sc;
                if !r.is_finite() {
                    finite = false;
                }
                acc += r * r;
            }
            let err = if finite { (acc / n as f64).sqrt() } else { f64::INFINITY };

            if err <= 1.0 {
                // continuous extension at s = 1/2
                let c1 = 0.25 / (1.0 - 2.0 * D);
                let c2 = 0.5 * (0.5 - 2.0 * D) / (1.0 - 2.0 * D);
                for i in 0..n {
                    ws.y_mid[i] = y[i] + h_step * (c1 * ws.k1[i] + c2 * ws.k2[i]);
                }
                sys.project(&mut ws.y_new);
                on_step(&AcceptedStep {
                    t,
                    h: h_step,
                    y_start: &y,
                    y_mid: &ws.y_mid,
                    y_end: &ws.y_new,
                })?;
                std::mem::swap(&mut y, &mut ws.y_new);
                t = if last { t_target } else { t + h_step };
                sys.eval(&y, &mut ws.f0);
                stats.rhs_evals += 1;
                stats.accepted += 1;
                let grow = if err == 0.0 {
                    5.0
                } else {
                    (0.8 * err.powf(-1.0 / 3.0)).clamp(0.2, 5.0)
                };
                // a step truncated to hit an output time says little about
                // the step the controller wants
                h = if last { h.max(h_step * grow) } else { h_step * grow };
            } else {
                stats.rejected += 1;
                let shrink = if err.is_finite() {
                    (0.8 * err.powf(-1.0 / 3.0)).clamp(0.1, 0.5)
                } else {
                    0.1
                };
                h = h_step * shrink;
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}
