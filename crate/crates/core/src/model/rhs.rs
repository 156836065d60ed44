//! Semi-discrete right-hand side of the dimensionless system.
//!
//! The state is stored node-interleaved, `[u_0, v_0, w_0, u_1, v_1, w_1, …]`,
//! so the Jacobian is banded. Boundary `u` and `w` entries are algebraic:
//! `w = 1` (ambient oxygen) and `u` solves the Robin condition
//! `u ∓ j·f_u = 0` with one-sided second-order gradients. Their stored values
//! are ignored by [`ScaledSystem::eval`] and refreshed by
//! [`ScaledSystem::apply_boundary`].
//!
//! Cell fluxes are evaluated at cell faces (`F_{i+½}`) and differenced across
//! each node, so the live-cell update is conservative up to the source terms.

use super::corrections::{pi_consumption, pi_death, pi_go, pi_grow};
use super::nondim::{nondimensionalize, ScaledParameters};
use super::{CalibrationParameters, FixedConstants, SpatialGrid, StateSnapshot};
use crate::error::{Error, Result};

pub(crate) const VARS: usize = 3;

#[derive(Debug, Clone)]
pub(crate) struct ScaledSystem {
    pub p: ScaledParameters,
    pub n: usize,
    pub h: f64,
}

/// Integrands of the discrete cell balance `dM/dt = source − outflow`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct BalanceRates {
    pub mass: f64,
    pub source: f64,
    pub outflow: f64,
}

impl ScaledSystem {
    pub fn new(p: ScaledParameters, n: usize) -> Self {
        Self {
            p,
            n,
            h: 1.0 / (n - 1) as f64,
        }
    }

    pub fn dim(&self) -> usize {
        VARS * self.n
    }

    /// Lower/upper Jacobian bandwidth in the interleaved layout.
    pub fn bandwidth(&self) -> (usize, usize) {
        // boundary v depends on the eliminated boundary u, which reaches two
        // nodes inward
        (2 * VARS + 2, 2 * VARS + 2)
    }

    #[inline]
    fn mobility(&self, u: f64, w: f64) -> f64 {
        (1.0 - u).max(0.0) * pi_go(w, self.p.b) * u
    }

    /// Solves `A·u + q·u·(1 − u) = c` for the boundary live-cell density.
    fn robin_root(a: f64, q: f64, c: f64) -> f64 {
        let linear = c / a;
        if q == 0.0 {
            return linear;
        }
        let bq = a + q;
        let disc = (bq * bq - 4.0 * q * c).max(0.0).sqrt();
        let u = if bq > 0.0 {
            2.0 * c / (bq + disc)
        } else {
            (bq - disc) / (2.0 * q)
        };
        if u.is_finite() && u <= 1.0 {
            u
        } else {
            // F_go clamps to zero above saturation, leaving the linear relation
            linear.max(1.0)
        }
    }

    /// Live-cell densities at `x = 0` and `x = 1` implied by the Robin
    /// conditions and the current interior state.
    pub fn boundary_u(&self, y: &[f64]) -> (f64, f64) {
        let n = self.n;
        let h = self.h;
        let p = &self.p;
        let a = 1.0 + 1.5 * p.j * p.d_n / h;
        let go_edge = p.chi * pi_go(1.0, p.b);

        let (u1, u2) = (y[VARS], y[2 * VARS]);
        let (w1, w2) = (y[VARS + 2], y[2 * VARS + 2]);
        let gw_left = (-3.0 + 4.0 * w1 - w2) / (2.0 * h);
        let c_left = p.j * p.d_n * (4.0 * u1 - u2) / (2.0 * h);
        let left = Self::robin_root(a, p.j * go_edge * gw_left, c_left);

        let (um1, um2) = (y[VARS * (n - 2)], y[VARS * (n - 3)]);
        let (wm1, wm2) = (y[VARS * (n - 2) + 2], y[VARS * (n - 3) + 2]);
        let gw_right = (3.0 - 4.0 * wm1 + wm2) / (2.0 * h);
        let c_right = p.j * p.d_n * (4.0 * um1 - um2) / (2.0 * h);
        let right = Self::robin_root(a, -p.j * go_edge * gw_right, c_right);
        (left, right)
    }

    /// Overwrites the algebraic boundary entries of `y`.
    pub fn apply_boundary(&self, y: &mut [f64]) {
        let (ul, ur) = self.boundary_u(y);
        let last = VARS * (self.n - 1);
        y[0] = ul;
        y[2] = 1.0;
        y[last] = ur;
        y[last + 2] = 1.0;
    }

    #[inline]
    fn node(&self, y: &[f64], i: usize, edges: (f64, f64)) -> (f64, f64, f64) {
        let k = VARS * i;
        if i == 0 {
            (edges.0, y[k + 1], 1.0)
        } else if i == self.n - 1 {
            (edges.1, y[k + 1], 1.0)
        } else {
            (y[k], y[k + 1], y[k + 2])
        }
    }

    /// Face flux `f_u` between nodes `i` and `i + 1`.
    #[inline]
    fn face_flux(&self, a: (f64, f64, f64), b: (f64, f64, f64)) -> f64 {
        let (ua, _, wa) = a;
        let (ub, _, wb) = b;
        let m = 0.5 * (self.mobility(ua, wa) + self.mobility(ub, wb));
        (self.p.d_n * (ub - ua) - self.p.chi * m * (wb - wa)) / self.h
    }

    pub fn eval(&self, y: &[f64], dy: &mut [f64]) {
        let n = self.n;
        let h = self.h;
        let p = &self.p;
        let edges = self.boundary_u(y);
        let inv_h2 = 1.0 / (h * h);

        let mut left = self.node(y, 0, edges);
        let mut here = self.node(y, 1, edges);
        let mut flux_in = self.face_flux(left, here);

        let (u0, _, w0) = left;
        dy[0] = 0.0;
        dy[1] = p.rho_d * pi_death(w0, p.h2, p.dh2) * u0;
        dy[2] = 0.0;

        for i in 1..n - 1 {
            let right = self.node(y, i + 1, edges);
            let flux_out = self.face_flux(here, right);
            let (u, v, w) = here;
            let death = p.rho_d * pi_death(w, p.h2, p.dh2) * u;
            let growth = p.rho_n * (1.0 - u - v).max(0.0) * pi_grow(w, p.b) * u;
            let k = VARS * i;
            dy[k] = (flux_out - flux_in) / h + growth - death;
            dy[k + 1] = death;
            dy[k + 2] = p.d_o2 * (right.2 - 2.0 * w + left.2) * inv_h2 - p.alpha * pi_consumption(w, p.k_m) * u;
            flux_in = flux_out;
            left = here;
            here = right;
        }

        let (un, _, wn) = here;
        let k = VARS * (n - 1);
        dy[k] = 0.0;
        dy[k + 1] = p.rho_d * pi_death(wn, p.h2, p.dh2) * un;
        dy[k + 2] = 0.0;
    }

    /// Discrete cell inventory and its exact semi-discrete rate split.
    ///
    /// `mass` weights interior nodes by `h` and the boundary dead cells by
    /// `h/2`; boundary live cells sit on the interface and carry no volume.
    pub fn balance(&self, y: &[f64]) -> BalanceRates {
        let n = self.n;
        let h = self.h;
        let p = &self.p;
        let edges = self.boundary_u(y);
        let mut out = BalanceRates::default();
        for i in 0..n {
            let (u, v, w) = self.node(y, i, edges);
            if i == 0 || i == n - 1 {
                out.mass += 0.5 * h * v;
                out.source += 0.5 * h * p.rho_d * pi_death(w, p.h2, p.dh2) * u;
            } else {
                out.mass += h * (u + v);
                out.source += h * p.rho_n * (1.0 - u - v).max(0.0) * pi_grow(w, p.b) * u;
            }
        }
        let first = self.face_flux(self.node(y, 0, edges), self.node(y, 1, edges));
        let last = self.face_flux(self.node(y, n - 2, edges), self.node(y, n - 1, edges));
        out.outflow = first - last;
        out
    }

    /// Interleaved dimensionless state from a physical snapshot.
    pub fn pack(&self, s: &StateSnapshot, c: &FixedConstants) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        for i in 0..self.n {
            y[VARS * i] = s.u[i] / c.c_sat;
            y[VARS * i + 1] = s.v[i] / c.c_sat;
            y[VARS * i + 2] = s.w[i] / c.w0;
        }
        y
    }

    pub fn unpack(&self, t: f64, y: &[f64], c: &FixedConstants) -> StateSnapshot {
        let n = self.n;
        StateSnapshot {
            t: t * c.horizon,
            u: (0..n).map(|i| y[VARS * i] * c.c_sat).collect(),
            v: (0..n).map(|i| y[VARS * i + 1] * c.c_sat).collect(),
            w: (0..n).map(|i| y[VARS * i + 2] * c.w0).collect(),
        }
    }
}

pub(crate) fn check_finite(y: &[f64]) -> Result<()> {
    if let Some(k) = y.iter().position(|v| !v.is_finite()) {
        let field = ["u", "v", "w"][k % VARS];
        return Err(Error::NonFinite { field, node: k / VARS });
    }
    Ok(())
}

/// Time derivatives in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Rates {
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
    pub dw: Vec<f64>,
}

/// Evaluates the semi-discrete right-hand side at a physical state.
///
/// Boundary `u` and `w` are algebraic, so their rates are reported as zero
/// and the supplied boundary values are replaced by the Robin/Dirichlet
/// values before the stencil is applied.
pub fn assemble_rhs(
    state: &StateSnapshot,
    theta: &CalibrationParameters,
    consts: &FixedConstants,
    grid: &SpatialGrid,
) -> Result<Rates> {
    let n = grid.n_nodes();
    if state.u.len() != n || state.v.len() != n || state.w.len() != n {
        return Err(Error::invalid(format!(
            "state arrays must have {n} entries (u {}, v {}, w {})",
            state.u.len(),
            state.v.len(),
            state.w.len()
        )));
    }
    let sys = ScaledSystem::new(nondimensionalize(theta, consts), n);
    let y = sys.pack(state, consts);
    check_finite(&y)?;
    let mut dy = vec![0.0; sys.dim()];
    sys.eval(&y, &mut dy);
    let su = consts.c_sat / consts.horizon;
    let sw = consts.w0 / consts.horizon;
    Ok(Rates {
        du: (0..n).map(|i| dy[VARS * i] * su).collect(),
        dv: (0..n).map(|i| dy[VARS * i + 1] * su).collect(),
        dw: (0..n).map(|i| dy[VARS * i + 2] * sw).collect(),
    })
}
