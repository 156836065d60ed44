//! Scaling to dimensionless groups: `x* = x/L`, `t* = t/T`, `u* = u/c_sat`,
//! `v* = v/c_sat`, `w* = w/w0`.

use serde::{Deserialize, Serialize};

use super::{CalibrationParameters, FixedConstants};

/// Every coefficient the dimensionless system needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledParameters {
    /// `D_n·T/L²`
    pub d_n: f64,
    /// `χ·w0·T/L²`
    pub chi: f64,
    /// `T/τ_n`
    pub rho_n: f64,
    /// `T/τ_d`
    pub rho_d: f64,
    /// `D_O2·T/L²`
    pub d_o2: f64,
    /// `α·c_sat·T/w0`
    pub alpha: f64,
    /// `b·w0`
    pub b: f64,
    /// `j·L/T`
    pub j: f64,
    /// `h₂/w0`
    pub h2: f64,
    /// `Δh₂/w0`
    pub dh2: f64,
    /// `k_m/w0`
    pub k_m: f64,
}

pub fn nondimensionalize(theta: &CalibrationParameters, c: &FixedConstants) -> ScaledParameters {
    let diff = c.horizon / (c.length * c.length);
    ScaledParameters {
        d_n: c.d_n * diff,
        chi: theta.chi * c.w0 * diff,
        rho_n: c.horizon / theta.tau_n,
        rho_d: c.horizon / c.tau_d,
        d_o2: c.d_o2 * diff,
        alpha: c.alpha * c.c_sat * c.horizon / c.w0,
        b: theta.b * c.w0,
        j: theta.j * c.length / c.horizon,
        h2: c.h2 / c.w0,
        dh2: c.dh2 / c.w0,
        k_m: c.k_m / c.w0,
    }
}

/// Inverse of [`nondimensionalize`] for the calibrated block.
pub fn dimensionalize(s: &ScaledParameters, c: &FixedConstants) -> CalibrationParameters {
    let diff = c.horizon / (c.length * c.length);
    CalibrationParameters {
        tau_n: c.horizon / s.rho_n,
        chi: s.chi / (c.w0 * diff),
        b: s.b / c.w0,
        j: s.j * c.horizon / c.length,
    }
}
