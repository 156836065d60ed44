//! Closed-form correction factors of the go-or-grow model.
//!
//! These are the raw formulas; clamping of the saturation factors happens
//! inside the right-hand side, not here.

/// `F_gr(u, v) = 1 − (u + v)/c_sat`. Negative when the culture overshoots
/// saturation.
#[inline]
pub fn growth_saturation(u: f64, v: f64, c_sat: f64) -> f64 {
    1.0 - (u + v) / c_sat
}

/// `F_go(u) = 1 − u/c_sat`.
#[inline]
pub fn migration_saturation(u: f64, c_sat: f64) -> f64 {
    1.0 - u / c_sat
}

/// Proliferative share of the go-or-grow switch, `min(w·b, 1)`.
#[inline]
pub fn pi_grow(w: f64, b: f64) -> f64 {
    (w * b).min(1.0)
}

/// Migratory share of the go-or-grow switch, `max(1 − w·b, 0)`.
#[inline]
pub fn pi_go(w: f64, b: f64) -> f64 {
    (1.0 - w * b).max(0.0)
}

/// Anoxia-driven death activation `½[1 − tanh((w − h₂)/Δh₂)]`.
#[inline]
pub fn pi_death(w: f64, h2: f64, dh2: f64) -> f64 {
    0.5 * (1.0 - ((w - h2) / dh2).tanh())
}

/// Michaelis–Menten consumption factor `w/(w + k_m)`.
#[inline]
pub fn pi_consumption(w: f64, k_m: f64) -> f64 {
    w / (w + k_m)
}
