//! One-dimensional go-or-grow model of a glioblastoma culture in a
//! microfluidic chamber: live cells `u`, dead cells `v`, oxygen `w`.
//!
//! Physical units appear only at this module's boundary. Everything the
//! solver touches is scaled by `L`, `T`, `c_sat` and `w0` (see [`nondim`]).

pub mod banded;
pub mod corrections;
pub mod forward;
pub mod integrator;
pub mod nondim;
pub mod rhs;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use corrections::{growth_saturation, migration_saturation, pi_consumption, pi_death, pi_go, pi_grow};
pub use forward::{model_eta, solve_forward, ForwardModel, ForwardSolution, PdeModel, SolverOptions};
pub use nondim::{dimensionalize, nondimensionalize, ScaledParameters};
pub use rhs::{assemble_rhs, Rates};

/// Literature-fixed constants of the model, in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedConstants {
    /// Pedesis diffusivity [cm²/s].
    #[serde(rename = "D_n")]
    pub d_n: f64,
    /// Oxygen diffusivity [cm²/s].
    #[serde(rename = "D_O2")]
    pub d_o2: f64,
    /// Death characteristic time [s].
    pub tau_d: f64,
    /// Oxygen consumption rate [mmHg·cm/(cell·s)].
    pub alpha: f64,
    /// Saturation cell density [cell/cm].
    pub c_sat: f64,
    /// Anoxia threshold [mmHg].
    pub h2: f64,
    /// Anoxia sensitivity [mmHg].
    pub dh2: f64,
    /// Michaelis–Menten constant [mmHg].
    pub k_m: f64,
    /// Ambient oxygen [mmHg].
    pub w0: f64,
    /// Chamber length [cm].
    #[serde(rename = "L")]
    pub length: f64,
    /// Experiment horizon [s].
    #[serde(rename = "T_horizon")]
    pub horizon: f64,
}

impl Default for FixedConstants {
    fn default() -> Self {
        Self {
            d_n: 1.0e-9,
            d_o2: 1.0e-5,
            tau_d: 3.6e5,
            alpha: 5.0e-10,
            c_sat: 1.0e6,
            h2: 1.4,
            dh2: 0.1,
            k_m: 2.5,
            w0: 7.0,
            length: 2.0,
            horizon: 8.64e5,
        }
    }
}

impl FixedConstants {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("D_n", self.d_n),
            ("D_O2", self.d_o2),
            ("tau_d", self.tau_d),
            ("alpha", self.alpha),
            ("c_sat", self.c_sat),
            ("h2", self.h2),
            ("dh2", self.dh2),
            ("k_m", self.k_m),
            ("w0", self.w0),
            ("L", self.length),
            ("T_horizon", self.horizon),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(format!(
                    "constant {name} must be finite and > 0, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// The unknown vector θ = (τ_n, χ, b, j) in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParameters {
    /// Proliferation characteristic time [s].
    pub tau_n: f64,
    /// Chemotaxis coefficient [cm²/(mmHg·s)].
    pub chi: f64,
    /// Inverse hypoxia threshold 1/h₁ [1/mmHg].
    pub b: f64,
    /// Boundary flux proportionality [s/cm].
    pub j: f64,
}

impl CalibrationParameters {
    pub const NAMES: [&'static str; 4] = ["tau_n", "chi", "b", "j"];

    /// Values previously reported for this culture (first column of the
    /// published parameter table).
    pub const REFERENCE: Self = Self {
        tau_n: 7.5e5,
        chi: 7.5e-9,
        b: 0.14,
        j: 1.0e6,
    };

    /// Published BI maximum-a-posteriori estimate.
    pub const PUBLISHED_BI: Self = Self {
        tau_n: 6.5e5,
        chi: 20.0e-9,
        b: 0.14,
        j: 2.1e6,
    };

    /// Published BCD maximum-a-posteriori estimate.
    pub const PUBLISHED_BCD: Self = Self {
        tau_n: 6.1e5,
        chi: 5.8e-9,
        b: 0.16,
        j: 0.6e6,
    };

    pub fn new(tau_n: f64, chi: f64, b: f64, j: f64) -> Result<Self> {
        let theta = Self { tau_n, chi, b, j };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in Self::NAMES.iter().zip(self.to_array()) {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(format!(
                    "parameter {name} must be finite and > 0, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Hypoxia threshold h₁ = 1/b [mmHg].
    pub fn h1(&self) -> f64 {
        1.0 / self.b
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.tau_n, self.chi, self.b, self.j]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            tau_n: a[0],
            chi: a[1],
            b: a[2],
            j: a[3],
        }
    }

    /// Component-wise product with dimensionless multipliers.
    pub fn scaled_by(&self, multipliers: &[f64]) -> Self {
        let a = self.to_array();
        Self::from_array([
            a[0] * multipliers[0],
            a[1] * multipliers[1],
            a[2] * multipliers[2],
            a[3] * multipliers[3],
        ])
    }

    /// Component-wise ratio to `reference`.
    pub fn multipliers_of(&self, reference: &Self) -> [f64; 4] {
        let a = self.to_array();
        let r = reference.to_array();
        [a[0] / r[0], a[1] / r[1], a[2] / r[2], a[3] / r[3]]
    }
}

/// Uniform node-centred mesh on `[0, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    x: Vec<f64>,
    length: f64,
}

impl SpatialGrid {
    pub const DEFAULT_NODES: usize = 100;

    pub fn uniform(n_nodes: usize, length: f64) -> Result<Self> {
        if n_nodes < 3 {
            return Err(Error::invalid(format!("grid needs >= 3 nodes, got {n_nodes}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::invalid(format!("grid length must be > 0, got {length}")));
        }
        let h = length / (n_nodes - 1) as f64;
        let mut x: Vec<f64> = (0..n_nodes).map(|i| i as f64 * h).collect();
        x[n_nodes - 1] = length;
        Ok(Self { x, length })
    }

    pub fn n_nodes(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.x.len() - 1) as f64
    }
}

/// Fields at one instant, in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

/// Sampled live-cell density profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellProfile {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

impl CellProfile {
    pub fn new(x: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        if x.len() != u.len() {
            return Err(Error::invalid(format!(
                "profile arrays differ in length ({} vs {})",
                x.len(),
                u.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::invalid("profile is empty"));
        }
        if x.iter().chain(&u).any(|v| !v.is_finite()) {
            return Err(Error::invalid("profile contains non-finite values"));
        }
        Ok(Self { x, u })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Copy sorted by `x` (stable, so duplicate coordinates keep file order).
    pub fn sorted(&self) -> Self {
        let mut idx: Vec<usize> = (0..self.x.len()).collect();
        idx.sort_by(|&a, &b| self.x[a].total_cmp(&self.x[b]));
        Self {
            x: idx.iter().map(|&i| self.x[i]).collect(),
            u: idx.iter().map(|&i| self.u[i]).collect(),
        }
    }

    /// Linear interpolation at `xq`, clamped to the end values outside the
    /// sampled range. `self` must be sorted by `x`.
    pub fn interpolate(&self, xq: &[f64]) -> Vec<f64> {
        interp_linear(&self.x, &self.u, xq)
    }

    pub fn scaled(&self, x_scale: f64, u_scale: f64) -> Self {
        Self {
            x: self.x.iter().map(|v| v * x_scale).collect(),
            u: self.u.iter().map(|v| v * u_scale).collect(),
        }
    }
}

/// Piecewise-linear interpolation of `(xs, ys)` (sorted by `xs`) at `xq`,
/// constant extrapolation outside the data range.
pub fn interp_linear(xs: &[f64], ys: &[f64], xq: &[f64]) -> Vec<f64> {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    xq.iter()
        .map(|&q| {
            if n == 1 || q <= xs[0] {
                return ys[0];
            }
            if q >= xs[n - 1] {
                return ys[n - 1];
            }
            // first index with xs[k] > q
            let k = xs.partition_point(|&v| v <= q);
            let (x0, x1) = (xs[k - 1], xs[k]);
            let (y0, y1) = (ys[k - 1], ys[k]);
            if x1 == x0 {
                y0
            } else {
                let s = (q - x0) / (x1 - x0);
                y0 + s * (y1 - y0)
            }
        })
        .collect()
}
