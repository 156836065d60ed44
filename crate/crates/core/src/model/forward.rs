//! Forward solves and the parametric model `η(x; θ) = û(x, T; θ)`.

use serde::{Deserialize, Serialize};

use super::integrator::{integrate, AcceptedStep, BandedSystem, IntegratorStats, Tolerances};
use super::nondim::nondimensionalize;
use super::rhs::{check_finite, ScaledSystem, VARS};
use super::{interp_linear, CalibrationParameters, CellProfile, FixedConstants, SpatialGrid, StateSnapshot};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative tolerance on the dimensionless state.
    pub rtol: f64,
    /// Absolute tolerance on the dimensionless state.
    pub atol: f64,
    /// Number of uniformly spaced output times on `[0, T]`, endpoints included.
    pub n_output_times: usize,
    pub max_steps: usize,
    /// Dimensionless density below which the solve is declared unstable.
    pub blowup_threshold: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-9,
            n_output_times: 100,
            max_steps: 200_000,
            blowup_threshold: 1e-3,
        }
    }
}

impl SolverOptions {
    fn tolerances(&self) -> Tolerances {
        Tolerances {
            rtol: self.rtol,
            atol: self.atol,
            h_init: 1e-6,
            h_min: 1e-13,
            max_steps: self.max_steps,
        }
    }
}

impl BandedSystem for ScaledSystem {
    fn dim(&self) -> usize {
        ScaledSystem::dim(self)
    }

    fn bandwidth(&self) -> (usize, usize) {
        ScaledSystem::bandwidth(self)
    }

    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        ScaledSystem::eval(self, y, dy)
    }

    fn project(&self, y: &mut [f64]) {
        self.apply_boundary(y)
    }
}

/// Time-integrated cell balance in dimensionless units (`x/L`, `u/c_sat`,
/// `t/T`): `mass_end − mass_start = source − outflow` up to time error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CellBalance {
    pub mass_start: f64,
    pub mass_end: f64,
    pub source: f64,
    pub outflow: f64,
}

impl CellBalance {
    /// `|Δmass − (source − outflow)| / max(|Δmass|, |source|, |outflow|)`.
    pub fn relative_defect(&self) -> f64 {
        let dm = self.mass_end - self.mass_start;
        let scale = dm.abs().max(self.source.abs()).max(self.outflow.abs());
        if scale == 0.0 {
            0.0
        } else {
            (dm - (self.source - self.outflow)).abs() / scale
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardSolution {
    /// State at `T`, physical units.
    pub final_state: StateSnapshot,
    /// States at every output time (empty unless requested).
    pub trajectory: Vec<StateSnapshot>,
    pub balance: CellBalance,
    pub stats: IntegratorStats,
}

fn initial_state(
    sys: &ScaledSystem,
    grid: &SpatialGrid,
    consts: &FixedConstants,
    u0: &CellProfile,
    v0: Option<&CellProfile>,
) -> Result<Vec<f64>> {
    let check = |p: &CellProfile, name: &str| -> Result<Vec<f64>> {
        if p.u.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid(format!("initial profile {name} has negative values")));
        }
        let sorted = p.sorted();
        Ok(sorted.interpolate(grid.x()))
    };
    let u = check(u0, "u0")?;
    let v = match v0 {
        Some(p) => check(p, "v0")?,
        None => vec![0.0; grid.n_nodes()],
    };
    let mut y = vec![0.0; sys.dim()];
    for i in 0..grid.n_nodes() {
        y[VARS * i] = u[i] / consts.c_sat;
        y[VARS * i + 1] = v[i] / consts.c_sat;
        y[VARS * i + 2] = 1.0;
    }
    check_finite(&y)?;
    Ok(y)
}

fn check_blowup(y: &[f64], t: f64, threshold: f64) -> Result<()> {
    for (k, &v) in y.iter().enumerate() {
        if v < -threshold {
            return Err(Error::NegativeDensity {
                field: ["u", "v", "w"][k % VARS],
                node: k / VARS,
                value: v,
                t,
            });
        }
        if !v.is_finite() {
            return Err(Error::NonFinite {
                field: ["u", "v", "w"][k % VARS],
                node: k / VARS,
            });
        }
    }
    Ok(())
}

fn run(
    theta: &CalibrationParameters,
    consts: &FixedConstants,
    n_nodes: usize,
    y0: &[f64],
    opts: &SolverOptions,
    keep_trajectory: bool,
) -> Result<(Vec<Vec<f64>>, CellBalance, IntegratorStats, ScaledSystem)> {
    if opts.n_output_times < 2 {
        return Err(Error::invalid("need at least 2 output times"));
    }
    let sys = ScaledSystem::new(nondimensionalize(theta, consts), n_nodes);
    let t_out: Vec<f64> = if keep_trajectory {
        let m = opts.n_output_times - 1;
        (0..=m).map(|k| k as f64 / m as f64).collect()
    } else {
        vec![0.0, 1.0]
    };
    let mut balance = CellBalance::default();
    let mut y_start = y0.to_vec();
    sys.apply_boundary(&mut y_start);
    balance.mass_start = sys.balance(&y_start).mass;
    let threshold = opts.blowup_threshold;
    let (states, stats) = integrate(&sys, &y_start, &t_out, &opts.tolerances(), |step: &AcceptedStep<'_>| {
        check_blowup(step.y_end, step.t + step.h, threshold)?;
        let a = sys.balance(step.y_start);
        let m = sys.balance(step.y_mid);
        let b = sys.balance(step.y_end);
        balance.source += step.h / 6.0 * (a.source + 4.0 * m.source + b.source);
        balance.outflow += step.h / 6.0 * (a.outflow + 4.0 * m.outflow + b.outflow);
        Ok(())
    })?;
    balance.mass_end = sys.balance(states.last().expect("two output times")).mass;
    Ok((states, balance, stats, sys))
}

/// Integrates the model from `t = 0` to `T_horizon`.
///
/// `u0` and `v0` are sampled profiles in physical units; they are mapped to
/// the grid by linear interpolation. Missing `v0` means no dead cells.
pub fn solve_forward(
    theta: &CalibrationParameters,
    consts: &FixedConstants,
    grid: &SpatialGrid,
    u0: &CellProfile,
    v0: Option<&CellProfile>,
    opts: &SolverOptions,
    keep_trajectory: bool,
) -> Result<ForwardSolution> {
    theta.validate()?;
    consts.validate()?;
    let sys0 = ScaledSystem::new(nondimensionalize(theta, consts), grid.n_nodes());
    let y0 = initial_state(&sys0, grid, consts, u0, v0)?;
    let (states, balance, stats, sys) = run(theta, consts, grid.n_nodes(), &y0, opts, keep_trajectory)?;
    let m = states.len() - 1;
    let trajectory = if keep_trajectory {
        states
            .iter()
            .enumerate()
            .map(|(k, y)| sys.unpack(k as f64 / m as f64, y, consts))
            .collect()
    } else {
        Vec::new()
    };
    Ok(ForwardSolution {
        final_state: sys.unpack(1.0, &states[m], consts),
        trajectory,
        balance,
        stats,
    })
}

/// `η(x; θ)`: solves forward, then linearly interpolates `û(·, T)` at the
/// physical coordinates `x_query`.
pub fn model_eta(
    x_query: &[f64],
    theta: &CalibrationParameters,
    consts: &FixedConstants,
    grid: &SpatialGrid,
    u0: &CellProfile,
    v0: Option<&CellProfile>,
    opts: &SolverOptions,
) -> Result<CellProfile> {
    if let Some(&bad) = x_query.iter().find(|&&x| !(0.0..=grid.length()).contains(&x)) {
        return Err(Error::invalid(format!(
            "query point {bad} outside [0, {}]",
            grid.length()
        )));
    }
    let sol = solve_forward(theta, consts, grid, u0, v0, opts, false)?;
    let u = interp_linear(grid.x(), &sol.final_state.u, x_query);
    CellProfile::new(x_query.to_vec(), u)
}

/// Anything that can evaluate `η` at dimensionless coordinates `x/L`,
/// returning `u/c_sat`. Implementations must be pure.
pub trait ForwardModel: Sync {
    fn eta(&self, theta: &CalibrationParameters, x: &[f64]) -> Result<Vec<f64>>;
}

/// The PDE model bound to fixed constants, grid and initial data.
#[derive(Debug, Clone)]
pub struct PdeModel {
    consts: FixedConstants,
    grid: SpatialGrid,
    y0: Vec<f64>,
    opts: SolverOptions,
    grid_unit: Vec<f64>,
}

impl PdeModel {
    pub fn new(
        consts: FixedConstants,
        n_nodes: usize,
        u0: &CellProfile,
        v0: Option<&CellProfile>,
        opts: SolverOptions,
    ) -> Result<Self> {
        consts.validate()?;
        let grid = SpatialGrid::uniform(n_nodes, consts.length)?;
        let sys = ScaledSystem::new(nondimensionalize(&CalibrationParameters::REFERENCE, &consts), n_nodes);
        let y0 = initial_state(&sys, &grid, &consts, u0, v0)?;
        let grid_unit = grid.x().iter().map(|x| x / consts.length).collect();
        Ok(Self {
            consts,
            grid,
            y0,
            opts,
            grid_unit,
        })
    }

    pub fn consts(&self) -> &FixedConstants {
        &self.consts
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    /// Dimensionless live-cell profile at `T` on the grid.
    pub fn final_profile(&self, theta: &CalibrationParameters) -> Result<Vec<f64>> {
        theta.validate()?;
        let (states, ..) = run(theta, &self.consts, self.grid.n_nodes(), &self.y0, &self.opts, false)?;
        let y = states.last().expect("two output times");
        Ok((0..self.grid.n_nodes()).map(|i| y[VARS * i]).collect())
    }

    /// Dimensionless grid coordinates `x/L`.
    pub fn grid_unit(&self) -> &[f64] {
        &self.grid_unit
    }
}

impl ForwardModel for PdeModel {
    fn eta(&self, theta: &CalibrationParameters, x: &[f64]) -> Result<Vec<f64>> {
        let u = self.final_profile(theta)?;
        Ok(interp_linear(&self.grid_unit, &u, x))
    }
}
