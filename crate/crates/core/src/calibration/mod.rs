//! Priors and log-posteriors of the four calibration modes.
//!
//! | mode | model term | discrepancy |
//! |------|------------|-------------|
//! | BI   | forward solve | none |
//! | BCE  | GP surrogate trained jointly on synthetic runs | none |
//! | BCD  | forward solve | GP |
//! | BCED | GP surrogate | GP |
//!
//! The sampler sees a packed vector: the four θ multipliers as-is, then the
//! logarithms of the positive scale parameters.

mod likelihood;
mod priors;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use likelihood::{
    discrepancy_cov, loglik_bcd, loglik_bce, loglik_bced, loglik_bi, loglik_iid, loglik_mvn, SurrogateCache,
    SYNTHETIC_NUGGET,
};
pub use priors::{default_priors, log_prior, GammaPrior, PriorSet};

use crate::data::ExperimentalDataset;
use crate::design::{DesignBox, SyntheticDataset};
use crate::error::{Error, Result};
use crate::gp::{DiscrepancyHypers, Standardization, SurrogateHypers};
use crate::model::{CalibrationParameters, ForwardModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMode {
    Bi,
    Bce,
    Bcd,
    Bced,
}

impl CalibrationMode {
    pub const ALL: [Self; 4] = [Self::Bi, Self::Bce, Self::Bcd, Self::Bced];

    pub fn uses_surrogate(self) -> bool {
        matches!(self, Self::Bce | Self::Bced)
    }

    pub fn uses_discrepancy(self) -> bool {
        matches!(self, Self::Bcd | Self::Bced)
    }

    pub fn uses_model(self) -> bool {
        !self.uses_surrogate()
    }

    /// Parameter names in packing order.
    pub fn param_names(self) -> Vec<&'static str> {
        let mut names = CalibrationParameters::NAMES.to_vec();
        if self.uses_surrogate() {
            names.extend(["beta_x", "beta_theta", "lambda_x"]);
        }
        if self.uses_discrepancy() {
            names.extend(["beta_d", "lambda_d"]);
        }
        names.push("sigma");
        names
    }

    pub fn n_params(self) -> usize {
        self.param_names().len()
    }

    /// Default (walkers, steps) of a full-length run.
    pub fn paper_run_length(self) -> (usize, usize) {
        match self {
            Self::Bi => (16, 8000),
            Self::Bcd => (16, 20000),
            Self::Bce => (16, 100000),
            Self::Bced => (32, 30000),
        }
    }
}

impl fmt::Display for CalibrationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bi => "BI",
            Self::Bce => "BCE",
            Self::Bcd => "BCD",
            Self::Bced => "BCED",
        })
    }
}

impl FromStr for CalibrationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bi" => Ok(Self::Bi),
            "bce" => Ok(Self::Bce),
            "bcd" => Ok(Self::Bcd),
            "bced" => Ok(Self::Bced),
            _ => Err(Error::invalid(format!(
                "unknown mode '{s}' (expected bi, bce, bcd or bced)"
            ))),
        }
    }
}

/// Experimental error model `z = φ + ε`, `ε ~ N(0, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
}

/// Natural-scale values of one posterior point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    /// θ as ratios to the reference values.
    pub multipliers: [f64; 4],
    pub sigma: f64,
    pub surrogate: Option<SurrogateHypers>,
    pub discrepancy: Option<DiscrepancyHypers>,
}

impl ModeParams {
    pub fn theta(&self, reference: &CalibrationParameters) -> CalibrationParameters {
        reference.scaled_by(&self.multipliers)
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel { sigma: self.sigma }
    }

    /// Natural-scale values in packing order.
    pub fn natural(&self) -> Vec<f64> {
        let mut v = self.multipliers.to_vec();
        if let Some(s) = &self.surrogate {
            v.extend([s.beta_x, s.beta_theta, s.lambda_x]);
        }
        if let Some(d) = &self.discrepancy {
            v.extend([d.beta_d, d.lambda_d]);
        }
        v.push(self.sigma);
        v
    }

    pub fn from_natural(mode: CalibrationMode, v: &[f64]) -> Result<Self> {
        if v.len() != mode.n_params() {
            return Err(Error::invalid(format!(
                "mode {mode} has {} parameters, got {}",
                mode.n_params(),
                v.len()
            )));
        }
        let mut k = 4;
        let surrogate = mode.uses_surrogate().then(|| {
            k += 3;
            SurrogateHypers {
                beta_x: v[k - 3],
                beta_theta: v[k - 2],
                lambda_x: v[k - 1],
            }
        });
        let discrepancy = mode.uses_discrepancy().then(|| {
            k += 2;
            DiscrepancyHypers {
                beta_d: v[k - 2],
                lambda_d: v[k - 1],
            }
        });
        Ok(Self {
            multipliers: [v[0], v[1], v[2], v[3]],
            sigma: v[k],
            surrogate,
            discrepancy,
        })
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut v = self.natural();
        for s in &mut v[4..] {
            *s = s.ln();
        }
        v
    }

    pub fn unpack(mode: CalibrationMode, packed: &[f64]) -> Result<Self> {
        let mut v = packed.to_vec();
        for s in v.iter_mut().skip(4) {
            *s = s.exp();
        }
        Self::from_natural(mode, &v)
    }
}

/// Converts a packed coordinate vector to natural scale.
pub fn packed_to_natural(packed: &[f64]) -> Vec<f64> {
    packed
        .iter()
        .enumerate()
        .map(|(k, v)| if k < 4 { *v } else { v.exp() })
        .collect()
}

/// Applies an output standardization to a model's predictions.
struct StandardizedModel<'a> {
    inner: &'a dyn ForwardModel,
    std: Standardization,
}

impl ForwardModel for StandardizedModel<'_> {
    fn eta(&self, theta: &CalibrationParameters, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .inner
            .eta(theta, x)?
            .into_iter()
            .map(|v| self.std.apply(v))
            .collect())
    }
}

/// Everything needed to assemble a posterior.
pub struct PosteriorSpec<'a> {
    pub mode: CalibrationMode,
    /// Dimensionless measurements (`x/L`, `u/c_sat`).
    pub data: &'a ExperimentalDataset,
    pub synth: Option<&'a SyntheticDataset>,
    pub model: Option<&'a dyn ForwardModel>,
    pub theta_box: DesignBox,
    pub reference: CalibrationParameters,
    /// Overrides the empirical default priors.
    pub priors: Option<PriorSet>,
}

/// Log-posterior of one mode over packed coordinates. Immutable and safe to
/// evaluate from many threads.
pub struct Posterior<'a> {
    mode: CalibrationMode,
    priors: PriorSet,
    reference: CalibrationParameters,
    standardization: Standardization,
    work: ExperimentalDataset,
    synth: Option<SyntheticDataset>,
    cache: Option<SurrogateCache>,
    model: Option<StandardizedModel<'a>>,
}

impl<'a> Posterior<'a> {
    pub fn new(spec: PosteriorSpec<'a>) -> Result<Self> {
        let mode = spec.mode;
        spec.theta_box.validate()?;
        if spec.theta_box.dim() != 4 {
            return Err(Error::invalid("θ box must have 4 dimensions"));
        }
        if mode.uses_model() && spec.model.is_none() {
            return Err(Error::invalid(format!("mode {mode} needs the forward model")));
        }
        let synth_raw = match (mode.uses_surrogate(), spec.synth) {
            (true, None) => return Err(Error::invalid(format!("mode {mode} needs a synthetic dataset"))),
            (true, Some(s)) => {
                s.validate()?;
                if s.reference != spec.reference {
                    return Err(Error::invalid(
                        "synthetic dataset was generated around a different reference θ",
                    ));
                }
                Some(s)
            }
            (false, _) => None,
        };
        // BI keeps the dimensionless scale so σ reads directly as a
        // fraction of c_sat; GP modes work on standardized outputs.
        let standardization = if mode == CalibrationMode::Bi {
            Standardization::IDENTITY
        } else {
            Standardization::fit(&spec.data.z)
        };
        let work = ExperimentalDataset {
            x: spec.data.x.clone(),
            z: spec.data.z.iter().map(|v| standardization.apply(*v)).collect(),
        };
        let synth = synth_raw.map(|s| {
            let mut s = s.clone();
            s.y.iter_mut().for_each(|v| *v = standardization.apply(*v));
            s
        });
        let priors = match spec.priors {
            Some(p) => p,
            None => default_priors(&work, synth.as_ref(), mode, &spec.theta_box)?,
        };
        priors.check_mode(mode)?;
        let cache = synth.as_ref().map(|s| SurrogateCache::new(&work, s));
        let model = if mode.uses_model() {
            spec.model.map(|inner| StandardizedModel {
                inner,
                std: standardization,
            })
        } else {
            None
        };
        Ok(Self {
            mode,
            priors,
            reference: spec.reference,
            standardization,
            work,
            synth,
            cache,
            model,
        })
    }

    pub fn mode(&self) -> CalibrationMode {
        self.mode
    }

    pub fn priors(&self) -> &PriorSet {
        &self.priors
    }

    pub fn reference(&self) -> &CalibrationParameters {
        &self.reference
    }

    pub fn standardization(&self) -> Standardization {
        self.standardization
    }

    /// Measurements in working units.
    pub fn working_data(&self) -> &ExperimentalDataset {
        &self.work
    }

    /// Synthetic records in working units.
    pub fn working_synth(&self) -> Option<&SyntheticDataset> {
        self.synth.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.mode.n_params()
    }

    pub fn log_likelihood(&self, p: &ModeParams) -> f64 {
        let theta = p.theta(&self.reference);
        match self.mode {
            CalibrationMode::Bi => loglik_bi(
                &theta,
                p.sigma,
                &self.work,
                self.model.as_ref().expect("checked in new"),
            ),
            CalibrationMode::Bcd => loglik_bcd(
                &theta,
                p.discrepancy.as_ref().expect("mode has discrepancy"),
                p.sigma,
                &self.work,
                self.model.as_ref().expect("checked in new"),
            ),
            CalibrationMode::Bce | CalibrationMode::Bced => self.cache.as_ref().expect("checked in new").loglik(
                &p.multipliers,
                p.surrogate.as_ref().expect("mode has surrogate"),
                p.discrepancy.as_ref(),
                p.sigma,
            ),
        }
    }

    /// Log prior over packed coordinates, including the Jacobian of the
    /// log transform of the scale parameters.
    pub fn log_prior_packed(&self, packed: &[f64]) -> f64 {
        let Ok(p) = ModeParams::unpack(self.mode, packed) else {
            return f64::NEG_INFINITY;
        };
        let lp = log_prior(&p, &self.priors);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + packed[4..].iter().sum::<f64>()
    }

    pub fn log_posterior(&self, packed: &[f64]) -> f64 {
        if packed.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let lp = self.log_prior_packed(packed);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        let p = ModeParams::unpack(self.mode, packed).expect("validated by the prior");
        let ll = self.log_likelihood(&p);
        if ll.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp + ll
        }
    }

    /// A packed draw from the prior.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.priors.sample(self.mode, rng).pack()
    }
}
