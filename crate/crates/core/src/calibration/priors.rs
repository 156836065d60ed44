use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{CalibrationMode, ModeParams};
use crate::data::ExperimentalDataset;
use crate::design::{DesignBox, SyntheticDataset};
use crate::error::{Error, Result};
use crate::gp::{DiscrepancyHypers, SurrogateHypers};

/// Gamma distribution in shape/rate form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
            return Err(Error::invalid(format!(
                "Gamma prior needs shape, rate > 0, got ({shape}, {rate})"
            )));
        }
        Ok(Self { shape, rate })
    }

    /// Gamma with the given mean and standard deviation.
    pub fn from_moments(mean: f64, sd: f64) -> Result<Self> {
        let shape = (mean / sd).powi(2);
        Self::new(shape, shape / mean)
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn sd(&self) -> f64 {
        self.shape.sqrt() / self.rate
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) || !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln() - self.rate * x
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rand_distr::Gamma::new(self.shape, 1.0 / self.rate)
            .expect("validated parameters")
            .sample(rng)
    }
}

/// Priors of every parameter a mode samples. GP hyperpriors are absent for
/// modes that do not use the corresponding GP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSet {
    pub theta_box: DesignBox,
    pub sigma: GammaPrior,
    pub beta_x: Option<GammaPrior>,
    pub beta_theta: Option<GammaPrior>,
    pub lambda_x: Option<GammaPrior>,
    pub beta_d: Option<GammaPrior>,
    pub lambda_d: Option<GammaPrior>,
}

fn mean_pairwise<T>(items: &[T], dist: impl Fn(&T, &T) -> f64) -> f64 {
    let n = items.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            acc += dist(&items[i], &items[j]);
        }
    }
    acc / (n * (n - 1) / 2) as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Empirical default priors. `data` and `synth` are in the mode's working
/// units (standardized for the GP-based modes).
pub fn default_priors(
    data: &ExperimentalDataset,
    synth: Option<&SyntheticDataset>,
    mode: CalibrationMode,
    theta_box: &DesignBox,
) -> Result<PriorSet> {
    if data.len() < 2 {
        return Err(Error::invalid(
            "default priors need at least 2 data points for pairwise distances",
        ));
    }
    theta_box.validate()?;
    let y_bar = data.z.iter().map(|v| v.abs()).sum::<f64>() / data.len() as f64;
    let sigma = GammaPrior::new(100.0, 100.0 / (0.1 * y_bar))?;
    let d_x = mean_pairwise(&data.x, |a, b| (a - b).abs());
    let spread = sample_sd(&data.z);
    let lengthscale = |d: f64| GammaPrior::new(5.0, 5.0 / d);
    let mut p = PriorSet {
        theta_box: theta_box.clone(),
        sigma,
        beta_x: None,
        beta_theta: None,
        lambda_x: None,
        beta_d: None,
        lambda_d: None,
    };
    if mode.uses_surrogate() {
        let s = synth.ok_or_else(|| Error::invalid(format!("mode {mode} needs a synthetic dataset")))?;
        if s.len() < 2 {
            return Err(Error::invalid("synthetic dataset needs at least 2 records"));
        }
        let d_theta = mean_pairwise(&s.theta, |a, b| crate::gp::sq_dist(a, b).sqrt());
        p.beta_x = Some(lengthscale(d_x)?);
        p.beta_theta = Some(lengthscale(d_theta)?);
        p.lambda_x = Some(lengthscale(spread)?);
    }
    if mode.uses_discrepancy() {
        p.beta_d = Some(lengthscale(d_x)?);
        p.lambda_d = Some(lengthscale(spread)?);
    }
    Ok(p)
}

fn need(g: Option<GammaPrior>, name: &str) -> GammaPrior {
    g.unwrap_or_else(|| panic!("prior set lacks a prior for {name}"))
}

impl PriorSet {
    /// Checks that exactly the priors `mode` needs are present.
    pub fn check_mode(&self, mode: CalibrationMode) -> Result<()> {
        let s = mode.uses_surrogate();
        let d = mode.uses_discrepancy();
        let have = [
            (self.beta_x.is_some(), s, "beta_x"),
            (self.beta_theta.is_some(), s, "beta_theta"),
            (self.lambda_x.is_some(), s, "lambda_x"),
            (self.beta_d.is_some(), d, "beta_d"),
            (self.lambda_d.is_some(), d, "lambda_d"),
        ];
        for (present, wanted, name) in have {
            if present != wanted {
                return Err(Error::invalid(format!(
                    "prior for {name} {} for mode {mode}",
                    if wanted { "missing" } else { "not expected" }
                )));
            }
        }
        if self.theta_box.dim() != 4 {
            return Err(Error::invalid("θ box must have 4 dimensions"));
        }
        Ok(())
    }

    /// Draws natural-scale parameters from the priors.
    pub fn sample<R: Rng + ?Sized>(&self, mode: CalibrationMode, rng: &mut R) -> ModeParams {
        let u: Vec<f64> = (0..self.theta_box.dim()).map(|_| rng.random::<f64>()).collect();
        let m = self.theta_box.from_unit(&u);
        let surrogate = mode.uses_surrogate().then(|| SurrogateHypers {
            beta_x: need(self.beta_x, "beta_x").sample(rng),
            beta_theta: need(self.beta_theta, "beta_theta").sample(rng),
            lambda_x: need(self.lambda_x, "lambda_x").sample(rng),
        });
        let discrepancy = mode.uses_discrepancy().then(|| DiscrepancyHypers {
            beta_d: need(self.beta_d, "beta_d").sample(rng),
            lambda_d: need(self.lambda_d, "lambda_d").sample(rng),
        });
        ModeParams {
            multipliers: [m[0], m[1], m[2], m[3]],
            sigma: self.sigma.sample(rng),
            surrogate,
            discrepancy,
        }
    }
}

/// Sum of independent prior log densities; `−∞` outside the θ box or for a
/// nonpositive scale.
pub fn log_prior(p: &ModeParams, priors: &PriorSet) -> f64 {
    if !priors.theta_box.contains(&p.multipliers) {
        return f64::NEG_INFINITY;
    }
    let mut lp = -priors.theta_box.volume().ln() + priors.sigma.ln_pdf(p.sigma);
    if let Some(s) = &p.surrogate {
        lp += need(priors.beta_x, "beta_x").ln_pdf(s.beta_x)
            + need(priors.beta_theta, "beta_theta").ln_pdf(s.beta_theta)
            + need(priors.lambda_x, "lambda_x").ln_pdf(s.lambda_x);
    }
    if let Some(d) = &p.discrepancy {
        lp += need(priors.beta_d, "beta_d").ln_pdf(d.beta_d) + need(priors.lambda_d, "lambda_d").ln_pdf(d.lambda_d);
    }
    if lp.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp
    }
}
