//! End-to-end runs shared by the command-line tool and the test suites:
//! presets, calibration, post-processing and the synthetic-truth setup.

use std::time::Instant;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    predictive_band, profile_error_dimensionless, reconstruct_discrepancy, summarize_chain, DiscrepancyCurve,
    PosteriorSummary, PredictiveBand,
};
use crate::calibration::{packed_to_natural, CalibrationMode, ModeParams, Posterior, PosteriorSpec, PriorSet};
use crate::data::ExperimentalDataset;
use crate::design::{DesignBox, SyntheticDataset};
use crate::error::{Error, Result};
use crate::gp::Standardization;
use crate::model::{CalibrationParameters, CellProfile, FixedConstants, ForwardModel, PdeModel, SolverOptions};
use crate::sampler::{continue_ensemble, init_walkers, run_ensemble, Chain, SamplerSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Full run lengths, 100 nodes.
    Paper,
    /// Run lengths ÷ 10, 50 nodes.
    Desk,
}

impl Preset {
    pub fn n_nodes(self) -> usize {
        match self {
            Self::Paper => 100,
            Self::Desk => 50,
        }
    }

    /// `(walkers, steps)` for `mode`.
    pub fn run_length(self, mode: CalibrationMode) -> (usize, usize) {
        let (w, s) = mode.paper_run_length();
        match self {
            Self::Paper => (w, s),
            Self::Desk => (w, s / 10),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Self::Paper),
            "desk" => Ok(Self::Desk),
            _ => Err(Error::invalid(format!("unknown preset '{s}' (expected paper or desk)"))),
        }
    }
}

/// Parameter names of the natural-scale summaries.
pub fn natural_names(mode: CalibrationMode) -> Vec<String> {
    mode.param_names().into_iter().map(String::from).collect()
}

/// Packed coordinates → physical θ followed by the natural-scale
/// hyperparameters and σ.
pub fn to_natural(packed: &[f64], reference: &CalibrationParameters) -> Vec<f64> {
    let mut v = packed_to_natural(packed);
    let r = reference.to_array();
    for k in 0..4 {
        v[k] *= r[k];
    }
    v
}

/// Inverse of [`to_natural`].
pub fn from_natural(mode: CalibrationMode, natural: &[f64], reference: &CalibrationParameters) -> Result<ModeParams> {
    let mut v = natural.to_vec();
    let r = reference.to_array();
    for k in 0..4 {
        v[k] /= r[k];
    }
    ModeParams::from_natural(mode, &v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub wall_seconds: f64,
    pub steps_per_second: f64,
    /// Log-posterior evaluations per second.
    pub evals_per_second: f64,
}

pub struct CalibrationOutcome {
    pub chain: Chain,
    pub summary: PosteriorSummary,
    pub priors: PriorSet,
    pub standardization: Standardization,
    pub throughput: Throughput,
}

/// Samples the posterior of `spec`, resuming from `resume` if given.
pub fn calibrate(
    spec: PosteriorSpec<'_>,
    settings: SamplerSettings,
    resume: Option<Chain>,
) -> Result<CalibrationOutcome> {
    let reference = spec.reference;
    let mode = spec.mode;
    let post = Posterior::new(spec)?;
    let lp = |p: &[f64]| post.log_posterior(p);
    let began = Instant::now();
    let (chain, steps_run) = match resume {
        Some(mut chain) => {
            if chain.header.mode.as_deref() != Some(&mode.to_string()) || chain.n_params() != mode.n_params() {
                return Err(Error::invalid(format!(
                    "chain was produced by mode {:?}, not {mode}",
                    chain.header.mode
                )));
            }
            let before = chain.steps_done();
            continue_ensemble(&lp, &mut chain, Some(settings.n_steps))?;
            let run = chain.steps_done() - before;
            (chain, run)
        }
        None => {
            let init = init_walkers(
                &lp,
                |r: &mut ChaCha8Rng| post.sample_prior(r),
                settings.n_walkers,
                settings.seed,
            )?;
            let steps = settings.n_steps;
            let chain = run_ensemble(
                &lp,
                init,
                settings,
                mode.param_names().into_iter().map(String::from).collect(),
                Some(mode.to_string()),
            )?;
            (chain, steps)
        }
    };
    let secs = began.elapsed().as_secs_f64().max(1e-9);
    let throughput = Throughput {
        wall_seconds: secs,
        steps_per_second: steps_run as f64 / secs,
        evals_per_second: (steps_run * chain.n_walkers()) as f64 / secs,
    };
    info!(
        "{mode}: {} steps × {} walkers in {secs:.1} s ({:.1} evaluations/s), mean acceptance {:.3}",
        steps_run,
        chain.n_walkers(),
        throughput.evals_per_second,
        chain.mean_acceptance()
    );
    let summary = summarize_chain(&chain, &natural_names(mode), |p| to_natural(p, &reference))?;
    Ok(CalibrationOutcome {
        chain,
        summary,
        priors: post.priors().clone(),
        standardization: post.standardization(),
        throughput,
    })
}

/// Prediction errors against the measurements, dimensionless.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub e_map: f64,
    pub e_mean: f64,
    pub e_surrogate: Option<f64>,
    pub e_corrected: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub mode: CalibrationMode,
    pub errors: ErrorTable,
    pub theta_map: CalibrationParameters,
    pub theta_mean: CalibrationParameters,
    /// `z − η(x; θ̂)` at the data points.
    pub deviation: Vec<f64>,
    /// Discrepancy in `u/c_sat` units on `x_query`.
    pub discrepancy: Option<DiscrepancyCurve>,
    /// Surrogate mean/sd of `η(·, θ̂)` in `u/c_sat` units on `x_query`.
    pub surrogate: Option<DiscrepancyCurve>,
    /// Forward-model prediction at θ̂ on `x_query`.
    pub prediction_map: Vec<f64>,
    pub x_query: Vec<f64>,
    pub band: Option<PredictiveBand>,
}

/// Everything [`analyze`] needs besides the chain.
pub struct AnalysisInputs<'a> {
    pub mode: CalibrationMode,
    /// Dimensionless measurements, as calibrated.
    pub data: &'a ExperimentalDataset,
    pub synth: Option<&'a SyntheticDataset>,
    pub model: &'a dyn ForwardModel,
    pub theta_box: DesignBox,
    pub reference: CalibrationParameters,
    pub priors: Option<PriorSet>,
    /// Dimensionless output coordinates for curves.
    pub x_query: Vec<f64>,
    /// Predictive draws; `0` skips the band.
    pub n_draws: usize,
    pub seed: u64,
}

fn sorted_error(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
    profile_error_dimensionless(&pick(x), &pick(a), &pick(b))
}

pub fn analyze(chain: &Chain, inp: AnalysisInputs<'_>) -> Result<AnalysisReport> {
    let mode = inp.mode;
    if chain.header.mode.as_deref() != Some(&mode.to_string()) {
        return Err(Error::invalid(format!(
            "chain was produced by mode {:?}, not {mode}",
            chain.header.mode
        )));
    }
    let post = Posterior::new(PosteriorSpec {
        mode,
        data: inp.data,
        synth: inp.synth,
        model: Some(inp.model),
        theta_box: inp.theta_box.clone(),
        reference: inp.reference,
        priors: inp.priors.clone(),
    })?;
    let std = post.standardization();
    let reference = inp.reference;
    let summary = summarize_chain(chain, &natural_names(mode), |p| to_natural(p, &reference))?;
    let map = from_natural(mode, &summary.map, &reference)?;
    let mean = from_natural(mode, &summary.mean, &reference)?;
    let theta_map = map.theta(&reference);
    let theta_mean = mean.theta(&reference);
    let data = inp.data;

    let eta_map = inp.model.eta(&theta_map, &data.x)?;
    let eta_mean = inp.model.eta(&theta_mean, &data.x)?;
    let mut errors = ErrorTable {
        e_map: sorted_error(&data.x, &eta_map, &data.z),
        e_mean: sorted_error(&data.x, &eta_mean, &data.z),
        ..Default::default()
    };
    let deviation: Vec<f64> = data.z.iter().zip(&eta_map).map(|(z, e)| z - e).collect();
    let prediction_map = inp.model.eta(&theta_map, &inp.x_query)?;

    let discrepancy = match &map.discrepancy {
        Some(d) => {
            // residuals in working units, curve reported in u/c_sat
            let r: Vec<f64> = deviation.iter().map(|v| v / std.sd).collect();
            let at_data = reconstruct_discrepancy(&data.x, &r, d, map.sigma, &data.x)?;
            let corrected: Vec<f64> = eta_map.iter().zip(&at_data.mean).map(|(e, m)| e + m * std.sd).collect();
            errors.e_corrected = Some(sorted_error(&data.x, &corrected, &data.z));
            let c = reconstruct_discrepancy(&data.x, &r, d, map.sigma, &inp.x_query)?;
            Some(DiscrepancyCurve {
                x: c.x,
                mean: c.mean.iter().map(|v| v * std.sd).collect(),
                sd: c.sd.iter().map(|v| v * std.sd).collect(),
            })
        }
        None => None,
    };

    let surrogate = match (&map.surrogate, post.working_synth()) {
        (Some(s), Some(synth)) => {
            let cache = crate::calibration::SurrogateCache::new(post.working_data(), synth);
            let (m_data, _) = cache.predict(&map.multipliers, s, map.discrepancy.as_ref(), map.sigma, &data.x)?;
            let pred: Vec<f64> = m_data.iter().map(|v| std.invert(*v)).collect();
            errors.e_surrogate = Some(sorted_error(&data.x, &pred, &data.z));
            let (m, sd) = cache.predict(&map.multipliers, s, map.discrepancy.as_ref(), map.sigma, &inp.x_query)?;
            Some(DiscrepancyCurve {
                x: inp.x_query.clone(),
                mean: m.iter().map(|v| std.invert(*v)).collect(),
                sd: sd.iter().map(|v| v * std.sd).collect(),
            })
        }
        _ => None,
    };

    let band = if inp.n_draws > 0 && mode.uses_model() {
        let (xs, _) = chain.retained();
        let samples: Vec<(Vec<f64>, f64)> = xs
            .iter()
            .map(|p| {
                let n = packed_to_natural(p);
                (n[..4].to_vec(), n[n.len() - 1])
            })
            .collect();
        let n_draws = inp.n_draws.min(samples.len());
        Some(predictive_band(
            &samples,
            &reference,
            inp.model,
            &inp.x_query,
            std.sd,
            n_draws,
            inp.seed,
        )?)
    } else {
        None
    };

    Ok(AnalysisReport {
        mode,
        errors,
        theta_map,
        theta_mean,
        deviation,
        discrepancy,
        surrogate,
        prediction_map,
        x_query: inp.x_query,
        band,
    })
}

/// Known-truth experiment: data generated by the model itself at `theta_star`
/// plus Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub multipliers: [f64; 4],
    /// Noise sd as a fraction of `c_sat`.
    pub sigma: f64,
    pub n_points: usize,
    /// Initial live-cell seeding `c_sat (base + amplitude sin(πx/L))`.
    pub seeding_base: f64,
    pub seeding_amplitude: f64,
    pub seed: u64,
}

impl Default for SyntheticTruth {
    fn default() -> Self {
        Self {
            multipliers: [0.8, 1.5, 1.3, 0.8],
            sigma: 0.05,
            n_points: 30,
            seeding_base: 0.3,
            seeding_amplitude: 0.1,
            seed: 2024,
        }
    }
}

impl SyntheticTruth {
    pub fn theta(&self) -> CalibrationParameters {
        CalibrationParameters::REFERENCE.scaled_by(&self.multipliers)
    }

    /// Initial live-cell profile on 201 points, physical units.
    pub fn seeding(&self, consts: &FixedConstants) -> CellProfile {
        let x: Vec<f64> = (0..=200).map(|i| consts.length * i as f64 / 200.0).collect();
        let u = x
            .iter()
            .map(|&x| {
                consts.c_sat
                    * (self.seeding_base + self.seeding_amplitude * (std::f64::consts::PI * x / consts.length).sin())
            })
            .collect();
        CellProfile { x, u }
    }

    /// The model and the noisy dimensionless measurements at `n_points`
    /// evenly spaced locations.
    pub fn generate(&self, consts: &FixedConstants, n_nodes: usize) -> Result<(PdeModel, ExperimentalDataset)> {
        let model = PdeModel::new(*consts, n_nodes, &self.seeding(consts), None, SolverOptions::default())?;
        let x: Vec<f64> = (0..self.n_points)
            .map(|i| i as f64 / (self.n_points - 1) as f64)
            .collect();
        let clean = model.eta(&self.theta(), &x)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.sigma).map_err(|e| Error::invalid(e.to_string()))?;
        let z = clean.iter().map(|v| v + noise.sample(&mut rng)).collect();
        Ok((model, ExperimentalDataset::new(x, z)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        assert_eq!(Preset::Desk.run_length(CalibrationMode::Bi), (16, 800));
        assert_eq!(Preset::Paper.run_length(CalibrationMode::Bce), (16, 100000));
        assert_eq!(Preset::Desk.run_length(CalibrationMode::Bced), (32, 3000));
        assert_eq!(Preset::Desk.n_nodes(), 50);
        assert_eq!("PAPER".parse::<Preset>().unwrap(), Preset::Paper);
    }

    #[test]
    fn natural_round_trip() {
        let r = CalibrationParameters::REFERENCE;
        let p = ModeParams::from_natural(CalibrationMode::Bcd, &[1.1, 0.9, 2.0, 0.5, 0.3, 0.7, 0.04]).unwrap();
        let nat = to_natural(&p.pack(), &r);
        assert!((nat[0] - 1.1 * r.tau_n).abs() < 1e-6);
        let back = from_natural(CalibrationMode::Bcd, &nat, &r).unwrap();
        for (a, b) in back.natural().iter().zip(p.natural()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn truth_data_shape() {
        let c = FixedConstants::default();
        let (_, d) = SyntheticTruth::default().generate(&c, 30).unwrap();
        assert_eq!(d.len(), 30);
        assert_eq!(d.x[0], 0.0);
        assert_eq!(d.x[29], 1.0);
    }
}
