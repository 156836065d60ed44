//! Posterior summaries, prediction error, predictive bands, discrepancy
//! reconstruction and corner-plot data.

use std::path::Path;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ExperimentalDataset;
use crate::error::{Error, Result};
use crate::gp::{gp_posterior, kernel_se, DiscrepancyHypers, SEKernel};
use crate::model::{interp_linear, CalibrationParameters, CellProfile, FixedConstants, ForwardModel};
use crate::sampler::Chain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub names: Vec<String>,
    pub map: Vec<f64>,
    pub map_log_post: f64,
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    /// 2.5 % quantile.
    pub lower: Vec<f64>,
    /// 97.5 % quantile.
    pub upper: Vec<f64>,
    pub correlation: Vec<Vec<f64>>,
    /// Split-free Gelman–Rubin statistic over walkers, if available.
    pub rhat: Option<Vec<f64>>,
    pub n_samples: usize,
}

impl PosteriorSummary {
    pub fn covers(&self, k: usize, value: f64) -> bool {
        self.lower[k] <= value && value <= self.upper[k]
    }
}

/// Linear-interpolation quantile of sorted data (the default of most
/// statistics packages).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summary over flattened samples with their log-posteriors.
pub fn summarize(samples: &[Vec<f64>], log_post: &[f64], names: &[String]) -> Result<PosteriorSummary> {
    if samples.is_empty() || samples.len() != log_post.len() {
        return Err(Error::invalid(
            "summary needs a nonempty sample set with one log-posterior per sample",
        ));
    }
    let d = samples[0].len();
    let n = samples.len() as f64;
    let best = log_post
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v > log_post[b] { i } else { b });
    let mut mean = vec![0.0; d];
    for s in samples {
        for k in 0..d {
            mean[k] += s[k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let (mut median, mut lower, mut upper) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for k in 0..d {
        let mut col: Vec<f64> = samples.iter().map(|s| s[k]).collect();
        col.sort_by(f64::total_cmp);
        median[k] = quantile_sorted(&col, 0.5);
        lower[k] = quantile_sorted(&col, 0.025);
        upper[k] = quantile_sorted(&col, 0.975);
    }
    let mut cov = vec![vec![0.0; d]; d];
    for s in samples {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]);
            }
        }
    }
    let correlation = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let den = (cov[i][i] * cov[j][j]).sqrt();
                    if i == j {
                        1.0
                    } else if den > 0.0 {
                        (cov[i][j] / den).clamp(-1.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(PosteriorSummary {
        names: names.to_vec(),
        map: samples[best].clone(),
        map_log_post: log_post[best],
        mean,
        median,
        lower,
        upper,
        correlation,
        rhat: None,
        n_samples: samples.len(),
    })
}

/// Gelman–Rubin potential scale reduction per parameter, treating each
/// walker's trajectory as a chain.
pub fn gelman_rubin(by_walker: &[Vec<Vec<f64>>]) -> Option<Vec<f64>> {
    let m = by_walker.len();
    let n = by_walker.first()?.len();
    if m < 2 || n < 2 {
        return None;
    }
    let d = by_walker[0][0].len();
    Some(
        (0..d)
            .map(|k| {
                let means: Vec<f64> = by_walker
                    .iter()
                    .map(|c| c.iter().map(|s| s[k]).sum::<f64>() / n as f64)
                    .collect();
                let grand = means.iter().sum::<f64>() / m as f64;
                let b = n as f64 / (m - 1) as f64 * means.iter().map(|v| (v - grand).powi(2)).sum::<f64>();
                let w = by_walker
                    .iter()
                    .zip(&means)
                    .map(|(c, mu)| c.iter().map(|s| (s[k] - mu).powi(2)).sum::<f64>() / (n - 1) as f64)
                    .sum::<f64>()
                    / m as f64;
                let var = (n - 1) as f64 / n as f64 * w + b / n as f64;
                if w > 0.0 {
                    (var / w).sqrt()
                } else {
                    1.0
                }
            })
            .collect(),
    )
}

/// Summary of a chain's retained samples after mapping each through `map`
/// (e.g. from packed to natural coordinates).
pub fn summarize_chain<M>(chain: &Chain, names: &[String], map: M) -> Result<PosteriorSummary>
where
    M: Fn(&[f64]) -> Vec<f64>,
{
    let (xs, lps) = chain.retained();
    let mapped: Vec<Vec<f64>> = xs.iter().map(|s| map(s)).collect();
    let mut summary = summarize(&mapped, &lps, names)?;
    let by_walker: Vec<Vec<Vec<f64>>> = chain
        .retained_by_walker()
        .into_iter()
        .map(|w| w.iter().map(|s| map(s)).collect())
        .collect();
    summary.rhat = gelman_rubin(&by_walker);
    Ok(summary)
}

/// Trapezoidal `(∫₀¹ (a − b)² dx)^½` on sorted dimensionless nodes.
pub fn profile_error_dimensionless(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..x.len() {
        let f0 = (a[i - 1] - b[i - 1]).powi(2);
        let f1 = (a[i] - b[i]).powi(2);
        acc += 0.5 * (x[i] - x[i - 1]) * (f0 + f1);
    }
    acc.sqrt()
}

/// Prediction error `e = (1/c_sat) (∫ (û − u_exp)² d(x/L))^½`, with the
/// prediction interpolated onto the experimental coordinates.
pub fn profile_error(pred: &CellProfile, exp: &CellProfile, consts: &FixedConstants) -> Result<f64> {
    let pred = pred.sorted();
    let exp = exp.sorted();
    let tol = 1e-9 * consts.length;
    let (p_lo, p_hi) = (pred.x[0], pred.x[pred.len() - 1]);
    if exp.x[0] < p_lo - tol || exp.x[exp.len() - 1] > p_hi + tol {
        return Err(Error::invalid(format!(
            "experimental x range [{}, {}] exceeds prediction range [{p_lo}, {p_hi}]",
            exp.x[0],
            exp.x[exp.len() - 1]
        )));
    }
    let u = pred.interpolate(&exp.x);
    let x: Vec<f64> = exp.x.iter().map(|v| v / consts.length).collect();
    let a: Vec<f64> = u.iter().map(|v| v / consts.c_sat).collect();
    let b: Vec<f64> = exp.u.iter().map(|v| v / consts.c_sat).collect();
    Ok(profile_error_dimensionless(&x, &a, &b))
}

/// Fisher–KPP front speed `2√(D_n/τ_n)` [cm/s].
pub fn fisher_wave_speed(d_n: f64, tau_n: f64) -> f64 {
    2.0 * (d_n / tau_n).sqrt()
}

/// `d(xᵢ) = zᵢ − η(xᵢ; θ̂)`, dimensionless.
pub fn deviation(
    data: &ExperimentalDataset,
    theta_hat: &CalibrationParameters,
    model: &dyn ForwardModel,
) -> Result<Vec<f64>> {
    let eta = model.eta(theta_hat, &data.x)?;
    Ok(data.z.iter().zip(&eta).map(|(z, e)| z - e).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveBand {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub n_draws: usize,
}

/// Monte Carlo band from `n_draws` posterior samples taken without
/// replacement. Each sample is `(θ multipliers, σ)`; `σ · sigma_scale` is the
/// noise in the model's output units. The mean averages the noise-free
/// predictions and the spread includes the noise.
pub fn predictive_band(
    samples: &[(Vec<f64>, f64)],
    reference: &CalibrationParameters,
    model: &dyn ForwardModel,
    x: &[f64],
    sigma_scale: f64,
    n_draws: usize,
    seed: u64,
) -> Result<PredictiveBand> {
    if n_draws < 2 || n_draws > samples.len() {
        return Err(Error::invalid(format!(
            "need 2 <= n_draws <= {} retained samples, got {n_draws}",
            samples.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, samples.len(), n_draws).into_vec();
    let runs: Vec<Result<(Vec<f64>, Vec<f64>)>> = picks
        .par_iter()
        .enumerate()
        .map(|(k, &i)| {
            let (m, sigma) = &samples[i];
            let clean = model.eta(&reference.scaled_by(m), x)?;
            let mut r = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let noise = Normal::new(0.0, (sigma * sigma_scale).abs()).map_err(|e| Error::invalid(e.to_string()))?;
            let noisy = clean.iter().map(|v| v + noise.sample(&mut r)).collect();
            Ok((clean, noisy))
        })
        .collect();
    let mut clean = Vec::new();
    let mut noisy = Vec::new();
    let mut failed = 0;
    for r in runs {
        match r {
            Ok((c, n)) => {
                clean.push(c);
                noisy.push(n);
            }
            Err(e) => {
                warn!("predictive draw skipped: {e}");
                failed += 1;
            }
        }
    }
    if failed * 10 > n_draws || clean.len() < 2 {
        return Err(Error::TooManyFailures { failed, total: n_draws });
    }
    let n = clean.len() as f64;
    let mean: Vec<f64> = (0..x.len())
        .map(|j| clean.iter().map(|c| c[j]).sum::<f64>() / n)
        .collect();
    let sd: Vec<f64> = (0..x.len())
        .map(|j| (noisy.iter().map(|u| (u[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
        .collect();
    Ok(PredictiveBand {
        x: x.to_vec(),
        lower: mean.iter().zip(&sd).map(|(m, s)| m - 2.0 * s).collect(),
        upper: mean.iter().zip(&sd).map(|(m, s)| m + 2.0 * s).collect(),
        mean,
        sd,
        n_draws: clean.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyCurve {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Posterior of `δ` given residuals at `x_data` with noise `σ²`.
pub fn reconstruct_discrepancy(
    x_data: &[f64],
    residuals: &[f64],
    d: &DiscrepancyHypers,
    sigma: f64,
    x_query: &[f64],
) -> Result<DiscrepancyCurve> {
    let k = SEKernel {
        lambda: d.lambda_d,
        beta: d.beta_d,
    };
    let (mean, cov) = gp_posterior(
        x_data,
        residuals,
        |a: &f64, b: &f64| kernel_se(&[*a], &[*b], &k),
        sigma * sigma,
        x_query,
    )?;
    Ok(DiscrepancyCurve {
        x: x_query.to_vec(),
        mean: mean.iter().copied().collect(),
        sd: (0..x_query.len()).map(|i| cov[(i, i)].max(0.0).sqrt()).collect(),
    })
}

/// Bin edges and counts of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram1d {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub i: usize,
    pub j: usize,
    /// `counts[bin_i][bin_j]`.
    pub counts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerData {
    pub names: Vec<String>,
    pub marginals: Vec<Histogram1d>,
    pub pairs: Vec<Histogram2d>,
    pub map: Vec<f64>,
    pub mean: Vec<f64>,
}

pub const CORNER_BINS: usize = 50;

fn bin_of(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    (((v - lo) / (hi - lo) * bins as f64).floor() as usize).min(bins - 1)
}

fn range_of(col: impl Iterator<Item = f64>) -> (f64, f64) {
    col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn bins_for(lo: f64, hi: f64) -> usize {
    if hi > lo {
        CORNER_BINS
    } else {
        1
    }
}

pub fn histogram_2d(samples: &[Vec<f64>], i: usize, j: usize) -> Histogram2d {
    let (lo_i, hi_i) = range_of(samples.iter().map(|s| s[i]));
    let (lo_j, hi_j) = range_of(samples.iter().map(|s| s[j]));
    let (bi, bj) = (bins_for(lo_i, hi_i), bins_for(lo_j, hi_j));
    let mut counts = vec![vec![0; bj]; bi];
    for s in samples {
        counts[bin_of(s[i], lo_i, hi_i, bi)][bin_of(s[j], lo_j, hi_j, bj)] += 1;
    }
    Histogram2d { i, j, counts }
}

/// Marginal and pairwise histograms (50 bins over each sample range; a
/// single bin when the range is degenerate).
pub fn corner_export(samples: &[Vec<f64>], summary: &PosteriorSummary) -> Result<CornerData> {
    if samples.is_empty() {
        return Err(Error::invalid("corner data needs at least one sample"));
    }
    let d = samples[0].len();
    let marginals = (0..d)
        .map(|k| {
            let (lo, hi) = range_of(samples.iter().map(|s| s[k]));
            let bins = bins_for(lo, hi);
            let mut counts = vec![0; bins];
            for s in samples {
                counts[bin_of(s[k], lo, hi, bins)] += 1;
            }
            Histogram1d { lo, hi, counts }
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            pairs.push(histogram_2d(samples, i, j));
        }
    }
    Ok(CornerData {
        names: summary.names.clone(),
        marginals,
        pairs,
        map: summary.map.clone(),
        mean: summary.mean.clone(),
    })
}

/// Writes `corner_marginals.csv`, `corner_pairs.csv` and
/// `corner_markers.csv` into `dir`.
pub fn write_corner(dir: &Path, c: &CornerData) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("corner_marginals.csv"))?;
    w.write_record(["param", "bin", "lo", "hi", "count"])?;
    for (k, h) in c.marginals.iter().enumerate() {
        let width = (h.hi - h.lo) / h.counts.len() as f64;
        for (b, n) in h.counts.iter().enumerate() {
            let lo = h.lo + b as f64 * width;
            let hi = if b + 1 == h.counts.len() { h.hi } else { lo + width };
            w.write_record([
                c.names[k].clone(),
                b.to_string(),
                format!("{lo:e}"),
                format!("{hi:e}"),
                n.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv::Writer::from_path(dir.join("corner_pairs.csv"))?;
    w.write_record(["param_i", "param_j", "bin_i", "bin_j", "count"])?;
    for p in &c.pairs {
        for (bi, row) in p.counts.iter().enumerate() {
            for (bj, n) in row.iter().enumerate() {
                if *n > 0 {
                    w.write_record([
                        c.names[p.i].clone(),
                        c.names[p.j].clone(),
                        bi.to_string(),
                        bj.to_string(),
                        n.to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv::Writer::from_path(dir.join("corner_markers.csv"))?;
    w.write_record(["param", "map", "mean"])?;
    for k in 0..c.names.len() {
        w.write_record([
            c.names[k].clone(),
            format!("{:e}", c.map[k]),
            format!("{:e}", c.mean[k]),
        ])?;
    }
    w.flush().map_err(|e| Error::io(dir, e))
}

/// Interpolates a dimensionless profile at dimensionless points.
pub fn resample(x: &[f64], u: &[f64], xq: &[f64]) -> Vec<f64> {
    interp_linear(x, u, xq)
}
