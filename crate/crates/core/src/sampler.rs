//! Affine-invariant ensemble sampler (stretch move) with chain persistence.
//!
//! Walkers are updated in two halves, each against the frozen other half, so
//! a half can be evaluated in parallel. Every walker draws its randomness
//! from a stream keyed by `(seed, walker, step)`, which makes a run
//! independent of thread count and lets an interrupted run resume to the
//! identical chain.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 10] = b"GBMCHAIN1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub n_walkers: usize,
    /// Total steps including burn-in.
    pub n_steps: usize,
    pub burn_in: f64,
    /// Stretch scale `a > 1`.
    pub a: f64,
    pub seed: u64,
    /// Keep every `thin`-th retained step.
    pub thin: usize,
    /// Steps without a single acceptance before giving up.
    pub stall_window: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            n_walkers: 16,
            n_steps: 1000,
            burn_in: 0.2,
            a: 2.0,
            seed: 0,
            thin: 1,
            stall_window: 500,
        }
    }
}

impl SamplerSettings {
    pub fn validate(&self, n_params: usize) -> Result<()> {
        if self.n_walkers < 2 {
            return Err(Error::invalid("the ensemble needs at least 2 walkers"));
        }
        if self.n_steps == 0 || self.thin == 0 || self.stall_window == 0 {
            return Err(Error::invalid("steps, thinning and stall window must be positive"));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::invalid(format!(
                "burn-in fraction must be in [0, 1), got {}",
                self.burn_in
            )));
        }
        if !(self.a > 1.0) {
            return Err(Error::invalid(format!("stretch scale must exceed 1, got {}", self.a)));
        }
        if self.n_walkers < 2 * n_params {
            warn!(
                "{} walkers for {n_params} parameters; at least {} are recommended",
                self.n_walkers,
                2 * n_params
            );
        }
        Ok(())
    }

    /// Number of leading steps discarded as burn-in.
    pub fn burn_in_steps(&self) -> usize {
        let retained = ((1.0 - self.burn_in) * self.n_steps as f64 + 1e-9).floor() as usize;
        self.n_steps - retained.min(self.n_steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainHeader {
    pub param_names: Vec<String>,
    pub mode: Option<String>,
    pub settings: SamplerSettings,
    pub n_params: usize,
    pub steps_done: usize,
    pub accepted: Vec<u64>,
}

/// Positions and log-posteriors of every walker at every completed step,
/// burn-in included.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub header: ChainHeader,
    /// `[step][walker][param]`, flattened.
    samples: Vec<f64>,
    /// `[step][walker]`, flattened.
    log_post: Vec<f64>,
    /// Positions and values before the first step.
    start: Vec<Vec<f64>>,
    start_lp: Vec<f64>,
}

impl Chain {
    pub fn n_walkers(&self) -> usize {
        self.header.settings.n_walkers
    }

    pub fn n_params(&self) -> usize {
        self.header.n_params
    }

    pub fn steps_done(&self) -> usize {
        self.header.steps_done
    }

    pub fn param_names(&self) -> &[String] {
        &self.header.param_names
    }

    pub fn sample(&self, step: usize, walker: usize) -> &[f64] {
        let p = self.n_params();
        let at = (step * self.n_walkers() + walker) * p;
        &self.samples[at..at + p]
    }

    pub fn log_post(&self, step: usize, walker: usize) -> f64 {
        self.log_post[step * self.n_walkers() + walker]
    }

    /// Per-walker acceptance fraction over completed steps.
    pub fn acceptance(&self) -> Vec<f64> {
        let n = self.steps_done().max(1) as f64;
        self.header.accepted.iter().map(|&a| a as f64 / n).collect()
    }

    pub fn mean_acceptance(&self) -> f64 {
        let a = self.acceptance();
        a.iter().sum::<f64>() / a.len() as f64
    }

    /// Indices of retained (post burn-in, thinned) steps.
    pub fn retained_steps(&self) -> Vec<usize> {
        let s = &self.header.settings;
        (s.burn_in_steps()..self.steps_done()).step_by(s.thin).collect()
    }

    /// Retained samples flattened over steps and walkers, with their
    /// log-posteriors.
    pub fn retained(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut xs = Vec::new();
        let mut lps = Vec::new();
        for step in self.retained_steps() {
            for w in 0..self.n_walkers() {
                xs.push(self.sample(step, w).to_vec());
                lps.push(self.log_post(step, w));
            }
        }
        (xs, lps)
    }

    /// Per-walker retained trajectories `[walker][step][param]`.
    pub fn retained_by_walker(&self) -> Vec<Vec<Vec<f64>>> {
        let steps = self.retained_steps();
        (0..self.n_walkers())
            .map(|w| steps.iter().map(|&s| self.sample(s, w).to_vec()).collect())
            .collect()
    }

    fn current(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        if self.steps_done() == 0 {
            return (self.start.clone(), self.start_lp.clone());
        }
        let last = self.steps_done() - 1;
        (
            (0..self.n_walkers()).map(|w| self.sample(last, w).to_vec()).collect(),
            (0..self.n_walkers()).map(|w| self.log_post(last, w)).collect(),
        )
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn walker_rng(seed: u64, walker: usize, step: usize) -> ChaCha8Rng {
    let k = splitmix(splitmix(seed) ^ splitmix((walker as u64) << 32 ^ step as u64 ^ 0xA5A5_0000_0000_0000));
    ChaCha8Rng::seed_from_u64(k)
}

/// Draws the stretch factor `g` with density `∝ 1/√g` on `[1/a, a]`.
pub fn sample_stretch<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    ((a - 1.0) * u + 1.0).powi(2) / a
}

/// CDF of the stretch-factor law on `[1/a, a]`.
pub fn stretch_cdf(g: f64, a: f64) -> f64 {
    if g <= 1.0 / a {
        0.0
    } else if g >= a {
        1.0
    } else {
        ((a * g).sqrt() - 1.0) / (a - 1.0)
    }
}

/// Proposal `partner + g (walker − partner)` and its log Hastings term
/// `(n − 1) log g`.
pub fn stretch_with(walker: &[f64], partner: &[f64], g: f64) -> (Vec<f64>, f64) {
    let prop = walker.iter().zip(partner).map(|(w, p)| p + g * (w - p)).collect();
    (prop, (walker.len() as f64 - 1.0) * g.ln())
}

pub fn stretch_move<R: Rng + ?Sized>(walker: &[f64], partner: &[f64], a: f64, rng: &mut R) -> (Vec<f64>, f64) {
    stretch_with(walker, partner, sample_stretch(a, rng))
}

/// Draws starting points with `draw` until each has a finite log-posterior,
/// trying at most `100 · n_walkers` candidates.
pub fn init_walkers<F, D>(log_post: &F, draw: D, n_walkers: usize, seed: u64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> f64 + Sync,
    D: Fn(&mut ChaCha8Rng) -> Vec<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0x1417));
    let max_attempts = 100 * n_walkers;
    let mut starts = Vec::with_capacity(n_walkers);
    let mut attempts = 0;
    while starts.len() < n_walkers {
        // evaluate a batch in parallel; candidates are drawn serially so the
        // result does not depend on scheduling
        let want = (n_walkers - starts.len()).min(max_attempts - attempts);
        if want == 0 {
            return Err(Error::NoFiniteStart { n_walkers, attempts });
        }
        let cand: Vec<Vec<f64>> = (0..want).map(|_| draw(&mut rng)).collect();
        attempts += want;
        let ok: Vec<bool> = cand.par_iter().map(|c| log_post(c).is_finite()).collect();
        starts.extend(cand.into_iter().zip(ok).filter(|(_, ok)| *ok).map(|(c, _)| c));
    }
    Ok(starts)
}

/// Runs the ensemble from `init` for `settings.n_steps` steps.
pub fn run_ensemble<F>(
    log_post: &F,
    init: Vec<Vec<f64>>,
    settings: SamplerSettings,
    param_names: Vec<String>,
    mode: Option<String>,
) -> Result<Chain>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n_params = param_names.len();
    settings.validate(n_params)?;
    if init.len() != settings.n_walkers || init.iter().any(|p| p.len() != n_params) {
        return Err(Error::invalid(format!(
            "need {} starting points of dimension {n_params}",
            settings.n_walkers
        )));
    }
    let start_lp: Vec<f64> = init.par_iter().map(|p| log_post(p)).collect();
    if let Some(w) = start_lp.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "walker {w} starts where the log-posterior is not finite"
        )));
    }
    let mut chain = Chain {
        header: ChainHeader {
            param_names,
            mode,
            n_params,
            steps_done: 0,
            accepted: vec![0; settings.n_walkers],
            settings,
        },
        samples: Vec::new(),
        log_post: Vec::new(),
        start: init,
        start_lp,
    };
    continue_ensemble(log_post, &mut chain, None)?;
    Ok(chain)
}

/// Advances `chain` until it holds `target_steps` steps (default: the
/// configured total).
pub fn continue_ensemble<F>(log_post: &F, chain: &mut Chain, target_steps: Option<usize>) -> Result<()>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let target = target_steps.unwrap_or(chain.header.settings.n_steps);
    chain.header.settings.n_steps = chain.header.settings.n_steps.max(target);
    let s = chain.header.settings.clone();
    let nw = s.n_walkers;
    let np = chain.n_params();
    let (mut pos, mut lp) = chain.current();
    let half = nw / 2;
    let halves = [(0..half), (half..nw)];
    chain
        .samples
        .reserve((target.saturating_sub(chain.steps_done())) * nw * np);
    chain.log_post.reserve(target.saturating_sub(chain.steps_done()) * nw);

    let began = Instant::now();
    let first = chain.steps_done();
    let report_every = ((target - first.min(target)) / 10).max(1);
    let mut last_accept = first;
    for step in first..target {
        let mut any = false;
        for (k, active) in halves.iter().enumerate() {
            let other = &halves[1 - k];
            let frozen = &pos;
            let frozen_lp = &lp;
            let updates: Vec<(usize, Option<(Vec<f64>, f64)>)> = active
                .clone()
                .into_par_iter()
                .map(|i| {
                    let mut rng = walker_rng(s.seed, i, step);
                    let j = other.start + rng.random_range(0..other.len());
                    let (prop, log_g) = stretch_move(&frozen[i], &frozen[j], s.a, &mut rng);
                    let lp_new = log_post(&prop);
                    let log_u: f64 = rng.random::<f64>().ln();
                    if lp_new.is_finite() && log_u < log_g + lp_new - frozen_lp[i] {
                        (i, Some((prop, lp_new)))
                    } else {
                        (i, None)
                    }
                })
                .collect();
            for (i, u) in updates {
                if let Some((p, v)) = u {
                    pos[i] = p;
                    lp[i] = v;
                    chain.header.accepted[i] += 1;
                    any = true;
                }
            }
        }
        for w in 0..nw {
            chain.samples.extend_from_slice(&pos[w]);
            chain.log_post.push(lp[w]);
        }
        chain.header.steps_done = step + 1;
        if any {
            last_accept = step + 1;
        } else if step + 1 - last_accept >= s.stall_window {
            return Err(Error::SamplerStalled { window: s.stall_window });
        }
        if (step + 1 - first).is_multiple_of(report_every) {
            let secs = began.elapsed().as_secs_f64();
            info!(
                "step {}/{target}: {:.2} it/s, mean acceptance {:.3}",
                step + 1,
                (step + 1 - first) as f64 / secs.max(1e-9),
                chain.mean_acceptance()
            );
        }
    }
    Ok(())
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Writes the chain: magic, `u64` header length, JSON header, then
/// little-endian `f64` starts, start log-posteriors, samples and
/// log-posteriors.
pub fn write_chain(path: &Path, chain: &Chain) -> Result<()> {
    let header = serde_json::to_vec(&chain.header)?;
    let mut out = Vec::with_capacity(header.len() + 8 * (chain.samples.len() + chain.log_post.len()) + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for s in &chain.start {
        put_f64s(&mut out, s);
    }
    put_f64s(&mut out, &chain.start_lp);
    put_f64s(&mut out, &chain.samples);
    put_f64s(&mut out, &chain.log_post);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_chain(path: &Path) -> Result<Chain> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |why: &str| Error::format(path, why.to_string());
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(bad("not a chain file"));
    }
    let mut at = MAGIC.len();
    let hlen = u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes")) as usize;
    at += 8;
    let header: ChainHeader = serde_json::from_slice(bytes.get(at..at + hlen).ok_or_else(|| bad("truncated header"))?)?;
    at += hlen;
    let nw = header.settings.n_walkers;
    let np = header.n_params;
    let steps = header.steps_done;
    let expected = nw * np + nw + steps * nw * np + steps * nw;
    let body = &bytes[at..];
    if body.len() != 8 * expected {
        return Err(bad(&format!(
            "expected {} data bytes, found {}",
            8 * expected,
            body.len()
        )));
    }
    if header.accepted.len() != nw {
        return Err(bad("acceptance counts do not match walker count"));
    }
    let vals: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let (start_flat, rest) = vals.split_at(nw * np);
    let (start_lp, rest) = rest.split_at(nw);
    let (samples, log_post) = rest.split_at(steps * nw * np);
    Ok(Chain {
        header,
        samples: samples.to_vec(),
        log_post: log_post.to_vec(),
        start: start_flat.chunks(np).map(<[f64]>::to_vec).collect(),
        start_lp: start_lp.to_vec(),
    })
}

/// CSV of retained samples mapped through `map`, one row per (step, walker).
pub fn write_chain_csv<M>(path: &Path, chain: &Chain, names: &[String], map: M) -> Result<()>
where
    M: Fn(&[f64]) -> Vec<f64>,
{
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["step".to_string(), "walker".to_string()];
    header.extend(names.iter().cloned());
    header.push("log_post".into());
    w.write_record(&header)?;
    for step in chain.retained_steps() {
        for walker in 0..chain.n_walkers() {
            let mut rec = vec![step.to_string(), walker.to_string()];
            rec.extend(map(chain.sample(step, walker)).iter().map(|v| format!("{v:e}")));
            rec.push(format!("{:e}", chain.log_post(step, walker)));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
