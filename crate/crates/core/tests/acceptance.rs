//! Exit criteria. Each test prints one `criterion N ... PASS|FAIL|SKIP` line
//! and fails if its criterion does.
//!
//! Criterion 6 needs the measured culture profiles: point
//! `GBMCAL_EXPERIMENT_DIR` at a directory holding `initial.csv` and
//! `final.csv` (profile format, header `x,u`).

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use gbmcal_core::analysis::{profile_error, summarize};
use gbmcal_core::calibration::{loglik_bcd, loglik_bce, loglik_bced, loglik_bi, CalibrationMode, PosteriorSpec};
use gbmcal_core::data::{read_profile, ExperimentalDataset};
use gbmcal_core::design::{generate_synthetic, select_experimental_points, DesignBox, SyntheticDataset};
use gbmcal_core::gp::{
    build_cov, chol_jitter, gp_log_marginal, gp_posterior, kernel_se, DiscrepancyHypers, Nugget, SEKernel,
    SurrogateHypers,
};
use gbmcal_core::model::{
    growth_saturation, migration_saturation, pi_consumption, pi_death, pi_go, pi_grow, solve_forward,
    CalibrationParameters, CellProfile, FixedConstants, ForwardModel, PdeModel, SolverOptions, SpatialGrid,
};
use gbmcal_core::sampler::{run_ensemble, sample_stretch, stretch_cdf, SamplerSettings};
use gbmcal_core::workflow::{analyze, calibrate, AnalysisInputs, Preset, SyntheticTruth};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, what: &str, checks: &[(String, bool)]) {
    let ok = checks.iter().all(|(_, b)| *b);
    let mut text = format!("criterion {n} [{}] {what}\n", if ok { "PASS" } else { "FAIL" });
    for (msg, b) in checks {
        text.push_str(&format!("    {} {msg}\n", if *b { "ok  " } else { "FAIL" }));
    }
    // straight to the stream so the verdict shows without --nocapture
    std::io::stderr().write_all(text.as_bytes()).ok();
    assert!(ok, "criterion {n} failed");
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_1_analytic_factors() {
    let began = Instant::now();
    let tol = 1e-14;
    let mut checks = Vec::new();
    let h2 = 1.4;
    let km = 2.5;
    checks.push((
        format!("death factor at h2 = {}", pi_death(h2, h2, 0.1)),
        (pi_death(h2, h2, 0.1) - 0.5).abs() <= tol,
    ));
    checks.push((
        format!("consumption factor at k_m = {}", pi_consumption(km, km)),
        (pi_consumption(km, km) - 0.5).abs() <= tol,
    ));
    let b = 0.14;
    let h1 = 1.0 / b;
    let mut worst: f64 = 0.0;
    for k in 0..=1000 {
        let w = h1 * k as f64 / 1000.0;
        worst = worst.max((pi_grow(w, b) + pi_go(w, b) - 1.0).abs());
    }
    checks.push((format!("grow + go - 1 on [0, h1]: max {worst:e}"), worst <= tol));
    let c = 1.0e6;
    let mut worst_f: f64 = 0.0;
    for (u, v) in [
        (0.0, 0.0),
        (0.5e6, 0.5e6),
        (0.25e6, 0.25e6),
        (0.1e6, 0.3e6),
        (0.9e6, 0.0),
    ] {
        worst_f = worst_f.max((growth_saturation(u, v, c) - (1.0 - (u + v) / c)).abs());
        worst_f = worst_f.max((migration_saturation(u, c) - (1.0 - u / c)).abs());
    }
    checks.push((
        format!("saturation factors vs closed form: max {worst_f:e}"),
        worst_f <= tol,
    ));
    checks.push((
        "empty / full / half saturation = 1 / 0 / 0.5".into(),
        growth_saturation(0.0, 0.0, c) == 1.0
            && growth_saturation(c / 2.0, c / 2.0, c) == 0.0
            && growth_saturation(c / 4.0, c / 4.0, c) == 0.5,
    ));
    let secs = began.elapsed().as_secs_f64();
    checks.push((format!("runtime {secs:.3} s < 1 s"), secs < 1.0));
    report(1, "analytic factor identities to 1e-14", &checks);
}

// ---------------------------------------------------------------- 2

fn seeding(c: &FixedConstants, base: f64, amp: f64) -> CellProfile {
    let x: Vec<f64> = (0..=400).map(|i| c.length * i as f64 / 400.0).collect();
    let u = x
        .iter()
        .map(|&x| c.c_sat * (base + amp * (std::f64::consts::PI * x / c.length).sin()))
        .collect();
    CellProfile::new(x, u).unwrap()
}

/// Order `p` with `(h1^p − h2^p)/(h2^p − h3^p) = ratio`.
fn observed_order(h: [f64; 3], ratio: f64) -> f64 {
    let f = |p: f64| (h[0].powf(p) - h[1].powf(p)) / (h[1].powf(p) - h[2].powf(p)) - ratio;
    let (mut lo, mut hi) = (0.1, 6.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn criterion_2_pde_properties() {
    let began = Instant::now();
    let c = FixedConstants::default();
    let opts = SolverOptions::default();
    let mut checks = Vec::new();

    // hypoxic core with necrosis: exercises every nonlinearity
    let theta = CalibrationParameters::REFERENCE.scaled_by(&[0.8, 1.5, 1.3, 0.8]);
    let grid = SpatialGrid::uniform(100, c.length).unwrap();
    let sol = solve_forward(&theta, &c, &grid, &seeding(&c, 0.4, 0.1), None, &opts, true).unwrap();
    let tr = &sol.trajectory;
    checks.push((format!("{} output snapshots", tr.len()), tr.len() == 100));
    let tol_u = 10.0 * opts.atol * c.c_sat;
    let mut worst_v: f64 = 0.0;
    for k in 1..tr.len() {
        for i in 0..grid.n_nodes() {
            worst_v = worst_v.max(tr[k - 1].v[i] - tr[k].v[i]);
        }
    }
    checks.push((
        format!("dead cells never decrease (max drop {worst_v:e} cells/cm)"),
        worst_v <= tol_u,
    ));
    let w_max = tr
        .iter()
        .flat_map(|s| s.w.iter())
        .fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    checks.push((
        format!("oxygen max {w_max} <= w0 = {}", c.w0),
        w_max <= c.w0 * (1.0 + 10.0 * opts.atol),
    ));
    let min_uv = tr
        .iter()
        .flat_map(|s| s.u.iter().chain(&s.v))
        .fold(f64::INFINITY, |a, b| a.min(*b));
    let min_w = tr.iter().flat_map(|s| s.w.iter()).fold(f64::INFINITY, |a, b| a.min(*b));
    checks.push((
        format!("nonnegative fields (min density {min_uv:e}, min oxygen {min_w:e})"),
        min_uv >= -tol_u && min_w >= -10.0 * opts.atol * c.w0,
    ));
    let defect = sol.balance.relative_defect();
    checks.push((
        format!("cell balance relative defect {defect:e} <= 1e-5"),
        defect <= 1e-5,
    ));

    // smooth regime: b·w0 < 1 keeps the go-or-grow split linear and the
    // saturation clamps inactive
    let smooth = CalibrationParameters::new(7.5e5, 7.5e-9, 0.1, 1.0e6).unwrap();
    let fine = SolverOptions {
        rtol: 1e-10,
        atol: 1e-13,
        ..opts
    };
    let u0 = seeding(&c, 0.2, 0.1);
    let sizes = [50usize, 100, 200];
    let finals: Vec<(Vec<f64>, Vec<f64>)> = sizes
        .iter()
        .map(|&n| {
            let g = SpatialGrid::uniform(n, c.length).unwrap();
            let s = solve_forward(&smooth, &c, &g, &u0, None, &fine, false).unwrap();
            let maxsum = s
                .final_state
                .u
                .iter()
                .zip(&s.final_state.v)
                .map(|(u, v)| (u + v) / c.c_sat)
                .fold(0.0, f64::max);
            assert!(maxsum < 1.0, "saturation reached in the smooth problem");
            (g.x().to_vec(), s.final_state.u.iter().map(|u| u / c.c_sat).collect())
        })
        .collect();
    let probe: Vec<f64> = (0..=20).map(|i| c.length * i as f64 / 20.0).collect();
    let on_probe: Vec<Vec<f64>> = finals
        .iter()
        .map(|(x, u)| gbmcal_core::model::interp_linear(x, u, &probe))
        .collect();
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let d1 = diff(&on_probe[0], &on_probe[1]);
    let d2 = diff(&on_probe[1], &on_probe[2]);
    let h = sizes.map(|n| c.length / (n - 1) as f64);
    let order = observed_order(h, d1 / d2);
    checks.push((
        format!("self-convergence order {order:.3} >= 1.8 (diffs {d1:e}, {d2:e})"),
        order >= 1.8,
    ));

    let secs = began.elapsed().as_secs_f64();
    checks.push((format!("runtime {secs:.1} s < 120 s"), secs < 120.0));
    report(2, "PDE properties", &checks);
}

// ---------------------------------------------------------------- 3

fn dense_logpdf(r: &[f64], k: &DMatrix<f64>) -> f64 {
    let n = r.len() as f64;
    let rv = DVector::from_column_slice(r);
    let inv = k.clone().try_inverse().unwrap();
    -0.5 * (rv.transpose() * inv * &rv)[(0, 0)]
        - 0.5 * k.determinant().ln()
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

fn se(a: f64, b: f64, lambda: f64, beta: f64) -> f64 {
    lambda * (-(a - b) * (a - b) / (2.0 * beta * beta)).exp()
}

struct Toy;

impl ForwardModel for Toy {
    fn eta(&self, theta: &CalibrationParameters, x: &[f64]) -> gbmcal_core::Result<Vec<f64>> {
        let m = theta.multipliers_of(&CalibrationParameters::REFERENCE);
        Ok(x.iter()
            .map(|x| 0.4 * m[0] * (3.0 * x).sin() + 0.1 * m[1] - 0.05 * m[2] * x + 0.02 * m[3])
            .collect())
    }
}

#[test]
fn criterion_3_gp_and_likelihood_oracles() {
    let began = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut checks = Vec::new();
    let tol = 1e-10;

    // covariance assembly
    let pts: Vec<f64> = (0..5).map(|_| rng.random()).collect();
    let k = SEKernel {
        lambda: 1.7,
        beta: 0.35,
    };
    let m = build_cov(
        &pts,
        |a: &f64, b: &f64| kernel_se(&[*a], &[*b], &k),
        Nugget::Scalar(0.01),
    );
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let e = se(pts[i], pts[j], 1.7, 0.35) + if i == j { 0.01 } else { 0.0 };
            worst = worst.max((m[(i, j)] - e).abs());
        }
    }
    checks.push((format!("covariance assembly vs double loop: {worst:e}"), worst <= tol));

    let f = chol_jitter(&m).unwrap();
    let l = f.l();
    let rec = (&l * l.transpose() - &m).abs().max();
    checks.push((format!("L·Lᵀ reconstructs K: {rec:e}"), rec <= 1e-8));

    // evidence, n = 4
    let p4: Vec<f64> = (0..4).map(|_| rng.random()).collect();
    let k4 = build_cov(
        &p4,
        |a: &f64, b: &f64| kernel_se(&[*a], &[*b], &k),
        Nugget::Scalar(0.05),
    );
    let y4: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lm = gp_log_marginal(&DVector::from_vec(y4.clone()), &k4).unwrap();
    let lm_o = dense_logpdf(&y4, &k4);
    checks.push((
        format!("log marginal vs dense: {:e}", (lm - lm_o).abs()),
        (lm - lm_o).abs() <= tol,
    ));

    // conditional, 3 train / 2 test
    let tr = [0.1, 0.45, 0.8];
    let ty = [0.3, -0.2, 0.5];
    let te = [0.3, 0.95];
    let noise = 0.02;
    let (mu, cov) = gp_posterior(&tr, &ty, |a: &f64, b: &f64| kernel_se(&[*a], &[*b], &k), noise, &te).unwrap();
    let kk = DMatrix::from_fn(3, 3, |i, j| {
        se(tr[i], tr[j], 1.7, 0.35) + if i == j { noise } else { 0.0 }
    });
    let ks = DMatrix::from_fn(3, 2, |i, j| se(tr[i], te[j], 1.7, 0.35));
    let kss = DMatrix::from_fn(2, 2, |i, j| se(te[i], te[j], 1.7, 0.35));
    let inv = kk.try_inverse().unwrap();
    let mu_o = ks.transpose() * &inv * DVector::from_column_slice(&ty);
    let cov_o = kss - ks.transpose() * &inv * &ks;
    let e_mu = (&mu - &mu_o).abs().max();
    let e_cov = (&cov - &cov_o).abs().max();
    checks.push((
        format!("posterior mean/cov vs dense: {e_mu:e} / {e_cov:e}"),
        e_mu <= tol && e_cov <= tol,
    ));

    // likelihoods
    let data = ExperimentalDataset::new(vec![0.05, 0.3, 0.55], vec![0.2, 0.45, 0.1]).unwrap();
    let theta = CalibrationParameters::REFERENCE.scaled_by(&[1.3, 0.7, 2.0, 1.1]);
    let sigma = 0.12;
    let eta = Toy.eta(&theta, &data.x).unwrap();
    let r: Vec<f64> = data.z.iter().zip(&eta).map(|(z, e)| z - e).collect();
    let bi_o = dense_logpdf(&r, &DMatrix::from_diagonal_element(3, 3, sigma * sigma));
    let bi = loglik_bi(&theta, sigma, &data, &Toy);
    checks.push((
        format!("BI vs dense: {:e}", (bi - bi_o).abs()),
        (bi - bi_o).abs() <= tol,
    ));

    let dh = DiscrepancyHypers {
        beta_d: 0.2,
        lambda_d: 0.3,
    };
    let kd = DMatrix::from_fn(3, 3, |i, j| {
        se(data.x[i], data.x[j], 0.3, 0.2) + if i == j { sigma * sigma } else { 0.0 }
    });
    let bcd = loglik_bcd(&theta, &dh, sigma, &data, &Toy);
    let bcd_o = dense_logpdf(&r, &kd);
    checks.push((
        format!("BCD vs dense: {:e}", (bcd - bcd_o).abs()),
        (bcd - bcd_o).abs() <= tol,
    ));

    let synth = SyntheticDataset {
        x: vec![0.0, 0.4, 0.9],
        theta: vec![
            vec![1.0, 1.0, 1.0, 1.0],
            vec![2.0, 0.5, 1.5, 3.0],
            vec![0.3, 4.0, 2.2, 0.9],
        ],
        y: vec![0.1, 0.6, -0.2],
        seed: 0,
        design_box: DesignBox::default(),
        reference: CalibrationParameters::REFERENCE,
        pool: 3,
    };
    let sh = SurrogateHypers {
        beta_x: 0.5,
        beta_theta: 1.8,
        lambda_x: 0.7,
    };
    let mult = theta.multipliers_of(&CalibrationParameters::REFERENCE);
    let rows: Vec<(f64, Vec<f64>)> = data
        .x
        .iter()
        .map(|x| (*x, mult.to_vec()))
        .chain(synth.x.iter().zip(&synth.theta).map(|(x, t)| (*x, t.clone())))
        .collect();
    let joint = |with_d: bool| {
        DMatrix::from_fn(6, 6, |i, j| {
            let dt: f64 = rows[i].1.iter().zip(&rows[j].1).map(|(a, b)| (a - b).powi(2)).sum();
            let mut v = se(rows[i].0, rows[j].0, 0.7, 0.5) * (-dt / (2.0 * 1.8 * 1.8)).exp();
            if i < 3 && j < 3 {
                if with_d {
                    v += se(rows[i].0, rows[j].0, 0.3, 0.2);
                }
                if i == j {
                    v += sigma * sigma;
                }
            } else if i == j {
                v += 1e-8 * 0.7;
            }
            v
        })
    };
    let stacked: Vec<f64> = data.z.iter().chain(&synth.y).copied().collect();
    let bce = loglik_bce(&theta, &sh, sigma, &data, &synth);
    let bce_o = dense_logpdf(&stacked, &joint(false));
    checks.push((
        format!("BCE vs dense (3 + 3): {:e}", (bce - bce_o).abs()),
        (bce - bce_o).abs() <= tol,
    ));
    let bced = loglik_bced(&theta, &sh, &dh, sigma, &data, &synth);
    let bced_o = dense_logpdf(&stacked, &joint(true));
    checks.push((
        format!("BCED vs dense (3 + 3): {:e}", (bced - bced_o).abs()),
        (bced - bced_o).abs() <= tol,
    ));

    // nesting, λ_d = 1e-12 × data variance
    let var = {
        let mean = data.z.iter().sum::<f64>() / 3.0;
        data.z.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / 2.0
    };
    let tiny = DiscrepancyHypers {
        beta_d: 0.2,
        lambda_d: 1e-12 * var,
    };
    let n1 = (loglik_bcd(&theta, &tiny, sigma, &data, &Toy) - bi).abs();
    let n2 = (loglik_bced(&theta, &sh, &tiny, sigma, &data, &synth) - bce).abs();
    checks.push((
        format!("BCD → BI: {n1:e}, BCED → BCE: {n2:e} (<= 1e-6)"),
        n1 <= 1e-6 && n2 <= 1e-6,
    ));

    let secs = began.elapsed().as_secs_f64();
    checks.push((format!("runtime {secs:.2} s < 30 s"), secs < 30.0));
    report(3, "GP and likelihood oracles", &checks);
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_4_sampler() {
    let began = Instant::now();
    let mut checks = Vec::new();
    let target = |x: &[f64]| -0.5 * (x[0] * x[0] + x[1] * x[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let init: Vec<Vec<f64>> = (0..32)
        .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let settings = SamplerSettings {
        n_walkers: 32,
        n_steps: 5000,
        seed: 44,
        ..Default::default()
    };
    let chain = run_ensemble(&target, init, settings, vec!["a".into(), "b".into()], None).unwrap();
    let steps = chain.retained_steps();
    let n = (steps.len() * 32) as f64;
    let (xs, _) = chain.retained();
    let mean = [0, 1].map(|k| xs.iter().map(|s| s[k]).sum::<f64>() / n);
    let mut cov = [[0.0; 2]; 2];
    for s in &xs {
        for i in 0..2 {
            for j in 0..2 {
                cov[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]) / (n - 1.0);
            }
        }
    }
    // Monte Carlo standard error by batch means of the ensemble-average series
    let batches = 40;
    let per = steps.len() / batches;
    for k in 0..2 {
        let series: Vec<f64> = steps
            .iter()
            .map(|&s| (0..32).map(|w| chain.sample(s, w)[k]).sum::<f64>() / 32.0)
            .collect();
        let bm: Vec<f64> = (0..batches)
            .map(|b| series[b * per..(b + 1) * per].iter().sum::<f64>() / per as f64)
            .collect();
        let bmean = bm.iter().sum::<f64>() / batches as f64;
        let se = (bm.iter().map(|v| (v - bmean).powi(2)).sum::<f64>() / (batches - 1) as f64 / batches as f64).sqrt();
        checks.push((
            format!("mean[{k}] = {:.4}, 3 s.e. = {:.4}", mean[k], 3.0 * se),
            mean[k].abs() <= 3.0 * se,
        ));
    }
    let cov_err = (cov[0][0] - 1.0)
        .abs()
        .max((cov[1][1] - 1.0).abs())
        .max(cov[0][1].abs());
    checks.push((
        format!("covariance {cov:.3?}, max deviation from identity {cov_err:.3} <= 0.1"),
        cov_err <= 0.1,
    ));

    let mut g: Vec<f64> = {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        (0..100_000).map(|_| sample_stretch(2.0, &mut r)).collect()
    };
    g.sort_by(f64::total_cmp);
    let m = g.len() as f64;
    let ks = g
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let c = stretch_cdf(*v, 2.0);
            (c - i as f64 / m).abs().max(((i + 1) as f64 / m - c).abs())
        })
        .fold(0.0, f64::max);
    checks.push((format!("stretch factor KS distance {ks:.5} < 0.01"), ks < 0.01));
    let secs = began.elapsed().as_secs_f64();
    checks.push((format!("runtime {secs:.1} s < 60 s"), secs < 60.0));
    report(4, "ensemble sampler", &checks);
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_5_self_consistency() {
    let began = Instant::now();
    let consts = FixedConstants::default();
    let truth = SyntheticTruth::default();
    let preset = Preset::Desk;
    let (model, data) = truth.generate(&consts, preset.n_nodes()).unwrap();
    let (walkers, steps) = preset.run_length(CalibrationMode::Bi);
    let settings = SamplerSettings {
        n_walkers: walkers,
        n_steps: steps,
        seed: 7,
        ..Default::default()
    };
    let spec = PosteriorSpec {
        mode: CalibrationMode::Bi,
        data: &data,
        synth: None,
        model: Some(&model),
        theta_box: DesignBox::default(),
        reference: CalibrationParameters::REFERENCE,
        priors: None,
    };
    let out = calibrate(spec, settings, None).unwrap();
    let s = &out.summary;
    let star = truth.theta().to_array();
    let mut checks = Vec::new();
    for k in 0..4 {
        checks.push((
            format!(
                "{} = {:.4e} in [{:.4e}, {:.4e}] (MAP {:.4e})",
                s.names[k], star[k], s.lower[k], s.upper[k], s.map[k]
            ),
            s.covers(k, star[k]),
        ));
    }
    checks.push((
        format!("sigma = {} in [{:.4}, {:.4}]", truth.sigma, s.lower[4], s.upper[4]),
        s.covers(4, truth.sigma),
    ));
    let report_ = analyze(
        &out.chain,
        AnalysisInputs {
            mode: CalibrationMode::Bi,
            data: &data,
            synth: None,
            model: &model,
            theta_box: DesignBox::default(),
            reference: CalibrationParameters::REFERENCE,
            priors: None,
            x_query: data.x.clone(),
            n_draws: 0,
            seed: 0,
        },
    )
    .unwrap();
    let e = report_.errors.e_map;
    checks.push((
        format!("e_MAP = {e:.4} <= 2 sigma = {}", 2.0 * truth.sigma),
        e <= 2.0 * truth.sigma,
    ));
    checks.push((
        format!(
            "{} x {} samples, acceptance {:.3}, {:.0} s",
            walkers,
            steps,
            out.chain.mean_acceptance(),
            began.elapsed().as_secs_f64()
        ),
        true,
    ));
    report(5, "BI recovers a known truth at desk scale", &checks);
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_6_measured_culture() {
    let Some(dir) = std::env::var_os("GBMCAL_EXPERIMENT_DIR").map(PathBuf::from) else {
        std::io::stderr()
            .write_all(b"criterion 6 [SKIP] measured profiles not available (set GBMCAL_EXPERIMENT_DIR)\n")
            .ok();
        return;
    };
    let consts = match std::fs::metadata(dir.join("constants.toml")) {
        Ok(_) => gbmcal_core::data::read_constants(&dir.join("constants.toml")).unwrap(),
        Err(_) => FixedConstants::default(),
    };
    let u0 = read_profile(&dir.join("initial.csv"), consts.c_sat).unwrap();
    let measured = read_profile(&dir.join("final.csv"), consts.c_sat).unwrap();
    let full = ExperimentalDataset::from_profile(&measured, &consts).unwrap();
    let idx = select_experimental_points(&full.x, 28, 0).unwrap();
    let data = full.subset(&idx);
    let n_nodes = Preset::Paper.n_nodes();
    let model = PdeModel::new(consts, n_nodes, &u0, None, SolverOptions::default()).unwrap();
    let mut checks = Vec::new();

    let grid = SpatialGrid::uniform(n_nodes, consts.length).unwrap();
    let pred = solve_forward(
        &CalibrationParameters::REFERENCE,
        &consts,
        &grid,
        &u0,
        None,
        &SolverOptions::default(),
        false,
    )
    .unwrap();
    let pred = CellProfile::new(grid.x().to_vec(), pred.final_state.u).unwrap();
    let e_ref = profile_error(&pred, &measured, &consts).unwrap();
    checks.push((
        format!("(a) reference e = {e_ref:.4}, expected 0.0768 ± 0.01"),
        (e_ref - 0.0768).abs() <= 0.01,
    ));

    let within2 = |a: f64, b: f64| a / b <= 2.0 && b / a <= 2.0;
    let run = |mode: CalibrationMode, synth: Option<&SyntheticDataset>| {
        let (walkers, steps) = Preset::Desk.run_length(mode);
        let settings = SamplerSettings {
            n_walkers: walkers,
            n_steps: steps,
            seed: 6,
            ..Default::default()
        };
        let spec = PosteriorSpec {
            mode,
            data: &data,
            synth,
            model: Some(&model),
            theta_box: DesignBox::default(),
            reference: CalibrationParameters::REFERENCE,
            priors: None,
        };
        let out = calibrate(spec, settings, None).unwrap();
        let rep = analyze(
            &out.chain,
            AnalysisInputs {
                mode,
                data: &data,
                synth,
                model: &model,
                theta_box: DesignBox::default(),
                reference: CalibrationParameters::REFERENCE,
                priors: None,
                x_query: data.x.clone(),
                n_draws: 0,
                seed: 0,
            },
        )
        .unwrap();
        (out, rep)
    };

    let (_, bi) = run(CalibrationMode::Bi, None);
    let pub_bi = CalibrationParameters::PUBLISHED_BI.to_array();
    let got = bi.theta_map.to_array();
    checks.push((
        format!("(b) BI e_MAP = {:.4} in [0.02, 0.06], MAP {got:?}", bi.errors.e_map),
        (0.02..=0.06).contains(&bi.errors.e_map) && (0..4).all(|k| within2(got[k], pub_bi[k])),
    ));

    let (_, bcd) = run(CalibrationMode::Bcd, None);
    let pub_bcd = CalibrationParameters::PUBLISHED_BCD.to_array();
    let got = bcd.theta_map.to_array();
    let ec = bcd.errors.e_corrected.unwrap();
    checks.push((
        format!("(c) BCD corrected e = {ec:.4} <= 0.02, MAP {got:?}"),
        ec <= 0.02 && (0..4).all(|k| within2(got[k], pub_bcd[k])),
    ));

    let synth = generate_synthetic(
        500,
        200,
        &DesignBox::default(),
        &data.x,
        6,
        &model,
        &CalibrationParameters::REFERENCE,
    )
    .unwrap();
    let (_, bce) = run(CalibrationMode::Bce, Some(&synth));
    let es = bce.errors.e_surrogate.unwrap();
    checks.push((format!("(d) BCE surrogate e = {es:.4} <= 0.02"), es <= 0.02));
    report(6, "measured culture profiles", &checks);
}

// ---------------------------------------------------------------- 7

fn throughput(
    mode: CalibrationMode,
    data: &ExperimentalDataset,
    synth: &SyntheticDataset,
    model: &PdeModel,
    steps: usize,
) -> f64 {
    let (walkers, _) = mode.paper_run_length();
    let settings = SamplerSettings {
        n_walkers: walkers,
        n_steps: steps,
        seed: 70,
        burn_in: 0.0,
        ..Default::default()
    };
    let spec = PosteriorSpec {
        mode,
        data,
        synth: Some(synth),
        model: Some(model),
        theta_box: DesignBox::default(),
        reference: CalibrationParameters::REFERENCE,
        priors: None,
    };
    calibrate(spec, settings, None).unwrap().throughput.evals_per_second
}

#[test]
fn criterion_7_surrogate_speedup() {
    let consts = FixedConstants::default();
    let truth = SyntheticTruth::default();
    let n_nodes = Preset::Paper.n_nodes();
    let (model, data) = truth.generate(&consts, n_nodes).unwrap();
    // surrogate cost depends on the record count, not on which runs fed it
    let synth = generate_synthetic(
        40,
        200,
        &DesignBox::default(),
        &data.x,
        7,
        &model,
        &CalibrationParameters::REFERENCE,
    )
    .unwrap();
    let bi = throughput(CalibrationMode::Bi, &data, &synth, &model, 40);
    let bce = throughput(CalibrationMode::Bce, &data, &synth, &model, 300);
    let bcd = throughput(CalibrationMode::Bcd, &data, &synth, &model, 40);
    let bced = throughput(CalibrationMode::Bced, &data, &synth, &model, 150);
    let r1 = bce / bi;
    let r2 = bced / bcd;
    report(
        7,
        "surrogate speedup at 100 nodes",
        &[
            (
                format!("BCE/BI = {bce:.1}/{bi:.1} evals/s = {r1:.1}x >= 50x"),
                r1 >= 50.0,
            ),
            (
                format!("BCED/BCD = {bced:.1}/{bcd:.1} evals/s = {r2:.1}x >= 30x"),
                r2 >= 30.0,
            ),
        ],
    );
}

#[test]
fn summaries_are_quantile_ordered() {
    // guards the interval extraction used by criterion 5
    let s: Vec<Vec<f64>> = (0..101).map(|i| vec![i as f64]).collect();
    let lp = vec![0.0; 101];
    let sum = summarize(&s, &lp, &["p".into()]).unwrap();
    assert_eq!(sum.lower[0], 2.5);
    assert_eq!(sum.upper[0], 97.5);
}
