use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use gbmcal_core::analysis::{
    corner_export, fisher_wave_speed, predictive_band, summarize_chain, write_corner, PredictiveBand,
};
use gbmcal_core::calibration::{packed_to_natural, CalibrationMode, Posterior, PosteriorSpec};
use gbmcal_core::data::{read_constants, read_profile, write_profile, ExperimentalDataset};
use gbmcal_core::design::{
    generate_synthetic, read_synthetic, select_experimental_points, write_synthetic, SyntheticDataset,
};
use gbmcal_core::model::{solve_forward, CalibrationParameters, CellProfile, FixedConstants, PdeModel, SpatialGrid};
use gbmcal_core::sampler::{read_chain, write_chain, write_chain_csv, Chain};
use gbmcal_core::workflow::{analyze, calibrate, natural_names, to_natural, AnalysisInputs};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn constants(cfg: &RunConfig) -> Result<FixedConstants> {
    Ok(match &cfg.constants {
        Some(p) => read_constants(p)?,
        None => FixedConstants::default(),
    })
}

fn initial_profiles(cfg: &RunConfig, c: &FixedConstants) -> Result<(CellProfile, Option<CellProfile>)> {
    let u0 = read_profile(cfg.require(&cfg.initial, "initial")?, c.c_sat)?;
    let v0 = cfg
        .initial_dead
        .as_deref()
        .map(|p| read_profile(p, c.c_sat))
        .transpose()?;
    Ok((u0, v0))
}

fn model(cfg: &RunConfig, c: &FixedConstants) -> Result<PdeModel> {
    let (u0, v0) = initial_profiles(cfg, c)?;
    Ok(PdeModel::new(
        *c,
        cfg.n_nodes.unwrap_or(100),
        &u0,
        v0.as_ref(),
        cfg.solver(),
    )?)
}

fn dataset(cfg: &RunConfig, c: &FixedConstants) -> Result<ExperimentalDataset> {
    let p = read_profile(cfg.require(&cfg.data, "data")?, c.c_sat)?;
    Ok(ExperimentalDataset::from_profile(&p, c)?)
}

fn synthetic(cfg: &RunConfig, mode: CalibrationMode) -> Result<Option<SyntheticDataset>> {
    if !mode.uses_surrogate() {
        return Ok(None);
    }
    let s = read_synthetic(cfg.require(&cfg.synthetic, "synthetic")?)?;
    if s.reference != CalibrationParameters::REFERENCE {
        bail!("synthetic dataset was built around different reference parameters");
    }
    Ok(Some(s))
}

fn query_points(cfg: &RunConfig) -> Vec<f64> {
    let n = cfg.query_points.unwrap_or(101).max(2);
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg.out_dir();
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn chain_path(cfg: &RunConfig) -> &Path {
    cfg.chain.as_deref().expect("resolved config sets the chain path")
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let c = constants(cfg)?;
    let (u0, v0) = initial_profiles(cfg, &c)?;
    let theta = CalibrationParameters::from_array(cfg.theta.unwrap_or(CalibrationParameters::REFERENCE.to_array()));
    theta.validate()?;
    let grid = SpatialGrid::uniform(cfg.n_nodes.unwrap_or(100), c.length)?;
    let sol = solve_forward(&theta, &c, &grid, &u0, v0.as_ref(), &cfg.solver(), true)?;
    let dir = out_dir(cfg)?;

    let fin = CellProfile::new(grid.x().to_vec(), sol.final_state.u.clone())?;
    write_profile(&dir.join("final.csv"), &fin, false, c.c_sat)?;
    let x = grid.x();
    let rows = sol
        .trajectory
        .iter()
        .flat_map(|s| (0..x.len()).map(move |i| vec![s.t, x[i], s.u[i], s.v[i], s.w[i]]));
    write_table(&dir.join("trajectory.csv"), &["t", "x", "u", "v", "w"], rows)?;

    if let Some(noise) = cfg.noise {
        let n = cfg.data_points.unwrap_or(30).max(2);
        let x: Vec<f64> = (0..n).map(|i| c.length * i as f64 / (n - 1) as f64).collect();
        let clean = fin.interpolate(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.unwrap_or(0));
        let dist = Normal::new(0.0, noise * c.c_sat)?;
        let u = clean.iter().map(|u| u + dist.sample(&mut rng)).collect();
        write_profile(&dir.join("data.csv"), &CellProfile::new(x, u)?, true, c.c_sat)?;
    }
    write_json(
        &dir.join("simulation.json"),
        &json!({
            "theta": theta,
            "snapshots": sol.trajectory.len(),
            "balance": sol.balance,
            "balance_relative_defect": sol.balance.relative_defect(),
            "integrator": sol.stats,
            "config": cfg,
        }),
    )
}

pub fn design(cfg: &RunConfig) -> Result<()> {
    let c = constants(cfg)?;
    let m = model(cfg, &c)?;
    let data = dataset(cfg, &c)?;
    let seed = cfg.seed.unwrap_or(0);
    let idx = select_experimental_points(&data.x, cfg.extra_points.unwrap_or(28), seed)?;
    let chosen = data.subset(&idx);
    let dir = out_dir(cfg)?;
    write_profile(&dir.join("experimental.csv"), &chosen.to_profile(&c), true, c.c_sat)?;
    let synth = generate_synthetic(
        cfg.pool.unwrap_or(500),
        cfg.keep.unwrap_or(200),
        &cfg.design_box()?,
        &chosen.x,
        seed,
        &m,
        &CalibrationParameters::REFERENCE,
    )?;
    write_synthetic(&dir.join("synthetic.csv"), &synth)?;
    info!("{} measurement points, {} synthetic records", chosen.len(), synth.len());
    write_json(
        &dir.join("design.json"),
        &json!({ "selected_indices": idx, "n_points": chosen.len(), "n_records": synth.len(), "config": cfg }),
    )
}

pub fn calibrate_cmd(cfg: &RunConfig) -> Result<()> {
    let mode = cfg.mode()?;
    let c = constants(cfg)?;
    let data = dataset(cfg, &c)?;
    let synth = synthetic(cfg, mode)?;
    let m = if mode.uses_model() { Some(model(cfg, &c)?) } else { None };
    let settings = cfg.sampler()?;
    let chain_file = chain_path(cfg);
    let resume = if cfg.resume == Some(true) && chain_file.exists() {
        let chain = read_chain(chain_file)?;
        info!("resuming {} from step {}", chain_file.display(), chain.steps_done());
        Some(chain)
    } else {
        None
    };
    let spec = PosteriorSpec {
        mode,
        data: &data,
        synth: synth.as_ref(),
        model: m.as_ref().map(|m| m as _),
        theta_box: cfg.design_box()?,
        reference: CalibrationParameters::REFERENCE,
        priors: None,
    };
    let outcome = calibrate(spec, settings.clone(), resume)?;
    let dir = out_dir(cfg)?;
    write_chain(chain_file, &outcome.chain)?;
    let reference = CalibrationParameters::REFERENCE;
    write_chain_csv(&dir.join("samples.csv"), &outcome.chain, &natural_names(mode), |p| {
        to_natural(p, &reference)
    })?;
    let s = &outcome.summary;
    write_json(
        &dir.join("results.json"),
        &json!({
            "mode": mode,
            "summary": s,
            "fisher_speed_map": fisher_wave_speed(c.d_n, s.map[0]),
            "priors": outcome.priors,
            "standardization": outcome.standardization,
            "settings": outcome.chain.header.settings,
            "steps_done": outcome.chain.steps_done(),
            "acceptance": outcome.chain.acceptance(),
            "mean_acceptance": outcome.chain.mean_acceptance(),
            "config": cfg,
        }),
    )?;
    // wall-clock figures live apart so results.json is reproducible
    write_json(
        &dir.join("throughput.json"),
        &json!({ "mode": mode, "throughput": outcome.throughput }),
    )?;
    for (k, name) in s.names.iter().enumerate() {
        info!(
            "{name:>10}: MAP {:.4e}, 95% [{:.4e}, {:.4e}]",
            s.map[k], s.lower[k], s.upper[k]
        );
    }
    Ok(())
}

fn load_chain(cfg: &RunConfig) -> Result<(Chain, CalibrationMode)> {
    let chain = read_chain(chain_path(cfg))?;
    let recorded: Option<CalibrationMode> = chain.header.mode.as_deref().map(str::parse).transpose()?;
    let mode = match (cfg.mode, recorded) {
        (Some(a), Some(b)) if a != b => bail!("chain {} was produced by mode {b}, not {a}", chain_path(cfg).display()),
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => bail!("chain has no recorded mode; pass --mode"),
    };
    Ok((chain, mode))
}

fn write_band(path: &Path, band: &PredictiveBand, length: f64) -> Result<()> {
    let rows = (0..band.x.len()).map(|i| {
        vec![
            band.x[i] * length,
            band.mean[i],
            band.sd[i],
            band.lower[i],
            band.upper[i],
        ]
    });
    write_table(path, &["x", "mean", "sd", "lower", "upper"], rows)
}

pub fn analyze_cmd(cfg: &RunConfig) -> Result<()> {
    let (chain, mode) = load_chain(cfg)?;
    let c = constants(cfg)?;
    let data = dataset(cfg, &c)?;
    let synth = synthetic(cfg, mode)?;
    let m = model(cfg, &c)?;
    let reference = CalibrationParameters::REFERENCE;
    let x_query = query_points(cfg);
    let report = analyze(
        &chain,
        AnalysisInputs {
            mode,
            data: &data,
            synth: synth.as_ref(),
            model: &m,
            theta_box: cfg.design_box()?,
            reference,
            priors: None,
            x_query: x_query.clone(),
            n_draws: cfg.draws.unwrap_or(100),
            seed: cfg.seed.unwrap_or(0),
        },
    )?;
    let names = natural_names(mode);
    let summary = summarize_chain(&chain, &names, |p| to_natural(p, &reference))?;
    let dir = out_dir(cfg)?;
    let l = c.length;

    let eta_map: Vec<f64> = data.z.iter().zip(&report.deviation).map(|(z, d)| z - d).collect();
    write_table(
        &dir.join("deviation.csv"),
        &["x", "measured", "predicted_map", "deviation"],
        (0..data.len()).map(|i| vec![data.x[i] * l, data.z[i], eta_map[i], report.deviation[i]]),
    )?;
    write_table(
        &dir.join("prediction.csv"),
        &["x", "predicted_map"],
        x_query.iter().zip(&report.prediction_map).map(|(x, u)| vec![x * l, *u]),
    )?;
    if let Some(band) = &report.band {
        write_band(&dir.join("band.csv"), band, l)?;
    }
    for (name, curve) in [
        ("discrepancy.csv", &report.discrepancy),
        ("surrogate.csv", &report.surrogate),
    ] {
        if let Some(curve) = curve {
            write_table(
                &dir.join(name),
                &["x", "mean", "sd"],
                (0..curve.x.len()).map(|i| vec![curve.x[i] * l, curve.mean[i], curve.sd[i]]),
            )?;
        }
    }
    let (xs, _) = chain.retained();
    let natural: Vec<Vec<f64>> = xs.iter().map(|p| to_natural(p, &reference)).collect();
    write_corner(dir, &corner_export(&natural, &summary)?)?;

    let e = &report.errors;
    info!("e_MAP {:.4}, e_mean {:.4}", e.e_map, e.e_mean);
    if let Some(v) = e.e_surrogate {
        info!("e_surrogate {v:.4}");
    }
    if let Some(v) = e.e_corrected {
        info!("e_corrected {v:.4}");
    }
    write_json(
        &dir.join("analysis.json"),
        &json!({
            "mode": mode,
            "errors": report.errors,
            "theta_map": report.theta_map,
            "theta_mean": report.theta_mean,
            "fisher_speed_map": fisher_wave_speed(c.d_n, report.theta_map.tau_n),
            "fisher_speed_mean": fisher_wave_speed(c.d_n, report.theta_mean.tau_n),
            "summary": summary,
            "config": cfg,
        }),
    )
}

pub fn predict(cfg: &RunConfig) -> Result<()> {
    let (chain, mode) = load_chain(cfg)?;
    if !mode.uses_model() {
        bail!("the predictive band samples the forward model, which {mode} does not use; run analyze for the surrogate curve");
    }
    let c = constants(cfg)?;
    let data = dataset(cfg, &c)?;
    let m = model(cfg, &c)?;
    let reference = CalibrationParameters::REFERENCE;
    let post = Posterior::new(PosteriorSpec {
        mode,
        data: &data,
        synth: None,
        model: Some(&m),
        theta_box: cfg.design_box()?,
        reference,
        priors: None,
    })?;
    let (xs, _) = chain.retained();
    let samples: Vec<(Vec<f64>, f64)> = xs
        .iter()
        .map(|p| {
            let n = packed_to_natural(p);
            (n[..4].to_vec(), n[n.len() - 1])
        })
        .collect();
    let n_draws = cfg.draws.unwrap_or(100).min(samples.len());
    let band = predictive_band(
        &samples,
        &reference,
        &m,
        &query_points(cfg),
        post.standardization().sd,
        n_draws,
        cfg.seed.unwrap_or(0),
    )?;
    write_band(&out_dir(cfg)?.join("band.csv"), &band, c.length)
}
