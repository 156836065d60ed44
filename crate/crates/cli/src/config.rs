//! Run configuration: a flat TOML file whose keys may be overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gbmcal_core::calibration::CalibrationMode;
use gbmcal_core::design::DesignBox;
use gbmcal_core::model::{CalibrationParameters, SolverOptions};
use gbmcal_core::sampler::SamplerSettings;
use gbmcal_core::workflow::Preset;
use serde::{Deserialize, Serialize};

/// Every key is optional; [`RunConfig::resolved`] fills in defaults.
/// Relative paths are taken relative to the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Fixed constants (TOML); defaults are used when absent.
    pub constants: Option<PathBuf>,
    /// Initial live-cell profile.
    pub initial: Option<PathBuf>,
    /// Initial dead-cell profile; zero when absent.
    pub initial_dead: Option<PathBuf>,
    /// Measured live-cell profile at the final time.
    pub data: Option<PathBuf>,
    /// Synthetic dataset written by `design`.
    pub synthetic: Option<PathBuf>,
    /// Chain file; defaults to `chain.bin` in the output directory.
    pub chain: Option<PathBuf>,
    pub out: Option<PathBuf>,

    pub mode: Option<CalibrationMode>,
    pub preset: Option<Preset>,
    pub n_nodes: Option<usize>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    /// Physical (τ_n, χ, b, j) for `simulate`.
    pub theta: Option<[f64; 4]>,

    pub walkers: Option<usize>,
    pub steps: Option<usize>,
    pub burn_in: Option<f64>,
    pub seed: Option<u64>,
    /// Stretch-move scale.
    pub stretch: Option<f64>,
    pub thin: Option<usize>,
    /// Continue an existing chain instead of starting over.
    pub resume: Option<bool>,

    /// Simulations drawn for the synthetic dataset.
    pub pool: Option<usize>,
    /// Synthetic records kept.
    pub keep: Option<usize>,
    /// Measurement points chosen in addition to the two profile ends.
    pub extra_points: Option<usize>,
    /// Design box, as multipliers of the reference parameters.
    pub box_lower: Option<Vec<f64>>,
    pub box_upper: Option<Vec<f64>>,

    /// `simulate`: noise sd (fraction of c_sat) for a noisy `data.csv`.
    pub noise: Option<f64>,
    /// `simulate`: number of evenly spaced points in `data.csv`.
    pub data_points: Option<usize>,

    /// Posterior draws for the predictive band.
    pub draws: Option<usize>,
    /// Evenly spaced points for predicted curves.
    pub query_points: Option<usize>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut c: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut c.constants,
            &mut c.initial,
            &mut c.initial_dead,
            &mut c.data,
            &mut c.synthetic,
            &mut c.chain,
            &mut c.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    /// Keys set in `other` replace those in `self`.
    pub fn overlay(&mut self, other: &Self) {
        overlay!(self, other;
            constants, initial, initial_dead, data, synthetic, chain, out,
            mode, preset, n_nodes, rtol, atol, theta,
            walkers, steps, burn_in, seed, stretch, thin, resume,
            pool, keep, extra_points, box_lower, box_upper,
            noise, data_points, draws, query_points);
    }

    /// A copy with every defaultable key filled in. Run lengths follow the
    /// preset and mode when not given.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        let preset = *c.preset.get_or_insert(Preset::Paper);
        let solver = SolverOptions::default();
        let sampler = SamplerSettings::default();
        let design = DesignBox::default();
        c.out.get_or_insert_with(|| PathBuf::from("out"));
        c.n_nodes.get_or_insert(preset.n_nodes());
        c.rtol.get_or_insert(solver.rtol);
        c.atol.get_or_insert(solver.atol);
        c.theta.get_or_insert(CalibrationParameters::REFERENCE.to_array());
        if let Some(mode) = c.mode {
            let (w, s) = preset.run_length(mode);
            c.walkers.get_or_insert(w);
            c.steps.get_or_insert(s);
        }
        c.burn_in.get_or_insert(sampler.burn_in);
        c.seed.get_or_insert(sampler.seed);
        c.stretch.get_or_insert(sampler.a);
        c.thin.get_or_insert(sampler.thin);
        c.resume.get_or_insert(false);
        c.pool.get_or_insert(500);
        c.keep.get_or_insert(200);
        c.extra_points.get_or_insert(28);
        c.box_lower.get_or_insert(design.lower);
        c.box_upper.get_or_insert(design.upper);
        c.data_points.get_or_insert(30);
        c.draws.get_or_insert(100);
        c.query_points.get_or_insert(101);
        if c.chain.is_none() {
            c.chain = Some(c.out.as_ref().expect("set above").join("chain.bin"));
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("n_nodes", self.n_nodes),
            ("walkers", self.walkers),
            ("steps", self.steps),
            ("thin", self.thin),
            ("pool", self.pool),
            ("keep", self.keep),
            ("data_points", self.data_points),
            ("query_points", self.query_points),
        ] {
            if v == Some(0) {
                bail!("config key '{key}' must be positive");
            }
        }
        if let Some(b) = self.burn_in {
            if !(0.0..1.0).contains(&b) {
                bail!("config key 'burn_in' must lie in [0, 1), got {b}");
            }
        }
        if let Some(s) = self.noise {
            if !(s >= 0.0 && s.is_finite()) {
                bail!("config key 'noise' must be a nonnegative number, got {s}");
            }
        }
        Ok(())
    }

    /// The path stored under `key`, or a usage error naming it.
    pub fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        value.as_deref().with_context(|| {
            format!(
                "missing input: set '{key}' in the config file or pass --{}",
                key.replace('_', "-")
            )
        })
    }

    pub fn mode(&self) -> Result<CalibrationMode> {
        self.mode
            .context("missing input: set 'mode' in the config file or pass --mode")
    }

    pub fn out_dir(&self) -> &Path {
        self.out.as_deref().unwrap_or(Path::new("out"))
    }

    pub fn solver(&self) -> SolverOptions {
        let d = SolverOptions::default();
        SolverOptions {
            rtol: self.rtol.unwrap_or(d.rtol),
            atol: self.atol.unwrap_or(d.atol),
            ..d
        }
    }

    pub fn design_box(&self) -> Result<DesignBox> {
        let d = DesignBox::default();
        let b = DesignBox {
            lower: self.box_lower.clone().unwrap_or(d.lower),
            upper: self.box_upper.clone().unwrap_or(d.upper),
        };
        b.validate()?;
        if b.dim() != 4 {
            bail!("the design box needs 4 bounds per side, got {}", b.dim());
        }
        Ok(b)
    }

    pub fn sampler(&self) -> Result<SamplerSettings> {
        let d = SamplerSettings::default();
        let s = SamplerSettings {
            n_walkers: self.walkers.context("missing input: set 'walkers' or 'mode'")?,
            n_steps: self.steps.context("missing input: set 'steps' or 'mode'")?,
            burn_in: self.burn_in.unwrap_or(d.burn_in),
            a: self.stretch.unwrap_or(d.a),
            seed: self.seed.unwrap_or(d.seed),
            thin: self.thin.unwrap_or(d.thin),
            stall_window: d.stall_window,
        };
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_and_paths_follow_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "data = \"d.csv\"\nseed = 3\nmode = \"bcd\"\nwalkers = 8\n").unwrap();
        let mut c = RunConfig::load(&path).unwrap();
        assert_eq!(c.data.as_deref(), Some(dir.path().join("d.csv").as_path()));
        c.overlay(&RunConfig {
            seed: Some(9),
            ..Default::default()
        });
        let r = c.resolved();
        assert_eq!(r.seed, Some(9));
        assert_eq!(r.walkers, Some(8));
        assert_eq!(r.steps, Some(20000));
        assert_eq!(r.n_nodes, Some(100));
    }

    #[test]
    fn desk_preset_shortens_runs() {
        let c = RunConfig {
            mode: Some(CalibrationMode::Bi),
            preset: Some(Preset::Desk),
            ..Default::default()
        }
        .resolved();
        assert_eq!((c.walkers, c.steps, c.n_nodes), (Some(16), Some(800), Some(50)));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "walkres = 8\n").unwrap();
        assert!(RunConfig::load(&path).is_err());
    }

    #[test]
    fn zero_counts_are_rejected() {
        let c = RunConfig {
            keep: Some(0),
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("keep"));
    }

    #[test]
    fn missing_inputs_name_the_key() {
        let c = RunConfig::default();
        let e = c.require(&c.initial_dead, "initial_dead").unwrap_err().to_string();
        assert!(e.contains("'initial_dead'") && e.contains("--initial-dead"));
    }
}
