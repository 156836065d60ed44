//! Shared fixtures for the benchmarks.

use gbmcal_core::calibration::{CalibrationMode, Posterior, PosteriorSpec};
use gbmcal_core::data::ExperimentalDataset;
use gbmcal_core::design::{generate_synthetic, DesignBox, SyntheticDataset};
use gbmcal_core::model::{CalibrationParameters, FixedConstants, PdeModel};
use gbmcal_core::workflow::SyntheticTruth;

pub struct Fixture {
    pub model: PdeModel,
    pub data: ExperimentalDataset,
    pub synth: SyntheticDataset,
}

impl Fixture {
    /// Known-truth data on `n_nodes` and a 200-record synthetic set.
    pub fn new(n_nodes: usize) -> Self {
        let (model, data) = SyntheticTruth::default()
            .generate(&FixedConstants::default(), n_nodes)
            .expect("truth solve");
        let synth = generate_synthetic(
            40,
            200,
            &DesignBox::default(),
            &data.x,
            1,
            &model,
            &CalibrationParameters::REFERENCE,
        )
        .expect("synthetic design");
        Self { model, data, synth }
    }

    pub fn posterior(&self, mode: CalibrationMode) -> Posterior<'_> {
        Posterior::new(PosteriorSpec {
            mode,
            data: &self.data,
            synth: Some(&self.synth),
            model: Some(&self.model),
            theta_box: DesignBox::default(),
            reference: CalibrationParameters::REFERENCE,
            priors: None,
        })
        .expect("posterior")
    }
}
