//! Calibration toolkit for a one-dimensional glioblastoma go-or-grow model.

pub mod analysis;
pub mod calibration;
pub mod data;
pub mod design;
pub mod error;
pub mod gp;
pub mod model;
pub mod sampler;
pub mod workflow;

pub use calibration::{CalibrationMode, Posterior, PosteriorSpec};
pub use data::ExperimentalDataset;
pub use design::{DesignBox, SyntheticDataset};
pub use error::{Error, Result};
pub use model::{CalibrationParameters, FixedConstants, ForwardModel, PdeModel};
pub use sampler::{Chain, SamplerSettings};
