//! Explainable cognitive diagnosis built on a NeuralCDM engine.
//!
//! The pipeline is: [`ingest`] CSV data into an [`EncodedDataset`], [`train`]
//! a [`ModelParams`], estimate a student's mastery with [`posterior`], then
//! explain it with [`explain`] and summarize the class with [`analytics`].
//! [`synth`] generates classes with known mastery for recovery tests, and
//! [`payload`] holds the JSON shapes shared by the CLI and HTTP service.

pub mod analytics;
pub mod bands;
pub mod error;
pub mod explain;
pub mod fixtures;
pub mod ingest;
pub mod model;
pub mod payload;
pub mod posterior;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use ingest::{EncodedDataset, QMatrix, ValidationReport};
pub use model::{ForwardTrace, HyperParams, ModelParams};
pub use posterior::{PosteriorConfig, PosteriorState};
pub use train::{TrainConfig, TrainReport};
