//! Benchmarking toolkit for mind-wandering detection.
//!
//! The crate covers the whole offline pipeline: loading multimodal recordings
//! ([`corpus`]), cutting probe-aligned windows ([`windowing`]), extracting
//! gaze, EEG and frame-table features ([`gaze`], [`eeg`], [`frames`]),
//! supervised feature selection ([`selection`]), a from-scratch classifier zoo
//! ([`models`]) with a federated simulation ([`federated`]), hyperparameter
//! search ([`tuning`]) and person-independent evaluation ([`evaluation`]).
//!
//! [`pipeline`] glues the extraction stages together for a whole dataset and
//! [`synth`] generates synthetic datasets with a controllable effect size.

pub mod corpus;
pub mod data;
pub mod eeg;
pub mod error;
pub mod evaluation;
pub mod federated;
pub mod frames;
pub mod gaze;
pub mod models;
pub mod pipeline;
pub mod rng;
pub mod selection;
pub mod synth;
pub mod tuning;
pub mod windowing;

pub use corpus::{
    DatasetManifest, EegEpoch, FrameFeatureTable, GazeSample, LabelMode, Modality, ReportEvent,
    Session, Split,
};
pub use data::{FeatureMatrix, Matrix};
pub use error::{Error, Result};
pub use evaluation::{BenchmarkReport, MetricRecord};
pub use models::{Family, Hyperparams, ModelSpec, TrainedModel};
pub use windowing::{LabeledWindow, Provenance, SamplingMode};
