//! EEG band decomposition, spatial covariance and Riemannian tangent-space
//! features.

mod features;
pub mod filter;
pub mod spd;

pub use features::{
    band_decompose, eeg_feature_vector, BandName, BandSpec, EegConfig, EegReference, STANDARD_BANDS,
};
pub use spd::{karcher_mean, spatial_covariance, tangent_project, SpdMatrix};
