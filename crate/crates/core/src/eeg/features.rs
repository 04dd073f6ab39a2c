use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::filter::{butter_bandpass, sosfiltfilt};
use super::spd::{karcher_mean, spatial_covariance, tangent_project, SpdMatrix};
use crate::corpus::EegEpoch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandName {
    Delta,
    Theta,
    Alpha,
    Beta,
}

impl fmt::Display for BandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BandName::Delta => "delta",
            BandName::Theta => "theta",
            BandName::Alpha => "alpha",
            BandName::Beta => "beta",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: BandName,
    pub lo: f64,
    pub hi: f64,
}

pub const STANDARD_BANDS: [BandSpec; 4] = [
    BandSpec { name: BandName::Delta, lo: 1.0, hi: 4.0 },
    BandSpec { name: BandName::Theta, lo: 4.0, hi: 8.0 },
    BandSpec { name: BandName::Alpha, lo: 8.0, hi: 13.0 },
    BandSpec { name: BandName::Beta, lo: 13.0, hi: 30.0 },
];

impl BandSpec {
    pub fn standard(name: BandName) -> BandSpec {
        STANDARD_BANDS.into_iter().find(|b| b.name == name).expect("every band is listed")
    }
}

pub const FILTER_ORDER: usize = 4;

/// Zero-phase order-4 Butterworth band-pass applied to every channel.
pub fn band_decompose(epoch: &EegEpoch, band: &BandSpec) -> Result<EegEpoch> {
    let nyq = epoch.rate_hz / 2.0;
    if band.hi >= nyq {
        return Err(Error::Invalid(format!(
            "band {} upper edge {} Hz is not below Nyquist {nyq} Hz",
            band.name, band.hi
        )));
    }
    let sos = butter_bandpass(FILTER_ORDER, band.lo, band.hi, epoch.rate_hz)?;
    let (n, t) = epoch.data.shape();
    let mut out = DMatrix::zeros(n, t);
    for i in 0..n {
        let row: Vec<f64> = epoch.data.row(i).iter().copied().collect();
        let y = sosfiltfilt(&sos, &row)?;
        for (j, v) in y.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(EegEpoch {
        data: out,
        ..epoch.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EegConfig {
    pub bands: Vec<BandName>,
    pub shrinkage: f64,
    pub karcher_tol: f64,
    pub karcher_max_iter: usize,
}

impl Default for EegConfig {
    fn default() -> Self {
        EegConfig {
            bands: STANDARD_BANDS.iter().map(|b| b.name).collect(),
            shrinkage: 0.05,
            karcher_tol: 1e-6,
            karcher_max_iter: 50,
        }
    }
}

impl EegConfig {
    pub fn band_specs(&self) -> Vec<BandSpec> {
        self.bands.iter().map(|&b| BandSpec::standard(b)).collect()
    }
}

/// Per-band reference points, fit on training epochs and frozen afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegReference {
    pub bands: Vec<BandSpec>,
    pub refs: Vec<SpdMatrix>,
    pub shrinkage: f64,
}

impl EegReference {
    pub fn fit(train: &[EegEpoch], cfg: &EegConfig) -> Result<EegReference> {
        if train.is_empty() {
            return Err(Error::Invalid("no training epochs for the EEG reference".into()));
        }
        let bands = cfg.band_specs();
        let mut refs = Vec::with_capacity(bands.len());
        for band in &bands {
            let covs = train
                .iter()
                .map(|e| spatial_covariance(&band_decompose(e, band)?.data, cfg.shrinkage))
                .collect::<Result<Vec<_>>>()?;
            refs.push(karcher_mean(&covs, cfg.karcher_tol, cfg.karcher_max_iter)?);
        }
        Ok(EegReference {
            bands,
            refs,
            shrinkage: cfg.shrinkage,
        })
    }

    pub fn dim(&self) -> usize {
        self.refs.iter().map(|r| r.n() * (r.n() + 1) / 2).sum()
    }

    pub fn feature_names(&self, channels: &[String]) -> Vec<String> {
        let mut names = Vec::new();
        for (band, r) in self.bands.iter().zip(&self.refs) {
            let n = r.n();
            for i in 0..n {
                for j in i..n {
                    let ch = |k: usize| channels.get(k).cloned().unwrap_or_else(|| format!("ch{k}"));
                    names.push(format!("{}_{}_{}", band.name, ch(i), ch(j)));
                }
            }
        }
        names
    }

    pub fn features(&self, epoch: &EegEpoch) -> Result<Vec<f64>> {
        eeg_feature_vector(epoch, &self.bands, &self.refs, self.shrinkage)
    }
}

/// Decompose, estimate covariance and project, per band, concatenated in band
/// order.
pub fn eeg_feature_vector(
    epoch: &EegEpoch,
    bands: &[BandSpec],
    refs: &[SpdMatrix],
    shrinkage: f64,
) -> Result<Vec<f64>> {
    if bands.len() != refs.len() {
        return Err(Error::DimensionMismatch {
            expected: bands.len(),
            found: refs.len(),
        });
    }
    let mut out = Vec::new();
    for (band, r) in bands.iter().zip(refs) {
        let c = spatial_covariance(&band_decompose(epoch, band)?.data, shrinkage)?;
        out.extend(tangent_project(&c, r)?);
    }
    Ok(out)
}
