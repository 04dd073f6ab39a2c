//! Dataset-level feature extraction: sessions to windows to one feature
//! matrix, plus the person-independent partition of that matrix.

use std::path::Path;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_session, DatasetManifest, EegEpoch, Modality, Session, Split};
use crate::data::{FeatureMatrix, Matrix};
use crate::eeg::{EegConfig, EegReference};
use crate::error::{Error, Result};
use crate::frames::{self, AggregationSpec};
use crate::gaze::{self, GazeConfig, GAZE_FEATURE_NAMES};
use crate::rng::{derive_seed, str_tag};
use crate::windowing::{build_windows, LabeledWindow, Provenance, SamplingMode, WindowConfig};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Overrides the manifest's window duration when set.
    pub window_s: Option<f64>,
    pub post_offset_s: Option<f64>,
    pub negative_ratio: Option<f64>,
    pub gaze: GazeConfig,
    pub frames: AggregationSpec,
    pub eeg: EegConfig,
}

impl FeatureConfig {
    pub fn window_config(&self, manifest: &DatasetManifest) -> WindowConfig {
        let d = WindowConfig::default();
        let duration_s = self.window_s.unwrap_or(manifest.window_duration_s);
        WindowConfig {
            duration_s,
            post_offset_s: self.post_offset_s.unwrap_or(d.post_offset_s),
            target_ratio: self.negative_ratio.unwrap_or(d.target_ratio),
            min_gap_s: d.min_gap_s.max(duration_s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub windows: usize,
    pub skipped_events: usize,
    pub discarded_events: usize,
    pub low_quality_windows: usize,
    pub unlabeled_epochs: usize,
    /// Participants whose negative sampling ran out of room.
    pub exhausted: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Extracted {
    pub features: FeatureMatrix,
    pub windows: Vec<LabeledWindow>,
    pub report: ExtractionReport,
}

/// Loads every participant in manifest order (in parallel).
pub fn load_sessions(manifest: &DatasetManifest) -> Result<Vec<Session>> {
    manifest
        .participants
        .par_iter()
        .map(|p| load_session(manifest, &p.id))
        .collect()
}

fn frame_streams(manifest: &DatasetManifest) -> Result<Vec<String>> {
    let first = manifest
        .participants
        .first()
        .ok_or_else(|| Error::Invalid("manifest lists no participants".into()))?;
    let names: Vec<String> = first.frames.iter().map(|f| f.name.clone()).collect();
    for p in &manifest.participants {
        let mine: Vec<&str> = p.frames.iter().map(|f| f.name.as_str()).collect();
        if mine != names.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Invalid(format!(
                "participant {:?} has frame streams {mine:?}, expected {names:?}",
                p.id
            )));
        }
    }
    Ok(names)
}

struct Rows {
    values: Vec<Vec<f64>>,
    windows: Vec<LabeledWindow>,
    low_quality: usize,
}

fn gaze_rows(session: &Session, windows: &[LabeledWindow], manifest: &DatasetManifest, cfg: &FeatureConfig) -> Result<Rows> {
    let mut values = Vec::with_capacity(windows.len());
    let mut low_quality = 0;
    for w in windows {
        let f = gaze::window_features(&session.gaze, w, manifest.screen_geometry.as_ref(), &cfg.gaze)?;
        low_quality += f.low_quality as usize;
        values.push(f.values.to_vec());
    }
    Ok(Rows {
        values,
        windows: windows.to_vec(),
        low_quality,
    })
}

fn frame_rows(
    session: &Session,
    windows: &[LabeledWindow],
    manifest: &DatasetManifest,
    streams: &[String],
    cfg: &FeatureConfig,
) -> Result<Rows> {
    let mut values = vec![Vec::new(); windows.len()];
    let mut low_quality = 0;
    for name in streams {
        let table = session
            .frame_table(name)
            .ok_or_else(|| Error::Invalid(format!("{}: no frame stream {name:?}", session.participant)))?;
        let rate = manifest
            .rate(name)
            .ok_or_else(|| Error::Invalid(format!("sampling_rate_hz.{name} missing")))?;
        for (row, w) in values.iter_mut().zip(windows) {
            let f = frames::window_features(table, rate, w, &cfg.frames)?;
            low_quality += f.empty as usize;
            row.extend(f.values);
        }
    }
    Ok(Rows {
        values,
        windows: windows.to_vec(),
        low_quality,
    })
}

fn frame_names(sessions: &[Session], streams: &[String], spec: &AggregationSpec) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for s in streams {
        let cols = &sessions
            .iter()
            .find_map(|x| x.frame_table(s))
            .ok_or_else(|| Error::Invalid(format!("no data for frame stream {s:?}")))?
            .columns;
        for x in sessions {
            if let Some(t) = x.frame_table(s) {
                if &t.columns != cols {
                    return Err(Error::Invalid(format!(
                        "{}: stream {s:?} columns differ from other participants",
                        x.participant
                    )));
                }
            }
        }
        names.extend(spec.feature_names(&format!("{s}_"), cols));
    }
    Ok(names)
}

fn epoch_window(participant: &str, e: &EegEpoch, label: u8) -> LabeledWindow {
    LabeledWindow {
        participant: participant.to_string(),
        t_start: e.t_start(),
        t_end: e.t_end,
        label,
        provenance: if label == 1 {
            Provenance::PreProbe
        } else {
            Provenance::ProbeNegative
        },
    }
}

fn assemble(rows: Vec<Rows>, names: Vec<String>) -> Result<(FeatureMatrix, Vec<LabeledWindow>, usize)> {
    let mut data = Vec::new();
    let mut windows = Vec::new();
    let mut low = 0;
    for r in rows {
        low += r.low_quality;
        data.extend(r.values);
        windows.extend(r.windows);
    }
    let x = if data.is_empty() {
        Matrix::zeros(0, names.len())
    } else {
        Matrix::from_rows(&data)?
    };
    let fm = FeatureMatrix::new(
        x,
        windows.iter().map(|w| w.label).collect(),
        windows.iter().map(|w| w.participant.clone()).collect(),
        windows.iter().map(|w| w.provenance).collect(),
        names,
    )?;
    Ok((fm, windows, low))
}

/// Extracts one feature row per labeled window, participants in manifest
/// order. The EEG reference is fit on the epochs of `reference` participants
/// only, so no statistic leaks from validation or test participants.
pub fn extract_features(
    manifest: &DatasetManifest,
    sessions: &[Session],
    mode: SamplingMode,
    cfg: &FeatureConfig,
    reference: &[String],
    seed: u64,
) -> Result<Extracted> {
    let mut report = ExtractionReport::default();
    if manifest.modality == Modality::Eeg {
        return extract_eeg(manifest, sessions, mode, cfg, reference);
    }
    let wcfg = cfg.window_config(manifest);
    let sets = sessions
        .par_iter()
        .map(|s| build_windows(s, manifest.label_mode, mode, &wcfg, derive_seed(seed, &[str_tag(&s.participant)])))
        .collect::<Result<Vec<_>>>()?;
    for (s, set) in sessions.iter().zip(&sets) {
        report.skipped_events += set.skipped;
        report.discarded_events += s.discarded_events;
        if set.exhausted {
            report.exhausted.push(s.participant.clone());
        }
    }
    let use_gaze = matches!(manifest.modality, Modality::Gaze | Modality::Multimodal) && sessions.iter().any(|s| !s.gaze.is_empty());
    let streams = if matches!(manifest.modality, Modality::FrameTable | Modality::Multimodal) {
        frame_streams(manifest)?
    } else {
        Vec::new()
    };
    let mut names: Vec<String> = Vec::new();
    if use_gaze {
        names.extend(GAZE_FEATURE_NAMES.iter().map(|s| s.to_string()));
    }
    names.extend(frame_names(sessions, &streams, &cfg.frames)?);
    if names.is_empty() {
        return Err(Error::Invalid(format!("dataset {} has no usable streams", manifest.dataset_id)));
    }

    let rows = sessions
        .par_iter()
        .zip(&sets)
        .map(|(s, set)| {
            let mut out = Rows {
                values: vec![Vec::new(); set.windows.len()],
                windows: set.windows.clone(),
                low_quality: 0,
            };
            if use_gaze {
                let g = gaze_rows(s, &set.windows, manifest, cfg)?;
                out.low_quality += g.low_quality;
                for (row, v) in out.values.iter_mut().zip(g.values) {
                    row.extend(v);
                }
            }
            if !streams.is_empty() {
                let f = frame_rows(s, &set.windows, manifest, &streams, cfg)?;
                out.low_quality += f.low_quality;
                for (row, v) in out.values.iter_mut().zip(f.values) {
                    row.extend(v);
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let (features, windows, low) = assemble(rows, names)?;
    report.windows = windows.len();
    report.low_quality_windows = low;
    if !report.exhausted.is_empty() {
        warn!(
            "{}: negative sampling exhausted for {} participants",
            manifest.dataset_id,
            report.exhausted.len()
        );
    }
    debug!("{}: {} windows, {} skipped events", manifest.dataset_id, report.windows, report.skipped_events);
    Ok(Extracted {
        features,
        windows,
        report,
    })
}

fn extract_eeg(
    manifest: &DatasetManifest,
    sessions: &[Session],
    mode: SamplingMode,
    cfg: &FeatureConfig,
    reference: &[String],
) -> Result<Extracted> {
    if mode == SamplingMode::Post {
        return Err(Error::Invalid(format!(
            "dataset {} holds pre-probe EEG epochs only; post mode is not available",
            manifest.dataset_id
        )));
    }
    let mut report = ExtractionReport::default();
    let train: Vec<EegEpoch> = sessions
        .iter()
        .filter(|s| reference.contains(&s.participant))
        .flat_map(|s| s.eeg.iter().filter(|e| e.label.is_some()).cloned())
        .collect();
    let eref = EegReference::fit(&train, &cfg.eeg)?;
    let channels = if manifest.eeg_channels.is_empty() {
        train[0].channels.clone()
    } else {
        manifest.eeg_channels.clone()
    };
    let rows = sessions
        .par_iter()
        .map(|s| {
            let mut values = Vec::new();
            let mut windows = Vec::new();
            for e in &s.eeg {
                let Some(label) = e.label else { continue };
                values.push(eref.features(e)?);
                windows.push(epoch_window(&s.participant, e, label));
            }
            Ok(Rows {
                values,
                windows,
                low_quality: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    report.unlabeled_epochs = sessions.iter().map(|s| s.eeg.iter().filter(|e| e.label.is_none()).count()).sum();
    let (features, windows, _) = assemble(rows, eref.feature_names(&channels))?;
    report.windows = windows.len();
    Ok(Extracted {
        features,
        windows,
        report,
    })
}

/// Train, validation and test rows of one dataset. Tuning code only ever
/// receives a [`TuningView`], which has no path to the test rows.
#[derive(Debug, Clone)]
pub struct PartitionedData {
    train: FeatureMatrix,
    val: FeatureMatrix,
    test: FeatureMatrix,
}

impl PartitionedData {
    pub fn new(features: &FeatureMatrix, split: &Split) -> PartitionedData {
        PartitionedData {
            train: features.filter_participants(&split.train),
            val: features.filter_participants(&split.val),
            test: features.filter_participants(&split.test),
        }
    }

    pub fn train(&self) -> &FeatureMatrix {
        &self.train
    }

    pub fn val(&self) -> &FeatureMatrix {
        &self.val
    }

    pub fn test(&self) -> &FeatureMatrix {
        &self.test
    }

    pub fn tuning_view(&self) -> TuningView<'_> {
        TuningView {
            train: &self.train,
            val: &self.val,
        }
    }
}

/// Train and validation rows only.
#[derive(Debug, Clone, Copy)]
pub struct TuningView<'a> {
    train: &'a FeatureMatrix,
    val: &'a FeatureMatrix,
}

impl<'a> TuningView<'a> {
    pub fn new(train: &'a FeatureMatrix, val: &'a FeatureMatrix) -> Self {
        TuningView { train, val }
    }

    pub fn train(&self) -> &'a FeatureMatrix {
        self.train
    }

    pub fn val(&self) -> &'a FeatureMatrix {
        self.val
    }

    pub fn combined(&self) -> Result<FeatureMatrix> {
        self.train.concat(self.val)
    }
}

/// Writes a feature matrix as CSV: `participant,label,provenance,<names...>`.
pub fn write_feature_csv(path: &Path, fm: &FeatureMatrix) -> Result<()> {
    let err = |e: csv::Error| Error::Invalid(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec!["participant".to_string(), "label".into(), "provenance".into()];
    header.extend(fm.names.iter().cloned());
    w.write_record(&header).map_err(err)?;
    for i in 0..fm.len() {
        let mut rec = vec![fm.participants[i].clone(), fm.labels[i].to_string(), fm.provenance[i].to_string()];
        rec.extend(fm.x.row(i).iter().map(|v| format!("{v:e}")));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CSV written by [`write_feature_csv`].
pub fn read_feature_csv(path: &Path) -> Result<FeatureMatrix> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| Error::parse(path, e))?.iter().map(String::from).collect();
    if header.len() < 3 || header[..3] != ["participant", "label", "provenance"] {
        return Err(Error::parse(path, "expected header participant,label,provenance,..."));
    }
    let names = header[3..].to_vec();
    let (mut rows, mut labels, mut parts, mut prov) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        if rec.len() != header.len() {
            return Err(Error::Arity {
                path: path.to_path_buf(),
                row: i + 1,
                expected: header.len(),
                found: rec.len(),
            });
        }
        parts.push(rec[0].to_string());
        labels.push(match &rec[1] {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::parse(path, format!("row {}: bad label {other:?}", i + 1))),
        });
        prov.push(rec[2].parse::<Provenance>().map_err(|e| Error::parse(path, e))?);
        rows.push(
            (3..rec.len())
                .map(|j| rec[j].parse::<f64>().map_err(|_| Error::parse(path, format!("row {}: bad number", i + 1))))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let x = if rows.is_empty() {
        Matrix::zeros(0, names.len())
    } else {
        Matrix::from_rows(&rows)?
    };
    FeatureMatrix::new(x, labels, parts, prov, names)
}
