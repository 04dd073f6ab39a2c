use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Gaze,
    Eeg,
    FrameTable,
    Multimodal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    SelfCaught,
    ProbeCaught,
}

/// Physical screen layout, used to convert pixels to visual degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenGeometry {
    pub width_px: f64,
    pub height_px: f64,
    pub distance_mm: f64,
    pub pixel_pitch_mm: f64,
}

impl ScreenGeometry {
    /// Degrees per pixel under the small-angle approximation.
    pub fn deg_per_px(&self) -> f64 {
        (self.pixel_pitch_mm / self.distance_mm).to_degrees()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStream {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaze: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<PathBuf>,
    /// One CSV per epoch; each has a JSON sidecar with the same stem.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eeg: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frames: Vec<FrameStream>,
}

fn default_window() -> f64 {
    10.0
}

/// One dataset: metadata plus per-participant stream paths (relative to the
/// manifest's directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub modality: Modality,
    pub label_mode: LabelMode,
    #[serde(default = "default_window")]
    pub window_duration_s: f64,
    /// Nominal rate per stream: `gaze`, `eeg`, or a frame stream name.
    #[serde(default)]
    pub sampling_rate_hz: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screen_geometry: Option<ScreenGeometry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eeg_channels: Vec<String>,
    pub participants: Vec<ParticipantEntry>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn participant(&self, id: &str) -> Result<&ParticipantEntry> {
        self.participants
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| Error::UnknownParticipant(id.to_string()))
    }

    pub fn participant_ids(&self) -> Vec<String> {
        self.participants.iter().map(|p| p.id.clone()).collect()
    }

    pub fn rate(&self, stream: &str) -> Option<f64> {
        self.sampling_rate_hz.get(stream).copied()
    }

    /// Every invariant violation, in a stable order. Empty means valid.
    pub fn violations(&self) -> Vec<Error> {
        let mut out = Vec::new();
        if !(self.window_duration_s > 0.0) {
            out.push(Error::Invalid(format!(
                "window_duration_s must be > 0, got {}",
                self.window_duration_s
            )));
        }
        let mut seen = HashSet::new();
        for p in &self.participants {
            if !seen.insert(p.id.as_str()) {
                out.push(Error::DuplicateParticipant(p.id.clone()));
            }
        }
        if self.participants.is_empty() {
            out.push(Error::Invalid("manifest lists no participants".into()));
        }
        for p in &self.participants {
            let needs_gaze = matches!(self.modality, Modality::Gaze);
            let needs_eeg = matches!(self.modality, Modality::Eeg);
            let needs_frames = matches!(self.modality, Modality::FrameTable);
            if needs_gaze && p.gaze.is_none() {
                out.push(Error::Invalid(format!("participant {:?} has no gaze stream", p.id)));
            }
            if needs_eeg && p.eeg.is_empty() {
                out.push(Error::Invalid(format!("participant {:?} has no EEG epochs", p.id)));
            }
            if needs_frames && p.frames.is_empty() {
                out.push(Error::Invalid(format!("participant {:?} has no frame tables", p.id)));
            }
            if self.modality == Modality::Multimodal && p.gaze.is_none() && p.frames.is_empty() {
                out.push(Error::Invalid(format!(
                    "participant {:?} has no fusable streams",
                    p.id
                )));
            }
            if self.modality != Modality::Eeg && p.events.is_none() {
                out.push(Error::Invalid(format!("participant {:?} has no events file", p.id)));
            }
            let mut files: Vec<PathBuf> = Vec::new();
            files.extend(p.gaze.iter().cloned());
            files.extend(p.events.iter().cloned());
            for e in &p.eeg {
                files.push(e.clone());
                files.push(e.with_extension("json"));
            }
            files.extend(p.frames.iter().map(|f| f.path.clone()));
            for f in files {
                let full = self.resolve(&f);
                if !full.is_file() {
                    out.push(Error::MissingFile(full));
                }
            }
        }
        let mut streams: Vec<String> = Vec::new();
        if self.participants.iter().any(|p| p.gaze.is_some()) {
            streams.push("gaze".into());
        }
        for p in &self.participants {
            for f in &p.frames {
                if !streams.contains(&f.name) {
                    streams.push(f.name.clone());
                }
            }
        }
        for s in streams {
            match self.rate(&s) {
                Some(r) if r > 0.0 => {}
                _ => out.push(Error::Invalid(format!(
                    "sampling_rate_hz.{s} missing or not positive"
                ))),
            }
        }
        out
    }
}

/// Parses a manifest without checking invariants.
pub fn parse_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut m: DatasetManifest = toml::from_str(&text).map_err(|e| Error::parse(path, e))?;
    m.root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(m)
}

/// Parses a manifest and fails on the first invariant violation.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let m = parse_manifest(path)?;
    match m.violations().into_iter().next() {
        Some(e) => Err(e),
        None => Ok(m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn gaze_manifest(ids: &[&str]) -> String {
        let mut s = String::from(
            "dataset_id = \"t\"\nmodality = \"gaze\"\nlabel_mode = \"self_caught\"\n\n[sampling_rate_hz]\ngaze = 250.0\n",
        );
        for id in ids {
            s.push_str(&format!(
                "\n[[participants]]\nid = \"{id}\"\ngaze = \"{id}_gaze.csv\"\nevents = \"{id}_events.csv\"\n"
            ));
        }
        s
    }

    fn touch_streams(dir: &Path, ids: &[&str]) {
        for id in ids {
            write(dir, &format!("{id}_gaze.csv"), "t_ms,x_px,y_px,valid\n");
            write(dir, &format!("{id}_events.csv"), "t_ms,kind,label\n");
        }
    }

    #[test]
    fn loads_two_participants() {
        let dir = tempfile::tempdir().unwrap();
        touch_streams(dir.path(), &["p1", "p2"]);
        write(dir.path(), "m.toml", &gaze_manifest(&["p1", "p2"]));
        let m = load_manifest(&dir.path().join("m.toml")).unwrap();
        assert_eq!(m.participants.len(), 2);
        assert_eq!(m.modality, Modality::Gaze);
        assert_eq!(m.window_duration_s, 10.0);
    }

    #[test]
    fn duplicate_participant_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        touch_streams(dir.path(), &["p1"]);
        write(dir.path(), "m.toml", &gaze_manifest(&["p1", "p1"]));
        match load_manifest(&dir.path().join("m.toml")) {
            Err(Error::DuplicateParticipant(id)) => assert_eq!(id, "p1"),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn missing_stream_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        touch_streams(dir.path(), &["p1"]);
        write(dir.path(), "p3_events.csv", "t_ms,kind,label\n");
        write(dir.path(), "m.toml", &gaze_manifest(&["p1", "p3"]));
        match load_manifest(&dir.path().join("m.toml")) {
            Err(Error::MissingFile(p)) => assert!(p.ends_with("p3_gaze.csv")),
            other => panic!("expected missing file, got {other:?}"),
        }
    }

    #[test]
    fn malformed_manifest_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "m.toml", "dataset_id = [unclosed");
        assert!(matches!(
            load_manifest(&dir.path().join("m.toml")),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn non_positive_window_is_a_violation() {
        let dir = tempfile::tempdir().unwrap();
        touch_streams(dir.path(), &["p1"]);
        let body = gaze_manifest(&["p1"]).replace(
            "label_mode = \"self_caught\"\n",
            "label_mode = \"self_caught\"\nwindow_duration_s = 0.0\n",
        );
        write(dir.path(), "m.toml", &body);
        let m = parse_manifest(&dir.path().join("m.toml")).unwrap();
        assert_eq!(m.violations().len(), 1);
    }
}
