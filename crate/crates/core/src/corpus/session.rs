use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::manifest::DatasetManifest;
use crate::error::{Error, Result};

/// One raw gaze sample. Positions of invalid samples are meaningless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeSample {
    pub t: i64,
    pub x: f64,
    pub y: f64,
    pub valid: bool,
}

/// One event-aligned EEG epoch, `channels × samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct EegEpoch {
    pub channels: Vec<String>,
    pub rate_hz: f64,
    pub t_end: i64,
    pub data: DMatrix<f64>,
    pub label: Option<u8>,
}

impl EegEpoch {
    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration_ms(&self) -> i64 {
        (self.n_samples() as f64 / self.rate_hz * 1000.0).round() as i64
    }

    pub fn t_start(&self) -> i64 {
        self.t_end - self.duration_ms()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct EpochSidecar {
    pub rate_hz: f64,
    pub t_end_ms: i64,
    pub channels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

/// Precomputed per-frame features (facial, emotion or physiological).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameFeatureTable {
    pub t: Vec<i64>,
    pub confidence: Vec<f64>,
    pub columns: Vec<String>,
    /// Row-major values, `t.len()` rows of `columns.len()` entries.
    pub values: Vec<Vec<f64>>,
}

impl FrameFeatureTable {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn select(&self, idx: impl IntoIterator<Item = usize>) -> FrameFeatureTable {
        let mut out = FrameFeatureTable {
            columns: self.columns.clone(),
            ..Default::default()
        };
        for i in idx {
            out.t.push(self.t[i]);
            out.confidence.push(self.confidence[i]);
            out.values.push(self.values[i].clone());
        }
        out
    }

    /// Rows with `t_start <= t < t_end`.
    pub fn slice_time(&self, t_start: i64, t_end: i64) -> FrameFeatureTable {
        let lo = self.t.partition_point(|&t| t < t_start);
        let hi = self.t.partition_point(|&t| t < t_end);
        self.select(lo..hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Probe,
    SelfReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportEvent {
    pub t: i64,
    pub kind: EventKind,
    pub label: u8,
}

/// One participant's recordings, immutable after loading.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub participant: String,
    pub gaze: Vec<GazeSample>,
    pub eeg: Vec<EegEpoch>,
    pub frames: Vec<(String, FrameFeatureTable)>,
    pub events: Vec<ReportEvent>,
    /// Events dropped because their label was not binary.
    pub discarded_events: usize,
    pub t_start: i64,
    pub t_end: i64,
}

impl Session {
    pub fn gaze_in(&self, t_start: i64, t_end: i64) -> &[GazeSample] {
        let lo = self.gaze.partition_point(|s| s.t < t_start);
        let hi = self.gaze.partition_point(|s| s.t < t_end);
        &self.gaze[lo..hi]
    }

    pub fn frame_table(&self, name: &str) -> Option<&FrameFeatureTable> {
        self.frames.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

fn csv_reader(path: &Path, has_headers: bool) -> Result<csv::Reader<fs::File>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(f))
}

fn parse_t(path: &Path, s: &str, row: usize) -> Result<i64> {
    if let Ok(v) = s.parse::<i64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v.round() as i64),
        _ => Err(Error::parse(path, format!("row {row}: bad timestamp {s:?}"))),
    }
}

fn parse_f(path: &Path, s: &str, row: usize) -> Result<f64> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse::<f64>()
        .map_err(|_| Error::parse(path, format!("row {row}: bad number {s:?}")))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<fs::File>, expect: &[&str]) -> Result<Vec<String>> {
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < expect.len() || header.iter().zip(expect).any(|(h, e)| h != e) {
        return Err(Error::parse(
            path,
            format!("expected header starting with {}", expect.join(",")),
        ));
    }
    Ok(header)
}

/// Reads a gaze CSV (`t_ms,x_px,y_px,valid`); timestamps must strictly increase.
pub fn read_gaze(path: &Path) -> Result<Vec<GazeSample>> {
    let mut rdr = csv_reader(path, true)?;
    check_header(path, &mut rdr, &["t_ms", "x_px", "y_px", "valid"])?;
    let mut out: Vec<GazeSample> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        if rec.len() != 4 {
            return Err(Error::Arity {
                path: path.into(),
                row,
                expected: 4,
                found: rec.len(),
            });
        }
        let t = parse_t(path, &rec[0], row)?;
        let valid = match &rec[3] {
            "1" | "true" | "True" => true,
            "0" | "false" | "False" => false,
            other => return Err(Error::parse(path, format!("row {row}: bad valid flag {other:?}"))),
        };
        let x = parse_f(path, &rec[1], row)?;
        let y = parse_f(path, &rec[2], row)?;
        if let Some(prev) = out.last() {
            if t <= prev.t {
                return Err(Error::NonMonotone {
                    path: path.into(),
                    row,
                });
            }
        }
        out.push(GazeSample {
            t,
            x,
            y,
            valid: valid && x.is_finite() && y.is_finite(),
        });
    }
    Ok(out)
}

/// Reads an events CSV (`t_ms,kind,label`). Events whose label is not `0`/`1`
/// are dropped; the second value is the number dropped.
pub fn read_events(path: &Path) -> Result<(Vec<ReportEvent>, usize)> {
    let mut rdr = csv_reader(path, true)?;
    check_header(path, &mut rdr, &["t_ms", "kind", "label"])?;
    let mut out = Vec::new();
    let mut discarded = 0;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        if rec.len() != 3 {
            return Err(Error::Arity {
                path: path.into(),
                row,
                expected: 3,
                found: rec.len(),
            });
        }
        let t = parse_t(path, &rec[0], row)?;
        let kind = match &rec[1] {
            "probe" => EventKind::Probe,
            "self_report" => EventKind::SelfReport,
            other => return Err(Error::parse(path, format!("row {row}: unknown event kind {other:?}"))),
        };
        let label = match &rec[2] {
            "1" => 1,
            "0" => 0,
            _ => {
                discarded += 1;
                continue;
            }
        };
        out.push(ReportEvent { t, kind, label });
    }
    out.sort_by_key(|e| e.t);
    if discarded > 0 {
        log::warn!("{}: discarded {discarded} events without a binary label", path.display());
    }
    Ok((out, discarded))
}

/// Reads one EEG epoch CSV (rows = channels, no header) plus its JSON sidecar.
pub fn read_eeg_epoch(path: &Path) -> Result<EegEpoch> {
    let side_path = path.with_extension("json");
    let side_text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let side: EpochSidecar =
        serde_json::from_str(&side_text).map_err(|e| Error::parse(&side_path, e))?;
    if side.rate_hz != 256.0 && side.rate_hz != 512.0 {
        return Err(Error::parse(
            &side_path,
            format!("rate_hz must be 256 or 512, got {}", side.rate_hz),
        ));
    }
    let mut rdr = csv_reader(path, false)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        let vals = rec
            .iter()
            .map(|s| parse_f(path, s, row))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if vals.len() != first.len() {
                return Err(Error::Arity {
                    path: path.into(),
                    row,
                    expected: first.len(),
                    found: vals.len(),
                });
            }
        }
        rows.push(vals);
    }
    if rows.len() != side.channels.len() {
        return Err(Error::parse(
            path,
            format!(
                "{} rows but sidecar lists {} channels",
                rows.len(),
                side.channels.len()
            ),
        ));
    }
    let t = rows.first().map_or(0, Vec::len);
    let data = DMatrix::from_fn(rows.len(), t, |i, j| rows[i][j]);
    Ok(EegEpoch {
        channels: side.channels,
        rate_hz: side.rate_hz,
        t_end: side.t_end_ms,
        data,
        label: side.label,
    })
}

/// Reads a frame table (`t_ms,confidence,<features…>`); `t` must not decrease.
pub fn read_frame_table(path: &Path) -> Result<FrameFeatureTable> {
    let mut rdr = csv_reader(path, true)?;
    let header = check_header(path, &mut rdr, &["t_ms", "confidence"])?;
    let width = header.len();
    let mut table = FrameFeatureTable {
        columns: header[2..].to_vec(),
        ..Default::default()
    };
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        if rec.len() != width {
            return Err(Error::Arity {
                path: path.into(),
                row,
                expected: width,
                found: rec.len(),
            });
        }
        let t = parse_t(path, &rec[0], row)?;
        if let Some(&prev) = table.t.last() {
            if t < prev {
                return Err(Error::NonMonotone {
                    path: path.into(),
                    row,
                });
            }
        }
        table.t.push(t);
        table.confidence.push(parse_f(path, &rec[1], row)?);
        table.values.push(
            (2..width)
                .map(|j| parse_f(path, &rec[j], row))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    Ok(table)
}

/// Loads every stream of one participant and validates time bounds.
pub fn load_session(manifest: &DatasetManifest, participant: &str) -> Result<Session> {
    let entry = manifest.participant(participant)?;
    let gaze = match &entry.gaze {
        Some(p) => read_gaze(&manifest.resolve(p))?,
        None => Vec::new(),
    };
    let eeg = entry
        .eeg
        .iter()
        .map(|p| read_eeg_epoch(&manifest.resolve(p)))
        .collect::<Result<Vec<_>>>()?;
    let frames = entry
        .frames
        .iter()
        .map(|f| Ok((f.name.clone(), read_frame_table(&manifest.resolve(&f.path))?)))
        .collect::<Result<Vec<_>>>()?;

    let mut starts = Vec::new();
    let mut ends = Vec::new();
    if let (Some(a), Some(b)) = (gaze.first(), gaze.last()) {
        starts.push(a.t);
        ends.push(b.t);
    }
    for e in &eeg {
        starts.push(e.t_start());
        ends.push(e.t_end);
    }
    for (_, t) in &frames {
        if let (Some(&a), Some(&b)) = (t.t.first(), t.t.last()) {
            starts.push(a);
            ends.push(b);
        }
    }
    let t_start = starts.into_iter().min().unwrap_or(0);
    let t_end = ends.into_iter().max().unwrap_or(0);

    let (events, discarded_events) = match &entry.events {
        Some(p) => {
            let path = manifest.resolve(p);
            let (ev, d) = read_events(&path)?;
            if let Some(bad) = ev.iter().find(|e| e.t < t_start || e.t > t_end) {
                return Err(Error::Invalid(format!(
                    "{}: event at {} ms outside session bounds [{t_start}, {t_end}]",
                    path.display(),
                    bad.t
                )));
            }
            (ev, d)
        }
        None => (Vec::new(), 0),
    };

    Ok(Session {
        participant: participant.to_string(),
        gaze,
        eeg,
        frames,
        events,
        discarded_events,
        t_start,
        t_end,
    })
}
