//! Turns report events into labeled, fixed-duration signal windows.
//!
//! Pre-probe windows end at the report; post-probe windows start at the report
//! (plus an optional offset) and model re-engagement. Negative windows are
//! either probe answers with label 0 or, for self-caught datasets, segments
//! sampled away from every report.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelMode, ReportEvent, Session};
use crate::error::{Error, Result};
use crate::rng::{fisher_yates, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    PreProbe,
    PostProbe,
    Negative,
    ProbeNegative,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::PreProbe => "pre_probe",
            Provenance::PostProbe => "post_probe",
            Provenance::Negative => "negative",
            Provenance::ProbeNegative => "probe_negative",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pre_probe" => Provenance::PreProbe,
            "post_probe" => Provenance::PostProbe,
            "negative" => Provenance::Negative,
            "probe_negative" => Provenance::ProbeNegative,
            other => return Err(Error::Invalid(format!("unknown provenance {other:?}"))),
        })
    }
}

/// Which side of the report the positive windows come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Pre,
    Post,
}

impl SamplingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplingMode::Pre => "pre",
            SamplingMode::Post => "post",
        }
    }
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pre" => Ok(SamplingMode::Pre),
            "post" => Ok(SamplingMode::Post),
            other => Err(Error::Invalid(format!("unknown sampling mode {other:?}"))),
        }
    }
}

/// Half-open time range `[t_start, t_end)` in milliseconds with its label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub participant: String,
    pub t_start: i64,
    pub t_end: i64,
    pub label: u8,
    pub provenance: Provenance,
}

impl LabeledWindow {
    pub fn duration_ms(&self) -> i64 {
        self.t_end - self.t_start
    }
}

fn to_ms(seconds: f64) -> i64 {
    (seconds * 1000.0).round() as i64
}

pub fn extract_pre_probe(session: &Session, event: &ReportEvent, duration_s: f64) -> Result<LabeledWindow> {
    let d = to_ms(duration_s);
    if d <= 0 {
        return Err(Error::Invalid(format!("window duration must be positive, got {duration_s} s")));
    }
    let t_start = event.t - d;
    if t_start < session.t_start {
        return Err(Error::InsufficientSignal(format!(
            "{}: pre-probe window [{t_start}, {}) starts before session start {}",
            session.participant, event.t, session.t_start
        )));
    }
    Ok(LabeledWindow {
        participant: session.participant.clone(),
        t_start,
        t_end: event.t,
        label: event.label,
        provenance: if event.label == 1 {
            Provenance::PreProbe
        } else {
            Provenance::ProbeNegative
        },
    })
}

pub fn extract_post_probe(
    session: &Session,
    event: &ReportEvent,
    duration_s: f64,
    offset_s: f64,
) -> Result<LabeledWindow> {
    if event.label != 1 {
        return Err(Error::Invalid(
            "post-probe windows are only defined for mind-wandering reports".into(),
        ));
    }
    let d = to_ms(duration_s);
    if d <= 0 || offset_s < 0.0 {
        return Err(Error::Invalid(format!(
            "bad post-probe geometry: duration {duration_s} s, offset {offset_s} s"
        )));
    }
    let t_start = event.t + to_ms(offset_s);
    let t_end = t_start + d;
    if t_end > session.t_end {
        return Err(Error::InsufficientSignal(format!(
            "{}: post-probe window [{t_start}, {t_end}) ends after session end {}",
            session.participant, session.t_end
        )));
    }
    Ok(LabeledWindow {
        participant: session.participant.clone(),
        t_start,
        t_end,
        label: 1,
        provenance: Provenance::PostProbe,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSample {
    pub windows: Vec<LabeledWindow>,
    pub requested: usize,
    /// Set when fewer than `requested` eligible windows existed.
    pub exhausted: bool,
}

/// Number of negatives `k` such that `positives / (positives + k)` is as close
/// as possible to `target_ratio`.
pub fn negatives_for_ratio(positives: usize, target_ratio: f64) -> usize {
    if positives == 0 {
        return 0;
    }
    let p = positives as f64;
    let ideal = p * (1.0 - target_ratio) / target_ratio;
    let lo = ideal.floor().max(0.0) as usize;
    let err = |k: usize| (p / (p + k as f64) - target_ratio).abs();
    if err(lo + 1) < err(lo) {
        lo + 1
    } else {
        lo
    }
}

/// Samples negative windows on a 1 s start-time grid, away from every
/// mind-wandering report by at least `min_gap_s`. Chosen windows do not
/// overlap each other.
pub fn sample_negatives(
    session: &Session,
    events: &[ReportEvent],
    duration_s: f64,
    target_ratio: f64,
    min_gap_s: f64,
    seed: u64,
) -> Result<NegativeSample> {
    if !(target_ratio > 0.0 && target_ratio < 1.0) {
        return Err(Error::Invalid(format!("target_ratio must be in (0, 1), got {target_ratio}")));
    }
    let d = to_ms(duration_s);
    let gap = to_ms(min_gap_s);
    let positives: Vec<i64> = events.iter().filter(|e| e.label == 1).map(|e| e.t).collect();
    let requested = negatives_for_ratio(positives.len(), target_ratio);

    let mut candidates = Vec::new();
    let mut s = session.t_start;
    while s + d <= session.t_end {
        let clear = positives.iter().all(|&t| s + d <= t - gap || s >= t + gap);
        if clear {
            candidates.push(s);
        }
        s += 1000;
    }
    fisher_yates(&mut candidates, &mut seeded(seed));
    let mut chosen: Vec<i64> = Vec::with_capacity(requested);
    for c in candidates {
        if chosen.len() == requested {
            break;
        }
        if chosen.iter().all(|&o| c + d <= o || c >= o + d) {
            chosen.push(c);
        }
    }
    chosen.sort_unstable();
    let exhausted = chosen.len() < requested;
    if exhausted {
        log::warn!(
            "{}: only {} of {requested} negative windows available",
            session.participant,
            chosen.len()
        );
    }
    Ok(NegativeSample {
        windows: chosen
            .into_iter()
            .map(|t| LabeledWindow {
                participant: session.participant.clone(),
                t_start: t,
                t_end: t + d,
                label: 0,
                provenance: Provenance::Negative,
            })
            .collect(),
        requested,
        exhausted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub duration_s: f64,
    pub post_offset_s: f64,
    pub target_ratio: f64,
    pub min_gap_s: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            duration_s: 10.0,
            post_offset_s: 0.0,
            target_ratio: 0.3,
            min_gap_s: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<LabeledWindow>,
    /// Events skipped because their window would leave the session.
    pub skipped: usize,
    pub exhausted: bool,
}

/// All labeled windows for one session.
///
/// Positives are pre-probe windows (`Pre`) or post-probe windows (`Post`).
/// Negatives do not depend on the mode: label-0 probe answers for
/// probe-caught data, sampled segments for self-caught data.
pub fn build_windows(
    session: &Session,
    label_mode: LabelMode,
    mode: SamplingMode,
    cfg: &WindowConfig,
    seed: u64,
) -> Result<WindowSet> {
    let mut windows = Vec::new();
    let mut skipped = 0;
    let mut exhausted = false;
    for ev in &session.events {
        let w = match (ev.label, mode) {
            (1, SamplingMode::Pre) => extract_pre_probe(session, ev, cfg.duration_s),
            (1, SamplingMode::Post) => extract_post_probe(session, ev, cfg.duration_s, cfg.post_offset_s),
            (_, _) if label_mode == LabelMode::ProbeCaught => extract_pre_probe(session, ev, cfg.duration_s),
            _ => continue,
        };
        match w {
            Ok(w) => windows.push(w),
            Err(Error::InsufficientSignal(msg)) => {
                log::debug!("skipping event: {msg}");
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if label_mode == LabelMode::SelfCaught {
        let positives: Vec<ReportEvent> = session.events.iter().filter(|e| e.label == 1).copied().collect();
        // the exclusion zone also covers post-probe windows, so pre and post
        // runs share the same negatives
        let gap = cfg.min_gap_s.max(cfg.post_offset_s + cfg.duration_s);
        let neg = sample_negatives(session, &positives, cfg.duration_s, cfg.target_ratio, gap, seed)?;
        exhausted = neg.exhausted;
        windows.extend(neg.windows);
    }
    windows.sort_by(|a, b| (a.t_start, a.t_end).cmp(&(b.t_start, b.t_end)));
    Ok(WindowSet {
        windows,
        skipped,
        exhausted,
    })
}

/// Writes `participant,t_start_ms,t_end_ms,label,provenance`.
pub fn write_window_index(path: &Path, windows: &[LabeledWindow]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut body = String::from("participant,t_start_ms,t_end_ms,label,provenance\n");
    for w in windows {
        body.push_str(&format!(
            "{},{},{},{},{}\n",
            w.participant, w.t_start, w.t_end, w.label, w.provenance
        ));
    }
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}
