//! Gaze kinematics, velocity-threshold (I-VT) event detection and the 7-value
//! per-window gaze feature vector.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{GazeSample, ScreenGeometry};
use crate::error::{Error, Result};
use crate::windowing::LabeledWindow;

pub const GAZE_FEATURE_NAMES: [&str; 7] = [
    "fixation_rate",
    "fixation_duration_mean",
    "fixation_duration_sd",
    "saccade_rate",
    "saccade_amplitude_mean",
    "speed_mean",
    "invalid_fraction",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeedUnit {
    PxPerS,
    DegPerS,
}

impl fmt::Display for SpeedUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpeedUnit::PxPerS => "px/s",
            SpeedUnit::DegPerS => "deg/s",
        })
    }
}

/// A run of usable samples. Short invalid stretches inside it have been
/// bridged by interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicSegment {
    pub t: Vec<i64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Per-interval speed, `t.len() - 1` entries.
    pub speed: Vec<f64>,
    /// Forward difference of `speed` per second, padded to the same length.
    pub accel: Vec<f64>,
}

impl KinematicSegment {
    fn len(&self) -> usize {
        self.t.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicsSeries {
    pub segments: Vec<KinematicSegment>,
    pub unit: SpeedUnit,
    /// Multiplier from pixels to the distance unit of `unit`.
    pub scale: f64,
}

impl KinematicsSeries {
    pub fn speeds(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments.iter().flat_map(|s| s.speed.iter().copied())
    }

    pub fn mean_speed(&self) -> f64 {
        let (sum, n) = self.speeds().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GazeEventKind {
    Fixation,
    Saccade,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeEvent {
    pub kind: GazeEventKind,
    pub t_start: i64,
    pub t_end: i64,
    /// Fixation centroid in pixels; zero for saccades.
    pub centroid: (f64, f64),
    /// Saccade amplitude in the series distance unit; zero for fixations.
    pub amplitude: f64,
}

impl GazeEvent {
    pub fn duration_ms(&self) -> i64 {
        self.t_end - self.t_start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GazeConfig {
    /// Speed threshold in series units; `None` picks 30 deg/s or 1000 px/s.
    pub threshold: Option<f64>,
    pub min_fix_ms: f64,
    pub max_bridge_ms: i64,
    pub merge_gap_ms: i64,
    pub merge_dist_px: f64,
    pub merge_dist_deg: f64,
}

impl Default for GazeConfig {
    fn default() -> Self {
        GazeConfig {
            threshold: None,
            min_fix_ms: 60.0,
            max_bridge_ms: 75,
            merge_gap_ms: 20,
            merge_dist_px: 20.0,
            merge_dist_deg: 0.5,
        }
    }
}

impl GazeConfig {
    pub fn threshold_for(&self, unit: SpeedUnit) -> f64 {
        self.threshold.unwrap_or(match unit {
            SpeedUnit::DegPerS => 30.0,
            SpeedUnit::PxPerS => 1000.0,
        })
    }
}

/// Speed and acceleration of a gaze stream.
///
/// Invalid runs whose valid neighbours lie at most `max_bridge_ms` apart are
/// linearly interpolated; longer gaps split the series. Point speed is a
/// central difference (one-sided at segment ends) and each interval takes the
/// mean speed of its two end points.
pub fn kinematics(
    samples: &[GazeSample],
    geometry: Option<&ScreenGeometry>,
    max_bridge_ms: i64,
) -> Result<KinematicsSeries> {
    let n_valid = samples.iter().filter(|s| s.valid).count();
    if n_valid < 3 {
        return Err(Error::InsufficientSignal(format!(
            "kinematics needs at least 3 valid gaze samples, got {n_valid}"
        )));
    }
    let (unit, scale) = match geometry {
        Some(g) => (SpeedUnit::DegPerS, g.deg_per_px()),
        None => (SpeedUnit::PxPerS, 1.0),
    };

    let mut segments = Vec::new();
    let mut cur: Vec<(i64, f64, f64)> = Vec::new();
    let mut last_valid: Option<usize> = None;
    for (i, s) in samples.iter().enumerate() {
        if !s.valid {
            continue;
        }
        if let Some(j) = last_valid {
            let prev = samples[j];
            if s.t - prev.t > max_bridge_ms {
                segments.push(std::mem::take(&mut cur));
            } else {
                for mid in &samples[j + 1..i] {
                    let a = (mid.t - prev.t) as f64 / (s.t - prev.t) as f64;
                    cur.push((mid.t, prev.x + a * (s.x - prev.x), prev.y + a * (s.y - prev.y)));
                }
            }
        }
        cur.push((s.t, s.x, s.y));
        last_valid = Some(i);
    }
    segments.push(cur);

    let segments = segments
        .into_iter()
        .filter(|pts| pts.len() >= 2)
        .map(|pts| segment_kinematics(&pts, scale))
        .collect();
    Ok(KinematicsSeries {
        segments,
        unit,
        scale,
    })
}

fn segment_kinematics(pts: &[(i64, f64, f64)], scale: f64) -> KinematicSegment {
    let n = pts.len();
    let dist = |a: usize, b: usize| {
        let (dx, dy) = (pts[b].1 - pts[a].1, pts[b].2 - pts[a].2);
        (dx * dx + dy * dy).sqrt() * scale
    };
    let dt = |a: usize, b: usize| (pts[b].0 - pts[a].0) as f64 / 1000.0;
    let point: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            dist(a, b) / dt(a, b)
        })
        .collect();
    let speed: Vec<f64> = point.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let mut accel: Vec<f64> = (1..speed.len())
        .map(|i| (speed[i] - speed[i - 1]) / (0.5 * dt(i - 1, i + 1)))
        .collect();
    accel.push(accel.last().copied().unwrap_or(0.0));
    KinematicSegment {
        t: pts.iter().map(|p| p.0).collect(),
        x: pts.iter().map(|p| p.1).collect(),
        y: pts.iter().map(|p| p.2).collect(),
        speed,
        accel,
    }
}

#[derive(Debug, Clone, Copy)]
struct Run {
    fix: bool,
    // intervals a..b, i.e. points a..=b
    a: usize,
    b: usize,
}

fn centroid(seg: &KinematicSegment, r: Run) -> (f64, f64) {
    let n = (r.b - r.a + 1) as f64;
    let sx: f64 = seg.x[r.a..=r.b].iter().sum();
    let sy: f64 = seg.y[r.a..=r.b].iter().sum();
    (sx / n, sy / n)
}

fn merge_same(runs: Vec<Run>) -> Vec<Run> {
    let mut out: Vec<Run> = Vec::with_capacity(runs.len());
    for r in runs {
        match out.last_mut() {
            Some(last) if last.fix == r.fix => last.b = r.b,
            _ => out.push(r),
        }
    }
    out
}

/// I-VT event detection with default merge rules (20 ms, 20 px or 0.5 deg).
pub fn ivt_detect(series: &KinematicsSeries, threshold: f64, min_fix_ms: f64) -> Vec<GazeEvent> {
    let cfg = GazeConfig {
        threshold: Some(threshold),
        min_fix_ms,
        ..GazeConfig::default()
    };
    ivt_detect_with(series, &cfg)
}

pub fn ivt_detect_with(series: &KinematicsSeries, cfg: &GazeConfig) -> Vec<GazeEvent> {
    let threshold = cfg.threshold_for(series.unit);
    let merge_dist = match series.unit {
        SpeedUnit::DegPerS => cfg.merge_dist_deg,
        SpeedUnit::PxPerS => cfg.merge_dist_px,
    };
    let mut events = Vec::new();
    for seg in &series.segments {
        if seg.len() < 2 {
            continue;
        }
        let dur = |r: &Run| (seg.t[r.b] - seg.t[r.a]) as f64;
        let raw: Vec<Run> = seg
            .speed
            .iter()
            .enumerate()
            .map(|(i, &v)| Run {
                fix: v < threshold,
                a: i,
                b: i + 1,
            })
            .collect();
        let mut runs = merge_same(raw);
        if runs.len() == 1 && runs[0].fix && dur(&runs[0]) < cfg.min_fix_ms {
            continue;
        }
        for r in &mut runs {
            if r.fix && dur(r) < cfg.min_fix_ms {
                r.fix = false;
            }
        }
        let mut runs = merge_same(runs);

        let mut i = 0;
        while i + 2 < runs.len() {
            let (f1, s, f2) = (runs[i], runs[i + 1], runs[i + 2]);
            if f1.fix && !s.fix && f2.fix && (dur(&s) as i64) < cfg.merge_gap_ms {
                let (c1, c2) = (centroid(seg, f1), centroid(seg, f2));
                let d = ((c1.0 - c2.0).powi(2) + (c1.1 - c2.1).powi(2)).sqrt() * series.scale;
                if d < merge_dist {
                    runs[i].b = f2.b;
                    runs.drain(i + 1..i + 3);
                    // the grown fixation may now merge with its left neighbour
                    i = i.saturating_sub(2);
                    continue;
                }
            }
            i += 1;
        }

        for r in runs {
            let (t_start, t_end) = (seg.t[r.a], seg.t[r.b]);
            events.push(if r.fix {
                GazeEvent {
                    kind: GazeEventKind::Fixation,
                    t_start,
                    t_end,
                    centroid: centroid(seg, r),
                    amplitude: 0.0,
                }
            } else {
                let (dx, dy) = (seg.x[r.b] - seg.x[r.a], seg.y[r.b] - seg.y[r.a]);
                GazeEvent {
                    kind: GazeEventKind::Saccade,
                    t_start,
                    t_end,
                    centroid: (0.0, 0.0),
                    amplitude: (dx * dx + dy * dy).sqrt() * series.scale,
                }
            });
        }
    }
    events
}

#[derive(Debug, Clone, PartialEq)]
pub struct GazeFeatures {
    pub values: [f64; 7],
    /// Set when the window yielded no events or no usable kinematics.
    pub low_quality: bool,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - m).powi(2)).sum();
    (m, (ss / (n - 1.0)).sqrt())
}

/// Aggregates detected events into the fixed 7-value vector (see
/// [`GAZE_FEATURE_NAMES`]).
pub fn gaze_feature_vector(
    events: &[GazeEvent],
    series: Option<&KinematicsSeries>,
    samples: &[GazeSample],
    window: &LabeledWindow,
) -> Result<GazeFeatures> {
    let dur_s = window.duration_ms() as f64 / 1000.0;
    if !(dur_s > 0.0) {
        return Err(Error::Invalid("window duration must be positive".into()));
    }
    let fix: Vec<f64> = events
        .iter()
        .filter(|e| e.kind == GazeEventKind::Fixation)
        .map(|e| e.duration_ms() as f64)
        .collect();
    let amps: Vec<f64> = events
        .iter()
        .filter(|e| e.kind == GazeEventKind::Saccade)
        .map(|e| e.amplitude)
        .collect();
    let (fix_mean, fix_sd) = mean_sd(&fix);
    let (amp_mean, _) = mean_sd(&amps);
    let invalid = if samples.is_empty() {
        1.0
    } else {
        samples.iter().filter(|s| !s.valid).count() as f64 / samples.len() as f64
    };
    Ok(GazeFeatures {
        values: [
            fix.len() as f64 / dur_s,
            fix_mean,
            fix_sd,
            amps.len() as f64 / dur_s,
            amp_mean,
            series.map_or(0.0, KinematicsSeries::mean_speed),
            invalid,
        ],
        low_quality: events.is_empty() || series.is_none(),
    })
}

/// Full gaze path for one window: slice, kinematics, I-VT, aggregation.
pub fn window_features(
    samples: &[GazeSample],
    window: &LabeledWindow,
    geometry: Option<&ScreenGeometry>,
    cfg: &GazeConfig,
) -> Result<GazeFeatures> {
    let lo = samples.partition_point(|s| s.t < window.t_start);
    let hi = samples.partition_point(|s| s.t < window.t_end);
    let inside = &samples[lo..hi];
    match kinematics(inside, geometry, cfg.max_bridge_ms) {
        Ok(series) => {
            let events = ivt_detect_with(&series, cfg);
            gaze_feature_vector(&events, Some(&series), inside, window)
        }
        Err(Error::InsufficientSignal(_)) => gaze_feature_vector(&[], None, inside, window),
        Err(e) => Err(e),
    }
}

/// Writes `kind,t_start_ms,t_end_ms,amplitude` for visual audit.
pub fn write_event_dump(path: &Path, events: &[GazeEvent]) -> Result<()> {
    let mut body = String::from("kind,t_start_ms,t_end_ms,amplitude\n");
    for e in events {
        let kind = match e.kind {
            GazeEventKind::Fixation => "fixation",
            GazeEventKind::Saccade => "saccade",
        };
        body.push_str(&format!("{kind},{},{},{}\n", e.t_start, e.t_end, e.amplitude));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}
