//! Synthetic probe-caught datasets with a controllable mind-wandering effect.
//!
//! Mind-wandering windows get longer fixations and shorter saccades (gaze),
//! stronger alpha power with a slightly rotated mixing matrix (EEG) and
//! shifted frame-feature means. Effect sizes are in units of the
//! between-window SD of the latent quantity, so an effect of 0 yields
//! indistinguishable classes.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    DatasetManifest, EpochSidecar, FrameStream, LabelMode, Modality, ParticipantEntry, ScreenGeometry,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, fisher_yates, seeded, str_tag, Rng};

pub const GAZE_HZ: f64 = 60.0;
pub const EEG_HZ: f64 = 256.0;
pub const EEG_CHANNELS: [&str; 8] = ["Fz", "Cz", "Pz", "Oz", "F3", "F4", "P3", "P4"];
const PROBE_SPACING_MS: i64 = 25_000;
const FIRST_PROBE_MS: i64 = 15_000;
const HALF_MS: i64 = 10_000;
const EEG_EPOCH_S: f64 = 2.0;

const FIX_MEAN_MS: f64 = 250.0;
const FIX_SD_MS: f64 = 40.0;
const AMP_MEAN_DEG: f64 = 4.0;
const AMP_SD_DEG: f64 = 0.8;
const PARTICIPANT_SD: f64 = 0.25;

const FACE_COLUMNS: [&str; 5] = ["au04", "au12", "au45", "valence", "arousal"];
const PHYSIO_COLUMNS: [&str; 2] = ["hr", "eda"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthModality {
    Gaze,
    Eeg,
    Frames,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub participants: usize,
    pub windows_per_participant: usize,
    /// EEG epochs are costly; capped separately.
    pub eeg_epochs_per_participant: usize,
    pub effect_size: f64,
    /// Effect carried by post-probe windows; defaults to `effect_size`.
    pub post_effect_size: Option<f64>,
    pub seed: u64,
    pub modalities: Vec<SynthModality>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            participants: 40,
            windows_per_participant: 100,
            eeg_epochs_per_participant: 20,
            effect_size: 2.0,
            post_effect_size: None,
            seed: 0,
            modalities: vec![SynthModality::Gaze, SynthModality::Eeg, SynthModality::Frames],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let post = self.post_effect_size.unwrap_or(self.effect_size);
        if !(self.effect_size >= 0.0 && post >= 0.0 && self.effect_size.is_finite() && post.is_finite()) {
            return Err(Error::Invalid(format!(
                "effect sizes must be finite and >= 0, got {} / {post}",
                self.effect_size
            )));
        }
        if self.participants < 3 {
            return Err(Error::Invalid("need at least 3 participants for a three-way split".into()));
        }
        if self.windows_per_participant < 2 {
            return Err(Error::Invalid("need at least 2 windows per participant".into()));
        }
        if self.modalities.is_empty() {
            return Err(Error::Invalid("no modalities requested".into()));
        }
        Ok(())
    }

    fn post_effect(&self) -> f64 {
        self.post_effect_size.unwrap_or(self.effect_size)
    }
}

/// Manifest paths written by [`generate`], keyed by manifest name
/// (`gaze`, `eeg`, `frames`, `multimodal`).
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub manifests: BTreeMap<String, PathBuf>,
}

impl SynthOutput {
    pub fn manifest(&self, name: &str) -> Result<&Path> {
        self.manifests
            .get(name)
            .map(PathBuf::as_path)
            .ok_or_else(|| Error::Invalid(format!("no {name} manifest was generated")))
    }
}

pub const SCREEN: ScreenGeometry = ScreenGeometry {
    width_px: 1920.0,
    height_px: 1080.0,
    distance_mm: 600.0,
    pixel_pitch_mm: 0.25,
};

fn participant_id(i: usize) -> String {
    format!("s{i:03}")
}

fn probe_time(k: usize) -> i64 {
    FIRST_PROBE_MS + k as i64 * PROBE_SPACING_MS
}

/// Balanced probe answers in random order.
fn probe_labels(n: usize, rng: &mut Rng) -> Vec<u8> {
    let mut labels: Vec<u8> = (0..n).map(|i| (i < n / 2) as u8).collect();
    fisher_yates(&mut labels, rng);
    labels
}

fn normal(rng: &mut Rng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("finite sd").sample(rng)
}

struct Traits {
    fix_offset: f64,
    amp_offset: f64,
    face: Vec<f64>,
    physio: Vec<f64>,
    mixing: Vec<Vec<f64>>,
}

fn traits(rng: &mut Rng) -> Traits {
    let n = EEG_CHANNELS.len();
    let mixing = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 } + normal(rng, 0.0, 0.3)).collect())
        .collect();
    Traits {
        fix_offset: normal(rng, 0.0, PARTICIPANT_SD * FIX_SD_MS),
        amp_offset: normal(rng, 0.0, PARTICIPANT_SD * AMP_SD_DEG),
        face: FACE_COLUMNS.iter().map(|_| normal(rng, 0.0, PARTICIPANT_SD)).collect(),
        physio: PHYSIO_COLUMNS.iter().map(|_| normal(rng, 0.0, PARTICIPANT_SD)).collect(),
        mixing,
    }
}

#[derive(Clone, Copy)]
enum Segment {
    Fix { until: f64, x: f64, y: f64 },
    Sac { until: f64, from: (f64, f64), to: (f64, f64), start: f64 },
}

/// Gaze samples for `[t0, t1)` (plus `t1` itself when `closing`), driven by
/// one latent state drawn for the whole half-window.
fn gaze_half(out: &mut String, t0: i64, t1: i64, closing: bool, effect: f64, tr: &Traits, rng: &mut Rng) {
    let deg = SCREEN.deg_per_px();
    let fix_mean = (FIX_MEAN_MS + tr.fix_offset + effect * FIX_SD_MS + normal(rng, 0.0, FIX_SD_MS)).max(100.0);
    let amp_mean = (AMP_MEAN_DEG + tr.amp_offset - effect * AMP_SD_DEG + normal(rng, 0.0, AMP_SD_DEG)).max(1.5);
    let fix_dist = Gamma::new(4.0, fix_mean / 4.0).expect("positive shape");
    let (w, h) = (SCREEN.width_px, SCREEN.height_px);

    let mut segs = Vec::new();
    let mut pos = (rng.random_range(0.3 * w..0.7 * w), rng.random_range(0.3 * h..0.7 * h));
    let mut t = t0 as f64;
    while t < t1 as f64 {
        let d = fix_dist.sample(rng).max(80.0);
        t += d;
        segs.push(Segment::Fix {
            until: t,
            x: pos.0,
            y: pos.1,
        });
        let amp = normal(rng, amp_mean, 1.0).max(1.5);
        let theta = rng.random_range(0.0..2.0 * PI);
        let r = amp / deg;
        let mut to = (pos.0 + r * theta.cos(), pos.1 + r * theta.sin());
        if !(0.0..w).contains(&to.0) {
            to.0 = pos.0 - r * theta.cos();
        }
        if !(0.0..h).contains(&to.1) {
            to.1 = pos.1 - r * theta.sin();
        }
        let dur = (20.0 + 2.2 * amp).max(2000.0 / GAZE_HZ);
        segs.push(Segment::Sac {
            until: t + dur,
            from: pos,
            to,
            start: t,
        });
        t += dur;
        pos = to;
    }

    let jitter = 0.03 / deg;
    let step = 1000.0 / GAZE_HZ;
    let mut k = 0usize;
    let mut s = 0usize;
    loop {
        let ts = t0 + (k as f64 * step).round() as i64;
        if ts > t1 || (ts == t1 && !closing) {
            break;
        }
        k += 1;
        let tf = ts as f64;
        while s + 1 < segs.len() && tf >= seg_end(&segs[s]) {
            s += 1;
        }
        let (x, y) = match segs[s] {
            Segment::Fix { x, y, .. } => (x + normal(rng, 0.0, jitter), y + normal(rng, 0.0, jitter)),
            Segment::Sac { until, from, to, start } => {
                let f = ((tf - start) / (until - start)).clamp(0.0, 1.0);
                (from.0 + f * (to.0 - from.0), from.1 + f * (to.1 - from.1))
            }
        };
        if rng.random::<f64>() < 0.01 {
            let _ = writeln!(out, "{ts},,,0");
        } else {
            let _ = writeln!(out, "{ts},{x:.2},{y:.2},1");
        }
    }
}

fn seg_end(s: &Segment) -> f64 {
    match *s {
        Segment::Fix { until, .. } | Segment::Sac { until, .. } => until,
    }
}

/// One frame stream around every probe; the mind-wandering shift applies to
/// every column with alternating sign.
#[allow(clippy::too_many_arguments)]
fn frame_stream(
    columns: &[&str],
    offsets: &[f64],
    hz: f64,
    probes: &[(i64, u8)],
    effect: f64,
    post_effect: f64,
    rng: &mut Rng,
) -> String {
    let mut out = format!("t_ms,confidence,{}\n", columns.join(","));
    let step = 1000.0 / hz;
    for &(t, label) in probes {
        for (half, t0, e) in [(0, t - HALF_MS, effect), (1, t, post_effect)] {
            let shift = if label == 1 { e * 0.5 } else { 0.0 };
            let latent: Vec<f64> = offsets
                .iter()
                .enumerate()
                .map(|(j, o)| o + normal(rng, 0.0, 0.5) + if j % 2 == 0 { shift } else { -shift })
                .collect();
            let mut k = 0usize;
            loop {
                let ts = t0 + (k as f64 * step).round() as i64;
                if ts > t0 + HALF_MS || (ts == t0 + HALF_MS && half == 0) {
                    break;
                }
                k += 1;
                let conf: f64 = rng.random_range(0.6..1.0);
                let _ = write!(out, "{ts},{conf:.3}");
                for m in &latent {
                    let _ = write!(out, ",{:.4}", m + normal(rng, 0.0, 1.0));
                }
                out.push('\n');
            }
        }
    }
    out
}

/// Sources are broadband noise plus theta, alpha and beta rhythms; MW scales
/// alpha and rotates the first two mixing columns.
fn eeg_epoch(tr: &Traits, label: u8, effect: f64, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = EEG_CHANNELS.len();
    let len = (EEG_EPOCH_S * EEG_HZ) as usize;
    let mw = label == 1;
    let alpha_gain = if mw { 1.0 + 0.25 * effect } else { 1.0 };
    let theta = if mw { 0.05 * effect } else { 0.0 };
    let sources: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let rhythms = [
                (rng.random_range(4.5..7.5), 1.0),
                (rng.random_range(9.0..12.0), 2.0 * alpha_gain * if i % 2 == 0 { 1.0 } else { 0.6 }),
                (rng.random_range(15.0..25.0), 0.7),
            ];
            let phases: Vec<f64> = rhythms.iter().map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let mut prev = 0.0;
            (0..len)
                .map(|k| {
                    let t = k as f64 / EEG_HZ;
                    prev = 0.7 * prev + normal(rng, 0.0, 1.0);
                    rhythms
                        .iter()
                        .zip(&phases)
                        .map(|(&(f, a), p)| a * (2.0 * PI * f * t + p).sin())
                        .sum::<f64>()
                        + prev
                })
                .collect()
        })
        .collect();
    let (c, s) = (theta.cos(), theta.sin());
    let mut mixing = tr.mixing.clone();
    for row in &mut mixing {
        let (a, b) = (row[0], row[1]);
        row[0] = c * a - s * b;
        row[1] = s * a + c * b;
    }
    (0..n)
        .map(|ch| {
            (0..len)
                .map(|k| (0..n).map(|j| mixing[ch][j] * sources[j][k]).sum::<f64>() * 10.0)
                .collect()
        })
        .collect()
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn participant(cfg: &SynthConfig, out: &Path, i: usize) -> Result<ParticipantEntry> {
    let id = participant_id(i);
    let dir = out.join(&id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let base = derive_seed(cfg.seed, &[str_tag(&id)]);
    let tr = traits(&mut seeded(derive_seed(base, &[0])));
    let labels = probe_labels(cfg.windows_per_participant, &mut seeded(derive_seed(base, &[1])));
    let probes: Vec<(i64, u8)> = labels.iter().enumerate().map(|(k, &l)| (probe_time(k), l)).collect();
    let post = cfg.post_effect();
    let mut entry = ParticipantEntry {
        id: id.clone(),
        gaze: None,
        events: None,
        eeg: Vec::new(),
        frames: Vec::new(),
    };

    let mut events = String::from("t_ms,kind,label\n");
    for &(t, l) in &probes {
        let _ = writeln!(events, "{t},probe,{l}");
    }
    write(&dir.join("events.csv"), &events)?;
    entry.events = Some(PathBuf::from(&id).join("events.csv"));

    if cfg.modalities.contains(&SynthModality::Gaze) {
        let mut rng = seeded(derive_seed(base, &[2]));
        let mut body = String::from("t_ms,x_px,y_px,valid\n");
        for &(t, l) in &probes {
            let (pre, after) = if l == 1 { (cfg.effect_size, post) } else { (0.0, 0.0) };
            gaze_half(&mut body, t - HALF_MS, t, false, pre, &tr, &mut rng);
            gaze_half(&mut body, t, t + HALF_MS, true, after, &tr, &mut rng);
        }
        write(&dir.join("gaze.csv"), &body)?;
        entry.gaze = Some(PathBuf::from(&id).join("gaze.csv"));
    }

    if cfg.modalities.contains(&SynthModality::Frames) {
        let mut rng = seeded(derive_seed(base, &[3]));
        for (name, cols, offs, hz) in [
            ("face", &FACE_COLUMNS[..], &tr.face, 15.0),
            ("physio", &PHYSIO_COLUMNS[..], &tr.physio, 16.0),
        ] {
            let body = frame_stream(cols, offs, hz, &probes, cfg.effect_size, post, &mut rng);
            let file = format!("{name}.csv");
            write(&dir.join(&file), &body)?;
            entry.frames.push(FrameStream {
                name: name.into(),
                path: PathBuf::from(&id).join(file),
            });
        }
    }

    if cfg.modalities.contains(&SynthModality::Eeg) {
        let eeg_dir = dir.join("eeg");
        fs::create_dir_all(&eeg_dir).map_err(|e| Error::io(&eeg_dir, e))?;
        let mut rng = seeded(derive_seed(base, &[4]));
        let n = cfg.eeg_epochs_per_participant.min(probes.len());
        for (k, &(t, l)) in probes.iter().take(n).enumerate() {
            let data = eeg_epoch(&tr, l, cfg.effect_size, &mut rng);
            let mut body = String::new();
            for row in &data {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
                body.push_str(&line.join(","));
                body.push('\n');
            }
            let stem = format!("e{k:03}");
            write(&eeg_dir.join(format!("{stem}.csv")), &body)?;
            let side = EpochSidecar {
                rate_hz: EEG_HZ,
                t_end_ms: t,
                channels: EEG_CHANNELS.iter().map(|s| s.to_string()).collect(),
                label: Some(l),
            };
            let json = serde_json::to_string_pretty(&side).map_err(|e| Error::Invalid(e.to_string()))?;
            write(&eeg_dir.join(format!("{stem}.json")), &json)?;
            entry.eeg.push(PathBuf::from(&id).join("eeg").join(format!("{stem}.csv")));
        }
    }
    Ok(entry)
}

fn manifest_for(
    cfg: &SynthConfig,
    name: &str,
    modality: Modality,
    entries: &[ParticipantEntry],
) -> DatasetManifest {
    let keep_gaze = matches!(modality, Modality::Gaze | Modality::Multimodal);
    let keep_frames = matches!(modality, Modality::FrameTable | Modality::Multimodal);
    let keep_eeg = modality == Modality::Eeg;
    let mut rates = BTreeMap::new();
    if keep_gaze {
        rates.insert("gaze".to_string(), GAZE_HZ);
    }
    if keep_frames {
        rates.insert("face".to_string(), 15.0);
        rates.insert("physio".to_string(), 16.0);
    }
    if keep_eeg {
        rates.insert("eeg".to_string(), EEG_HZ);
    }
    DatasetManifest {
        dataset_id: format!("synth-{name}-e{}-s{}", cfg.effect_size, cfg.seed),
        modality,
        label_mode: LabelMode::ProbeCaught,
        window_duration_s: if keep_eeg { EEG_EPOCH_S } else { HALF_MS as f64 / 1000.0 },
        sampling_rate_hz: rates,
        screen_geometry: keep_gaze.then_some(SCREEN),
        eeg_channels: if keep_eeg {
            EEG_CHANNELS.iter().map(|s| s.to_string()).collect()
        } else {
            Vec::new()
        },
        participants: entries
            .iter()
            .map(|e| ParticipantEntry {
                id: e.id.clone(),
                gaze: if keep_gaze { e.gaze.clone() } else { None },
                events: if keep_eeg { None } else { e.events.clone() },
                eeg: if keep_eeg { e.eeg.clone() } else { Vec::new() },
                frames: if keep_frames { e.frames.clone() } else { Vec::new() },
            })
            .collect(),
        root: PathBuf::new(),
    }
}

/// Writes participant folders and one manifest per available modality under
/// `out`. Output is a pure function of `cfg`.
pub fn generate(cfg: &SynthConfig, out: &Path) -> Result<SynthOutput> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let entries = (0..cfg.participants)
        .into_par_iter()
        .map(|i| participant(cfg, out, i))
        .collect::<Result<Vec<_>>>()?;
    let has = |m| cfg.modalities.contains(&m);
    let mut wanted = Vec::new();
    if has(SynthModality::Gaze) {
        wanted.push(("gaze", Modality::Gaze));
    }
    if has(SynthModality::Eeg) {
        wanted.push(("eeg", Modality::Eeg));
    }
    if has(SynthModality::Frames) {
        wanted.push(("frames", Modality::FrameTable));
    }
    if has(SynthModality::Gaze) && has(SynthModality::Frames) {
        wanted.push(("multimodal", Modality::Multimodal));
    }
    let mut manifests = BTreeMap::new();
    for (name, modality) in wanted {
        let m = manifest_for(cfg, name, modality, &entries);
        let text = toml::to_string(&m).map_err(|e| Error::Invalid(e.to_string()))?;
        let path = out.join(format!("{name}.toml"));
        write(&path, &text)?;
        manifests.insert(name.to_string(), path);
    }
    Ok(SynthOutput { manifests })
}
