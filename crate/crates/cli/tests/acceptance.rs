//! Acceptance suite. Prints one `criterion N: PASS|FAIL` line per check and
//! exits non-zero if any fails.
//!
//! Run a subset with `cargo test -p mwbench-cli --test acceptance -- 3 5`.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use mwbench_cli::{cmd_benchmark, cmd_synth};
use mwbench_core::corpus::{person_split, ParticipantEntry, ScreenGeometry, DEFAULT_RATIOS};
use mwbench_core::eeg::spd::riemann_distance;
use mwbench_core::eeg::{karcher_mean, tangent_project, BandName, EegConfig, EegReference, SpdMatrix};
use mwbench_core::evaluation::{above_chance, auc, chance_f1, confusion_metrics, BenchmarkConfig};
use mwbench_core::federated::{
    fedavg_aggregate, init_seed, local_seed, run_federated, turbosvm_aggregate, ClassEmbedding, ClientShard,
    RoundConfig, Strategy,
};
use mwbench_core::gaze::{ivt_detect_with, kinematics, window_features, GazeConfig, GazeEventKind};
use mwbench_core::models::{mlp_gradient, Mlp, MlpArchitecture, Standardizer};
use mwbench_core::pipeline::{PartitionedData, TuningView};
use mwbench_core::rng::{seeded, Rng};
use mwbench_core::synth::{SynthConfig, SynthModality};
use mwbench_core::tuning::{grid_search_cv, Grid, ModelChoice, TuningResult};
use mwbench_core::{
    DatasetManifest, EegEpoch, FeatureMatrix, GazeSample, Hyperparams, LabelMode, LabeledWindow, Matrix, Modality,
    ModelSpec, Provenance, Result as CoreResult, SamplingMode,
};

type Check = fn() -> Result<String, String>;

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let checks: [(u32, u64, Check); 10] = [
        (1, 10, metrics_oracle),
        (2, 1, above_chance_consistency),
        (3, 30, riemannian_suite),
        (4, 10, gaze_suite),
        (5, 30, gradient_check),
        (6, 60, federated_equivalence),
        (7, 30, protocol_integrity),
        (8, 120, end_to_end),
        (9, 120, ablation_direction),
        (10, 120, reproducibility),
    ];
    let mut failed = 0;
    for (id, limit, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| f == &id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let slow = took > Duration::from_secs(limit);
        let (ok, detail) = match outcome {
            Ok(d) if !slow => (true, d),
            Ok(d) => (false, format!("{d}; exceeded {limit} s")),
            Err(e) => (false, e),
        };
        if !ok {
            failed += 1;
        }
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("criterion {id}: {verdict} [{:.2} s / {limit} s] {detail}", took.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn core<T>(r: CoreResult<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

// ---------------------------------------------------------------- criterion 1

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Frac(u64, u64);

impl Frac {
    fn new(n: u64, d: u64) -> Option<Frac> {
        if d == 0 {
            return None;
        }
        let g = gcd(n, d);
        Some(Frac(n / g, d / g))
    }

    fn value(self) -> f64 {
        self.0 as f64 / self.1 as f64
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

/// F1 as the harmonic mean of two fractions, kept exact.
fn harmonic(p: Frac, r: Frac) -> Option<Frac> {
    // 2 (a/b)(c/d) / (a/b + c/d) = 2ac / (ad + cb)
    Frac::new(2 * p.0 * r.0, p.0 * r.1 + r.0 * p.1).filter(|_| p.0 + r.0 > 0)
}

fn metrics_oracle() -> Result<String, String> {
    let mut pairs = 0u64;
    for len in 1..=8usize {
        for ybits in 0u32..1 << len {
            let y: Vec<u8> = (0..len).map(|i| (ybits >> i & 1) as u8).collect();
            for pbits in 0u32..1 << len {
                let p: Vec<u8> = (0..len).map(|i| (pbits >> i & 1) as u8).collect();
                let (mut tp, mut fp, mut tn, mut fneg) = (0u64, 0u64, 0u64, 0u64);
                for i in 0..len {
                    match (y[i], p[i]) {
                        (1, 1) => tp += 1,
                        (0, 1) => fp += 1,
                        (0, 0) => tn += 1,
                        _ => fneg += 1,
                    }
                }
                let precision = Frac::new(tp, tp + fp);
                let recall = Frac::new(tp, tp + fneg);
                let f1 = match (precision, recall) {
                    (Some(a), Some(b)) => harmonic(a, b).map_or(0.0, Frac::value),
                    _ => 0.0,
                };
                let want = (
                    Frac::new(tp + tn, len as u64).map_or(0.0, Frac::value),
                    precision.map_or(0.0, Frac::value),
                    recall.map_or(0.0, Frac::value),
                    f1,
                );
                let m = core(confusion_metrics(&y, &p))?;
                let got = (m.accuracy, m.precision, m.recall, m.f1);
                ensure(got == want, || format!("y={y:?} p={p:?}: got {got:?}, oracle {want:?}"))?;
                ensure(
                    (m.counts.tp, m.counts.fp, m.counts.tn, m.counts.fneg)
                        == (tp as usize, fp as usize, tn as usize, fneg as usize),
                    || format!("counts differ for y={y:?} p={p:?}"),
                )?;
                pairs += 1;
            }
        }
    }

    let mut rng = seeded(1);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let n = rng.random_range(2..80);
        let mut y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        y[0] = 0;
        y[1] = 1;
        y.shuffle(&mut rng);
        // every other vector is coarsely quantized so ties are common
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if k % 2 == 0 {
                    rng.random_range(0..6) as f64 / 5.0
                } else {
                    normal(&mut rng)
                }
            })
            .collect();
        let mut wins = 0.0;
        let (mut np, mut nn) = (0.0, 0.0);
        for i in 0..n {
            if y[i] == 1 {
                np += 1.0;
            } else {
                nn += 1.0;
            }
        }
        for i in 0..n {
            for j in 0..n {
                if y[i] == 1 && y[j] == 0 {
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        let oracle = wins / (np * nn);
        let got = core(auc(&y, &scores))?;
        worst = worst.max((got - oracle).abs());
    }
    ensure(worst <= 1e-12, || format!("AUC deviates by {worst:e}"))?;
    Ok(format!("{pairs} label pairs exact; AUC max deviation {worst:e} over 1000 vectors"))
}

// ---------------------------------------------------------------- criterion 2

fn above_chance_consistency() -> Result<String, String> {
    let (f1, ac): (f64, f64) = (0.635, 0.297);
    let c = (f1 - ac) / (1.0 - ac);
    ensure((c - 0.4808).abs() < 5e-5, || format!("inverted chance {c}"))?;
    let back = core(above_chance(f1, 0.4808, 1.0))?;
    ensure((back - ac).abs() <= 1e-3, || format!("AC from (0.635, 0.4808) = {back}"))?;

    let mut rng = seeded(2);
    for _ in 0..200 {
        let n = rng.random_range(2..300);
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.3))).collect();
        labels[0] = 0;
        labels[1] = 1;
        let fm = core(FeatureMatrix::new(
            Matrix::zeros(n, 1),
            labels.clone(),
            vec!["p".into(); n],
            vec![Provenance::Negative; n],
            vec!["f".into()],
        ))?;
        let counted = labels.iter().filter(|&&l| l == 1).count() as f64 / n as f64;
        let chance = core(chance_f1(fm.prevalence()))?;
        ensure(chance == counted, || format!("chance {chance} vs prevalence {counted}"))?;
    }
    Ok(format!("c = {c:.6}; AC(0.635, 0.4808) = {back:.6}; chance equals counted prevalence on 200 splits"))
}

// ---------------------------------------------------------------- criterion 3

fn random_spd(n: usize, rng: &mut Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| normal(rng));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.5
}

fn frob(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn riemannian_suite() -> Result<String, String> {
    let a = core(SpdMatrix::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0]))))?;
    let b = core(SpdMatrix::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0]))))?;
    let mean = core(karcher_mean(&[a, b], 1e-10, 100))?;
    let want = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 2.0]));
    let err = (mean.matrix() - &want).abs().max();
    ensure(err < 1e-6, || format!("karcher mean off by {err:e}"))?;

    let mut rng = seeded(3);
    let r = core(SpdMatrix::new(random_spd(4, &mut rng)))?;
    let self_norm = frob(&core(tangent_project(&r, &r))?);
    ensure(self_norm < 1e-12, || format!("tangent_project(ref, ref) norm {self_norm:e}"))?;

    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let c = random_spd(4, &mut rng);
        let r = random_spd(4, &mut rng);
        let w = DMatrix::from_fn(4, 4, |i, j| rng.random_range(-1.0..1.0) + if i == j { 2.0 } else { 0.0 });
        let plain = frob(&core(tangent_project(&core(SpdMatrix::new(c.clone()))?, &core(SpdMatrix::new(r.clone()))?))?);
        let wc = core(SpdMatrix::new(&w * &c * w.transpose()))?;
        let wr = core(SpdMatrix::new(&w * &r * w.transpose()))?;
        let moved = frob(&core(tangent_project(&wc, &wr))?);
        let dist = riemann_distance(&core(SpdMatrix::new(c))?, &core(SpdMatrix::new(r))?);
        worst = worst.max((plain - moved).abs()).max((plain - dist).abs());
    }
    ensure(worst < 1e-8, || format!("affine invariance broken by {worst:e}"))?;

    let channels: Vec<String> = (0..8).map(|i| format!("ch{i}")).collect();
    let epochs: Vec<EegEpoch> = (0..6)
        .map(|k| EegEpoch {
            channels: channels.clone(),
            rate_hz: 256.0,
            t_end: 2000 * (k + 1),
            data: DMatrix::from_fn(8, 512, |_, _| normal(&mut rng)),
            label: Some((k % 2) as u8),
        })
        .collect();
    let one = EegConfig {
        bands: vec![BandName::Alpha],
        ..EegConfig::default()
    };
    let mut dims = Vec::new();
    for cfg in [one, EegConfig::default()] {
        let reference = core(EegReference::fit(&epochs, &cfg))?;
        let f = core(reference.features(&epochs[0]))?;
        ensure(f.len() == reference.dim(), || "feature length differs from dim".into())?;
        dims.push(reference.dim());
    }
    ensure(dims == [36, 144], || format!("EEG dims {dims:?}"))?;
    Ok(format!("karcher error {err:e}; invariance worst {worst:e}; dims {dims:?}"))
}

// ---------------------------------------------------------------- criterion 4

/// Random 60 Hz trace with fixations, saccades, short dropouts and long gaps.
fn random_trace(rng: &mut Rng) -> Vec<GazeSample> {
    let mut out = Vec::new();
    let (mut x, mut y) = (rng.random_range(200.0..1700.0), rng.random_range(200.0..900.0));
    let mut k: i64 = 0;
    let n_events = rng.random_range(4..14);
    for _ in 0..n_events {
        if rng.random_bool(0.1) {
            k += rng.random_range(6..15);
        }
        let fix_len = rng.random_range(1..25);
        for _ in 0..fix_len {
            let valid = !rng.random_bool(0.04);
            out.push(GazeSample {
                t: (k as f64 * 1000.0 / 60.0).round() as i64,
                x: x + 1.5 * normal(rng),
                y: y + 1.5 * normal(rng),
                valid,
            });
            k += 1;
        }
        let (tx, ty) = (rng.random_range(100.0..1800.0), rng.random_range(100.0..1000.0));
        let steps = rng.random_range(1..5);
        for s in 1..=steps {
            let a = s as f64 / steps as f64;
            out.push(GazeSample {
                t: (k as f64 * 1000.0 / 60.0).round() as i64,
                x: x + a * (tx - x),
                y: y + a * (ty - y),
                valid: true,
            });
            k += 1;
        }
        x = tx;
        y = ty;
    }
    out
}

#[derive(Debug, PartialEq)]
struct OracleEvent {
    fixation: bool,
    t_start: i64,
    t_end: i64,
}

/// Threshold labeling written from scratch: bridge short gaps linearly, split
/// at long ones, label each inter-sample interval by its speed and collapse
/// runs of equal labels.
fn oracle_ivt(samples: &[GazeSample], scale: f64, threshold: f64, max_bridge: i64) -> Vec<OracleEvent> {
    let valid: Vec<&GazeSample> = samples.iter().filter(|s| s.valid).collect();
    let mut segments: Vec<Vec<(i64, f64, f64)>> = vec![Vec::new()];
    for (n, s) in valid.iter().enumerate() {
        if n > 0 {
            let p = valid[n - 1];
            if s.t - p.t > max_bridge {
                segments.push(Vec::new());
            } else {
                for m in samples.iter().filter(|m| m.t > p.t && m.t < s.t) {
                    let a = (m.t - p.t) as f64 / (s.t - p.t) as f64;
                    segments.last_mut().unwrap().push((m.t, p.x + a * (s.x - p.x), p.y + a * (s.y - p.y)));
                }
            }
        }
        segments.last_mut().unwrap().push((s.t, s.x, s.y));
    }
    let mut events = Vec::new();
    for pts in segments.iter().filter(|p| p.len() >= 2) {
        let n = pts.len();
        let pv: Vec<f64> = (0..n)
            .map(|i| {
                let (a, b) = (if i == 0 { 0 } else { i - 1 }, if i + 1 == n { n - 1 } else { i + 1 });
                let d = ((pts[b].1 - pts[a].1).powi(2) + (pts[b].2 - pts[a].2).powi(2)).sqrt() * scale;
                d / ((pts[b].0 - pts[a].0) as f64 / 1000.0)
            })
            .collect();
        let mut start = 0;
        for i in 0..n - 1 {
            let fix = 0.5 * (pv[i] + pv[i + 1]) < threshold;
            let next_fix = i + 2 < n && 0.5 * (pv[i + 1] + pv[i + 2]) < threshold;
            if i + 2 >= n || next_fix != fix {
                events.push(OracleEvent {
                    fixation: fix,
                    t_start: pts[start].0,
                    t_end: pts[i + 1].0,
                });
                start = i + 1;
            }
        }
    }
    events
}

const GEOMETRY: ScreenGeometry = ScreenGeometry {
    width_px: 1920.0,
    height_px: 1080.0,
    distance_mm: 600.0,
    pixel_pitch_mm: 0.25,
};

fn gaze_suite() -> Result<String, String> {
    let cfg = GazeConfig {
        min_fix_ms: 0.0,
        merge_gap_ms: 0,
        ..GazeConfig::default()
    };
    let mut rng = seeded(4);
    let mut n_events = 0;
    for trace in 0..100 {
        let samples = random_trace(&mut rng);
        let geometry = (trace % 2 == 0).then_some(&GEOMETRY);
        let series = core(kinematics(&samples, geometry, cfg.max_bridge_ms))?;
        let threshold = cfg.threshold_for(series.unit);
        let got: Vec<OracleEvent> = ivt_detect_with(&series, &cfg)
            .iter()
            .map(|e| OracleEvent {
                fixation: e.kind == GazeEventKind::Fixation,
                t_start: e.t_start,
                t_end: e.t_end,
            })
            .collect();
        let scale = geometry.map_or(1.0, ScreenGeometry::deg_per_px);
        let want = oracle_ivt(&samples, scale, threshold, cfg.max_bridge_ms);
        ensure(got == want, || format!("trace {trace}: detector {got:?} vs oracle {want:?}"))?;
        n_events += got.len();
    }

    let mut worst: f64 = 0.0;
    for trace in 0..20 {
        let samples = random_trace(&mut rng);
        let window = LabeledWindow {
            participant: "p".into(),
            t_start: samples[0].t,
            t_end: samples.last().unwrap().t + 1,
            label: 1,
            provenance: Provenance::PreProbe,
        };
        let (dx, dy) = (rng.random_range(-300.0..300.0), rng.random_range(-300.0..300.0));
        let moved: Vec<GazeSample> = samples.iter().map(|s| GazeSample { x: s.x + dx, y: s.y + dy, ..*s }).collect();
        let geometry = (trace % 2 == 0).then_some(&GEOMETRY);
        let a = core(window_features(&samples, &window, geometry, &GazeConfig::default()))?;
        let b = core(window_features(&moved, &window, geometry, &GazeConfig::default()))?;
        for (u, v) in a.values.iter().zip(&b.values) {
            worst = worst.max((u - v).abs() / u.abs().max(1.0));
        }
    }
    ensure(worst <= 1e-9, || format!("translation changed features by {worst:e}"))?;

    let still: Vec<GazeSample> = (0..120)
        .map(|k| GazeSample {
            t: (k as f64 * 1000.0 / 60.0).round() as i64,
            x: 960.0,
            y: 540.0,
            valid: true,
        })
        .collect();
    let series = core(kinematics(&still, Some(&GEOMETRY), 75))?;
    let events = ivt_detect_with(&series, &GazeConfig::default());
    let fix = events.iter().filter(|e| e.kind == GazeEventKind::Fixation).count();
    let sac = events.len() - fix;
    ensure((fix, sac) == (1, 0), || format!("stationary trace gave {fix} fixations, {sac} saccades"))?;
    Ok(format!("100 traces ({n_events} events) match; translation worst {worst:e}; stationary 1/0"))
}

// ---------------------------------------------------------------- criterion 5

/// Training-mode loss from the flat parameter layout, plus the sign pattern of
/// every ReLU input so kink crossings can be detected.
fn oracle_loss(arch: &MlpArchitecture, p: &[f64], x: &Matrix, y: &[u8]) -> (f64, Vec<bool>) {
    let m = x.rows();
    let mut h: Vec<Vec<f64>> = (0..m).map(|i| x.row(i).to_vec()).collect();
    let mut off = 0;
    let mut nin = arch.input_dim;
    let mut signs = Vec::new();
    for _ in 0..arch.hidden_layers {
        let o = arch.hidden_width;
        let (w, b, gamma, beta) = (off, off + o * nin, off + o * nin + o, off + o * nin + 2 * o);
        let z: Vec<Vec<f64>> = h
            .iter()
            .map(|hi| (0..o).map(|j| p[b + j] + (0..nin).map(|t| p[w + j * nin + t] * hi[t]).sum::<f64>()).collect())
            .collect();
        let mut next = vec![vec![0.0; o]; m];
        for j in 0..o {
            let mean = z.iter().map(|r| r[j]).sum::<f64>() / m as f64;
            let var = z.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / m as f64;
            for i in 0..m {
                let a = p[gamma + j] * (z[i][j] - mean) / (var + 1e-5).sqrt() + p[beta + j];
                signs.push(a > 0.0);
                next[i][j] = a.max(0.0);
            }
        }
        h = next;
        off += o * nin + 5 * o;
        nin = o;
    }
    let loss = h
        .iter()
        .zip(y)
        .map(|(hi, &t)| {
            let z = p[off + nin] + (0..nin).map(|k| p[off + k] * hi[k]).sum::<f64>();
            let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
            softplus - t as f64 * z
        })
        .sum::<f64>()
        / m as f64;
    (loss, signs)
}

fn gradient_check() -> Result<String, String> {
    let mut rng = seeded(5);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let (mut checked, mut skipped) = (0, 0);
    for config in 0..20 {
        let arch = MlpArchitecture {
            input_dim: rng.random_range(1..7),
            hidden_layers: config % 4,
            hidden_width: rng.random_range(1..7),
            dropout: 0.0,
        };
        let m = rng.random_range(3..13);
        let x = core(Matrix::from_rows(
            &(0..m).map(|_| (0..arch.input_dim).map(|_| normal(&mut rng)).collect()).collect::<Vec<Vec<f64>>>(),
        ))?;
        let y: Vec<u8> = (0..m).map(|_| rng.random_range(0..2)).collect();
        let mut params = Mlp::init(&arch, config as u64).params;
        for v in params.iter_mut() {
            *v += 0.3 * normal(&mut rng);
        }
        let (loss, grad) = core(mlp_gradient(&arch, &params, &x, &y))?;
        let (oracle, _) = oracle_loss(&arch, &params, &x, &y);
        ensure((loss - oracle).abs() < 1e-12, || format!("config {config}: loss {loss} vs oracle {oracle}"))?;
        for k in 0..params.len() {
            let mut plus = params.clone();
            plus[k] += h;
            let mut minus = params.clone();
            minus[k] -= h;
            let (lp, sp) = oracle_loss(&arch, &plus, &x, &y);
            let (lm, sm) = oracle_loss(&arch, &minus, &x, &y);
            if sp != sm {
                // a ReLU input changed sign inside the stencil
                skipped += 1;
                continue;
            }
            let fd = (lp - lm) / (2.0 * h);
            let rel = (grad[k] - fd).abs() / grad[k].abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:e} over {checked} coordinates ({skipped} straddling a ReLU kink)"))
}

// ---------------------------------------------------------------- criterion 6

fn signal_rows(n: usize, dim: usize, participant: &str, rng: &mut Rng) -> FeatureMatrix {
    let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let rows: Vec<Vec<f64>> = y
        .iter()
        .map(|&l| (0..dim).map(|d| normal(rng) + if d == 0 { 1.5 * l as f64 } else { 0.0 } + 3.0).collect())
        .collect();
    FeatureMatrix::new(
        Matrix::from_rows(&rows).unwrap(),
        y,
        vec![participant.to_string(); n],
        vec![Provenance::PreProbe; n],
        (0..dim).map(|d| format!("f{d}")).collect(),
    )
    .unwrap()
}

fn federated_equivalence() -> Result<String, String> {
    let mut rng = seeded(6);
    let train = signal_rows(41, 5, "p0", &mut rng);
    let val = signal_rows(20, 5, "p1", &mut rng);
    let shard = ClientShard {
        participant: "p0".into(),
        x: train.x.clone(),
        y: train.labels.clone(),
    };
    let cfg = RoundConfig {
        rounds: 6,
        local_epochs: 2,
        batch: 8,
        lr: 0.05,
        patience: 100,
        hidden_width: 8,
        hidden_layers: Some(2),
        dropout: 0.1,
        seed: 7,
        ..RoundConfig::default()
    };
    let run = core(run_federated(std::slice::from_ref(&shard), &val, &cfg, Strategy::Fedavg))?;
    ensure(run.log.len() == cfg.rounds, || format!("stopped after {} rounds", run.log.len()))?;

    let st = Standardizer::fit(&shard.x);
    let xs = core(st.transform(&shard.x))?;
    let mut net = Mlp::init(&cfg.architecture(5), init_seed(cfg.seed));
    for round in 0..cfg.rounds {
        let mut r = seeded(local_seed(cfg.seed, round, "p0"));
        core(net.train_epochs(&xs, &shard.y, cfg.lr, cfg.batch, cfg.local_epochs, &mut r))?;
    }
    let delta = run
        .final_params
        .iter()
        .zip(&net.params)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(delta < 1e-9, || format!("federated vs centralized max |delta| {delta:e}"))?;

    let avg = core(fedavg_aggregate(&[(vec![0.0], 1), (vec![4.0], 3)]))?;
    ensure(avg == [3.0], || format!("fedavg example gave {avg:?}"))?;

    let arch = cfg.architecture(5);
    let base = Mlp::init(&arch, 11);
    let emb = ClassEmbedding::compute(&base, &xs, &shard.y);
    let updates: Vec<(Vec<f64>, usize)> = [3, 5, 9].iter().map(|&c| (base.params.clone(), c)).collect();
    let turbo_cfg = RoundConfig {
        server_lr: 0.5,
        logits_lr: 1e-3,
        ..cfg.clone()
    };
    let prev = Mlp::init(&arch, 12).params;
    let agg = core(turbosvm_aggregate(&prev, &arch, &updates, &vec![emb; 3], &turbo_cfg))?;
    let plain = core(fedavg_aggregate(&updates))?;
    let bitwise = agg.params.iter().zip(&plain).all(|(a, b)| a.to_bits() == b.to_bits());
    ensure(agg.fallback && bitwise, || "TurboSVM on identical embeddings differs from FedAvg".into())?;
    Ok(format!("single-client max |delta| {delta:e}; fedavg example 3.0; TurboSVM fallback bitwise equal"))
}

// ---------------------------------------------------------------- criterion 7

fn random_manifest(rng: &mut Rng) -> DatasetManifest {
    let n = rng.random_range(3..120);
    let mut ids = BTreeSet::new();
    while ids.len() < n {
        let len = rng.random_range(1..8);
        let id: String = (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
        ids.insert(id);
    }
    let mut ids: Vec<String> = ids.into_iter().collect();
    ids.shuffle(rng);
    DatasetManifest {
        dataset_id: "random".into(),
        modality: Modality::Gaze,
        label_mode: LabelMode::ProbeCaught,
        window_duration_s: 10.0,
        sampling_rate_hz: Default::default(),
        screen_geometry: None,
        eeg_channels: Vec::new(),
        participants: ids
            .into_iter()
            .map(|id| ParticipantEntry {
                id,
                gaze: None,
                events: None,
                eeg: Vec::new(),
                frames: Vec::new(),
            })
            .collect(),
        root: Default::default(),
    }
}

fn protocol_integrity() -> Result<String, String> {
    let mut rng = seeded(7);
    for trial in 0..1000 {
        let m = random_manifest(&mut rng);
        let ids = m.participant_ids();
        let seed = rng.random::<u64>();
        let s = core(person_split(&ids, DEFAULT_RATIOS, seed))?;
        let parts: [BTreeSet<&String>; 3] = [
            s.train.iter().collect(),
            s.val.iter().collect(),
            s.test.iter().collect(),
        ];
        let total = s.train.len() + s.val.len() + s.test.len();
        let union: BTreeSet<&String> = parts.iter().flatten().copied().collect();
        ensure(
            parts[0].is_disjoint(&parts[1]) && parts[0].is_disjoint(&parts[2]) && parts[1].is_disjoint(&parts[2]),
            || format!("manifest {trial}: participant leaked across partitions"),
        )?;
        ensure(total == ids.len() && union.len() == ids.len(), || format!("manifest {trial}: lost participants"))?;
        ensure(parts.iter().all(|p| !p.is_empty()), || format!("manifest {trial}: empty partition"))?;
        let mut shuffled = ids.clone();
        shuffled.shuffle(&mut rng);
        ensure(core(person_split(&shuffled, DEFAULT_RATIOS, seed))? == s, || {
            format!("manifest {trial}: split depends on input order")
        })?;
    }

    // The search entry point sees the data only through a view holding the
    // train and validation partitions.
    let _: fn(&ModelSpec, &Grid, TuningView<'_>, usize, u64) -> CoreResult<TuningResult> = grid_search_cv;

    // Audit: poison every test row with NaN; a search that touched them would fail.
    let ids: Vec<String> = (0..20).map(|i| format!("q{i:02}")).collect();
    let split = core(person_split(&ids, DEFAULT_RATIOS, 0))?;
    let mut all: Option<FeatureMatrix> = None;
    for id in &ids {
        let mut block = signal_rows(10, 3, id, &mut rng);
        if split.test.contains(id) {
            block.x = Matrix::from_rows(&vec![vec![f64::NAN; 3]; 10]).unwrap();
        }
        all = Some(match all {
            None => block,
            Some(a) => core(a.concat(&block))?,
        });
    }
    let data = PartitionedData::new(&all.unwrap(), &split);
    ensure(!data.test().x.all_finite(), || "test rows were not poisoned".into())?;
    let base = ModelChoice::Family(mwbench_core::Family::Logreg).base_spec().unwrap();
    let grid = Grid::new(vec![("C".into(), vec![0.1.into(), 1.0.into()])]);
    let res = core(grid_search_cv(&base, &grid, data.tuning_view(), 5, 0))?;
    ensure(res.score.is_finite(), || "search score is not finite".into())?;
    Ok(format!("1000 random manifests leak-free; tuning ran clean with NaN test rows (score {:.3})", res.score))
}

// ---------------------------------------------------------------- criteria 8-10

fn synth(dir: &Path, cfg: SynthConfig) -> Result<std::path::PathBuf, String> {
    let out = cmd_synth(&cfg, dir).map_err(|e| e.to_string())?;
    Ok(core(out.manifest("gaze"))?.to_path_buf())
}

fn gaze_synth(participants: usize, effect: f64, post: Option<f64>, seed: u64) -> SynthConfig {
    SynthConfig {
        participants,
        effect_size: effect,
        post_effect_size: post,
        seed,
        modalities: vec![SynthModality::Gaze],
        ..SynthConfig::default()
    }
}

fn logreg_bench(manifest: &Path, modes: Vec<SamplingMode>) -> BenchmarkConfig {
    BenchmarkConfig {
        manifests: vec![manifest.to_path_buf()],
        modes,
        models: vec![ModelChoice::Family(mwbench_core::Family::Logreg)],
        seeds: (0..5).collect(),
        ..BenchmarkConfig::default()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn end_to_end() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("effect2");
    let manifest = synth(&data, gaze_synth(40, 2.0, None, 0))?;
    let report = cmd_benchmark(&logreg_bench(&manifest, vec![SamplingMode::Pre]), &tmp.path().join("out"))
        .map_err(|e| e.to_string())?;
    ensure(report.failures.is_empty(), || format!("failed cells: {:?}", report.failures))?;
    let f1 = mean(&report.records.iter().map(|r| r.f1_mw).collect::<Vec<_>>());
    let ac = mean(&report.records.iter().map(|r| r.ac).collect::<Vec<_>>());
    fs::remove_dir_all(&data).map_err(|e| e.to_string())?;

    let mut null_ac = Vec::new();
    for seed in 0..5 {
        let dir = tmp.path().join(format!("null{seed}"));
        let manifest = synth(&dir, gaze_synth(40, 0.0, None, seed))?;
        let r = cmd_benchmark(&logreg_bench(&manifest, vec![SamplingMode::Pre]), &dir.join("out"))
            .map_err(|e| e.to_string())?;
        ensure(r.records.len() == 5, || format!("null seed {seed}: {} records", r.records.len()))?;
        null_ac.push(mean(&r.records.iter().map(|m| m.ac).collect::<Vec<_>>()));
        fs::remove_dir_all(&dir).map_err(|e| e.to_string())?;
    }
    let null_mean = mean(&null_ac);
    let per_seed: Vec<String> = null_ac.iter().map(|v| format!("{v:.3}")).collect();
    let detail = format!(
        "effect 2: F1 {f1:.4}, AC {ac:.4}; effect 0: mean AC {null_mean:.4} over generator seeds 0-4 [{}]",
        per_seed.join(", ")
    );
    ensure(f1 >= 0.8 && ac >= 0.5 && null_mean.abs() < 0.1, || detail.clone())?;
    Ok(detail)
}

fn ablation_direction() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = synth(tmp.path(), gaze_synth(40, 1.0, Some(2.0), 0))?;
    let report = cmd_benchmark(
        &logreg_bench(&manifest, vec![SamplingMode::Pre, SamplingMode::Post]),
        &tmp.path().join("out"),
    )
    .map_err(|e| e.to_string())?;
    ensure(report.failures.is_empty(), || format!("failed cells: {:?}", report.failures))?;
    let mut rows = Vec::new();
    for seed in 0..5 {
        let ac = |mode: SamplingMode| {
            report
                .records
                .iter()
                .find(|r| r.seed == seed && r.mode == mode)
                .map(|r| r.ac)
                .ok_or_else(|| format!("no {mode:?} record for seed {seed}"))
        };
        let (pre, post) = (ac(SamplingMode::Pre)?, ac(SamplingMode::Post)?);
        ensure(post > pre, || format!("seed {seed}: post AC {post:.4} <= pre AC {pre:.4}"))?;
        rows.push(format!("{pre:.3}->{post:.3}"));
    }
    Ok(format!("pre->post AC per seed [{}]", rows.join(", ")))
}

fn reproducibility() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = cmd_synth(
        &SynthConfig {
            participants: 12,
            windows_per_participant: 20,
            eeg_epochs_per_participant: 4,
            ..SynthConfig::default()
        },
        &tmp.path().join("data"),
    )
    .map_err(|e| e.to_string())?;
    let mut hp = std::collections::BTreeMap::new();
    let mut forest = Hyperparams::new();
    forest.set("n_estimators", 10);
    hp.insert("random_forest".to_string(), forest);
    let mut mlp = Hyperparams::new();
    mlp.set("max_epochs", 20);
    mlp.set("hidden_width", 16);
    hp.insert("mlp".to_string(), mlp);
    let models: Vec<ModelChoice> = ["logreg", "random_forest", "mlp", "fedavg", "turbosvm"]
        .iter()
        .map(|m| m.parse().unwrap())
        .collect();
    let cfg = BenchmarkConfig {
        manifests: vec![
            core(out.manifest("gaze"))?.to_path_buf(),
            core(out.manifest("multimodal"))?.to_path_buf(),
        ],
        modes: vec![SamplingMode::Pre, SamplingMode::Post],
        models,
        hyperparams: hp,
        federated: RoundConfig {
            rounds: 4,
            hidden_width: 8,
            local_epochs: 2,
            ..RoundConfig::default()
        },
        ..BenchmarkConfig::default()
    };
    let (a, b) = (tmp.path().join("run_a"), tmp.path().join("run_b"));
    let ra = cmd_benchmark(&cfg, &a).map_err(|e| e.to_string())?;
    cmd_benchmark(&cfg, &b).map_err(|e| e.to_string())?;
    let mut names: Vec<String> = fs::read_dir(&a)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    for required in ["report.csv", "aggregates.csv", "failures.csv", "summary.txt"] {
        ensure(names.iter().any(|n| n == required), || format!("{required} not written"))?;
    }
    for name in &names {
        let (x, y) = (fs::read(a.join(name)), fs::read(b.join(name)));
        let (x, y) = (x.map_err(|e| e.to_string())?, y.map_err(|e| e.to_string())?);
        ensure(x == y, || format!("{name} differs between runs"))?;
    }
    Ok(format!(
        "{} files byte-identical ({} records, {} failed cells)",
        names.len(),
        ra.records.len(),
        ra.failures.len()
    ))
}
