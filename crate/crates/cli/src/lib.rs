//! Command-line front end: argument parsing, run configuration files and the
//! subcommand implementations behind the `mwbench` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use mwbench_core::corpus::{load_manifest, load_session, parse_manifest, person_split, DEFAULT_RATIOS};
use mwbench_core::evaluation::{
    aggregate, evaluate_model, read_records, run_benchmark, summary_text, write_report, BenchmarkConfig,
    BenchmarkReport,
};
use mwbench_core::federated::{partition_by_participant, run_federated, write_round_log, RoundConfig};
use mwbench_core::models::{fit, Family, Hyperparams};
use mwbench_core::pipeline::{extract_features, load_sessions, write_feature_csv, FeatureConfig, PartitionedData};
use mwbench_core::synth::{self, SynthConfig, SynthModality};
use mwbench_core::tuning::{
    federated_search, grid_search_cv, nn_grid_search, write_trace, FederatedSpace, Grid, ModelChoice,
};
use mwbench_core::windowing::write_window_index;
use mwbench_core::{DatasetManifest, SamplingMode};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_FAILED_CELLS: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sampling {
    Pre,
    Post,
}

impl From<Sampling> for SamplingMode {
    fn from(s: Sampling) -> SamplingMode {
        match s {
            Sampling::Pre => SamplingMode::Pre,
            Sampling::Post => SamplingMode::Post,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mwbench", version, about = "Mind-wandering detection benchmark")]
pub struct Cli {
    /// Run configuration (TOML). Flags override values from the file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub sampling: Option<Sampling>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check manifests and every stream they reference.
    Validate { manifests: Vec<PathBuf> },
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Extract windows and features for one dataset.
    Features { manifest: Option<PathBuf> },
    /// Search hyperparameters on the train and validation participants.
    Tune {
        manifest: Option<PathBuf>,
        #[arg(long = "model")]
        models: Vec<String>,
    },
    /// Fit one model on the train participants and score the test participants.
    Train {
        manifest: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
    },
    /// Full sweep over datasets, models, modes and seeds.
    Benchmark {
        manifests: Vec<PathBuf>,
        #[arg(long = "model")]
        models: Vec<String>,
        #[arg(long)]
        tune: bool,
    },
    /// Rebuild aggregates and the summary from a report directory.
    Report { dir: PathBuf },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub participants: Option<usize>,
    #[arg(long)]
    pub windows: Option<usize>,
    #[arg(long)]
    pub effect: Option<f64>,
    #[arg(long)]
    pub post_effect: Option<f64>,
    /// Comma-separated subset of gaze,eeg,frames.
    #[arg(long, value_delimiter = ',')]
    pub modalities: Vec<String>,
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifests: Vec<PathBuf>,
    pub sampling: Option<SamplingMode>,
    pub modes: Vec<SamplingMode>,
    pub window_s: Option<f64>,
    pub post_offset_s: Option<f64>,
    pub models: Vec<String>,
    pub tuning: Option<bool>,
    pub seeds: Vec<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub search_budget: Option<usize>,
    pub chance: Option<mwbench_core::evaluation::ChanceBasis>,
    pub features: Option<FeatureConfig>,
    pub hyperparams: BTreeMap<String, Hyperparams>,
    pub federated: Option<RoundConfig>,
    pub synth: Option<SynthConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for m in &mut cfg.manifests {
            if m.is_relative() {
                *m = base.join(&*m);
            }
        }
        Ok(cfg)
    }
}

/// Resolved settings after applying flag > file > default.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub file: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub modes: Vec<SamplingMode>,
    pub features: FeatureConfig,
}

impl Resolved {
    pub fn new(cli: &Cli) -> anyhow::Result<Resolved> {
        let file = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let seed = cli.seed.or(file.seed).unwrap_or(0);
        let out = cli.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        let modes = match cli.sampling {
            Some(s) => vec![s.into()],
            None if !file.modes.is_empty() => file.modes.clone(),
            None => vec![file.sampling.unwrap_or(SamplingMode::Pre)],
        };
        let mut features = file.features.clone().unwrap_or_default();
        if file.window_s.is_some() {
            features.window_s = file.window_s;
        }
        if file.post_offset_s.is_some() {
            features.post_offset_s = file.post_offset_s;
        }
        Ok(Resolved {
            file,
            seed,
            out,
            modes,
            features,
        })
    }

    fn mode(&self) -> SamplingMode {
        self.modes[0]
    }

    fn manifest(&self, arg: &Option<PathBuf>) -> anyhow::Result<PathBuf> {
        arg.clone()
            .or_else(|| self.file.manifests.first().cloned())
            .ok_or_else(|| anyhow!("no manifest given on the command line or in the config"))
    }

    fn models(&self, args: &[String]) -> anyhow::Result<Vec<ModelChoice>> {
        let names = if args.is_empty() { &self.file.models } else { args };
        if names.is_empty() {
            return Ok(vec![ModelChoice::Family(Family::Logreg)]);
        }
        names.iter().map(|n| n.parse::<ModelChoice>().map_err(|e| anyhow!(e))).collect()
    }

    /// Benchmark settings for `manifests` and `models`.
    pub fn benchmark(&self, manifests: &[PathBuf], models: &[String], tune: bool) -> anyhow::Result<BenchmarkConfig> {
        let d = BenchmarkConfig::default();
        let cfg = BenchmarkConfig {
            manifests: if manifests.is_empty() { self.file.manifests.clone() } else { manifests.to_vec() },
            modes: self.modes.clone(),
            models: self.models(models)?,
            tuning: tune || self.file.tuning.unwrap_or(false),
            seeds: if self.file.seeds.is_empty() { d.seeds } else { self.file.seeds.clone() },
            split_seed: self.seed,
            features: self.features.clone(),
            hyperparams: self.file.hyperparams.clone(),
            federated: self.file.federated.clone().unwrap_or_default(),
            search_budget: self.file.search_budget.unwrap_or(d.search_budget),
            chance: self.file.chance.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Lines describing every problem with one manifest; empty when valid.
pub fn validation_problems(path: &Path) -> Vec<String> {
    let m = match parse_manifest(path) {
        Ok(m) => m,
        Err(e) => return vec![e.to_string()],
    };
    let v = m.violations();
    if !v.is_empty() {
        return v.iter().map(ToString::to_string).collect();
    }
    m.participants
        .iter()
        .filter_map(|p| load_session(&m, &p.id).err().map(|e| format!("participant {:?}: {e}", p.id)))
        .collect()
}

pub fn cmd_validate(manifests: &[PathBuf]) -> anyhow::Result<u8> {
    if manifests.is_empty() {
        bail!("no manifests to validate");
    }
    let mut bad = 0;
    for path in manifests {
        let problems = validation_problems(path);
        if problems.is_empty() {
            println!("OK {}", path.display());
        } else {
            bad += 1;
            println!("INVALID {} ({} problems)", path.display(), problems.len());
            for p in problems {
                println!("  - {p}");
            }
        }
    }
    Ok(if bad == 0 { EXIT_OK } else { EXIT_INPUT })
}

fn parse_modality(s: &str) -> anyhow::Result<SynthModality> {
    match s {
        "gaze" => Ok(SynthModality::Gaze),
        "eeg" => Ok(SynthModality::Eeg),
        "frames" => Ok(SynthModality::Frames),
        other => bail!("unknown modality {other:?} (expected gaze, eeg or frames)"),
    }
}

pub fn synth_config(r: &Resolved, a: &SynthArgs, seed_flag: Option<u64>) -> anyhow::Result<SynthConfig> {
    let mut cfg = r.file.synth.clone().unwrap_or_default();
    if let Some(v) = a.participants {
        cfg.participants = v;
    }
    if let Some(v) = a.windows {
        cfg.windows_per_participant = v;
    }
    if let Some(v) = a.effect {
        cfg.effect_size = v;
    }
    if a.post_effect.is_some() {
        cfg.post_effect_size = a.post_effect;
    }
    if !a.modalities.is_empty() {
        cfg.modalities = a.modalities.iter().map(|m| parse_modality(m)).collect::<anyhow::Result<_>>()?;
    }
    if let Some(s) = seed_flag.or(r.file.synth.as_ref().map(|s| s.seed)).or(r.file.seed) {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Generates a dataset and returns the manifest paths.
pub fn cmd_synth(cfg: &SynthConfig, out: &Path) -> anyhow::Result<synth::SynthOutput> {
    let o = synth::generate(cfg, out)?;
    for p in o.manifests.values() {
        println!("wrote {}", p.display());
    }
    Ok(o)
}

struct Loaded {
    manifest: DatasetManifest,
    data: PartitionedData,
}

fn load_partitioned(path: &Path, r: &Resolved, mode: SamplingMode) -> anyhow::Result<(Loaded, mwbench_core::pipeline::Extracted)> {
    let manifest = load_manifest(path)?;
    let sessions = load_sessions(&manifest)?;
    let split = person_split(&manifest.participant_ids(), DEFAULT_RATIOS, r.seed)?;
    let ex = extract_features(&manifest, &sessions, mode, &r.features, &split.train, r.seed)?;
    let data = PartitionedData::new(&ex.features, &split);
    Ok((Loaded { manifest, data }, ex))
}

pub fn cmd_features(path: &Path, r: &Resolved) -> anyhow::Result<u8> {
    let mode = r.mode();
    let (l, ex) = load_partitioned(path, r, mode)?;
    fs::create_dir_all(&r.out).with_context(|| format!("creating {}", r.out.display()))?;
    let stem = format!("{}_{}", l.manifest.dataset_id, mode);
    write_window_index(&r.out.join(format!("{stem}_windows.csv")), &ex.windows)?;
    write_feature_csv(&r.out.join(format!("{stem}_features.csv")), &ex.features)?;
    let report = serde_json::to_string_pretty(&ex.report)?;
    fs::write(r.out.join(format!("{stem}_extraction.json")), report)?;
    println!(
        "{}: {} windows x {} features ({} skipped events, {} low-quality windows)",
        l.manifest.dataset_id,
        ex.features.len(),
        ex.features.dim(),
        ex.report.skipped_events,
        ex.report.low_quality_windows
    );
    Ok(EXIT_OK)
}

pub fn cmd_tune(path: &Path, models: &[ModelChoice], r: &Resolved) -> anyhow::Result<u8> {
    let mode = r.mode();
    let (l, _) = load_partitioned(path, r, mode)?;
    let view = l.data.tuning_view();
    fs::create_dir_all(&r.out)?;
    let mut chosen: BTreeMap<String, Hyperparams> = BTreeMap::new();
    let mut trace = Vec::new();
    let base_fed = r.file.federated.clone().unwrap_or_default();
    let budget = r.file.search_budget.unwrap_or(20);
    for &m in models {
        match m {
            ModelChoice::Federated(s) => {
                let res = federated_search(&FederatedSpace::standard(s), &base_fed, s, view, budget, r.seed)?;
                println!("{m}: {} (validation F1 {:.3})", res.best.label(), res.score);
                trace.extend(res.trace);
            }
            _ => {
                let mut spec = m.base_spec().expect("classic model");
                if let Some(hp) = r.file.hyperparams.get(&m.name()) {
                    spec.hyperparams = spec.hyperparams.merged(hp);
                }
                let grid = Grid::standard(m);
                let res = if spec.family == Family::Mlp {
                    nn_grid_search(&spec, &grid, view, &[0, 1, 2])?
                } else {
                    grid_search_cv(&spec, &grid, view, 5, r.seed)?
                };
                println!("{m}: {} (F1 {:.3})", res.best.label(), res.score);
                chosen.insert(m.name(), spec.hyperparams.merged(&res.best));
                trace.extend(res.trace);
            }
        }
    }
    write_trace(&r.out.join("tuning_trace.csv"), &trace)?;
    #[derive(Serialize)]
    struct Tuned<'a> {
        hyperparams: &'a BTreeMap<String, Hyperparams>,
    }
    fs::write(r.out.join("tuned.toml"), toml::to_string(&Tuned { hyperparams: &chosen })?)?;
    Ok(EXIT_OK)
}

pub fn cmd_train(path: &Path, model: ModelChoice, r: &Resolved) -> anyhow::Result<u8> {
    let mode = r.mode();
    let (l, _) = load_partitioned(path, r, mode)?;
    let d = &l.data;
    fs::create_dir_all(&r.out)?;
    let trained = match model {
        ModelChoice::Federated(s) => {
            let rc = RoundConfig {
                seed: r.seed,
                ..r.file.federated.clone().unwrap_or_default()
            };
            let run = run_federated(&partition_by_participant(d.train())?, d.val(), &rc, s)?;
            write_round_log(&r.out.join(format!("{model}_rounds.csv")), &run.log)?;
            run.model
        }
        _ => {
            let mut spec = model.base_spec().expect("classic model").with_seed(r.seed);
            if let Some(hp) = r.file.hyperparams.get(&model.name()) {
                spec.hyperparams = spec.hyperparams.merged(hp);
            }
            let val = (spec.family == Family::Mlp).then(|| d.val());
            fit(&spec, d.train(), val)?
        }
    };
    trained.save(&r.out.join(format!("{model}.json")))?;
    let m = evaluate_model(&trained, d.test(), d.test().prevalence())?;
    println!(
        "{} {model} ({mode}): F1 {:.3}  AC {:.3}  Prec. {:.3}  Rec. {:.3}  AUC {:.3}  Acc. {:.3}",
        l.manifest.dataset_id, m.f1_mw, m.ac, m.precision, m.recall, m.auc, m.accuracy
    );
    Ok(EXIT_OK)
}

/// Runs the sweep and writes the report files into `out`.
pub fn cmd_benchmark(cfg: &BenchmarkConfig, out: &Path) -> anyhow::Result<BenchmarkReport> {
    let report = run_benchmark(cfg)?;
    write_report(out, &report)?;
    Ok(report)
}

pub fn cmd_report(dir: &Path, out: &Path) -> anyhow::Result<u8> {
    let records = read_records(&dir.join("report.csv"))?;
    let mut report = BenchmarkReport::from_records(records, Vec::new());
    report.aggregates = aggregate(&report.records);
    print!("{}", summary_text(&report));
    if out != dir {
        write_report(out, &report)?;
    }
    Ok(EXIT_OK)
}

fn dispatch(cli: &Cli) -> anyhow::Result<u8> {
    let r = Resolved::new(cli)?;
    if let Some(j) = cli.jobs.or(r.file.jobs) {
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().ok();
    }
    match &cli.command {
        Command::Validate { manifests } => {
            let list = if manifests.is_empty() { r.file.manifests.clone() } else { manifests.clone() };
            cmd_validate(&list)
        }
        Command::Synth(a) => {
            let cfg = synth_config(&r, a, cli.seed)?;
            cmd_synth(&cfg, &r.out)?;
            Ok(EXIT_OK)
        }
        Command::Features { manifest } => cmd_features(&r.manifest(manifest)?, &r),
        Command::Tune { manifest, models } => {
            let ms = r.models(models)?;
            cmd_tune(&r.manifest(manifest)?, &ms, &r)
        }
        Command::Train { manifest, model } => {
            let names: Vec<String> = model.iter().cloned().collect();
            let ms = r.models(&names)?;
            cmd_train(&r.manifest(manifest)?, ms[0], &r)
        }
        Command::Benchmark { manifests, models, tune } => {
            let cfg = r.benchmark(manifests, models, *tune)?;
            let report = cmd_benchmark(&cfg, &r.out)?;
            print!("{}", summary_text(&report));
            info!("report written to {}", r.out.display());
            if report.failures.is_empty() {
                Ok(EXIT_OK)
            } else {
                eprintln!("{} benchmark cells failed", report.failures.len());
                Ok(EXIT_FAILED_CELLS)
            }
        }
        Command::Report { dir } => {
            let out = cli.out.clone().unwrap_or_else(|| dir.clone());
            cmd_report(dir, &out)
        }
    }
}

/// Runs the parsed command; errors map to the input/config exit code.
pub fn run(cli: &Cli) -> ExitCode {
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
