use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::benchmark::{CellFailure, TunedChoice};
use super::metrics::mean_sd;
use crate::error::{Error, Result};
use crate::tuning::TraceRow;
use crate::windowing::SamplingMode;

/// Test-set metrics of one (dataset, model, mode, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub dataset: String,
    pub model: String,
    pub mode: SamplingMode,
    pub seed: u64,
    pub f1_mw: f64,
    pub ac: f64,
    pub precision: f64,
    pub recall: f64,
    pub auc: f64,
    pub accuracy: f64,
    pub chance: f64,
    pub n_test: usize,
}

impl MetricRecord {
    fn key(&self) -> (&str, &str, SamplingMode, u64) {
        (&self.dataset, &self.model, self.mode, self.seed)
    }
}

/// Mean and sample SD over the seeds of one (dataset, model, mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub model: String,
    pub mode: SamplingMode,
    pub n: usize,
    pub f1_mw: (f64, f64),
    pub ac: (f64, f64),
    pub precision: (f64, f64),
    pub recall: (f64, f64),
    pub auc: (f64, f64),
    pub accuracy: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub records: Vec<MetricRecord>,
    pub aggregates: Vec<AggregateRow>,
    pub failures: Vec<CellFailure>,
    pub tuned: Vec<TunedChoice>,
    pub trace: Vec<TraceRow>,
}

impl BenchmarkReport {
    /// Sorts records and recomputes the aggregates from them.
    pub fn from_records(mut records: Vec<MetricRecord>, mut failures: Vec<CellFailure>) -> BenchmarkReport {
        records.sort_by(|a, b| a.key().cmp(&b.key()));
        failures.sort();
        BenchmarkReport {
            aggregates: aggregate(&records),
            records,
            failures,
            tuned: Vec::new(),
            trace: Vec::new(),
        }
    }
}

/// Groups records by (dataset, model, mode) in sorted order.
pub fn aggregate(records: &[MetricRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, String, SamplingMode), Vec<&MetricRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.dataset.clone(), r.model.clone(), r.mode)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((dataset, model, mode), rs)| {
            let col = |f: fn(&MetricRecord) -> f64| mean_sd(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            AggregateRow {
                dataset,
                model,
                mode,
                n: rs.len(),
                f1_mw: col(|r| r.f1_mw),
                ac: col(|r| r.ac),
                precision: col(|r| r.precision),
                recall: col(|r| r.recall),
                auc: col(|r| r.auc),
                accuracy: col(|r| r.accuracy),
            }
        })
        .collect()
}

const RECORD_HEADER: &str = "dataset,model,mode,seed,f1_mw,ac,precision,recall,auc,accuracy,chance,n_test";

fn records_csv(records: &[MetricRecord]) -> String {
    let mut s = format!("{RECORD_HEADER}\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            r.dataset, r.model, r.mode, r.seed, r.f1_mw, r.ac, r.precision, r.recall, r.auc, r.accuracy, r.chance, r.n_test
        );
    }
    s
}

fn aggregates_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::from("dataset,model,mode,n");
    for m in ["f1_mw", "ac", "precision", "recall", "auc", "accuracy"] {
        let _ = write!(s, ",{m}_mean,{m}_sd");
    }
    s.push('\n');
    for a in rows {
        let _ = write!(s, "{},{},{},{}", a.dataset, a.model, a.mode, a.n);
        for (m, sd) in [a.f1_mw, a.ac, a.precision, a.recall, a.auc, a.accuracy] {
            let _ = write!(s, ",{m:.6},{sd:.6}");
        }
        s.push('\n');
    }
    s
}

fn failures_csv(failures: &[CellFailure]) -> String {
    let mut s = String::from("dataset,model,mode,seed,error\n");
    for f in failures {
        let seed = f.seed.map_or(String::new(), |v| v.to_string());
        let msg = f.error.replace(['\n', ','], " ");
        let _ = writeln!(s, "{},{},{},{seed},{msg}", f.dataset, f.model, f.mode);
    }
    s
}

fn tuned_csv(tuned: &[TunedChoice]) -> String {
    let mut s = String::from("dataset,model,mode,hyperparams,score\n");
    for t in tuned {
        let _ = writeln!(s, "{},{},{},\"{}\",{:.6}", t.dataset, t.model, t.mode, t.hyperparams, t.score);
    }
    s
}

fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("family,grid_point,fold_or_seed,metric\n");
    for r in trace {
        let _ = writeln!(s, "{},\"{}\",{},{:.6}", r.family, r.grid_point, r.fold_or_seed, r.metric);
    }
    s
}

fn pm((m, sd): (f64, f64)) -> String {
    format!("{:.1}±{:.1}", 100.0 * m, 100.0 * sd)
}

/// Plain-text tables: the best model per (dataset, mode) by mean MW-F1 (ties
/// to the first model name), then every aggregate row.
pub fn summary_text(report: &BenchmarkReport) -> String {
    let mut best: BTreeMap<(&str, SamplingMode), &AggregateRow> = BTreeMap::new();
    for a in &report.aggregates {
        let e = best.entry((a.dataset.as_str(), a.mode)).or_insert(a);
        if a.f1_mw.0 > e.f1_mw.0 {
            *e = a;
        }
    }
    let mut s = String::new();
    let header = format!(
        "{:<28} {:<5} {:<14} {:>11} {:>11} {:>11} {:>11} {:>11} {:>11}\n",
        "dataset", "mode", "model", "F1", "AC", "Prec.", "Rec.", "AUC", "Acc."
    );
    let row = |s: &mut String, a: &AggregateRow| {
        let _ = writeln!(
            s,
            "{:<28} {:<5} {:<14} {:>11} {:>11} {:>11} {:>11} {:>11} {:>11}",
            a.dataset,
            a.mode.as_str(),
            a.model,
            pm(a.f1_mw),
            pm(a.ac),
            pm(a.precision),
            pm(a.recall),
            pm(a.auc),
            pm(a.accuracy)
        );
    };
    s.push_str("Best model per dataset (mean±SD over seeds, percent)\n");
    s.push_str(&header);
    for a in best.values() {
        row(&mut s, a);
    }
    s.push_str("\nAll models\n");
    s.push_str(&header);
    for a in &report.aggregates {
        row(&mut s, a);
    }
    let _ = writeln!(
        s,
        "\n{} records, {} aggregates, {} failed cells",
        report.records.len(),
        report.aggregates.len(),
        report.failures.len()
    );
    for f in &report.failures {
        let seed = f.seed.map_or("-".to_string(), |v| v.to_string());
        let _ = writeln!(s, "FAILED {} {} {} seed {seed}: {}", f.dataset, f.model, f.mode, f.error);
    }
    s
}

fn put(dir: &Path, name: &str, body: &str) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, body).map_err(|e| Error::io(&p, e))
}

/// Writes `report.csv`, `aggregates.csv`, `failures.csv`, `summary.txt` and,
/// when tuning ran, `tuned.csv` and `tuning_trace.csv`.
pub fn write_report(dir: &Path, report: &BenchmarkReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    put(dir, "report.csv", &records_csv(&report.records))?;
    put(dir, "aggregates.csv", &aggregates_csv(&report.aggregates))?;
    put(dir, "failures.csv", &failures_csv(&report.failures))?;
    put(dir, "summary.txt", &summary_text(report))?;
    if !report.tuned.is_empty() {
        put(dir, "tuned.csv", &tuned_csv(&report.tuned))?;
        put(dir, "tuning_trace.csv", &trace_csv(&report.trace))?;
    }
    Ok(())
}

/// Reads a `report.csv` back into records.
pub fn read_records(path: &Path) -> Result<Vec<MetricRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| Error::parse(path, e))?.iter().map(String::from).collect();
    if header.join(",") != RECORD_HEADER {
        return Err(Error::parse(path, format!("expected header {RECORD_HEADER}")));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        let f = |j: usize| -> Result<f64> {
            rec[j].parse().map_err(|_| Error::parse(path, format!("row {}: bad number {:?}", i + 1, &rec[j])))
        };
        let n = |j: usize| -> Result<u64> {
            rec[j].parse().map_err(|_| Error::parse(path, format!("row {}: bad integer {:?}", i + 1, &rec[j])))
        };
        out.push(MetricRecord {
            dataset: rec[0].to_string(),
            model: rec[1].to_string(),
            mode: rec[2].parse()?,
            seed: n(3)?,
            f1_mw: f(4)?,
            ac: f(5)?,
            precision: f(6)?,
            recall: f(7)?,
            auc: f(8)?,
            accuracy: f(9)?,
            chance: f(10)?,
            n_test: n(11)? as usize,
        });
    }
    Ok(out)
}
