//! Per-frame feature tables (facial, emotion, physiological) reduced to
//! fixed-width window vectors: confidence filtering, downsampling to a uniform
//! grid, then per-column statistics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::FrameFeatureTable;
use crate::error::{Error, Result};
use crate::windowing::LabeledWindow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    Mean,
    Sd,
    Min,
    Max,
    Slope,
}

impl Stat {
    pub const ALL: [Stat; 5] = [Stat::Mean, Stat::Sd, Stat::Min, Stat::Max, Stat::Slope];

    pub fn as_str(self) -> &'static str {
        match self {
            Stat::Mean => "mean",
            Stat::Sd => "sd",
            Stat::Min => "min",
            Stat::Max => "max",
            Stat::Slope => "slope",
        }
    }
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stat::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown statistic {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregationSpec {
    pub confidence_min: f64,
    pub target_hz: f64,
    pub stats: Vec<Stat>,
}

impl Default for AggregationSpec {
    fn default() -> Self {
        AggregationSpec {
            confidence_min: 0.75,
            target_hz: 10.0,
            stats: Stat::ALL.to_vec(),
        }
    }
}

impl AggregationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_hz > 0.0) {
            return Err(Error::Invalid(format!("target_hz must be > 0, got {}", self.target_hz)));
        }
        if self.stats.is_empty() {
            return Err(Error::Invalid("aggregation needs at least one statistic".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence_min) {
            return Err(Error::Invalid(format!(
                "confidence_min must be in [0, 1], got {}",
                self.confidence_min
            )));
        }
        Ok(())
    }

    pub fn width(&self, n_columns: usize) -> usize {
        n_columns * self.stats.len()
    }

    pub fn feature_names(&self, prefix: &str, columns: &[String]) -> Vec<String> {
        columns
            .iter()
            .flat_map(|c| self.stats.iter().map(move |s| format!("{prefix}{c}_{s}")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub table: FrameFeatureTable,
    pub retained_fraction: f64,
}

/// Drops rows whose confidence is below `confidence_min`.
pub fn filter_rows(table: &FrameFeatureTable, confidence_min: f64) -> Filtered {
    let keep: Vec<usize> = (0..table.len())
        .filter(|&i| table.confidence[i] >= confidence_min)
        .collect();
    let retained_fraction = if table.is_empty() {
        0.0
    } else {
        keep.len() as f64 / table.len() as f64
    };
    Filtered {
        table: table.select(keep),
        retained_fraction,
    }
}

/// Nearest-timestamp resampling onto `floor(duration * target_hz)` grid points
/// starting at `t_start`. Ties go to the earlier row.
pub fn downsample_rows(
    table: &FrameFeatureTable,
    source_hz: f64,
    target_hz: f64,
    t_start: i64,
    duration_ms: i64,
) -> Result<FrameFeatureTable> {
    if !(target_hz > 0.0) || target_hz > source_hz {
        return Err(Error::Invalid(format!(
            "cannot resample a {source_hz} Hz table to {target_hz} Hz"
        )));
    }
    if table.is_empty() {
        return Ok(table.clone());
    }
    let count = (duration_ms as f64 / 1000.0 * target_hz + 1e-9).floor() as usize;
    let step = 1000.0 / target_hz;
    let idx: Vec<usize> = (0..count)
        .map(|k| {
            let g = t_start as f64 + k as f64 * step;
            let hi = table.t.partition_point(|&t| (t as f64) < g);
            match (hi.checked_sub(1), hi < table.len()) {
                (Some(lo), true) => {
                    if g - table.t[lo] as f64 <= table.t[hi] as f64 - g {
                        lo
                    } else {
                        hi
                    }
                }
                (Some(lo), false) => lo,
                (None, _) => hi,
            }
        })
        .collect();
    Ok(table.select(idx))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub values: Vec<f64>,
    /// No rows survived; `values` is all zeros.
    pub empty: bool,
    /// Exactly one row; every `sd` is reported as 0.
    pub single_row: bool,
    pub retained_fraction: f64,
}

fn column_stats(t: &[f64], v: &[f64], stats: &[Stat], out: &mut Vec<f64>) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    for s in stats {
        out.push(match s {
            Stat::Mean => mean,
            Stat::Sd => {
                if v.len() < 2 {
                    0.0
                } else {
                    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                }
            }
            Stat::Min => v.iter().copied().fold(f64::INFINITY, f64::min),
            Stat::Max => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Stat::Slope => {
                let tm = t.iter().sum::<f64>() / n;
                let sxx: f64 = t.iter().map(|x| (x - tm).powi(2)).sum();
                if sxx == 0.0 {
                    0.0
                } else {
                    t.iter().zip(v).map(|(x, y)| (x - tm) * (y - mean)).sum::<f64>() / sxx
                }
            }
        });
    }
}

/// Per column (header order), the statistics in `spec.stats` order. Slope is
/// the least-squares fit of value against time in seconds.
pub fn aggregate_window(
    table: &FrameFeatureTable,
    window: &LabeledWindow,
    spec: &AggregationSpec,
) -> Result<FrameFeatures> {
    spec.validate()?;
    let rows = table.slice_time(window.t_start, window.t_end);
    let width = spec.width(table.columns.len());
    if rows.is_empty() {
        return Ok(FrameFeatures {
            values: vec![0.0; width],
            empty: true,
            single_row: false,
            retained_fraction: 0.0,
        });
    }
    let t: Vec<f64> = rows.t.iter().map(|&x| x as f64 / 1000.0).collect();
    let mut values = Vec::with_capacity(width);
    for j in 0..rows.columns.len() {
        let col: Vec<f64> = rows.values.iter().map(|r| r[j]).collect();
        column_stats(&t, &col, &spec.stats, &mut values);
    }
    Ok(FrameFeatures {
        values,
        empty: false,
        single_row: rows.len() == 1,
        retained_fraction: 1.0,
    })
}

/// Full path for one window: slice, filter, downsample, aggregate.
pub fn window_features(
    table: &FrameFeatureTable,
    source_hz: f64,
    window: &LabeledWindow,
    spec: &AggregationSpec,
) -> Result<FrameFeatures> {
    let inside = table.slice_time(window.t_start, window.t_end);
    let filtered = filter_rows(&inside, spec.confidence_min);
    let resampled = downsample_rows(
        &filtered.table,
        source_hz,
        spec.target_hz,
        window.t_start,
        window.duration_ms(),
    )?;
    let mut f = aggregate_window(&resampled, window, spec)?;
    f.retained_fraction = filtered.retained_fraction;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::windowing::Provenance;
    use proptest::prelude::*;

    fn table(rate: f64, secs: f64, cols: usize, f: impl Fn(usize, usize) -> f64) -> FrameFeatureTable {
        let n = (rate * secs) as usize;
        FrameFeatureTable {
            t: (0..n).map(|i| (i as f64 * 1000.0 / rate).round() as i64).collect(),
            confidence: vec![1.0; n],
            columns: (0..cols).map(|j| format!("c{j}")).collect(),
            values: (0..n).map(|i| (0..cols).map(|j| f(i, j)).collect()).collect(),
        }
    }

    fn window(t_start: i64, t_end: i64) -> LabeledWindow {
        LabeledWindow {
            participant: "p".into(),
            t_start,
            t_end,
            label: 1,
            provenance: Provenance::PreProbe,
        }
    }

    #[test]
    fn filter_thresholds() {
        let mut t = table(10.0, 0.3, 1, |i, _| i as f64);
        assert_eq!(filter_rows(&t, 0.0).table, t);
        t.confidence = vec![0.9, 0.3, 0.8];
        let f = filter_rows(&t, 0.5);
        assert_eq!(f.table.len(), 2);
        assert!((f.retained_fraction - 2.0 / 3.0).abs() < 1e-12);
        t.confidence = vec![0.2; 3];
        let f = filter_rows(&t, 0.5);
        assert!(f.table.is_empty());
        assert_eq!(f.retained_fraction, 0.0);
    }

    #[test]
    fn downsample_counts() {
        let t = table(30.0, 10.0, 2, |i, j| (i + j) as f64);
        assert_eq!(downsample_rows(&t, 30.0, 10.0, 0, 10_000).unwrap().len(), 100);
        assert_eq!(downsample_rows(&t, 30.0, 30.0, 0, 10_000).unwrap().len(), 300);
        assert_eq!(downsample_rows(&t, 30.0, 30.0, 0, 10_000).unwrap(), t);
        let slow = table(10.0, 10.0, 1, |i, _| i as f64);
        assert!(downsample_rows(&slow, 10.0, 30.0, 0, 10_000).is_err());
    }

    #[test]
    fn constant_column_stats() {
        let t = table(10.0, 1.0, 1, |_, _| 3.0);
        let f = aggregate_window(&t, &window(0, 1000), &AggregationSpec::default()).unwrap();
        assert_eq!(f.values, vec![3.0, 0.0, 3.0, 3.0, 0.0]);
    }

    #[test]
    fn ramp_slope_is_ten_per_second() {
        let t = table(10.0, 1.0, 1, |i, _| i as f64);
        let f = aggregate_window(&t, &window(0, 1000), &AggregationSpec::default()).unwrap();
        assert!((f.values[4] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn width_is_columns_times_stats() {
        let t = table(10.0, 1.0, 12, |i, j| (i * j) as f64);
        let f = aggregate_window(&t, &window(0, 1000), &AggregationSpec::default()).unwrap();
        assert_eq!(f.values.len(), 60);
        let empty = aggregate_window(&t, &window(5000, 6000), &AggregationSpec::default()).unwrap();
        assert_eq!(empty.values, vec![0.0; 60]);
        assert!(empty.empty);
    }

    #[test]
    fn single_row_has_zero_sd_and_flag() {
        let t = table(10.0, 0.1, 1, |_, _| 2.0);
        let f = aggregate_window(&t, &window(0, 1000), &AggregationSpec::default()).unwrap();
        assert!(f.single_row);
        assert_eq!(f.values[1], 0.0);
    }

    fn random_table() -> impl Strategy<Value = FrameFeatureTable> {
        proptest::collection::vec((0i64..50, -100.0f64..100.0, -5.0f64..5.0, 0.0f64..1.0), 1..60).prop_map(|rows| {
            let mut t = 0;
            let mut out = FrameFeatureTable {
                columns: vec!["a".into(), "b".into()],
                ..Default::default()
            };
            for (dt, a, b, c) in rows {
                t += dt;
                out.t.push(t);
                out.confidence.push(c);
                out.values.push(vec![a, b]);
            }
            out
        })
    }

    proptest! {
        #[test]
        fn order_free_stats_ignore_row_order(tab in random_table(), seed in any::<u64>()) {
            let spec = AggregationSpec { stats: vec![Stat::Mean, Stat::Sd, Stat::Min, Stat::Max], ..Default::default() };
            let w = window(0, 100_000);
            let a = aggregate_window(&tab, &w, &spec).unwrap();
            // permute values among rows while keeping timestamps sorted
            let mut idx: Vec<usize> = (0..tab.len()).collect();
            crate::rng::fisher_yates(&mut idx, &mut crate::rng::seeded(seed));
            let mut p = tab.clone();
            p.values = idx.iter().map(|&i| tab.values[i].clone()).collect();
            let b = aggregate_window(&p, &w, &spec).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }

        #[test]
        fn slope_ignores_time_shift(tab in random_table(), shift in 0i64..100_000) {
            let spec = AggregationSpec { stats: vec![Stat::Slope], ..Default::default() };
            let a = aggregate_window(&tab, &window(0, 10_000), &spec).unwrap();
            let mut moved = tab.clone();
            for t in &mut moved.t {
                *t += shift;
            }
            let b = aggregate_window(&moved, &window(shift, shift + 10_000), &spec).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0));
            }
        }

        #[test]
        fn filter_then_aggregate_composes(tab in random_table(), thr in 0.0f64..1.0) {
            let spec = AggregationSpec::default();
            let w = window(0, 100_000);
            let via = aggregate_window(&filter_rows(&tab, thr).table, &w, &spec).unwrap();
            let keep: Vec<usize> = (0..tab.len()).filter(|&i| tab.confidence[i] >= thr).collect();
            let manual = aggregate_window(&tab.select(keep), &w, &spec).unwrap();
            prop_assert_eq!(via, manual);
            prop_assert_eq!(aggregate_window(&tab, &w, &spec).unwrap().values.len(), 10);
        }
    }
}
