//! Supervised feature scoring (ANOVA F, binned mutual information) and top-k
//! selection. Scores are always fit on training rows only.

use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};

/// Stand-in for an infinite F when within-group variance vanishes.
pub const F_SENTINEL: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMethod {
    AnovaF,
    MutualInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScores {
    pub scores: Vec<f64>,
    pub method: ScoreMethod,
    /// Indices whose score hit a degenerate case (0/0, x/0, clamped MI).
    pub flagged: Vec<usize>,
}

fn class_counts(y: &[u8]) -> (usize, usize) {
    let pos = y.iter().filter(|&&l| l == 1).count();
    (y.len() - pos, pos)
}

/// One-way ANOVA F per column for two groups.
pub fn anova_f(x: &Matrix, y: &[u8]) -> Result<FeatureScores> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    let (n0, n1) = class_counts(y);
    if n0 == 0 || n1 == 0 {
        return Err(Error::SingleClass);
    }
    if n0 < 2 || n1 < 2 {
        return Err(Error::Invalid("ANOVA needs at least 2 samples per class".into()));
    }
    let n = y.len() as f64;
    let mut scores = Vec::with_capacity(x.cols());
    let mut flagged = Vec::new();
    for j in 0..x.cols() {
        let (mut s, mut c) = ([0.0; 2], [0.0; 2]);
        for (i, &l) in y.iter().enumerate() {
            s[l as usize] += x.get(i, j);
            c[l as usize] += 1.0;
        }
        let m = [s[0] / c[0], s[1] / c[1]];
        let grand = (s[0] + s[1]) / n;
        let ssb = c[0] * (m[0] - grand).powi(2) + c[1] * (m[1] - grand).powi(2);
        let ssw: f64 = y
            .iter()
            .enumerate()
            .map(|(i, &l)| (x.get(i, j) - m[l as usize]).powi(2))
            .sum();
        // compare against the data scale so rounding noise counts as zero
        let scale = (0..x.rows()).map(|i| (x.get(i, j) - grand).powi(2)).sum::<f64>();
        let eps = 1e-12 * scale.max(f64::MIN_POSITIVE);
        let f = if scale == 0.0 || ssb <= eps {
            if scale == 0.0 || ssw <= eps {
                flagged.push(j);
            }
            0.0
        } else if ssw <= eps {
            flagged.push(j);
            F_SENTINEL
        } else {
            (ssb / 1.0) / (ssw / (n - 2.0))
        };
        scores.push(f);
    }
    Ok(FeatureScores {
        scores,
        method: ScoreMethod::AnovaF,
        flagged,
    })
}

/// Plug-in mutual information (nats) after equal-width binning over the
/// observed range of each column.
pub fn mutual_info(x: &Matrix, y: &[u8], bins: usize) -> Result<FeatureScores> {
    if bins < 2 {
        return Err(Error::Invalid(format!("mutual information needs >= 2 bins, got {bins}")));
    }
    if x.rows() == 0 {
        return Err(Error::Invalid("mutual information of an empty matrix".into()));
    }
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    let n = y.len() as f64;
    let (n0, n1) = class_counts(y);
    let pc = [n0 as f64 / n, n1 as f64 / n];
    let mut scores = Vec::with_capacity(x.cols());
    let mut flagged = Vec::new();
    for j in 0..x.cols() {
        let col = x.column(j);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / bins as f64;
        let mut joint = vec![[0.0f64; 2]; bins];
        for (v, &l) in col.iter().zip(y) {
            let b = if width > 0.0 {
                (((v - lo) / width) as usize).min(bins - 1)
            } else {
                0
            };
            joint[b][l as usize] += 1.0;
        }
        let mut mi = 0.0;
        for row in &joint {
            let pb = (row[0] + row[1]) / n;
            for c in 0..2 {
                let p = row[c] / n;
                if p > 0.0 {
                    mi += p * (p / (pb * pc[c])).ln();
                }
            }
        }
        if mi < 0.0 {
            flagged.push(j);
            mi = 0.0;
        }
        scores.push(mi);
    }
    Ok(FeatureScores {
        scores,
        method: ScoreMethod::MutualInfo,
        flagged,
    })
}

/// Indices of the `k` largest scores, ties to the lower index, ascending.
pub fn select_top_k(scores: &FeatureScores, k: usize) -> Result<Vec<usize>> {
    let d = scores.scores.len();
    if k == 0 || k > d {
        return Err(Error::Invalid(format!("k must be in 1..={d}, got {k}")));
    }
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| scores.scores[b].total_cmp(&scores.scores[a]).then(a.cmp(&b)));
    let mut out = idx[..k].to_vec();
    out.sort_unstable();
    Ok(out)
}

/// `k` from a fraction of the dimension: `ceil(frac * d)`, at least 1.
pub fn k_from_fraction(frac: f64, d: usize) -> usize {
    ((frac * d as f64).ceil() as usize).clamp(1, d.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn anova_by_hand() {
        let s = anova_f(&col(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), &[0, 0, 0, 1, 1, 1]).unwrap();
        assert!((s.scores[0] - 13.5).abs() < 1e-12);
        assert!(s.flagged.is_empty());
    }

    #[test]
    fn anova_degenerate_cases() {
        let y = [0, 0, 1, 1];
        let same = anova_f(&col(&[1.0, 2.0, 1.0, 2.0]), &y).unwrap();
        assert_eq!(same.scores[0], 0.0);
        let constant = anova_f(&col(&[5.0; 4]), &y).unwrap();
        assert_eq!(constant.scores[0], 0.0);
        assert_eq!(constant.flagged, vec![0]);
        let perfect = anova_f(&col(&[1.0, 1.0, 2.0, 2.0]), &y).unwrap();
        assert_eq!(perfect.scores[0], F_SENTINEL);
        assert_eq!(perfect.flagged, vec![0]);
        assert!(matches!(anova_f(&col(&[1.0, 2.0]), &[1, 1]), Err(Error::SingleClass)));
    }

    #[test]
    fn mi_of_label_is_ln2() {
        let y = [0u8, 1, 0, 1, 1, 0];
        let x = col(&y.iter().map(|&l| l as f64).collect::<Vec<_>>());
        let s = mutual_info(&x, &y, 10).unwrap();
        assert!((s.scores[0] - 2f64.ln()).abs() < 1e-12);
        let flip = col(&y.iter().map(|&l| 1.0 - l as f64).collect::<Vec<_>>());
        assert!((mutual_info(&flip, &y, 2).unwrap().scores[0] - 2f64.ln()).abs() < 1e-12);
        assert_eq!(mutual_info(&col(&[3.0; 6]), &y, 10).unwrap().scores[0], 0.0);
    }

    #[test]
    fn top_k_ties() {
        let s = FeatureScores {
            scores: vec![0.1, 0.9, 0.9, 0.2],
            method: ScoreMethod::AnovaF,
            flagged: vec![],
        };
        assert_eq!(select_top_k(&s, 2).unwrap(), vec![1, 2]);
        assert_eq!(select_top_k(&s, 1).unwrap(), vec![1]);
        assert_eq!(select_top_k(&s, 4).unwrap(), vec![0, 1, 2, 3]);
        assert!(select_top_k(&s, 0).is_err());
        assert!(select_top_k(&s, 5).is_err());
    }

    #[test]
    fn fraction_rounds_up() {
        assert_eq!(k_from_fraction(0.25, 7), 2);
        assert_eq!(k_from_fraction(0.5, 144), 72);
        assert_eq!(k_from_fraction(0.01, 3), 1);
    }

    proptest! {
        #[test]
        fn anova_is_affine_invariant(
            v in proptest::collection::vec(-50.0f64..50.0, 8..40),
            a in 0.1f64..10.0,
            b in -100.0f64..100.0,
        ) {
            let y: Vec<u8> = (0..v.len()).map(|i| (i % 2) as u8).collect();
            let s1 = anova_f(&col(&v), &y).unwrap().scores[0];
            let w: Vec<f64> = v.iter().map(|x| a * x + b).collect();
            let s2 = anova_f(&col(&w), &y).unwrap().scores[0];
            prop_assert!((s1 - s2).abs() <= 1e-9 * s1.abs().max(1.0), "{} vs {}", s1, s2);
        }

        #[test]
        fn mi_is_non_negative(
            v in proptest::collection::vec(-5.0f64..5.0, 2..80),
            bins in 2usize..20,
        ) {
            let y: Vec<u8> = v.iter().map(|x| (x.fract().abs() > 0.5) as u8).collect();
            prop_assert!(mutual_info(&col(&v), &y, bins).unwrap().scores[0] >= 0.0);
        }

        #[test]
        fn equal_scores_pick_lowest_indices(d in 1usize..30, k in 1usize..30, c in -3.0f64..3.0) {
            prop_assume!(k <= d);
            let s = FeatureScores { scores: vec![c; d], method: ScoreMethod::MutualInfo, flagged: vec![] };
            prop_assert_eq!(select_top_k(&s, k).unwrap(), (0..k).collect::<Vec<_>>());
        }
    }

    #[test]
    fn mi_prefers_informative_feature() {
        use rand::Rng;
        let mut rng = crate::rng::seeded(11);
        let mut wins = 0;
        for _ in 0..100 {
            let x: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
            let y: Vec<u8> = x.iter().map(|&v| (v > 0.5) as u8).collect();
            let mut shuffled = y.clone();
            crate::rng::fisher_yates(&mut shuffled, &mut rng);
            let m = col(&x);
            let own = mutual_info(&m, &y, 10).unwrap().scores[0];
            let other = mutual_info(&m, &shuffled, 10).unwrap().scores[0];
            if own >= other {
                wins += 1;
            }
        }
        assert!(wins >= 95);
    }
}
