use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{fisher_yates, seeded};

pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.8, 0.1, 0.1);

/// Person-independent partition of participant IDs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

impl Split {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

/// Sorts the IDs, shuffles them with a seeded Fisher–Yates pass and slices
/// floor/floor/remainder. A part left empty despite a nonzero ratio borrows
/// one ID from the part with the largest surplus over its target size (among
/// parts holding at least two IDs).
pub fn person_split(participants: &[String], ratios: (f64, f64, f64), seed: u64) -> Result<Split> {
    let mut ids: Vec<String> = participants.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() != participants.len() {
        return Err(Error::Invalid("participant list contains duplicates".into()));
    }
    let n = ids.len();
    if n < 3 {
        return Err(Error::Invalid(format!("need at least 3 participants, got {n}")));
    }
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("split ratios {ratios:?} must be in [0,1] and sum to 1")));
    }
    fisher_yates(&mut ids, &mut seeded(seed));

    let nf = n as f64;
    let mut sizes = [
        (r[0] * nf + 1e-9).floor() as usize,
        (r[1] * nf + 1e-9).floor() as usize,
        0,
    ];
    sizes[2] = n - sizes[0] - sizes[1];
    loop {
        let Some(empty) = (0..3).find(|&k| sizes[k] == 0 && r[k] > 0.0) else {
            break;
        };
        let donor = (0..3)
            .filter(|&k| sizes[k] >= 2)
            .max_by(|&a, &b| {
                let sa = sizes[a] as f64 - r[a] * nf;
                let sb = sizes[b] as f64 - r[b] * nf;
                sa.total_cmp(&sb).then(b.cmp(&a))
            })
            .ok_or_else(|| Error::Invalid("cannot fill every split part".into()))?;
        sizes[donor] -= 1;
        sizes[empty] += 1;
    }

    let test = ids.split_off(sizes[0] + sizes[1]);
    let val = ids.split_off(sizes[0]);
    Ok(Split {
        train: ids,
        val,
        test,
        seed,
    })
}
