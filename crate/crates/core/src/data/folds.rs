use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

/// Group indices used by one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub train: Vec<usize>,
    pub vali: Vec<usize>,
    pub test: Vec<usize>,
}

/// Rotating train/vali/test plan over `num_folds` near-equal partitions.
///
/// Fold `i` trains on partitions `i, i+1, ..., i+n-3`, validates on
/// `i+n-2` and tests on `i+n-1` (all mod `n`), so every partition is the
/// test set exactly once. With five partitions that is a 3:1:1 split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub num_folds: usize,
    pub folds: Vec<FoldAssignment>,
}

pub fn make_folds(num_groups: usize, num_folds: usize, seed_value: u64) -> Result<FoldPlan> {
    if num_folds < 3 {
        return Err(Error::invalid(format!("need at least 3 folds, got {num_folds}")));
    }
    if num_groups < num_folds {
        return Err(Error::invalid(format!(
            "too few queries: {num_groups} queries for {num_folds} folds"
        )));
    }
    let mut order: Vec<usize> = (0..num_groups).collect();
    order.shuffle(&mut seed::rng(seed_value, "folds", &[]));

    let base = num_groups / num_folds;
    let extra = num_groups % num_folds;
    let mut parts = Vec::with_capacity(num_folds);
    let mut start = 0;
    for p in 0..num_folds {
        let len = base + usize::from(p < extra);
        let mut part = order[start..start + len].to_vec();
        part.sort_unstable();
        parts.push(part);
        start += len;
    }

    let folds = (0..num_folds)
        .map(|i| {
            let mut train: Vec<usize> = (0..num_folds - 2)
                .flat_map(|j| parts[(i + j) % num_folds].iter().copied())
                .collect();
            train.sort_unstable();
            FoldAssignment {
                train,
                vali: parts[(i + num_folds - 2) % num_folds].clone(),
                test: parts[(i + num_folds - 1) % num_folds].clone(),
            }
        })
        .collect();
    Ok(FoldPlan { num_folds, folds })
}
