use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{Dataset, QueryGroup};
use crate::seed;

/// Query-level feature normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    None,
    #[default]
    Zscore,
    Minmax,
}

/// Standardizes every feature column over the query's own documents using
/// the population variance. Constant columns become all zeros.
pub fn zscore_normalize_query(group: &QueryGroup) -> QueryGroup {
    let mut out = group.clone();
    let m = group.len() as f64;
    for mut col in out.features.columns_mut() {
        let mean = col.sum() / m;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
        let sd = var.sqrt();
        if sd > 0.0 {
            col.mapv_inplace(|x| (x - mean) / sd);
        } else {
            col.fill(0.0);
        }
    }
    out
}

/// Rescales every feature column to `[0, 1]` within the query; constant
/// columns become all zeros.
pub fn minmax_normalize_query(group: &QueryGroup) -> QueryGroup {
    let mut out = group.clone();
    for mut col in out.features.columns_mut() {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            col.mapv_inplace(|x| (x - lo) / (hi - lo));
        } else {
            col.fill(0.0);
        }
    }
    out
}

pub fn normalize_dataset(dataset: &Dataset, method: Normalization) -> Dataset {
    let f: fn(&QueryGroup) -> QueryGroup = match method {
        Normalization::None => return dataset.clone(),
        Normalization::Zscore => zscore_normalize_query,
        Normalization::Minmax => minmax_normalize_query,
    };
    let mut out = dataset.clone();
    out.groups = dataset.groups.iter().map(f).collect();
    out.with_step(format!("query-level {method:?} normalization"))
}

/// `y -> 1` if `y >= threshold` else `0`; the grade ceiling becomes 1.
pub fn binarize_labels(dataset: &Dataset, threshold: f64) -> Dataset {
    let mut out = dataset.clone();
    for g in &mut out.groups {
        for y in &mut g.labels {
            *y = if *y >= threshold { 1.0 } else { 0.0 };
        }
    }
    out.label_max = 1.0;
    out.with_step(format!("binarized labels at threshold {threshold}"))
}

/// Number of documents masked in a query of size `m` at `ratio`:
/// `floor(ratio * m)`, with a tiny tolerance so e.g. `0.29 * 100` counts 29.
pub fn masked_count(ratio: f64, m: usize) -> usize {
    let raw = (ratio * m as f64 + 1e-9).floor();
    (raw.max(0.0) as usize).min(m)
}

/// Hides exactly [`masked_count`] labels per query, chosen uniformly without
/// replacement from a stream derived from `seed` and the query position.
/// Existing mask flags are cleared first.
pub fn apply_random_mask(dataset: &Dataset, ratio: f64, seed_value: u64) -> Dataset {
    assert!((0.0..=1.0).contains(&ratio), "mask ratio {ratio} outside [0, 1]");
    let mut out = dataset.clone();
    for (qi, g) in out.groups.iter_mut().enumerate() {
        let m = g.len();
        g.masked = vec![false; m];
        let count = masked_count(ratio, m);
        if count == 0 {
            continue;
        }
        let mut rng = seed::rng(seed_value, "mask", &[qi as u64]);
        for i in index::sample(&mut rng, m, count) {
            g.masked[i] = true;
        }
    }
    out.with_step(format!("masked ratio {ratio} (seed {seed_value})"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn group(features: Array2<f64>) -> QueryGroup {
        let m = features.nrows();
        QueryGroup::new("q", features, vec![0.0; m]).unwrap()
    }

    fn dataset(sizes: &[usize]) -> Dataset {
        let groups = sizes
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let labels = (0..m).map(|j| (j % 5) as f64).collect();
                QueryGroup::new(i.to_string(), Array2::zeros((m, 2)), labels).unwrap()
            })
            .collect();
        Dataset::new(groups, "mem").unwrap()
    }

    #[test]
    fn zscore_examples() {
        let g = zscore_normalize_query(&group(array![[1.0, 5.0], [3.0, 5.0]]));
        assert_eq!(g.features, array![[-1.0, 0.0], [1.0, 0.0]]);
        let g = zscore_normalize_query(&group(array![[5.0], [5.0], [5.0]]));
        assert_eq!(g.features.column(0).to_vec(), vec![0.0; 3]);
        let g = zscore_normalize_query(&group(array![[42.0, -3.0]]));
        assert_eq!(g.features, array![[0.0, 0.0]]);
    }

    #[test]
    fn minmax_examples() {
        let g = minmax_normalize_query(&group(array![[1.0, 2.0], [3.0, 2.0], [2.0, 2.0]]));
        assert_eq!(g.features, array![[0.0, 0.0], [1.0, 0.0], [0.5, 0.0]]);
    }

    #[test]
    fn binarize_examples() {
        let mut ds = dataset(&[5]);
        ds.groups[0].labels = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let b = binarize_labels(&ds, 1.0);
        assert_eq!(b.groups[0].labels, vec![0.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(b.label_max, 1.0);

        ds.groups[0].labels = vec![0.0, 0.0, 2.0, 3.0, 0.0];
        let b = binarize_labels(&ds, 3.0);
        assert_eq!(b.groups[0].labels, vec![0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn mask_counts() {
        let ds = dataset(&[10, 5, 7]);
        let none = apply_random_mask(&ds, 0.0, 1);
        assert!(none.groups.iter().all(|g| g.masked.iter().all(|m| !m)));
        let fifth = apply_random_mask(&ds, 0.2, 1);
        let counts: Vec<usize> = fifth
            .groups
            .iter()
            .map(|g| g.masked.iter().filter(|&&m| m).count())
            .collect();
        assert_eq!(counts, vec![2, 1, 1]);
        let all = apply_random_mask(&ds, 1.0, 1);
        assert!(all.groups.iter().all(|g| g.masked.iter().all(|&m| m)));
        assert_eq!(masked_count(0.29, 100), 29);
    }

    #[test]
    fn mask_is_seeded() {
        let ds = dataset(&[20; 100]);
        let a = apply_random_mask(&ds, 0.3, 11);
        let b = apply_random_mask(&ds, 0.3, 11);
        let c = apply_random_mask(&ds, 0.3, 12);
        assert_eq!(a.groups, b.groups);
        let differing = a
            .groups
            .iter()
            .zip(&c.groups)
            .filter(|(x, y)| x.masked != y.masked)
            .count();
        // C(20, 6) = 38760 possible masks per query; collisions are rare.
        assert!(differing >= 95, "only {differing} of 100 masks differ");
    }

    proptest! {
        #[test]
        fn zscore_columns_are_standardized(
            rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 2..12)
        ) {
            let m = rows.len();
            let flat: Vec<f64> = rows.concat();
            let g = zscore_normalize_query(&group(Array2::from_shape_vec((m, 3), flat.clone()).unwrap()));
            for j in 0..3 {
                let col = g.features.column(j);
                let mean = col.sum() / m as f64;
                prop_assert!(mean.abs() < 1e-9);
                let raw: Vec<f64> = (0..m).map(|i| flat[i * 3 + j]).collect();
                let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let var = col.iter().map(|x| x * x).sum::<f64>() / m as f64;
                if hi - lo > 1e-6 {
                    prop_assert!((var - 1.0).abs() < 1e-9);
                } else {
                    prop_assert!(var < 1e-9 || (var - 1.0).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn mask_count_is_exact(ratio in 0.0f64..=1.0, sizes in prop::collection::vec(1usize..40, 1..10), seed in any::<u64>()) {
            let ds = dataset(&sizes);
            let masked = apply_random_mask(&ds, ratio, seed);
            for g in &masked.groups {
                let n = g.masked.iter().filter(|&&m| m).count();
                prop_assert_eq!(n, masked_count(ratio, g.len()));
                prop_assert_eq!(n, ((ratio * g.len() as f64) + 1e-9).floor() as usize);
            }
        }
    }
}
