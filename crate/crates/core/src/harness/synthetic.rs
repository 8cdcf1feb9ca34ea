use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, QueryGroup};
use crate::metrics::{EvalOptions, MetricReport};
use crate::{seed, Error, Result};

/// Number of relevance grades produced by the bucketing (0..=4).
pub const SYNTHETIC_GRADES: usize = 5;

/// A generated dataset together with the hidden utility it was built from.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    /// Unit-norm hidden weight vector.
    pub weights: Vec<f64>,
    /// Utility `w·x + noise·ε` per query and document, the quantity the
    /// labels bucket; sorting by it is the oracle ranker.
    pub utility: Vec<Vec<f64>>,
}

impl SyntheticData {
    /// Metrics of the oracle ranker over the queries at `indices`.
    pub fn oracle_report(&self, indices: &[usize], opts: &EvalOptions) -> MetricReport {
        let mut report = MetricReport::default();
        for &qi in indices {
            report.add_query(&self.dataset.groups[qi].labels, &self.utility[qi], opts);
        }
        report
    }
}

/// Grades by per-query quantile bucket: the document at ascending rank
/// `r` of `m` gets `floor(r * 5 / m)`, so every grade holds `m/5`
/// documents when 5 divides `m`.
pub fn quantile_grades(values: &[f64]) -> Vec<f64> {
    let m = values.len();
    let mut asc: Vec<usize> = (0..m).collect();
    asc.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut grades = vec![0.0; m];
    for (r, &i) in asc.iter().enumerate() {
        grades[i] = (r * SYNTHETIC_GRADES / m) as f64;
    }
    grades
}

/// Standard-normal features, a hidden unit-norm weight vector `w`, and
/// labels from quantile-bucketing `w·x + noise·ε` per query.
pub fn make_synthetic_dataset(
    num_queries: usize,
    docs_per_query: usize,
    dim: usize,
    noise: f64,
    seed_value: u64,
) -> Result<SyntheticData> {
    if num_queries == 0 || docs_per_query == 0 || dim == 0 {
        return Err(Error::invalid("synthetic dataset sizes must be positive"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid(format!("noise must be >= 0, got {noise}")));
    }
    let mut wrng = seed::rng(seed_value, "synthetic-w", &[]);
    let mut weights: Vec<f64> = (0..dim).map(|_| wrng.sample(StandardNormal)).collect();
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    weights.iter_mut().for_each(|w| *w /= norm);

    let mut groups = Vec::with_capacity(num_queries);
    let mut utility = Vec::with_capacity(num_queries);
    for q in 0..num_queries {
        let mut rng = seed::rng(seed_value, "synthetic-q", &[q as u64]);
        let x = Array2::from_shape_simple_fn((docs_per_query, dim), || rng.sample(StandardNormal));
        let clean: Vec<f64> = x
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(&weights).map(|(a, b)| a * b).sum())
            .collect();
        let u: Vec<f64> = clean
            .iter()
            .map(|&v| v + noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        groups.push(QueryGroup::new(format!("s{q}"), x, quantile_grades(&u))?);
        utility.push(u);
    }
    let dataset = Dataset::new(
        groups,
        format!("synthetic(q={num_queries}, m={docs_per_query}, d={dim}, noise={noise}, seed={seed_value})"),
    )?;
    Ok(SyntheticData {
        dataset,
        weights,
        utility,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricKey;

    #[test]
    fn oracle_is_perfect() {
        let s = make_synthetic_dataset(20, 30, 5, 0.3, 3).unwrap();
        let opts = EvalOptions::new(vec![1, 3, 5, 10, 20, 50], 4.0);
        let all: Vec<usize> = (0..20).collect();
        let r = s.oracle_report(&all, &opts);
        for k in [1, 3, 5, 10, 20, 50] {
            assert!((r.mean(MetricKey::ndcg(k)).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_bits() {
        let a = make_synthetic_dataset(4, 7, 3, 0.1, 9).unwrap();
        let b = make_synthetic_dataset(4, 7, 3, 0.1, 9).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.utility, b.utility);
        let c = make_synthetic_dataset(4, 7, 3, 0.1, 10).unwrap();
        assert_ne!(a.dataset.groups[0].features, c.dataset.groups[0].features);
    }

    #[test]
    fn grade_histogram_matches_buckets() {
        let s = make_synthetic_dataset(10, 30, 4, 0.5, 1).unwrap();
        assert_eq!(s.dataset.label_max, 4.0);
        for g in &s.dataset.groups {
            let mut hist = [0usize; SYNTHETIC_GRADES];
            for &y in &g.labels {
                hist[y as usize] += 1;
            }
            assert_eq!(hist, [6; SYNTHETIC_GRADES]);
        }
        assert_eq!(quantile_grades(&[0.3, -1.0, 2.0]), vec![1.0, 0.0, 3.0]);
    }
}
