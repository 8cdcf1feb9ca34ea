//! Query-grouped ranking data: types, LETOR/LibSVM ingestion and the
//! preprocessing pipeline (normalization, binarization, masking, folds).

mod folds;
mod libsvm;
mod preprocess;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use folds::{make_folds, FoldAssignment, FoldPlan};
pub use libsvm::{
    format_libsvm_line, load_dataset, parse_libsvm_line, read_dataset, CommentPolicy, LibsvmLine, LoadOptions,
    QidPolicy,
};
pub use preprocess::{
    apply_random_mask, binarize_labels, masked_count, minmax_normalize_query, normalize_dataset,
    zscore_normalize_query, Normalization,
};

/// One query's candidate documents.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    pub qid: String,
    /// `m x d` feature matrix, one row per document.
    pub features: Array2<f64>,
    /// Relevance grades, one per document.
    pub labels: Vec<f64>,
    /// `true` where the label is hidden from training.
    pub masked: Vec<bool>,
}

impl QueryGroup {
    pub fn new(qid: impl Into<String>, features: Array2<f64>, labels: Vec<f64>) -> Result<Self> {
        let masked = vec![false; labels.len()];
        Self::with_mask(qid, features, labels, masked)
    }

    pub fn with_mask(
        qid: impl Into<String>,
        features: Array2<f64>,
        labels: Vec<f64>,
        masked: Vec<bool>,
    ) -> Result<Self> {
        let qid = qid.into();
        let (m, d) = features.dim();
        if m == 0 || d == 0 {
            return Err(Error::invalid(format!("query {qid}: empty feature matrix ({m}x{d})")));
        }
        if labels.len() != m || masked.len() != m {
            return Err(Error::Dimension(format!(
                "query {qid}: {m} feature rows, {} labels, {} mask flags",
                labels.len(),
                masked.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|y| !y.is_finite()) {
            return Err(Error::NonFinite(format!("query {qid}: label {bad}")));
        }
        Ok(QueryGroup {
            qid,
            features,
            labels,
            masked,
        })
    }

    /// Number of documents.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn unmasked_count(&self) -> usize {
        self.masked.iter().filter(|&&m| !m).count()
    }
}

/// Where a dataset came from and what has been done to it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub groups: Vec<QueryGroup>,
    pub feature_dim: usize,
    pub label_max: f64,
    pub provenance: Provenance,
}

impl Dataset {
    /// Builds a dataset, checking shared dimension and unique qids.
    /// `label_max` is taken as the largest observed grade, floored at 1.
    pub fn new(groups: Vec<QueryGroup>, source: impl Into<String>) -> Result<Self> {
        let Some(first) = groups.first() else {
            return Err(Error::invalid("dataset has no queries"));
        };
        let feature_dim = first.feature_dim();
        let mut seen = std::collections::HashSet::with_capacity(groups.len());
        let mut label_max: f64 = 1.0;
        for g in &groups {
            if g.feature_dim() != feature_dim {
                return Err(Error::Dimension(format!(
                    "query {} has dimension {}, expected {feature_dim}",
                    g.qid,
                    g.feature_dim()
                )));
            }
            if !seen.insert(g.qid.as_str()) {
                return Err(Error::invalid(format!("duplicate qid {}", g.qid)));
            }
            for &y in &g.labels {
                label_max = label_max.max(y);
            }
        }
        Ok(Dataset {
            groups,
            feature_dim,
            label_max,
            provenance: Provenance {
                source: source.into(),
                steps: Vec::new(),
            },
        })
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn num_documents(&self) -> usize {
        self.groups.iter().map(QueryGroup::len).sum()
    }

    /// A new dataset holding the groups at `indices`, in that order.
    pub fn subset(&self, indices: &[usize], note: &str) -> Dataset {
        let mut provenance = self.provenance.clone();
        provenance.steps.push(note.to_string());
        Dataset {
            groups: indices.iter().map(|&i| self.groups[i].clone()).collect(),
            feature_dim: self.feature_dim,
            label_max: self.label_max,
            provenance,
        }
    }

    pub(crate) fn with_step(mut self, step: String) -> Self {
        self.provenance.steps.push(step);
        self
    }
}

/// A ranking of `m` documents, viewed both ways.
///
/// `ranks[i]` is the 1-based rank of document `i`; `order[r]` is the document
/// placed at 0-based position `r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    ranks: Vec<usize>,
    order: Vec<usize>,
}

impl Permutation {
    /// Builds from the document order (best first).
    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let m = order.len();
        let mut ranks = vec![0usize; m];
        for (pos, &doc) in order.iter().enumerate() {
            if doc >= m || ranks[doc] != 0 {
                return Err(Error::invalid(format!("not a permutation of 0..{m}: {order:?}")));
            }
            ranks[doc] = pos + 1;
        }
        Ok(Permutation { ranks, order })
    }

    pub fn identity(m: usize) -> Self {
        Permutation {
            ranks: (1..=m).collect(),
            order: (0..m).collect(),
        }
    }

    /// 1-based rank of document `doc`.
    pub fn rank(&self, doc: usize) -> usize {
        self.ranks[doc]
    }

    /// Document at 1-based rank `r`.
    pub fn doc_at(&self, r: usize) -> usize {
        self.order[r - 1]
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Applies the permutation to per-document values, best first.
    pub fn arrange<T: Copy>(&self, values: &[T]) -> Vec<T> {
        self.order.iter().map(|&i| values[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn query_group_rejects_mismatched_lengths() {
        let err = QueryGroup::new("q", array![[1.0], [2.0]], vec![0.0]).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
        let err = QueryGroup::new("q", array![[1.0]], vec![f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn dataset_rejects_duplicate_qids_and_mixed_dims() {
        let a = QueryGroup::new("1", array![[1.0, 2.0]], vec![1.0]).unwrap();
        let b = QueryGroup::new("1", array![[1.0, 2.0]], vec![0.0]).unwrap();
        assert!(Dataset::new(vec![a.clone(), b], "mem").is_err());
        let c = QueryGroup::new("2", array![[1.0]], vec![0.0]).unwrap();
        assert!(matches!(Dataset::new(vec![a, c], "mem"), Err(Error::Dimension(_))));
    }

    #[test]
    fn permutation_views_are_inverse() {
        let p = Permutation::from_order(vec![1, 2, 0]).unwrap();
        assert_eq!(p.ranks(), &[3, 1, 2]);
        for i in 0..3 {
            assert_eq!(p.doc_at(p.rank(i)), i);
        }
        assert!(Permutation::from_order(vec![0, 0, 1]).is_err());
        assert!(Permutation::from_order(vec![0, 3]).is_err());
    }
}
