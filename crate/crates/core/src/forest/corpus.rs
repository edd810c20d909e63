use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wasabi::{FeatureVector, FEATURE_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    NonWasabi,
    Wasabi,
}

impl Label {
    pub fn from_bool(wasabi: bool) -> Self {
        if wasabi {
            Label::Wasabi
        } else {
            Label::NonWasabi
        }
    }

    pub fn is_wasabi(self) -> bool {
        self == Label::Wasabi
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::NonWasabi => "non-wasabi",
            Label::Wasabi => "wasabi",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("corpus is empty")]
    Empty,
    #[error("row {row} has {got} features, expected {expected}")]
    Width { row: usize, got: usize, expected: usize },
    #[error("train fraction {0} outside [0, 1]")]
    Fraction(String),
    #[error("{ids} ids, {rows} rows and {labels} labels do not line up")]
    Length { ids: usize, rows: usize, labels: usize },
}

/// Feature rows with ground-truth labels, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    feature_names: Vec<String>,
    ids: Vec<String>,
    values: Vec<f64>,
    labels: Vec<Label>,
}

impl LabeledCorpus {
    pub fn new(feature_names: Vec<String>) -> Self {
        LabeledCorpus {
            feature_names,
            ids: Vec::new(),
            values: Vec::new(),
            labels: Vec::new(),
        }
    }

    /// Corpus over the eight transaction features.
    pub fn from_feature_vectors(
        ids: Vec<String>,
        rows: &[FeatureVector],
        labels: Vec<Label>,
    ) -> Result<Self, CorpusError> {
        if ids.len() != rows.len() || rows.len() != labels.len() {
            return Err(CorpusError::Length {
                ids: ids.len(),
                rows: rows.len(),
                labels: labels.len(),
            });
        }
        let mut c = LabeledCorpus::new(FEATURE_NAMES.iter().map(|s| s.to_string()).collect());
        for ((id, row), label) in ids.into_iter().zip(rows).zip(labels) {
            c.push(id, &row.to_array(), label)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, id: String, row: &[f64], label: Label) -> Result<(), CorpusError> {
        if row.len() != self.n_features() {
            return Err(CorpusError::Width {
                row: self.len(),
                got: row.len(),
                expected: self.n_features(),
            });
        }
        self.ids.push(id);
        self.values.extend_from_slice(row);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.n_features();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn value(&self, i: usize, feature: usize) -> f64 {
        self.values[i * self.n_features() + feature]
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    /// Counts of (non-wasabi, wasabi) rows.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for l in &self.labels {
            c[l.index()] += 1;
        }
        c
    }

    /// New corpus holding the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> LabeledCorpus {
        let mut c = LabeledCorpus::new(self.feature_names.clone());
        for &i in indices {
            c.ids.push(self.ids[i].clone());
            c.values.extend_from_slice(self.row(i));
            c.labels.push(self.labels[i]);
        }
        c
    }

    /// Copy with one feature column permuted.
    pub(crate) fn with_column_permuted(&self, feature: usize, rng: &mut ChaCha8Rng) -> LabeledCorpus {
        let mut column: Vec<f64> = (0..self.len()).map(|i| self.value(i, feature)).collect();
        column.shuffle(rng);
        let mut c = self.clone();
        let w = self.n_features();
        for (i, v) in column.into_iter().enumerate() {
            c.values[i * w + feature] = v;
        }
        c
    }
}

/// Seeded shuffle, then the first `round(n * train_fraction)` rows train.
pub fn split_train_test(
    corpus: &LabeledCorpus,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledCorpus, LabeledCorpus), CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(CorpusError::Fraction(train_fraction.to_string()));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((corpus.len() as f64) * train_fraction).round() as usize;
    if n_train == corpus.len() {
        log::warn!("train fraction {train_fraction} leaves an empty test set");
    }
    let (train, test) = order.split_at(n_train);
    Ok((corpus.subset(train), corpus.subset(test)))
}

/// Seeded assignment of row indices to `k` folds of near-equal size.
pub fn k_folds(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in order.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    folds
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn toy(n: usize) -> LabeledCorpus {
        let mut c = LabeledCorpus::new(vec!["a".into()]);
        for i in 0..n {
            c.push(format!("r{i}"), &[i as f64], Label::from_bool(i % 2 == 0)).unwrap();
        }
        c
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_seeded() {
        let c = toy(10);
        let (tr, te) = split_train_test(&c, 0.7, 9).unwrap();
        assert_eq!((tr.len(), te.len()), (7, 3));
        let a: HashSet<&str> = (0..tr.len()).map(|i| tr.id(i)).collect();
        let b: HashSet<&str> = (0..te.len()).map(|i| te.id(i)).collect();
        assert!(a.is_disjoint(&b));
        assert_eq!(a.len() + b.len(), 10);
        assert_eq!(split_train_test(&c, 0.7, 9).unwrap(), (tr, te));
    }

    #[test]
    fn split_boundaries() {
        let c = toy(10);
        let (tr, te) = split_train_test(&c, 1.0, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (10, 0));
        assert_eq!(split_train_test(&toy(0), 0.7, 1), Err(CorpusError::Empty));
        assert!(split_train_test(&c, 1.5, 1).is_err());
    }

    #[test]
    fn width_is_checked() {
        let mut c = LabeledCorpus::new(vec!["a".into(), "b".into()]);
        assert!(c.push("x".into(), &[1.0], Label::Wasabi).is_err());
    }

    #[test]
    fn folds_partition_rows() {
        let folds = k_folds(23, 5, 3);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| f.len() == 4 || f.len() == 5));
    }
}
