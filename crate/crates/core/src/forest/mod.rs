//! Bagged decision forest over transaction feature vectors.
//!
//! Trees use Gini impurity with axis-aligned midpoint thresholds. Each tree
//! is grown on a bootstrap sample drawn from its own ChaCha stream (stream
//! number = tree index), so training is reproducible and independent of how
//! trees are scheduled across threads. Vote ties go to the negative class.

mod corpus;
mod eval;
mod tree;

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;

pub use corpus::{k_folds, split_train_test, CorpusError, Label, LabeledCorpus};
pub use eval::{
    cross_validate, evaluate, permutation_importance, write_metrics_csv, Confusion, CvReport,
    EvalMetrics, FeatureImportance,
};
pub use tree::{Node, Tree};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub mtry: usize,
    pub rng_seed: u64,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_trees: 500,
            mtry: 2,
            rng_seed: 0,
            max_depth: None,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("n_trees must be at least 1")]
    NoTrees,
    #[error("mtry {mtry} outside 1..={n_features}")]
    Mtry { mtry: usize, n_features: usize },
    #[error("min_leaf must be at least 1")]
    MinLeaf,
    #[error("training corpus is empty")]
    Empty,
    #[error("training corpus has a single class")]
    SingleClass,
    #[error("cannot cross-validate with {0} folds")]
    Folds(usize),
}

impl TrainConfig {
    pub fn validate(&self, n_features: usize) -> Result<(), TrainError> {
        if self.n_trees == 0 {
            return Err(TrainError::NoTrees);
        }
        if self.mtry == 0 || self.mtry > n_features {
            return Err(TrainError::Mtry {
                mtry: self.mtry,
                n_features,
            });
        }
        if self.min_leaf == 0 {
            return Err(TrainError::MinLeaf);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    config: TrainConfig,
    feature_names: Vec<String>,
    trees: Vec<Tree>,
    /// Per tree, the training rows its bootstrap left out (sorted). Absent
    /// for forests loaded from a model file.
    out_of_bag: Option<Vec<Vec<u32>>>,
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

/// Indices drawn uniformly with replacement, `n` draws.
pub(crate) fn bootstrap<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

fn out_of_bag(n: usize, sample: &[usize]) -> Vec<u32> {
    let mut seen = vec![false; n];
    for &i in sample {
        seen[i] = true;
    }
    (0..n).filter(|&i| !seen[i]).map(|i| i as u32).collect()
}

pub fn train_forest(train: &LabeledCorpus, cfg: &TrainConfig) -> Result<Forest, TrainError> {
    cfg.validate(train.n_features())?;
    if train.is_empty() {
        return Err(TrainError::Empty);
    }
    if train.class_counts().contains(&0) {
        return Err(TrainError::SingleClass);
    }
    let params = tree::GrowParams {
        mtry: cfg.mtry,
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf,
    };
    let n = train.len();
    let grown: Vec<(Tree, Vec<u32>)> = par::map_range(cfg.n_trees, |t| {
        let mut rng = tree_rng(cfg.rng_seed, t);
        let sample = bootstrap(n, &mut rng);
        let oob = out_of_bag(n, &sample);
        (Tree::grow(train, sample, params, &mut rng), oob)
    });
    let (trees, oob): (Vec<Tree>, Vec<Vec<u32>>) = grown.into_iter().unzip();
    Ok(Forest {
        config: cfg.clone(),
        feature_names: train.feature_names().to_vec(),
        trees,
        out_of_bag: Some(oob),
    })
}

/// Fraction of evaluated training rows misclassified by their out-of-bag
/// vote; rows that no tree left out are not counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OobReport {
    pub error: f64,
    pub evaluated: usize,
    pub misclassified: usize,
}

/// `wasabi` wins only with a strict majority.
fn vote(wasabi: usize, total: usize) -> Label {
    Label::from_bool(2 * wasabi > total)
}

impl Forest {
    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn out_of_bag(&self) -> Option<&[Vec<u32>]> {
        self.out_of_bag.as_deref()
    }

    /// Number of trees voting wasabi.
    pub fn wasabi_votes(&self, x: &[f64]) -> usize {
        self.trees.iter().filter(|t| t.predict(x).is_wasabi()).count()
    }

    pub fn predict(&self, x: &[f64]) -> Label {
        vote(self.wasabi_votes(x), self.trees.len())
    }

    pub fn predict_corpus(&self, corpus: &LabeledCorpus) -> Vec<Label> {
        par::map_range(corpus.len(), |i| self.predict(corpus.row(i)))
    }

    /// `None` when the forest was loaded without bootstrap identities or
    /// `train` is not the corpus it was trained on.
    pub fn oob_error(&self, train: &LabeledCorpus) -> Option<OobReport> {
        let oob = self.out_of_bag.as_ref()?;
        let n = train.len();
        let mut votes = vec![[0usize; 2]; n];
        for (tree, rows) in self.trees.iter().zip(oob) {
            for &r in rows {
                let r = r as usize;
                if r >= n {
                    return None;
                }
                votes[r][tree.predict(train.row(r)).index()] += 1;
            }
        }
        let mut evaluated = 0;
        let mut misclassified = 0;
        for (i, v) in votes.iter().enumerate() {
            let total = v[0] + v[1];
            if total == 0 {
                continue;
            }
            evaluated += 1;
            if vote(v[1], total) != train.label(i) {
                misclassified += 1;
            }
        }
        Some(OobReport {
            error: if evaluated == 0 {
                0.0
            } else {
                misclassified as f64 / evaluated as f64
            },
            evaluated,
            misclassified,
        })
    }

    pub fn write_json<W: Write>(&self, out: W) -> serde_json::Result<()> {
        let model = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            n_trees: self.trees.len(),
            mtry: self.config.mtry,
            seed: self.config.rng_seed,
            max_depth: self.config.max_depth,
            min_leaf: self.config.min_leaf,
            feature_names: self.feature_names.clone(),
            trees: self.trees.clone(),
        };
        serde_json::to_writer(out, &model)
    }

    pub fn read_json<R: Read>(input: R) -> Result<Forest, ModelError> {
        let m: ModelFile = serde_json::from_reader(input)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Version(m.format_version));
        }
        if m.n_trees != m.trees.len() || m.trees.is_empty() {
            return Err(ModelError::Invalid(format!(
                "header says {} trees, file has {}",
                m.n_trees,
                m.trees.len()
            )));
        }
        for (i, t) in m.trees.iter().enumerate() {
            t.validate(m.feature_names.len())
                .map_err(|e| ModelError::Invalid(format!("tree {i}: {e}")))?;
        }
        Ok(Forest {
            config: TrainConfig {
                n_trees: m.n_trees,
                mtry: m.mtry,
                rng_seed: m.seed,
                max_depth: m.max_depth,
                min_leaf: m.min_leaf,
            },
            feature_names: m.feature_names,
            trees: m.trees,
            out_of_bag: None,
        })
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    n_trees: usize,
    mtry: usize,
    seed: u64,
    #[serde(default)]
    max_depth: Option<usize>,
    #[serde(default = "one")]
    min_leaf: usize,
    feature_names: Vec<String>,
    trees: Vec<Tree>,
}

fn one() -> usize {
    1
}
