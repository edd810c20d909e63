use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::corpus::{k_folds, Label, LabeledCorpus};
use super::{train_forest, Forest, TrainConfig, TrainError};

/// Confusion counts with wasabi as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_pairs(truth: &[Label], predicted: &[Label]) -> Self {
        assert_eq!(truth.len(), predicted.len(), "label slices differ in length");
        let mut c = Confusion::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t.is_wasabi(), p.is_wasabi()) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub confusion: Confusion,
    pub accuracy: f64,
    pub fpr: f64,
    pub fnr: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalMetrics {
    /// Rates with an empty denominator are reported as 0.
    pub fn from_confusion(c: Confusion) -> Self {
        EvalMetrics {
            confusion: c,
            accuracy: ratio(c.tp + c.tn, c.total()),
            fpr: ratio(c.fp, c.fp + c.tn),
            fnr: ratio(c.fn_, c.fn_ + c.tp),
        }
    }

    pub fn from_labels(truth: &[Label], predicted: &[Label]) -> Self {
        EvalMetrics::from_confusion(Confusion::from_pairs(truth, predicted))
    }
}

pub fn evaluate(forest: &Forest, test: &LabeledCorpus) -> EvalMetrics {
    EvalMetrics::from_labels(test.labels(), &forest.predict_corpus(test))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub accuracy_drop: f64,
}

/// Accuracy drop on `test` when each feature column is shuffled in turn.
pub fn permutation_importance(
    forest: &Forest,
    test: &LabeledCorpus,
    seed: u64,
) -> Vec<FeatureImportance> {
    let base = evaluate(forest, test).accuracy;
    (0..test.n_features())
        .map(|f| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(f as u64);
            let shuffled = test.with_column_permuted(f, &mut rng);
            FeatureImportance {
                feature: test.feature_names()[f].clone(),
                accuracy_drop: base - evaluate(forest, &shuffled).accuracy,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Sample standard deviation over folds divided by sqrt(k).
    pub std_error: f64,
}

/// k-fold cross-validation; fold `i` trains with seed `cfg.rng_seed + i`.
pub fn cross_validate(
    corpus: &LabeledCorpus,
    cfg: &TrainConfig,
    k: usize,
    seed: u64,
) -> Result<CvReport, TrainError> {
    if k < 2 || k > corpus.len() {
        return Err(TrainError::Folds(k));
    }
    let folds = k_folds(corpus.len(), k, seed);
    let mut accs = Vec::with_capacity(k);
    for (i, held) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let fold_cfg = TrainConfig {
            rng_seed: cfg.rng_seed.wrapping_add(i as u64),
            ..cfg.clone()
        };
        let forest = train_forest(&corpus.subset(&train_idx), &fold_cfg)?;
        accs.push(evaluate(&forest, &corpus.subset(held)).accuracy);
    }
    let mean = accs.iter().sum::<f64>() / k as f64;
    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    Ok(CvReport {
        std_error: (var / k as f64).sqrt(),
        mean_accuracy: mean,
        fold_accuracies: accs,
    })
}

/// Writes a `method,accuracy,fpr,fnr` table.
pub fn write_metrics_csv<W: Write>(out: W, rows: &[(&str, EvalMetrics)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "accuracy", "fpr", "fnr"])?;
    for (method, m) in rows {
        w.write_record([
            method.to_string(),
            format!("{:.6}", m.accuracy),
            format!("{:.6}", m.fpr),
            format!("{:.6}", m.fnr),
        ])?;
    }
    w.flush()?;
    Ok(())
}
