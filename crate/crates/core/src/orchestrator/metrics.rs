use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, RoleInventory};
use crate::error::{Error, Result};
use crate::labeler::{Labeler, SparseVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub role: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold sentences of this role.
    pub support: u64,
    pub predicted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean F1 over roles that occur in the gold labels or the predictions.
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub accuracy: f64,
    pub sentences: u64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[gold][pred]`.
    pub confusion: Vec<Vec<u64>>,
}

/// Gold-by-prediction counts over aligned label sequences.
pub fn confusion_counts(gold: &[Vec<usize>], pred: &[Vec<usize>], num_labels: usize) -> Result<Vec<Vec<u64>>> {
    if gold.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            context: "predicted documents",
            expected: gold.len(),
            actual: pred.len(),
        });
    }
    let mut c = vec![vec![0u64; num_labels]; num_labels];
    for (g, p) in gold.iter().zip(pred) {
        if g.len() != p.len() {
            return Err(Error::DimensionMismatch {
                context: "predicted sentences",
                expected: g.len(),
                actual: p.len(),
            });
        }
        for (&a, &b) in g.iter().zip(p) {
            if a >= num_labels || b >= num_labels {
                return Err(Error::InvalidArgument(format!(
                    "label id {} outside inventory of {num_labels}",
                    a.max(b)
                )));
            }
            c[a][b] += 1;
        }
    }
    Ok(c)
}

/// Scores from a confusion matrix.
pub fn metrics_from_confusion(confusion: Vec<Vec<u64>>, inventory: &RoleInventory) -> Result<Metrics> {
    let n = inventory.len();
    if confusion.len() != n || confusion.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            context: "confusion matrix",
            expected: n,
            actual: confusion.len(),
        });
    }
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("no sentences to evaluate".into()));
    }
    let correct: u64 = (0..n).map(|i| confusion[i][i]).sum();
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };

    let mut per_class = Vec::with_capacity(n);
    let mut f1_sum = 0.0;
    let mut present = 0usize;
    for i in 0..n {
        let tp = confusion[i][i];
        let support: u64 = confusion[i].iter().sum();
        let predicted: u64 = confusion.iter().map(|r| r[i]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        if support > 0 || predicted > 0 {
            f1_sum += f1;
            present += 1;
        }
        per_class.push(ClassMetrics {
            role: inventory.name(i).to_owned(),
            precision,
            recall,
            f1,
            support,
            predicted,
        });
    }
    let accuracy = ratio(correct, total);
    Ok(Metrics {
        macro_f1: f1_sum / present as f64,
        // single-label: pooled precision = pooled recall = accuracy
        micro_f1: accuracy,
        accuracy,
        sentences: total,
        per_class,
        confusion,
    })
}

pub fn evaluate_predictions(
    gold: &[Vec<usize>],
    pred: &[Vec<usize>],
    inventory: &RoleInventory,
) -> Result<Metrics> {
    metrics_from_confusion(confusion_counts(gold, pred, inventory.len())?, inventory)
}

/// Viterbi (or argmax) predictions for pre-encoded documents, in input order.
pub fn predict_all(model: &Labeler, features: &[&[SparseVector]]) -> Result<Vec<Vec<usize>>> {
    features.par_iter().map(|x| model.predict(x)).collect()
}

/// Predicts and scores labeled documents.
pub fn evaluate(model: &Labeler, docs: &[&Document], features: &[&[SparseVector]], inventory: &RoleInventory) -> Result<Metrics> {
    if docs.is_empty() {
        return Err(Error::InvalidArgument("evaluation needs at least one document".into()));
    }
    let pred = predict_all(model, features)?;
    let gold: Vec<Vec<usize>> = docs.iter().map(|d| d.labels.clone()).collect();
    evaluate_predictions(&gold, &pred, inventory)
}

/// Gold-by-prediction counts for labeled documents.
pub fn confusion_matrix(model: &Labeler, docs: &[&Document], features: &[&[SparseVector]]) -> Result<Vec<Vec<u64>>> {
    let pred = predict_all(model, features)?;
    let gold: Vec<Vec<usize>> = docs.iter().map(|d| d.labels.clone()).collect();
    confusion_counts(&gold, &pred, model.num_labels())
}

/// Confusion artifact exchanged between the `confusion` command and the
/// confusion-based role curriculum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionExport {
    pub roles: Vec<String>,
    pub matrix: Vec<Vec<u64>>,
}

impl ConfusionExport {
    /// Reorders the matrix into `inventory` order.
    pub fn aligned(&self, inventory: &RoleInventory) -> Result<Vec<Vec<u64>>> {
        if self.roles.len() != inventory.len() || self.matrix.len() != self.roles.len() {
            return Err(Error::DimensionMismatch {
                context: "confusion roles",
                expected: inventory.len(),
                actual: self.roles.len(),
            });
        }
        let mut map = Vec::with_capacity(self.roles.len());
        for r in &self.roles {
            map.push(inventory.id(r).ok_or_else(|| Error::UnknownRole(r.clone()))?);
        }
        let n = inventory.len();
        let mut out = vec![vec![0u64; n]; n];
        for (i, row) in self.matrix.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "confusion row",
                    expected: n,
                    actual: row.len(),
                });
            }
            for (j, &c) in row.iter().enumerate() {
                out[map[i]][map[j]] = c;
            }
        }
        Ok(out)
    }
}
