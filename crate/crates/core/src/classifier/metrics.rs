use serde::{Deserialize, Serialize};

use super::ClassifierError;

/// Square count matrix; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    rows: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { rows: vec![vec![0; n]; n] }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self, ClassifierError> {
        let n = rows.len();
        if n == 0 {
            return Err(ClassifierError::Input("confusion matrix is empty".into()));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(ClassifierError::Input(format!(
                "confusion matrix is not square: row {i} has {} entries, expected {n}",
                r.len()
            )));
        }
        Ok(Self { rows })
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.rows[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().flatten().sum()
    }

    /// Element-wise sum; both matrices must have the same size.
    pub fn add(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.size(), other.size(), "confusion matrices differ in size");
        for (a, b) in self.rows.iter_mut().zip(&other.rows) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class and macro-averaged metrics. A zero denominator yields 0 for that metric.
pub fn metrics_from_confusion(confusion: &ConfusionMatrix) -> MetricsReport {
    let n = confusion.size();
    let rows = confusion.rows();
    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|c| {
            let tp = rows[c][c];
            let support: u64 = rows[c].iter().sum();
            let predicted: u64 = rows.iter().map(|r| r[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            ClassMetrics { precision, recall, f1, support }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n as f64;
    let trace: u64 = (0..n).map(|c| rows[c][c]).sum();
    MetricsReport {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        accuracy: ratio(trace, confusion.total()),
        per_class,
        confusion: confusion.clone(),
    }
}
