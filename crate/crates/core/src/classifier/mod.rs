//! Page classification into cover / text / diagram_mixed.
//!
//! Features are either HOG descriptors computed here ([`hog_features`]) or
//! precomputed embedding vectors read from JSONL ([`load_external_features`]).
//! The model is a multinomial logistic regression trained by full-batch
//! gradient descent; evaluation sums per-fold confusion matrices before
//! deriving precision, recall and F1.

mod cv;
mod features;
mod hog;
mod logreg;
mod metrics;

pub use cv::{cross_validate, cross_validate_with, stratified_kfold, CrossValidation, Learner};
pub use features::{load_external_features, read_features, write_features, LabeledFeature};
pub use hog::{hog_features, hog_with, GrayImage, HogConfig};
pub use logreg::{predict, train_logreg, Classify, LogRegModel, Prediction, Standardization, TrainConfig};
pub use metrics::{metrics_from_confusion, ClassMetrics, ConfusionMatrix, MetricsReport};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Page label. Serialized as its index (0, 1, 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum PageClass {
    Cover = 0,
    Text = 1,
    DiagramMixed = 2,
}

impl PageClass {
    pub const ALL: [PageClass; 3] = [PageClass::Cover, PageClass::Text, PageClass::DiagramMixed];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            PageClass::Cover => "cover",
            PageClass::Text => "text",
            PageClass::DiagramMixed => "diagram_mixed",
        }
    }
}

impl TryFrom<u8> for PageClass {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Self::from_index(value as usize).ok_or_else(|| format!("class label {value} is not one of 0, 1, 2"))
    }
}

impl From<PageClass> for u8 {
    fn from(c: PageClass) -> u8 {
        c as u8
    }
}

impl fmt::Display for PageClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: vector entry {index} is not a finite number")]
    NonFinite { line: usize, index: usize },
    #[error("no training samples for class(es): {}", .0.iter().map(|c| c.name()).collect::<Vec<_>>().join(", "))]
    MissingClasses(Vec<PageClass>),
    #[error("class {class} has {count} sample(s), fewer than k = {k}")]
    Stratification { class: PageClass, count: usize, k: usize },
    #[error("vector has length {found}, model expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
