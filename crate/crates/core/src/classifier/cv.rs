use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logreg::{fit, Classify, LogRegModel, TrainConfig};
use super::metrics::{metrics_from_confusion, ConfusionMatrix, MetricsReport};
use super::{ClassifierError, LabeledFeature, PageClass};

/// Anything that can be fitted on a training split and then classify vectors.
pub trait Learner: Sync {
    type Model: Classify + Send;

    fn fit(&self, train: &[&LabeledFeature]) -> Result<Self::Model, ClassifierError>;
}

impl Learner for TrainConfig {
    type Model = LogRegModel;

    fn fit(&self, train: &[&LabeledFeature]) -> Result<LogRegModel, ClassifierError> {
        fit(train, self)
    }
}

/// Splits indices into `k` folds preserving class proportions.
///
/// Each class's members are shuffled with a seeded ChaCha8 generator and dealt
/// round-robin; the dealing position carries over between classes so that
/// fold sizes differ by at most one. Folds are returned with sorted indices.
pub fn stratified_kfold(labels: &[PageClass], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, ClassifierError> {
    if k < 2 {
        return Err(ClassifierError::Input(format!("k must be at least 2, got {k}")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); PageClass::COUNT];
    for (i, l) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(ClassifierError::Stratification { class: PageClass::ALL[c], count: members.len(), k });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for mut members in by_class {
        members.shuffle(&mut rng);
        for i in members {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: Vec<Vec<usize>>,
    pub fold_confusions: Vec<ConfusionMatrix>,
    /// Metrics of the element-wise sum of the fold confusion matrices.
    pub metrics: MetricsReport,
}

/// Stratified k-fold cross-validation of logistic regression.
pub fn cross_validate(
    data: &[LabeledFeature],
    k: usize,
    config: &TrainConfig,
    seed: u64,
) -> Result<CrossValidation, ClassifierError> {
    let labels = data
        .iter()
        .map(|f| f.label.ok_or_else(|| ClassifierError::Input(format!("sample `{}` has no label", f.page_id))))
        .collect::<Result<Vec<_>, _>>()?;
    let folds = stratified_kfold(&labels, k, seed)?;
    cross_validate_with(config, data, folds)
}

/// Trains one model per fold on the other folds and evaluates it on the held-out
/// fold. Folds run in parallel; results are merged in fold order.
pub fn cross_validate_with<L: Learner>(
    learner: &L,
    data: &[LabeledFeature],
    folds: Vec<Vec<usize>>,
) -> Result<CrossValidation, ClassifierError> {
    let mut fold_of = vec![usize::MAX; data.len()];
    for (f, fold) in folds.iter().enumerate() {
        for &i in fold {
            if i >= data.len() || fold_of[i] != usize::MAX {
                return Err(ClassifierError::Input(format!("index {i} is out of range or in two folds")));
            }
            fold_of[i] = f;
        }
    }
    let fold_confusions = (0..folds.len())
        .into_par_iter()
        .map(|f| {
            let train: Vec<&LabeledFeature> =
                data.iter().zip(&fold_of).filter(|(_, &g)| g != f).map(|(d, _)| d).collect();
            let model = learner.fit(&train)?;
            let mut confusion = ConfusionMatrix::zeros(PageClass::COUNT);
            for &i in &folds[f] {
                let truth = data[i]
                    .label
                    .ok_or_else(|| ClassifierError::Input(format!("sample `{}` has no label", data[i].page_id)))?;
                let predicted = model.classify(&data[i].vector)?;
                confusion.record(truth.index(), predicted.index());
            }
            Ok(confusion)
        })
        .collect::<Result<Vec<_>, ClassifierError>>()?;
    let mut total = ConfusionMatrix::zeros(PageClass::COUNT);
    fold_confusions.iter().for_each(|c| total.add(c));
    Ok(CrossValidation { folds, fold_confusions, metrics: metrics_from_confusion(&total) })
}
