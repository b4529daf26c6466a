use serde::{Deserialize, Serialize};

use super::{ClassifierError, LabeledFeature, PageClass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub max_epochs: usize,
    /// Stop once the full gradient norm drops below this.
    pub tolerance: f64,
    pub seed: u64,
    /// Z-score features with training-set statistics before fitting.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.1, l2: 1e-4, max_epochs: 2000, tolerance: 1e-6, seed: 0, standardize: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    fn fit(rows: &[&[f64]]) -> Self {
        let dim = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r.iter()) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *v += (x - m) * (x - m) / n;
            }
        }
        let scale = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Self { mean, scale }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect()
    }
}

/// Multinomial logistic regression over [`PageClass`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    /// One row per class.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub config: TrainConfig,
    pub standardization: Option<Standardization>,
    /// Identifies the feature extractor the model was trained on.
    pub feature_fingerprint: String,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: PageClass,
    pub probabilities: Vec<f64>,
}

pub trait Classify {
    fn classify(&self, vector: &[f64]) -> Result<PageClass, ClassifierError>;
}

impl LogRegModel {
    /// Untrained model with all parameters zero.
    pub fn zeros(dim: usize, config: TrainConfig) -> Self {
        Self {
            weights: vec![vec![0.0; dim]; PageClass::COUNT],
            bias: vec![0.0; PageClass::COUNT],
            config,
            standardization: None,
            feature_fingerprint: format!("dim-{dim}"),
            epochs_run: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn with_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.feature_fingerprint = fingerprint.into();
        self
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().flatten().map(|w| w * w).sum::<f64>().sqrt()
    }

    fn logits(&self, x: &[f64], out: &mut [f64]) {
        for (o, (w, b)) in out.iter_mut().zip(self.weights.iter().zip(&self.bias)) {
            *o = b + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

impl Classify for LogRegModel {
    fn classify(&self, vector: &[f64]) -> Result<PageClass, ClassifierError> {
        predict(self, vector).map(|p| p.label)
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

/// Class probabilities and the arg-max label (lowest class index on ties).
pub fn predict(model: &LogRegModel, vector: &[f64]) -> Result<Prediction, ClassifierError> {
    if vector.len() != model.dim() {
        return Err(ClassifierError::Dimension { expected: model.dim(), found: vector.len() });
    }
    let x = match &model.standardization {
        Some(s) => s.apply(vector),
        None => vector.to_vec(),
    };
    let mut probabilities = vec![0.0; PageClass::COUNT];
    model.logits(&x, &mut probabilities);
    softmax_in_place(&mut probabilities);
    let mut best = 0;
    for (i, p) in probabilities.iter().enumerate() {
        if *p > probabilities[best] {
            best = i;
        }
    }
    Ok(Prediction { label: PageClass::ALL[best], probabilities })
}

/// Fits by full-batch gradient descent on mean cross-entropy plus `l2/2 · ‖W‖²`
/// (bias unpenalised), starting from zero.
pub fn train_logreg(data: &[LabeledFeature], config: &TrainConfig) -> Result<LogRegModel, ClassifierError> {
    let refs: Vec<&LabeledFeature> = data.iter().collect();
    fit(&refs, config)
}

pub(super) fn fit(data: &[&LabeledFeature], config: &TrainConfig) -> Result<LogRegModel, ClassifierError> {
    let Some(first) = data.first() else {
        return Err(ClassifierError::MissingClasses(PageClass::ALL.to_vec()));
    };
    let dim = first.vector.len();
    let mut labels = Vec::with_capacity(data.len());
    let mut counts = [0usize; PageClass::COUNT];
    for f in data {
        let label = f.label.ok_or_else(|| ClassifierError::Input(format!("sample `{}` has no label", f.page_id)))?;
        if f.vector.len() != dim {
            return Err(ClassifierError::Dimension { expected: dim, found: f.vector.len() });
        }
        counts[label.index()] += 1;
        labels.push(label.index());
    }
    let missing: Vec<PageClass> = PageClass::ALL.into_iter().filter(|c| counts[c.index()] == 0).collect();
    if !missing.is_empty() {
        return Err(ClassifierError::MissingClasses(missing));
    }

    let raw: Vec<&[f64]> = data.iter().map(|f| f.vector.as_slice()).collect();
    let standardization = config.standardize.then(|| Standardization::fit(&raw));
    let rows: Vec<Vec<f64>> = match &standardization {
        Some(s) => raw.iter().map(|r| s.apply(r)).collect(),
        None => raw.iter().map(|r| r.to_vec()).collect(),
    };

    let mut model = LogRegModel::zeros(dim, config.clone());
    model.standardization = standardization;
    let n = rows.len() as f64;
    let k = PageClass::COUNT;
    let mut grad_w = vec![vec![0.0; dim]; k];
    let mut grad_b = vec![0.0; k];
    let mut probs = vec![0.0; k];

    for epoch in 0..config.max_epochs {
        grad_w.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
        grad_b.iter_mut().for_each(|v| *v = 0.0);
        for (x, &y) in rows.iter().zip(&labels) {
            model.logits(x, &mut probs);
            softmax_in_place(&mut probs);
            for c in 0..k {
                let err = (probs[c] - if c == y { 1.0 } else { 0.0 }) / n;
                grad_b[c] += err;
                for (g, xi) in grad_w[c].iter_mut().zip(x) {
                    *g += err * xi;
                }
            }
        }
        let mut norm_sq = 0.0;
        for c in 0..k {
            for (g, w) in grad_w[c].iter_mut().zip(&model.weights[c]) {
                *g += config.l2 * w;
                norm_sq += *g * *g;
            }
            norm_sq += grad_b[c] * grad_b[c];
        }
        model.epochs_run = epoch;
        if norm_sq.sqrt() < config.tolerance {
            break;
        }
        for c in 0..k {
            for (w, g) in model.weights[c].iter_mut().zip(&grad_w[c]) {
                *w -= config.learning_rate * g;
            }
            model.bias[c] -= config.learning_rate * grad_b[c];
        }
        model.epochs_run = epoch + 1;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, label: PageClass, vector: Vec<f64>) -> LabeledFeature {
        LabeledFeature { page_id: id.into(), label: Some(label), vector }
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = LogRegModel::zeros(4, TrainConfig::default());
        let p = predict(&m, &[1.0, -2.0, 3.0, 0.5]).unwrap();
        assert_eq!(p.label, PageClass::Cover);
        for q in &p.probabilities {
            assert!((q - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = LogRegModel::zeros(4, TrainConfig::default());
        assert!(matches!(predict(&m, &[1.0]), Err(ClassifierError::Dimension { expected: 4, found: 1 })));
    }

    #[test]
    fn memorises_one_sample_per_class() {
        let data = vec![
            sample("a", PageClass::Cover, vec![1.0, 0.0]),
            sample("b", PageClass::Text, vec![0.0, 1.0]),
            sample("c", PageClass::DiagramMixed, vec![-1.0, -1.0]),
        ];
        let m = train_logreg(&data, &TrainConfig::default()).unwrap();
        for d in &data {
            assert_eq!(predict(&m, &d.vector).unwrap().label, d.label.unwrap());
        }
    }

    #[test]
    fn missing_class_is_listed() {
        let data = vec![sample("a", PageClass::Cover, vec![1.0]), sample("b", PageClass::Cover, vec![2.0])];
        match train_logreg(&data, &TrainConfig::default()) {
            Err(ClassifierError::MissingClasses(c)) => assert_eq!(c, vec![PageClass::Text, PageClass::DiagramMixed]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unlabeled_sample_rejected() {
        let mut data = vec![
            sample("a", PageClass::Cover, vec![1.0]),
            sample("b", PageClass::Text, vec![2.0]),
            sample("c", PageClass::DiagramMixed, vec![3.0]),
        ];
        data[1].label = None;
        assert!(matches!(train_logreg(&data, &TrainConfig::default()), Err(ClassifierError::Input(_))));
    }

    #[test]
    fn bias_shift_does_not_change_label() {
        let data = vec![
            sample("a", PageClass::Cover, vec![2.0, 0.0]),
            sample("b", PageClass::Text, vec![0.0, 2.0]),
            sample("c", PageClass::DiagramMixed, vec![-2.0, -2.0]),
        ];
        let m = train_logreg(&data, &TrainConfig { max_epochs: 200, ..TrainConfig::default() }).unwrap();
        let mut shifted = m.clone();
        shifted.bias.iter_mut().for_each(|b| *b += 17.5);
        for x in [[0.3, 0.1], [-1.0, 2.0], [5.0, -5.0]] {
            let a = predict(&m, &x).unwrap();
            let b = predict(&shifted, &x).unwrap();
            assert_eq!(a.label, b.label);
            for (p, q) in a.probabilities.iter().zip(&b.probabilities) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn standardization_round_trip() {
        let data = vec![
            sample("a", PageClass::Cover, vec![100.0, 0.001]),
            sample("b", PageClass::Text, vec![200.0, 0.002]),
            sample("c", PageClass::DiagramMixed, vec![300.0, 0.003]),
            sample("d", PageClass::DiagramMixed, vec![310.0, 0.0031]),
        ];
        let cfg = TrainConfig { standardize: true, ..TrainConfig::default() };
        let m = train_logreg(&data, &cfg).unwrap();
        let s = m.standardization.as_ref().unwrap();
        assert!((s.mean[0] - 227.5).abs() < 1e-9);
        for d in &data {
            assert_eq!(predict(&m, &d.vector).unwrap().label, d.label.unwrap());
        }
    }

    #[test]
    fn stops_at_tolerance() {
        let data = vec![
            sample("a", PageClass::Cover, vec![1.0]),
            sample("b", PageClass::Text, vec![1.0]),
            sample("c", PageClass::DiagramMixed, vec![1.0]),
        ];
        // balanced identical inputs: zero gradient from the start
        let m = train_logreg(&data, &TrainConfig::default()).unwrap();
        assert_eq!(m.epochs_run, 0);
    }
}
