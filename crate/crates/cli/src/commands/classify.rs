use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use diagramma::classifier::{
    cross_validate, hog_with, metrics_from_confusion, predict, read_features, train_logreg, write_features,
    ConfusionMatrix, GrayImage, LabeledFeature, LogRegModel, MetricsReport, PageClass,
};
use serde_json::json;

use super::{open, read_bytes, write_json, write_jsonl, write_with};
use crate::config::{input, RunConfig};
use crate::error::{io_error, CliError, Result};
use crate::Report;

#[derive(Debug, Subcommand)]
pub enum ClassifyCommand {
    /// Extract HOG features from page images. Images in a subdirectory named
    /// after a class (cover, text, diagram_mixed, or 0/1/2) are labelled.
    Hog(HogArgs),
    Train(TrainArgs),
    Predict(PredictArgs),
    /// Stratified k-fold cross-validation.
    Crossval(CrossvalArgs),
}

#[derive(Debug, Args)]
pub struct HogArgs {
    #[arg(long, value_name = "DIR")]
    images: Option<PathBuf>,
    #[arg(long, value_name = "FILE", default_value = "features.jsonl")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Hyper {
    #[arg(long, value_name = "FILE")]
    features: Option<PathBuf>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    /// Z-score features with training statistics.
    #[arg(long)]
    standardize: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    hyper: Hyper,
    #[arg(long, value_name = "FILE", default_value = "model.json")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    features: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    #[arg(long, value_name = "FILE", default_value = "predictions.jsonl")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[command(flatten)]
    hyper: Hyper,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_name = "FILE", default_value = "crossval.json")]
    out: PathBuf,
}

impl Hyper {
    fn apply(&self, config: &mut RunConfig) {
        if self.features.is_some() {
            config.paths.features = self.features.clone();
        }
        let train = &mut config.classifier.train;
        if let Some(v) = self.learning_rate {
            train.learning_rate = v;
        }
        if let Some(v) = self.l2 {
            train.l2 = v;
        }
        if let Some(v) = self.epochs {
            train.max_epochs = v;
        }
        if self.standardize {
            train.standardize = true;
        }
    }
}

impl ClassifyCommand {
    pub fn apply(&self, config: &mut RunConfig) {
        match self {
            ClassifyCommand::Hog(a) => {
                if a.images.is_some() {
                    config.paths.images = a.images.clone();
                }
            }
            ClassifyCommand::Train(a) => a.hyper.apply(config),
            ClassifyCommand::Predict(a) => {
                if a.features.is_some() {
                    config.paths.features = a.features.clone();
                }
                if a.model.is_some() {
                    config.paths.model = a.model.clone();
                }
            }
            ClassifyCommand::Crossval(a) => {
                a.hyper.apply(config);
                if let Some(k) = a.k {
                    config.classifier.k = k;
                }
            }
        }
        config.classifier.train.seed = config.seed;
    }
}

pub fn run(command: &ClassifyCommand, config: &RunConfig) -> Result<Report> {
    match command {
        ClassifyCommand::Hog(a) => hog(a, config),
        ClassifyCommand::Train(a) => train(a, config),
        ClassifyCommand::Predict(a) => run_predict(a, config),
        ClassifyCommand::Crossval(a) => crossval(a, config),
    }
}

fn load_features(config: &RunConfig) -> Result<Vec<LabeledFeature>> {
    let path = input(&config.paths.features, "--features")?;
    let data = read_features(open(path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    if data.is_empty() {
        return Err(CliError::Invalid(format!("{} holds no feature vectors", path.display())));
    }
    Ok(data)
}

fn label_of_dir(name: &str) -> Option<PageClass> {
    match name.to_ascii_lowercase().as_str() {
        "0" | "cover" => Some(PageClass::Cover),
        "1" | "text" => Some(PageClass::Text),
        "2" | "diagram" | "diagram_mixed" | "diagram-mixed" => Some(PageClass::DiagramMixed),
        _ => None,
    }
}

fn image_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> =
        std::fs::read_dir(dir).map_err(io_error(dir))?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            image_files(&p, out)?;
        } else if p
            .extension()
            .and_then(|x| x.to_str())
            .is_some_and(|x| matches!(x.to_ascii_lowercase().as_str(), "jpg" | "jpeg" | "png"))
        {
            out.push(p);
        }
    }
    Ok(())
}

fn load_gray(path: &Path) -> Result<GrayImage> {
    let img = image::ImageReader::open(path)
        .map_err(io_error(path))?
        .with_guessed_format()
        .map_err(io_error(path))?
        .decode()
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
    Ok(GrayImage::new(w, h, pixels)?)
}

fn hog(args: &HogArgs, config: &RunConfig) -> Result<Report> {
    let dir = input(&config.paths.images, "--images")?;
    let mut files = Vec::new();
    image_files(dir, &mut files)?;
    if files.is_empty() {
        return Err(CliError::Invalid(format!("no .jpg/.png images under {}", dir.display())));
    }
    let mut features = Vec::with_capacity(files.len());
    for f in &files {
        let relative = f.strip_prefix(dir).unwrap_or(f);
        let label = relative.parent().and_then(|p| p.file_name()).and_then(|n| n.to_str()).and_then(label_of_dir);
        let vector = hog_with(&load_gray(f)?, &config.classifier.hog)?;
        let page_id = relative.with_extension("").to_string_lossy().replace('\\', "/");
        features.push(LabeledFeature { page_id, label, vector });
    }
    let out = config.output(&args.out)?;
    write_with(&out, |w| write_features(w, &features).map_err(std::io::Error::other))?;
    let labelled = features.iter().filter(|f| f.label.is_some()).count();
    let dim = features[0].vector.len();
    Ok(Report {
        human: format!(
            "images: {}\nlabelled: {labelled}\ndimension: {dim}\nfingerprint: {}\nfeatures: {}",
            features.len(),
            config.classifier.hog.fingerprint(),
            out.display()
        ),
        json: json!({
            "images": features.len(), "labelled": labelled, "dimension": dim,
            "fingerprint": config.classifier.hog.fingerprint(), "features": out,
        }),
    })
}

fn metrics_text(m: &MetricsReport) -> String {
    let mut s = format!("{:<14} {:>9} {:>9} {:>9} {:>8}\n", "class", "precision", "recall", "f1", "support");
    for (class, c) in PageClass::ALL.iter().zip(&m.per_class) {
        let _ =
            writeln!(s, "{:<14} {:>9.4} {:>9.4} {:>9.4} {:>8}", class.name(), c.precision, c.recall, c.f1, c.support);
    }
    let _ = writeln!(s, "{:<14} {:>9.4} {:>9.4} {:>9.4}", "macro", m.macro_precision, m.macro_recall, m.macro_f1);
    let _ = write!(s, "accuracy {:.4}", m.accuracy);
    s
}

fn labelled_metrics(model: &LogRegModel, data: &[LabeledFeature]) -> Result<Option<MetricsReport>> {
    let mut cm = ConfusionMatrix::zeros(PageClass::COUNT);
    let mut any = false;
    for f in data {
        if let Some(truth) = f.label {
            cm.record(truth.index(), predict(model, &f.vector)?.label.index());
            any = true;
        }
    }
    Ok(any.then(|| metrics_from_confusion(&cm)))
}

fn train(args: &TrainArgs, config: &RunConfig) -> Result<Report> {
    let data = load_features(config)?;
    let model =
        train_logreg(&data, &config.classifier.train)?.with_fingerprint(format!("dim-{}", data[0].vector.len()));
    let out = config.output(&args.out)?;
    write_json(&out, &model)?;
    let fit = labelled_metrics(&model, &data)?.expect("training data is labelled");
    Ok(Report {
        human: format!("epochs: {}\ntraining fit:\n{}\nmodel: {}", model.epochs_run, metrics_text(&fit), out.display()),
        json: json!({"epochs": model.epochs_run, "training_metrics": fit, "model": out}),
    })
}

fn run_predict(args: &PredictArgs, config: &RunConfig) -> Result<Report> {
    let model_path = input(&config.paths.model, "--model")?;
    let data = load_features(config)?;
    let model: LogRegModel = serde_json::from_slice(&read_bytes(model_path)?)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", model_path.display())))?;
    let rows = data
        .iter()
        .map(|f| {
            let p = predict(&model, &f.vector)?;
            Ok(json!({"page_id": f.page_id, "label": p.label, "probabilities": p.probabilities}))
        })
        .collect::<Result<Vec<_>>>()?;
    let out = config.output(&args.out)?;
    write_jsonl(&out, &rows)?;
    let metrics = labelled_metrics(&model, &data)?;
    let mut human = format!("predicted: {}\npredictions: {}", rows.len(), out.display());
    if let Some(m) = &metrics {
        let _ = write!(human, "\n{}", metrics_text(m));
    }
    Ok(Report { human, json: json!({"predicted": rows.len(), "predictions": out, "metrics": metrics}) })
}

fn crossval(args: &CrossvalArgs, config: &RunConfig) -> Result<Report> {
    let data = load_features(config)?;
    let cv = cross_validate(&data, config.classifier.k, &config.classifier.train, config.seed)?;
    let out = config.output(&args.out)?;
    write_json(&out, &cv)?;
    Ok(Report {
        human: format!(
            "{}-fold cross-validation, seed {}\n{}\nreport: {}",
            config.classifier.k,
            config.seed,
            metrics_text(&cv.metrics),
            out.display()
        ),
        json: json!({"k": config.classifier.k, "seed": config.seed, "metrics": cv.metrics, "report": out}),
    })
}
