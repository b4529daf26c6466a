//! The run configuration: built-in defaults, overlaid by a TOML file, overlaid
//! by command-line flags.
//!
//! ```toml
//! seed = 7
//!
//! [paths]
//! output_root = "out"
//! features = "features.jsonl"
//!
//! [classifier]
//! k = 10
//! train = { learning_rate = 0.1, l2 = 1e-4 }
//!
//! [detection]
//! iou_threshold = 0.5
//!
//! [annotations]
//! id_base = "https://example.org/anno"
//! vocabulary = { pip = "https://example.org/pip#" }
//!
//! [[vlm.models]]
//! name = "gpt-4o"
//! endpoint = "https://api.openai.com/v1/chat/completions"
//! api_key_env = "OPENAI_API_KEY"
//! ```
//!
//! Unknown keys are rejected. Credentials are never read from the file, only
//! from the environment variable named by `api_key_env`.

use std::path::{Component, Path, PathBuf};

use diagramma::annotations::{SemioticLevel, Vocabulary};
use diagramma::classifier::{HogConfig, TrainConfig};
use diagramma::retry::RetryPolicy;
use diagramma::vlm::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::error::{io_error, CliError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub corpus: CorpusSection,
    pub classifier: ClassifierSection,
    pub detection: DetectionSection,
    pub annotations: AnnotationSection,
    pub eg: EgSection,
    pub vlm: VlmSection,
}

/// Inputs are read from anywhere; outputs always land under `output_root`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub output_root: PathBuf,
    pub manifests: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub diagrams: Option<PathBuf>,
    pub session: Option<PathBuf>,
    pub score_sheet: Option<PathBuf>,
    pub reference_graph: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            output_root: PathBuf::from("out"),
            manifests: None,
            records: None,
            images: None,
            features: None,
            model: None,
            predictions: None,
            ground_truth: None,
            manifest: None,
            annotations: None,
            diagrams: None,
            session: None,
            score_sheet: None,
            reference_graph: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub parallel: usize,
    /// Labels matching this pattern count as blank, in addition to any label containing "blank".
    pub blank_regex: Option<String>,
    /// Download width in pixels; full resolution when unset.
    pub max_width: Option<u32>,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    /// Catalogue size reported by `stats`; defaults to the number of manifests.
    pub catalogue_size: Option<usize>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            parallel: 4,
            blank_regex: None,
            max_width: None,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
            catalogue_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub k: usize,
    pub train: TrainConfig,
    pub hog: HogConfig,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self { k: 10, train: TrainConfig::default(), hog: HogConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSection {
    pub iou_threshold: f64,
    pub report_threshold: Option<f64>,
}

impl Default for DetectionSection {
    fn default() -> Self {
        Self { iou_threshold: 0.5, report_threshold: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationSection {
    pub id_base: String,
    pub vocabulary: Vocabulary,
}

impl Default for AnnotationSection {
    fn default() -> Self {
        Self { id_base: "https://example.org/anno".into(), vocabulary: Vocabulary::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgSection {
    /// Largest domain size searched by `eg check` and symbolic auto-scoring.
    pub bound: usize,
}

impl Default for EgSection {
    fn default() -> Self {
        Self { bound: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VlmSection {
    pub parallel: usize,
    pub levels: Vec<SemioticLevel>,
    pub models: Vec<ModelConfig>,
}

impl Default for VlmSection {
    fn default() -> Self {
        Self { parallel: 4, levels: SemioticLevel::ALL.to_vec(), models: Vec::new() }
    }
}

/// Defaults overlaid by the file at `path`, if any.
pub fn load(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {}", path.display(), e.message())))
}

/// Reads a `[[models]]` list from a standalone TOML file.
pub fn load_models(path: &Path) -> Result<Vec<ModelConfig>> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct ModelsFile {
        models: Vec<ModelConfig>,
    }
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    let file: ModelsFile =
        toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {}", path.display(), e.message())))?;
    Ok(file.models)
}

pub fn render(config: &RunConfig) -> String {
    toml::to_string_pretty(config).expect("the run configuration always serializes")
}

impl RunConfig {
    pub fn check(&self) -> Result<()> {
        if self.corpus.parallel == 0 || self.vlm.parallel == 0 {
            return Err(CliError::Invalid("parallel must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.detection.iou_threshold) {
            return Err(CliError::Invalid(format!("iou_threshold {} is outside [0, 1]", self.detection.iou_threshold)));
        }
        if self.classifier.k < 2 {
            return Err(CliError::Invalid("k must be at least 2".into()));
        }
        Ok(())
    }

    /// Resolves an output name inside the output root, refusing anything that
    /// would escape it.
    pub fn output(&self, name: &Path) -> Result<PathBuf> {
        let root = &self.paths.output_root;
        let relative = if name.is_absolute() { name.strip_prefix(root).map_err(|_| escape(name, root))? } else { name };
        if relative.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) {
            return Err(escape(name, root));
        }
        let path = root.join(relative);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_error(dir))?;
        }
        Ok(path)
    }
}

fn escape(name: &Path, root: &Path) -> CliError {
    CliError::Invalid(format!("output {} is outside the output root {}", name.display(), root.display()))
}

/// The value of a path setting that must name an existing file or directory.
pub fn input<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    let path = value.as_deref().ok_or_else(|| CliError::Usage(format!("missing {flag} (or its config key)")))?;
    if !path.exists() {
        return Err(CliError::Io { path: Some(path.to_path_buf()), message: "no such file or directory".into() });
    }
    Ok(path)
}
