//! Semiotic prompting of vision-language models and rubric scoring.
//!
//! Each diagram is asked three questions (morphological, indexical,
//! symbolic). Answers are scored 0 (wrong or irrelevant), 1 (partially
//! correct) or 2 (correct and complete); symbolic answers can additionally
//! get an automatic suggestion by checking the extracted formula against a
//! ground-truth existential graph.

mod client;
mod score;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::annotations::SemioticLevel;
pub use client::{query_vlm, resolve_models, run_session, ImageMode, ModelConfig, ResolvedModel};
pub use score::{
    aggregate_entries, aggregate_scores, apply_scores, auto_score_symbolic, extract_formula, load_session,
    read_score_file, save_session, score_response, suggest_symbolic, AutoScore, ModelScores, ScoreEntry, ScoreTable,
};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum VlmError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("credentials rejected by {endpoint} (HTTP {status})")]
    Credential { endpoint: String, status: u16 },
    #[error("transport failure after {} attempt(s): {}", .attempts.len(), .attempts.join("; "))]
    Transport { attempts: Vec<String> },
    #[error("protocol error: {message}; body starts with: {excerpt}")]
    Protocol { message: String, excerpt: String },
    #[error("invalid score: {0}")]
    Validation(String),
    #[error("unscored records: {}", .0.join(", "))]
    Unscored(Vec<String>),
    #[error("{0}")]
    Io(String),
}

const MORPHOLOGICAL: &str =
    "How many and what kind of elements (e.g., words, lines, arcs, nodes, shapes, etc.) are present in the image?";
const INDEXICAL: &str =
    "Is there a relationship between the elements present in the image? Which elements are connected to each other?";
const SYMBOLIC: &str =
    "In Peirce\u{2019}s diagrammatic logic, a closed curve called a cut represents logical negation. \n\
Elements inside the same region are interpreted conjunctively (i.e., asserted together).\n\
Elements placed directly on the background (the Sheet of Assertion) are considered true.\n\
A cut around propositions denies them. Nested cuts represent nested negation.\n\
Lines may indicate identity or existential quantification.\n\
\n\
Based on these principles, interpret the diagram and translate its meaning into a logical statement. \
If this is not possible, provide a clear explanation in natural language.";

/// Question template for a level.
pub fn template(level: SemioticLevel) -> &'static str {
    match level {
        SemioticLevel::Morphological => MORPHOLOGICAL,
        SemioticLevel::Indexical => INDEXICAL,
        SemioticLevel::Symbolic => SYMBOLIC,
    }
}

pub fn template_id(level: SemioticLevel) -> String {
    format!("{}-v1", level.as_str())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImageRef {
    Url {
        url: String,
    },
    /// Base64-encoded image bytes.
    Inline {
        media_type: String,
        data: String,
    },
}

impl ImageRef {
    pub fn inline(media_type: &str, bytes: &[u8]) -> Self {
        use base64::Engine as _;
        ImageRef::Inline {
            media_type: media_type.into(),
            data: base64::engine::general_purpose::STANDARD.encode(bytes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagramRef {
    pub annotation_id: String,
    pub image: ImageRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub level: SemioticLevel,
    pub template_id: String,
    pub rendered_text: String,
    pub diagram: DiagramRef,
}

impl PromptRecord {
    /// Appends extra context after the template, separated by a blank line.
    pub fn with_context(mut self, context: &str) -> Self {
        if !context.is_empty() {
            self.rendered_text.push_str("\n\n");
            self.rendered_text.push_str(context);
        }
        self
    }
}

pub fn build_prompt(level: SemioticLevel, diagram: &DiagramRef) -> PromptRecord {
    PromptRecord {
        level,
        template_id: template_id(level),
        rendered_text: template(level).to_string(),
        diagram: diagram.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreSource {
    Manual,
    AutoSuggested,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretationRecord {
    pub prompt: PromptRecord,
    pub model_name: String,
    pub endpoint: String,
    /// Model output exactly as received.
    pub response_text: String,
    pub latency_ms: u64,
    pub retries: u32,
    /// RFC 3339, UTC.
    pub timestamp: String,
    pub temperature: f64,
    #[serde(default)]
    pub score: Option<u8>,
    #[serde(default)]
    pub score_source: Option<ScoreSource>,
    #[serde(default)]
    pub rationale: Option<String>,
    /// Set when the request failed; the response text is then empty.
    #[serde(default)]
    pub error: Option<String>,
}

impl InterpretationRecord {
    /// `model|annotation id|level`, unique within a session.
    pub fn key(&self) -> String {
        format!("{}|{}|{}", self.model_name, self.prompt.diagram.annotation_id, self.prompt.level)
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}
