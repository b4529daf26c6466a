//! IIIF manifest ingestion: canvas records, blank filtering, corpus
//! statistics, Image API URLs and bulk download.

mod fetch;
mod image;
mod manifest;
mod stats;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fetch::{fetch_corpus, fetch_manifest, FetchEntry, FetchOptions, FetchOutcome, FetchReport};
pub use image::{build_image_url, parse_region, region_of_url, Edge, PixelBox, Region, Size};
pub(crate) use manifest::detect_version;
pub use manifest::{parse_manifest, CategoryTable, IiifVersion, ManifestOptions};
pub use stats::{corpus_stats, write_stats_csv, CorpusStats};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("manifest structure: {0}")]
    Structure(String),
    #[error("unsupported IIIF Presentation version (@context: {0})")]
    UnsupportedVersion(String),
    #[error("duplicate canvas {0}")]
    DuplicateCanvas(String),
    #[error("region {region} crosses the {edge} edge of canvas {canvas} ({width}x{height})")]
    Bounds { canvas: String, region: String, edge: Edge, width: u32, height: u32 },
    #[error("bad region `{0}`")]
    Region(String),
    #[error("invalid blank-label pattern: {0}")]
    Pattern(#[from] regex::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("fetch configuration: {0}")]
    Config(String),
    #[error("{url}: {message}")]
    Http { url: String, message: String },
}

/// One IIIF canvas of a digitized item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanvasRecord {
    /// Filesystem-safe identifier of the manifest the canvas came from.
    pub manifest_id: String,
    pub canvas_uri: String,
    pub image_service_base: String,
    pub width_px: u32,
    pub height_px: u32,
    pub label: String,
    pub sequence_index: usize,
    /// Single-letter catalogue category, e.g. "D" for logic.
    pub robin_category: Option<String>,
    pub year: Option<i32>,
    pub is_blank: bool,
}

/// Keeps non-blank records in their original order and reports how many were dropped.
pub fn filter_blank(records: Vec<CanvasRecord>) -> (Vec<CanvasRecord>, usize) {
    let before = records.len();
    let kept: Vec<CanvasRecord> = records.into_iter().filter(|r| !r.is_blank).collect();
    let removed = before - kept.len();
    (kept, removed)
}

#[cfg(test)]
pub(crate) fn record(seq: usize, label: &str) -> CanvasRecord {
    CanvasRecord {
        manifest_id: "m".into(),
        canvas_uri: format!("https://example.org/iiif/m/canvas/{seq}"),
        image_service_base: format!("https://images.example.org/iiif/m-{seq}"),
        width_px: 2000,
        height_px: 3000,
        label: label.into(),
        sequence_index: seq,
        robin_category: Some("D".into()),
        year: Some(1902),
        is_blank: label.to_lowercase().contains("blank"),
    }
}
