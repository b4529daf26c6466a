//! Web annotations for detected regions and model interpretations.
//!
//! Region annotations carry a `tagging` body naming the region class;
//! interpretation annotations share the region's target and anchor, carry a
//! `describing` textual body, a semiotic level class and the provenance of
//! the model call that produced the text.

mod embed;
mod jsonld;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CanvasRecord, PixelBox};
use crate::detect::{BBox, RegionClass};

pub use embed::embed_in_manifest;
pub use jsonld::{build_annotation_page, page_to_json, parse_annotation_page};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("box xywh={x},{y},{w},{h} falls outside canvas {canvas} ({width}x{height})")]
    Bounds { canvas: String, x: i64, y: i64, w: i64, h: i64, width: u32, height: u32 },
    #[error("missing provenance fields: {}", .0.join(", "))]
    MissingProvenance(Vec<&'static str>),
    #[error("invalid annotation: {0}")]
    Validation(String),
    #[error("duplicate annotation id {0}")]
    DuplicateId(String),
    #[error("malformed annotation JSON: {0}")]
    Malformed(String),
    #[error("unsupported selector type `{0}`")]
    UnsupportedSelector(String),
    #[error("malformed xywh value `{0}`")]
    Xywh(String),
    #[error("annotation page targets canvas {0}, which is not in the manifest")]
    Reference(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemioticLevel {
    Morphological,
    Indexical,
    Symbolic,
}

impl SemioticLevel {
    pub const ALL: [SemioticLevel; 3] =
        [SemioticLevel::Morphological, SemioticLevel::Indexical, SemioticLevel::Symbolic];

    pub fn as_str(self) -> &'static str {
        match self {
            SemioticLevel::Morphological => "morphological",
            SemioticLevel::Indexical => "indexical",
            SemioticLevel::Symbolic => "symbolic",
        }
    }

    /// Local name of the level class in the `pip:` namespace.
    pub fn class_name(self) -> &'static str {
        match self {
            SemioticLevel::Morphological => "MorphologicalLevel",
            SemioticLevel::Indexical => "IndexicalLevel",
            SemioticLevel::Symbolic => "SymbolicLevel",
        }
    }

    pub fn from_class_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.class_name() == name)
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.as_str() == s.to_ascii_lowercase())
    }
}

impl fmt::Display for SemioticLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Namespace IRIs used in the JSON-LD context and the RDF export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Vocabulary {
    pub mlao: String,
    pub hico: String,
    pub prov: String,
    pub dcterms: String,
    /// The semiotic level classes; no public namespace exists, so this is a placeholder by default.
    pub pip: String,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self {
            mlao: "https://w3id.org/mlao#".into(),
            hico: "http://purl.org/emmedi/hico/".into(),
            prov: "http://www.w3.org/ns/prov#".into(),
            dcterms: "http://purl.org/dc/terms/".into(),
            pip: "https://example.org/pip#".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Motivation {
    Tagging,
    Describing,
}

impl Motivation {
    pub fn as_str(self) -> &'static str {
        match self {
            Motivation::Tagging => "tagging",
            Motivation::Describing => "describing",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    /// Canvas URI.
    pub source: String,
    pub selector: Option<PixelBox>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Body {
    Tag(RegionClass),
    Interpretation { text: String, level: SemioticLevel },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: String,
    pub prompt_id: String,
    /// RFC 3339 instant the response was received.
    pub timestamp: String,
    pub generator: String,
}

impl Provenance {
    pub fn new(model: &str, prompt_id: &str, timestamp: &str) -> Self {
        Self {
            model: model.into(),
            prompt_id: prompt_id.into(),
            timestamp: timestamp.into(),
            generator: concat!("diagramma/", env!("CARGO_PKG_VERSION")).into(),
        }
    }

    fn missing(&self) -> Vec<&'static str> {
        [
            ("model", &self.model),
            ("prompt_id", &self.prompt_id),
            ("timestamp", &self.timestamp),
            ("generator", &self.generator),
        ]
        .into_iter()
        .filter(|(_, v)| v.trim().is_empty())
        .map(|(k, _)| k)
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebAnnotation {
    pub id: String,
    pub motivation: Motivation,
    pub target: Target,
    pub body: Body,
    /// Full-page URI the region is conceptually anchored to.
    pub anchor_uri: String,
    pub provenance: Option<Provenance>,
}

impl WebAnnotation {
    pub fn level(&self) -> Option<SemioticLevel> {
        match &self.body {
            Body::Interpretation { level, .. } => Some(*level),
            Body::Tag(_) => None,
        }
    }

    pub fn validate(&self) -> Result<(), AnnotationError> {
        for (what, uri) in [("id", &self.id), ("target", &self.target.source), ("anchor", &self.anchor_uri)] {
            if !is_absolute(uri) {
                return Err(AnnotationError::Validation(format!("{what} `{uri}` is not an absolute URI")));
            }
        }
        if let Some(b) = self.target.selector {
            if b.w == 0 || b.h == 0 {
                return Err(AnnotationError::Xywh(format!("xywh={b}")));
            }
        }
        match &self.body {
            Body::Tag(_) if self.motivation != Motivation::Tagging => {
                Err(AnnotationError::Validation(format!("{}: tag body needs motivation tagging", self.id)))
            }
            Body::Interpretation { text, .. } if text.trim().is_empty() => {
                Err(AnnotationError::Validation(format!("{}: empty interpretation text", self.id)))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationPage {
    pub id: String,
    pub items: Vec<WebAnnotation>,
}

impl AnnotationPage {
    pub fn new(id: &str, items: Vec<WebAnnotation>) -> Result<Self, AnnotationError> {
        if items.is_empty() {
            return Err(AnnotationError::Validation("annotation page has no items".into()));
        }
        let mut seen = HashSet::new();
        for a in &items {
            a.validate()?;
            if !seen.insert(a.id.as_str()) {
                return Err(AnnotationError::DuplicateId(a.id.clone()));
            }
        }
        Ok(Self { id: id.to_string(), items })
    }
}

pub(crate) fn is_absolute(uri: &str) -> bool {
    match uri.split_once(':') {
        Some((scheme, rest)) => {
            !rest.is_empty()
                && scheme.starts_with(|c: char| c.is_ascii_alphabetic())
                && scheme.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
        }
        None => false,
    }
}

/// Integer box for a detection: x and y floored, w and h ceiled.
pub fn round_box(det: &BBox) -> (i64, i64, i64, i64) {
    (det.x.floor() as i64, det.y.floor() as i64, det.w.ceil() as i64, det.h.ceil() as i64)
}

/// Region annotation `<id_base>/<sequence_index>/<n>` for one detection on `canvas`.
pub fn detection_to_annotation(
    det: &BBox,
    canvas: &CanvasRecord,
    id_base: &str,
    n: usize,
) -> Result<WebAnnotation, AnnotationError> {
    let (x, y, w, h) = round_box(det);
    let fits =
        x >= 0 && y >= 0 && w > 0 && h > 0 && x + w <= canvas.width_px as i64 && y + h <= canvas.height_px as i64;
    if !fits || !det.x.is_finite() || !det.y.is_finite() {
        return Err(AnnotationError::Bounds {
            canvas: canvas.canvas_uri.clone(),
            x,
            y,
            w,
            h,
            width: canvas.width_px,
            height: canvas.height_px,
        });
    }
    Ok(WebAnnotation {
        id: format!("{}/{}/{n}", id_base.trim_end_matches('/'), canvas.sequence_index),
        motivation: Motivation::Tagging,
        target: Target {
            source: canvas.canvas_uri.clone(),
            selector: Some(PixelBox::new(x as u32, y as u32, w as u32, h as u32)),
        },
        body: Body::Tag(det.class),
        anchor_uri: canvas.canvas_uri.clone(),
        provenance: None,
    })
}

/// Annotates every detection, numbering them in input order.
pub fn detections_to_annotations(
    dets: &[BBox],
    canvas: &CanvasRecord,
    id_base: &str,
) -> Result<Vec<WebAnnotation>, AnnotationError> {
    dets.iter().enumerate().map(|(n, d)| detection_to_annotation(d, canvas, id_base, n)).collect()
}

/// Interpretation annotation `<region id>/<level>` sharing the region's target and anchor.
pub fn attach_interpretation(
    region: &WebAnnotation,
    level: SemioticLevel,
    text: &str,
    provenance: Provenance,
) -> Result<WebAnnotation, AnnotationError> {
    if region.target.selector.is_none() {
        return Err(AnnotationError::Validation(format!("{} has no region selector", region.id)));
    }
    let missing = provenance.missing();
    if !missing.is_empty() {
        return Err(AnnotationError::MissingProvenance(missing));
    }
    if text.trim().is_empty() {
        return Err(AnnotationError::Validation(format!("empty {level} interpretation for {}", region.id)));
    }
    Ok(WebAnnotation {
        id: format!("{}/{}", region.id, level.as_str()),
        motivation: Motivation::Describing,
        target: region.target.clone(),
        body: Body::Interpretation { text: text.to_string(), level },
        anchor_uri: region.anchor_uri.clone(),
        provenance: Some(provenance),
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn canvas() -> CanvasRecord {
        CanvasRecord {
            manifest_id: "drs_12491033".into(),
            canvas_uri: "https://iiif.example.org/manifests/drs_12491033/canvas/2".into(),
            image_service_base: "https://ids.example.org/ids/iiif/2".into(),
            width_px: 2000,
            height_px: 3000,
            label: "seq. 3".into(),
            sequence_index: 2,
            robin_category: Some("D".into()),
            year: Some(1902),
            is_blank: false,
        }
    }

    pub const BASE: &str = "https://example.org/anno";

    pub fn region() -> WebAnnotation {
        let det = BBox::prediction("p", RegionClass::Diagram, 100.2, 200.7, 300.1, 399.5, 0.9);
        detection_to_annotation(&det, &canvas(), BASE, 0).unwrap()
    }

    pub fn symbolic(region: &WebAnnotation) -> WebAnnotation {
        attach_interpretation(
            region,
            SemioticLevel::Symbolic,
            "There exists a man who is not both wounded and disgraced.",
            Provenance::new("gpt-4o", "symbolic-v1", "2025-05-01T12:00:00Z"),
        )
        .unwrap()
    }
}
