//! IIIF Presentation 2.x / 3.0 manifest parsing.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{CanvasRecord, CorpusError};

static LETTERED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:^|[,;:]\s*)([A-Z])\.\s+[A-Z][a-z]").expect("static pattern"));
static FOUR_DIGITS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(\d{4})\b").expect("static pattern"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IiifVersion {
    V2,
    V3,
}

/// Maps catalogue wording found in manifest metadata to a category letter.
///
/// Metadata values that already carry a letter ("Manuscripts, D. Logic")
/// win over keyword lookup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryTable {
    /// `(lowercase keyword, letter)`, tried in order.
    pub keywords: Vec<(String, String)>,
}

impl Default for CategoryTable {
    fn default() -> Self {
        let pairs = [
            ("mathematics", "A"),
            ("pragmatism", "B"),
            ("phenomenology", "C"),
            ("logic", "D"),
            ("metaphysics", "E"),
            ("cosmology", "F"),
        ];
        Self { keywords: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }
}

impl CategoryTable {
    pub fn lookup(&self, text: &str) -> Option<String> {
        // "I. Manuscripts, D. Logic": the series numeral comes first, the category last
        if let Some(c) = LETTERED.captures_iter(text).last() {
            return Some(c[1].to_string());
        }
        let lower = text.to_lowercase();
        self.keywords.iter().find(|(k, _)| lower.contains(k.as_str())).map(|(_, v)| v.clone())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ManifestOptions {
    /// Extra rule for blank pages, matched against the canvas label.
    pub blank_regex: Option<Regex>,
    pub categories: CategoryTable,
}

impl ManifestOptions {
    pub fn with_blank_pattern(pattern: &str) -> Result<Self, CorpusError> {
        Ok(Self { blank_regex: Some(Regex::new(pattern)?), ..Self::default() })
    }

    fn is_blank(&self, label: &str) -> bool {
        label.to_lowercase().contains("blank") || self.blank_regex.as_ref().is_some_and(|re| re.is_match(label))
    }
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let mut start = 0;
    if line > 1 {
        let mut seen = 1;
        for (i, b) in bytes.iter().enumerate() {
            if *b == b'\n' {
                seen += 1;
                if seen == line {
                    start = i + 1;
                    break;
                }
            }
        }
    }
    (start + column.saturating_sub(1)).min(bytes.len())
}

pub(crate) fn detect_version(doc: &Value) -> Result<IiifVersion, CorpusError> {
    let context = doc.get("@context").cloned().unwrap_or(Value::Null);
    let entries: Vec<&str> = match &context {
        Value::String(s) => vec![s.as_str()],
        Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
        _ => Vec::new(),
    };
    for e in &entries {
        if e.contains("iiif.io/api/presentation/3") {
            return Ok(IiifVersion::V3);
        }
        if e.contains("iiif.io/api/presentation/2") {
            return Ok(IiifVersion::V2);
        }
    }
    Err(CorpusError::UnsupportedVersion(context.to_string()))
}

/// Flattens IIIF text values: plain strings, `{"@value": ..}`, arrays and v3 language maps.
fn text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().filter_map(text).collect();
            (!parts.is_empty()).then(|| parts.join(" "))
        }
        Value::Object(map) => {
            if let Some(v) = map.get("@value") {
                return text(v);
            }
            map.values().find_map(text)
        }
        _ => None,
    }
}

fn id_of(value: &Value) -> Option<&str> {
    value.get("id").or_else(|| value.get("@id")).and_then(Value::as_str)
}

fn metadata_pairs(node: &Value) -> Vec<(String, String)> {
    node.get("metadata")
        .and_then(Value::as_array)
        .map(|entries| entries.iter().filter_map(|e| Some((text(e.get("label")?)?, text(e.get("value")?)?))).collect())
        .unwrap_or_default()
}

fn year_from(pairs: &[(String, String)]) -> Option<i32> {
    pairs
        .iter()
        .filter(|(label, _)| label.to_lowercase().contains("date"))
        .find_map(|(_, value)| FOUR_DIGITS.captures(value).and_then(|c| c[1].parse().ok()))
}

fn category_from(pairs: &[(String, String)], table: &CategoryTable) -> Option<String> {
    pairs.iter().find_map(|(_, value)| table.lookup(value))
}

/// Last path segment of the manifest URI with anything outside `[A-Za-z0-9._-]` replaced by `_`.
fn manifest_slug(uri: &str) -> String {
    let trimmed = uri.trim_end_matches('/');
    let trimmed =
        trimmed.strip_suffix("/manifest.json").or_else(|| trimmed.strip_suffix("/manifest")).unwrap_or(trimmed);
    let last = trimmed.rsplit('/').next().unwrap_or(trimmed);
    let slug: String =
        last.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' }).collect();
    if slug.is_empty() {
        "manifest".into()
    } else {
        slug
    }
}

fn dimension(canvas: &Value, key: &str, uri: &str) -> Result<u32, CorpusError> {
    let v = canvas.get(key).ok_or_else(|| CorpusError::Structure(format!("canvas {uri} has no `{key}`")))?;
    v.as_u64()
        .filter(|&n| n > 0 && n <= u32::MAX as u64)
        .map(|n| n as u32)
        .ok_or_else(|| CorpusError::Structure(format!("canvas {uri} has invalid `{key}` {v}")))
}

fn service_id(service: &Value) -> Option<&str> {
    match service {
        Value::Array(items) => items.iter().find_map(id_of),
        other => id_of(other),
    }
}

fn image_service(canvas: &Value, version: IiifVersion) -> Option<String> {
    let body = match version {
        IiifVersion::V2 => canvas.get("images")?.as_array()?.first()?.get("resource")?,
        IiifVersion::V3 => canvas.get("items")?.as_array()?.first()?.get("items")?.as_array()?.first()?.get("body")?,
    };
    let body = match body {
        Value::Array(items) => items.first()?,
        b => b,
    };
    service_id(body.get("service")?).map(|s| s.trim_end_matches('/').to_string())
}

fn canvases(doc: &Value, version: IiifVersion) -> Result<&Vec<Value>, CorpusError> {
    match version {
        IiifVersion::V3 => doc
            .get("items")
            .ok_or_else(|| CorpusError::Structure("missing key `items`".into()))?
            .as_array()
            .ok_or_else(|| CorpusError::Structure("`items` is not an array".into())),
        IiifVersion::V2 => {
            let sequences =
                doc.get("sequences").ok_or_else(|| CorpusError::Structure("missing key `sequences`".into()))?;
            sequences
                .get(0)
                .and_then(|s| s.get("canvases"))
                .ok_or_else(|| CorpusError::Structure("missing key `sequences[0].canvases`".into()))?
                .as_array()
                .ok_or_else(|| CorpusError::Structure("`canvases` is not an array".into()))
        }
    }
}

/// Parses one manifest into canvas records in sequence order.
pub fn parse_manifest(bytes: &[u8], options: &ManifestOptions) -> Result<Vec<CanvasRecord>, CorpusError> {
    let doc: Value = serde_json::from_slice(bytes)
        .map_err(|e| CorpusError::Json { offset: byte_offset(bytes, e.line(), e.column()), message: e.to_string() })?;
    let version = detect_version(&doc)?;
    let manifest_uri = id_of(&doc).unwrap_or("manifest");
    let manifest_id = manifest_slug(manifest_uri);
    let manifest_meta = metadata_pairs(&doc);
    let manifest_year = year_from(&manifest_meta);
    let manifest_category = category_from(&manifest_meta, &options.categories);

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (index, canvas) in canvases(&doc, version)?.iter().enumerate() {
        let uri =
            id_of(canvas).ok_or_else(|| CorpusError::Structure(format!("canvas #{index} has no id")))?.to_string();
        if !seen.insert(uri.clone()) {
            return Err(CorpusError::DuplicateCanvas(uri));
        }
        let width_px = dimension(canvas, "width", &uri)?;
        let height_px = dimension(canvas, "height", &uri)?;
        let image_service_base = image_service(canvas, version)
            .ok_or_else(|| CorpusError::Structure(format!("canvas {uri} has no image service")))?;
        let label = canvas.get("label").and_then(text).unwrap_or_default();
        let meta = metadata_pairs(canvas);
        records.push(CanvasRecord {
            manifest_id: manifest_id.clone(),
            is_blank: options.is_blank(&label),
            canvas_uri: uri,
            image_service_base,
            width_px,
            height_px,
            label,
            sequence_index: index,
            robin_category: category_from(&meta, &options.categories).or_else(|| manifest_category.clone()),
            year: year_from(&meta).or(manifest_year),
        });
    }
    Ok(records)
}
