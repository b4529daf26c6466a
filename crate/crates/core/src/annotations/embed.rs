//! Attaching annotation pages to the canvases of a IIIF manifest.

use std::collections::BTreeSet;

use serde_json::Value;

use super::{page_to_json, AnnotationError, AnnotationPage, Vocabulary};
use crate::corpus::{detect_version, IiifVersion};

fn canvas_id(canvas: &Value) -> Option<&str> {
    canvas.get("id").or_else(|| canvas.get("@id")).and_then(Value::as_str)
}

fn page_id(page: &Value) -> Option<&str> {
    canvas_id(page)
}

/// Adds `page` to the annotation list of every canvas it targets: `annotations`
/// on v3 canvases, `otherContent` on v2 ones. A page already attached under
/// the same id is replaced.
pub fn embed_in_manifest(
    manifest_json: &[u8],
    page: &AnnotationPage,
    vocab: &Vocabulary,
) -> Result<Vec<u8>, AnnotationError> {
    let mut doc: Value =
        serde_json::from_slice(manifest_json).map_err(|e| AnnotationError::Malformed(e.to_string()))?;
    let version = detect_version(&doc).map_err(|e| AnnotationError::Malformed(e.to_string()))?;
    let targets: BTreeSet<&str> = page.items.iter().map(|a| a.target.source.as_str()).collect();
    let (canvases, key) = match version {
        IiifVersion::V3 => (doc.get_mut("items"), "annotations"),
        IiifVersion::V2 => (doc.pointer_mut("/sequences/0/canvases"), "otherContent"),
    };
    let canvases = canvases
        .and_then(Value::as_array_mut)
        .ok_or_else(|| AnnotationError::Malformed("manifest has no canvas list".into()))?;
    let present: BTreeSet<String> = canvases.iter().filter_map(canvas_id).map(str::to_string).collect();
    if let Some(missing) = targets.iter().find(|t| !present.contains(**t)) {
        return Err(AnnotationError::Reference(missing.to_string()));
    }
    let page_json = page_to_json(page, vocab);
    for canvas in canvases.iter_mut() {
        if !canvas_id(canvas).is_some_and(|id| targets.contains(id)) {
            continue;
        }
        let obj = canvas.as_object_mut().ok_or_else(|| AnnotationError::Malformed("canvas is not an object".into()))?;
        let list = obj.entry(key).or_insert_with(|| Value::Array(Vec::new()));
        let list =
            list.as_array_mut().ok_or_else(|| AnnotationError::Malformed(format!("canvas `{key}` is not an array")))?;
        list.retain(|p| page_id(p) != Some(page.id.as_str()));
        list.push(page_json.clone());
    }
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("JSON values always serialize");
    bytes.push(b'\n');
    Ok(bytes)
}
