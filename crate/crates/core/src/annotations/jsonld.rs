//! JSON-LD serialization in a fixed profile, and the matching reader.
//!
//! Key order is fixed: pages are `@context, id, type, items`; annotations
//! are `id, type, motivation, bodyValue|body, target, mlao:isAnchoredTo`;
//! interpretation bodies are `type, value, prov:wasGeneratedBy`.

use serde_json::{json, Map, Value};

use super::{
    is_absolute, AnnotationError, AnnotationPage, Body, Motivation, Provenance, SemioticLevel, Target, Vocabulary,
    WebAnnotation,
};
use crate::corpus::PixelBox;
use crate::detect::RegionClass;

const ANNO_CONTEXT: &str = "http://www.w3.org/ns/anno.jsonld";
const XSD: &str = "http://www.w3.org/2001/XMLSchema#";

fn context(vocab: &Vocabulary) -> Value {
    json!([ANNO_CONTEXT, {
        "mlao": vocab.mlao,
        "hico": vocab.hico,
        "prov": vocab.prov,
        "dcterms": vocab.dcterms,
        "pip": vocab.pip,
        "xsd": XSD,
    }])
}

fn target_json(target: &Target) -> Value {
    match target.selector {
        None => Value::String(target.source.clone()),
        Some(b) => json!({
            "source": target.source,
            "selector": {"type": "FragmentSelector", "value": format!("xywh={b}")},
        }),
    }
}

fn annotation_json(a: &WebAnnotation) -> Value {
    let mut m = Map::new();
    m.insert("id".into(), json!(a.id));
    match &a.body {
        Body::Tag(class) => {
            m.insert("type".into(), json!("Annotation"));
            m.insert("motivation".into(), json!(a.motivation.as_str()));
            m.insert("bodyValue".into(), json!(class.as_str()));
        }
        Body::Interpretation { text, level } => {
            let class = format!("pip:{}", level.class_name());
            m.insert("type".into(), json!(["Annotation", class]));
            m.insert("motivation".into(), json!(a.motivation.as_str()));
            let mut body = Map::new();
            body.insert("type".into(), json!("TextualBody"));
            body.insert("value".into(), json!(text));
            if let Some(p) = &a.provenance {
                body.insert(
                    "prov:wasGeneratedBy".into(),
                    json!({
                        "type": ["hico:InterpretationAct", "prov:Activity"],
                        "hico:hasInterpretationType": {"id": class},
                        "prov:wasAssociatedWith": {"type": "prov:SoftwareAgent", "dcterms:identifier": p.model},
                        "prov:used": {"dcterms:identifier": p.prompt_id},
                        "prov:endedAtTime": {"@value": p.timestamp, "@type": "xsd:dateTime"},
                        "dcterms:creator": p.generator,
                    }),
                );
            }
            m.insert("body".into(), Value::Object(body));
        }
    }
    m.insert("target".into(), target_json(&a.target));
    m.insert("mlao:isAnchoredTo".into(), json!({"id": a.anchor_uri}));
    Value::Object(m)
}

pub fn page_to_json(page: &AnnotationPage, vocab: &Vocabulary) -> Value {
    json!({
        "@context": context(vocab),
        "id": page.id,
        "type": "AnnotationPage",
        "items": page.items.iter().map(annotation_json).collect::<Vec<_>>(),
    })
}

/// Serializes `annotations` as one annotation page; output depends only on the inputs.
pub fn build_annotation_page(
    annotations: &[WebAnnotation],
    page_uri: &str,
    vocab: &Vocabulary,
) -> Result<Vec<u8>, AnnotationError> {
    if !is_absolute(page_uri) {
        return Err(AnnotationError::Validation(format!("page id `{page_uri}` is not an absolute URI")));
    }
    let page = AnnotationPage::new(page_uri, annotations.to_vec())?;
    let mut bytes = serde_json::to_vec_pretty(&page_to_json(&page, vocab)).expect("JSON values always serialize");
    bytes.push(b'\n');
    Ok(bytes)
}

fn malformed(msg: impl Into<String>) -> AnnotationError {
    AnnotationError::Malformed(msg.into())
}

fn str_field<'a>(v: &'a Value, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| v.get(*k)).and_then(|x| match x {
        Value::String(s) => Some(s.as_str()),
        Value::Array(a) => a.first().and_then(Value::as_str),
        Value::Object(_) => x.get("id").or_else(|| x.get("@id")).and_then(Value::as_str),
        _ => None,
    })
}

fn types(v: &Value) -> Vec<&str> {
    match v.get("type").or_else(|| v.get("@type")) {
        Some(Value::String(s)) => vec![s.as_str()],
        Some(Value::Array(a)) => a.iter().filter_map(Value::as_str).collect(),
        _ => Vec::new(),
    }
}

fn local_name(iri: &str) -> &str {
    iri.rsplit([':', '#', '/']).next().unwrap_or(iri)
}

fn parse_xywh(raw: &str) -> Result<PixelBox, AnnotationError> {
    let bad = || AnnotationError::Xywh(raw.to_string());
    let spec = raw.trim().strip_prefix("xywh=").ok_or_else(bad)?;
    if spec.starts_with("percent:") {
        return Err(AnnotationError::UnsupportedSelector(format!("percent xywh `{raw}`")));
    }
    let spec = spec.strip_prefix("pixel:").unwrap_or(spec);
    let parts: Vec<u32> = spec.split(',').map(|p| p.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
    match parts[..] {
        [x, y, w, h] if w > 0 && h > 0 => Ok(PixelBox::new(x, y, w, h)),
        _ => Err(bad()),
    }
}

fn parse_target(v: &Value) -> Result<Target, AnnotationError> {
    match v {
        Value::String(s) => match s.split_once("#xywh=") {
            Some((source, spec)) => {
                Ok(Target { source: source.into(), selector: Some(parse_xywh(&format!("xywh={spec}"))?) })
            }
            None => Ok(Target { source: s.clone(), selector: None }),
        },
        Value::Array(a) if a.len() == 1 => parse_target(&a[0]),
        Value::Object(_) => {
            let source = str_field(v, &["source", "id", "@id"]).ok_or_else(|| malformed("target without source"))?;
            let selector = match v.get("selector") {
                None => None,
                Some(sel) => {
                    let kind = types(sel).first().copied().unwrap_or("");
                    if local_name(kind) != "FragmentSelector" {
                        return Err(AnnotationError::UnsupportedSelector(kind.to_string()));
                    }
                    let value =
                        str_field(sel, &["value", "rdf:value"]).ok_or_else(|| malformed("selector without value"))?;
                    Some(parse_xywh(value)?)
                }
            };
            Ok(Target { source: source.to_string(), selector })
        }
        _ => Err(malformed("unrecognized target")),
    }
}

fn parse_provenance(act: &Value) -> Provenance {
    let inner =
        |key: &str| act.get(key).and_then(|n| str_field(n, &["dcterms:identifier"])).unwrap_or_default().to_string();
    let ended = act.get("prov:endedAtTime").and_then(|t| match t {
        Value::String(s) => Some(s.as_str()),
        other => other.get("@value").and_then(Value::as_str),
    });
    Provenance {
        model: inner("prov:wasAssociatedWith"),
        prompt_id: inner("prov:used"),
        timestamp: ended.unwrap_or_default().to_string(),
        generator: str_field(act, &["dcterms:creator"]).unwrap_or_default().to_string(),
    }
}

fn parse_annotation(v: &Value) -> Result<WebAnnotation, AnnotationError> {
    let id = str_field(v, &["id", "@id"]).ok_or_else(|| malformed("annotation without id"))?.to_string();
    let ts = types(v);
    if !ts.iter().any(|t| local_name(t) == "Annotation") {
        return Err(malformed(format!("{id}: not typed Annotation")));
    }
    let level = ts.iter().find_map(|t| SemioticLevel::from_class_name(local_name(t)));
    let motivation = str_field(v, &["motivation"]).map(local_name);
    let target = parse_target(v.get("target").ok_or_else(|| malformed(format!("{id}: no target")))?)?;

    let tag = |value: &str| {
        RegionClass::parse(value)
            .map(Body::Tag)
            .ok_or_else(|| malformed(format!("{id}: unknown region class `{value}`")))
    };
    let mut provenance = None;
    let body = if let Some(value) = v.get("bodyValue").and_then(Value::as_str) {
        tag(value)?
    } else {
        let body = match v.get("body") {
            Some(Value::Array(a)) if a.len() == 1 => &a[0],
            Some(b @ Value::Object(_)) => b,
            _ => return Err(malformed(format!("{id}: expected exactly one body"))),
        };
        let value =
            str_field(body, &["value", "rdf:value"]).ok_or_else(|| malformed(format!("{id}: body without value")))?;
        let purpose = str_field(body, &["purpose"]).map(local_name);
        match level {
            Some(level) if purpose != Some("tagging") => {
                provenance = body.get("prov:wasGeneratedBy").map(parse_provenance);
                Body::Interpretation { text: value.to_string(), level }
            }
            _ => tag(value)?,
        }
    };
    let motivation = match (motivation, &body) {
        (Some("tagging"), _) | (None, Body::Tag(_)) => Motivation::Tagging,
        (Some("describing"), _) | (None, Body::Interpretation { .. }) => Motivation::Describing,
        (Some(other), _) => return Err(malformed(format!("{id}: unsupported motivation `{other}`"))),
    };
    let anchor_uri = v
        .get("mlao:isAnchoredTo")
        .and_then(|a| match a {
            Value::String(s) => Some(s.as_str()),
            other => str_field(other, &["id", "@id"]),
        })
        .unwrap_or(&target.source)
        .to_string();
    let a = WebAnnotation { id, motivation, target, body, anchor_uri, provenance };
    a.validate()?;
    Ok(a)
}

/// Reads an annotation page in this profile (and plain WADM tagging annotations).
pub fn parse_annotation_page(bytes: &[u8]) -> Result<AnnotationPage, AnnotationError> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| malformed(e.to_string()))?;
    let id = str_field(&doc, &["id", "@id"]).ok_or_else(|| malformed("page without id"))?;
    if !types(&doc).iter().any(|t| local_name(t) == "AnnotationPage") {
        return Err(malformed("document is not an AnnotationPage"));
    }
    let items = doc
        .get("items")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("page without items"))?
        .iter()
        .map(parse_annotation)
        .collect::<Result<Vec<_>, _>>()?;
    AnnotationPage::new(id, items)
}
