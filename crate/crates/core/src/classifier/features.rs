use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassifierError, PageClass};

/// One page's feature vector and optional label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeature {
    pub page_id: String,
    pub label: Option<PageClass>,
    pub vector: Vec<f64>,
}

#[derive(Deserialize)]
struct Line {
    page_id: String,
    #[serde(default)]
    label: Option<serde_json::Value>,
    vector: Vec<serde_json::Value>,
}

/// Reads feature JSONL: one `{"page_id", "label": 0|1|2|null, "vector": [...]}` per line.
///
/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn read_features(reader: impl BufRead) -> Result<Vec<LabeledFeature>, ClassifierError> {
    let mut out: Vec<LabeledFeature> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: Line = serde_json::from_str(&line)
            .map_err(|e| ClassifierError::Schema { line: line_no, message: e.to_string() })?;
        let label = match raw.label {
            None | Some(serde_json::Value::Null) => None,
            Some(v) => {
                let idx = v.as_u64().ok_or_else(|| ClassifierError::Schema {
                    line: line_no,
                    message: format!("label must be 0, 1, 2 or null, found {v}"),
                })?;
                Some(
                    PageClass::try_from(u8::try_from(idx).unwrap_or(u8::MAX))
                        .map_err(|message| ClassifierError::Schema { line: line_no, message })?,
                )
            }
        };
        let mut vector = Vec::with_capacity(raw.vector.len());
        for (index, v) in raw.vector.iter().enumerate() {
            match v.as_f64() {
                Some(x) if x.is_finite() => vector.push(x),
                _ => return Err(ClassifierError::NonFinite { line: line_no, index }),
            }
        }
        if let Some(first) = out.first() {
            if first.vector.len() != vector.len() {
                return Err(ClassifierError::Schema {
                    line: line_no,
                    message: format!("vector has {} entries, expected {}", vector.len(), first.vector.len()),
                });
            }
        }
        out.push(LabeledFeature { page_id: raw.page_id, label, vector });
    }
    Ok(out)
}

pub fn load_external_features(path: impl AsRef<Path>) -> Result<Vec<LabeledFeature>, ClassifierError> {
    read_features(BufReader::new(File::open(path)?))
}

pub fn write_features(mut writer: impl Write, features: &[LabeledFeature]) -> Result<(), ClassifierError> {
    for f in features {
        serde_json::to_writer(&mut writer, f).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
