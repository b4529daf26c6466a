//! Rubric scores, the symbolic auto-suggestion and per-model aggregation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InterpretationRecord, ScoreSource, SemioticLevel, VlmError};
use crate::eg::{eg_to_formula, equivalent_bounded, parse_formula, render_formula, EGraph, Formula, Syntax, Verdict};

/// Sets the score of a copy of `record`. An automatic suggestion never replaces a manual score.
pub fn score_response(
    record: &InterpretationRecord,
    score: u8,
    source: ScoreSource,
) -> Result<InterpretationRecord, VlmError> {
    if score > 2 {
        return Err(VlmError::Validation(format!("score {score} for {} is outside 0..=2", record.key())));
    }
    let mut out = record.clone();
    if source == ScoreSource::AutoSuggested && record.score_source == Some(ScoreSource::Manual) {
        return Ok(out);
    }
    out.score = Some(score);
    out.score_source = Some(source);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoScore {
    pub score: u8,
    pub rationale: String,
    /// The extracted formula, rendered in Unicode syntax.
    pub formula: Option<String>,
}

const MATH_DELIMITERS: [&str; 9] =
    ["\\begin{align}", "\\end{align}", "\\begin{equation}", "\\end{equation}", "\\[", "\\]", "\\(", "\\)", "$"];

fn can_start(c: char) -> bool {
    c.is_alphanumeric() || "∃∀¬~!([\\⊤⊥".contains(c)
}

fn can_end(c: char) -> bool {
    c.is_alphanumeric() || ")]}⊤⊥".contains(c)
}

/// Worth scoring: anything beyond a bare propositional word.
fn is_formula_like(f: &Formula) -> bool {
    !matches!(f, Formula::True) && !matches!(f, Formula::Atom { args, .. } if args.is_empty())
}

/// Longest substring of `text` (within one line) that parses as a closed formula
/// with at least one connective or predicate application; earliest wins ties.
pub fn extract_formula(text: &str) -> Option<(String, Formula)> {
    let mut normalized = text.replace("\\label", "\n\\label");
    for d in MATH_DELIMITERS {
        normalized = normalized.replace(d, "\n");
    }
    let mut best: Option<(usize, String, Formula)> = None;
    for line in normalized.lines() {
        let chars: Vec<(usize, char)> = line.char_indices().collect();
        let is_word = |i: usize| chars.get(i).is_some_and(|(_, c)| c.is_alphanumeric() || *c == '_');
        let starts: Vec<usize> = (0..chars.len())
            .filter(|&i| can_start(chars[i].1) && !(chars[i].1.is_alphanumeric() && i > 0 && is_word(i - 1)))
            .collect();
        let ends: Vec<usize> = (0..chars.len())
            .filter(|&i| can_end(chars[i].1) && !(chars[i].1.is_alphanumeric() && is_word(i + 1)))
            .collect();
        let mut spans: Vec<(usize, usize)> =
            starts.iter().flat_map(|&s| ends.iter().filter(move |&&e| e >= s).map(move |&e| (s, e))).collect();
        spans.sort_by_key(|&(s, e)| (std::cmp::Reverse(e - s), s));
        for (s, e) in spans {
            let len = e - s + 1;
            if best.as_ref().is_some_and(|(l, _, _)| *l >= len) {
                break;
            }
            let byte_end = chars.get(e + 1).map_or(line.len(), |(b, _)| *b);
            let span = &line[chars[s].0..byte_end];
            if let Ok(f) = parse_formula(span) {
                if is_formula_like(&f) {
                    best = Some((len, span.to_string(), f));
                    break;
                }
            }
        }
    }
    best.map(|(_, s, f)| (s, f))
}

fn names(f: &Formula) -> BTreeSet<String> {
    f.predicates().into_iter().map(|(n, _)| n).collect()
}

/// Suggests a rubric score for a symbolic-level answer against a ground-truth graph:
/// 2 when the extracted formula is equivalent up to `bound`, 1 when it is not but
/// uses exactly the ground truth's predicates, 0 otherwise.
pub fn auto_score_symbolic(response_text: &str, ground_truth: &EGraph, bound: usize) -> AutoScore {
    let target = eg_to_formula(ground_truth);
    let Some((span, found)) = extract_formula(response_text) else {
        return AutoScore { score: 0, rationale: "no parseable formula in the response".into(), formula: None };
    };
    let canonical: HashMap<String, String> = names(&target).into_iter().map(|n| (n.to_lowercase(), n)).collect();
    let renames: HashMap<String, String> =
        names(&found).into_iter().filter_map(|n| canonical.get(&n.to_lowercase()).map(|c| (n, c.clone()))).collect();
    let candidate = found.rename_predicates(&renames);
    let rendered = render_formula(&candidate, Syntax::Unicode);
    let same_predicates = names(&candidate) == names(&target);
    let (score, rationale) = match equivalent_bounded(&candidate, &target, bound) {
        Ok(Verdict::Equivalent { bound }) => {
            (2, format!("`{span}` is equivalent to the ground truth on domains up to {bound}"))
        }
        Ok(Verdict::CounterModel { model, lhs, rhs }) => {
            let why = format!("counter-model: {model} (answer {lhs}, ground truth {rhs})");
            if same_predicates {
                (1, format!("`{span}` uses the ground-truth predicates but is not equivalent; {why}"))
            } else {
                (0, format!("`{span}` is not equivalent and its predicates differ; {why}"))
            }
        }
        Err(e) if same_predicates => {
            (1, format!("`{span}` uses the ground-truth predicates but cannot be compared: {e}"))
        }
        Err(e) => (0, format!("`{span}` cannot be compared: {e}")),
    };
    AutoScore { score, rationale, formula: Some(rendered) }
}

/// Attaches the auto-suggestion to a symbolic record; other levels and failed
/// records are returned unchanged.
pub fn suggest_symbolic(
    record: &InterpretationRecord,
    ground_truth: &EGraph,
    bound: usize,
) -> Result<InterpretationRecord, VlmError> {
    if record.prompt.level != SemioticLevel::Symbolic || record.failed() {
        return Ok(record.clone());
    }
    let auto = auto_score_symbolic(&record.response_text, ground_truth, bound);
    let mut out = score_response(record, auto.score, ScoreSource::AutoSuggested)?;
    if out.score_source == Some(ScoreSource::AutoSuggested) {
        out.rationale = Some(auto.rationale);
    }
    Ok(out)
}

/// One scored answer: (model, diagram annotation id, level) → 0..=2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub model: String,
    pub diagram: String,
    pub level: SemioticLevel,
    pub score: u8,
}

/// Reads a CSV score sheet with header `model,diagram,level,score`.
pub fn read_score_file(reader: impl Read) -> Result<Vec<ScoreEntry>, VlmError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ScoreEntry>().enumerate() {
        let entry = row.map_err(|e| VlmError::Validation(format!("score sheet row {}: {e}", i + 1)))?;
        if entry.score > 2 {
            return Err(VlmError::Validation(format!(
                "score sheet row {}: score {} outside 0..=2",
                i + 1,
                entry.score
            )));
        }
        out.push(entry);
    }
    Ok(out)
}

/// Applies manual scores to matching records; entries matching no record are an error.
pub fn apply_scores(
    records: &[InterpretationRecord],
    entries: &[ScoreEntry],
) -> Result<Vec<InterpretationRecord>, VlmError> {
    let by_key: HashMap<String, u8> =
        entries.iter().map(|e| (format!("{}|{}|{}", e.model, e.diagram, e.level), e.score)).collect();
    let known: HashSet<String> = records.iter().map(InterpretationRecord::key).collect();
    let stray: Vec<String> = by_key.keys().filter(|k| !known.contains(*k)).cloned().collect();
    if !stray.is_empty() {
        let mut stray = stray;
        stray.sort();
        return Err(VlmError::Validation(format!("scores for unknown records: {}", stray.join(", "))));
    }
    records
        .iter()
        .map(|r| match by_key.get(&r.key()) {
            Some(&s) => score_response(r, s, ScoreSource::Manual),
            None => Ok(r.clone()),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelScores {
    pub model: String,
    /// Sums aligned with [`ScoreTable::levels`].
    pub per_level: Vec<u32>,
    pub total: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub levels: Vec<SemioticLevel>,
    pub diagrams: usize,
    /// Best possible total per model: diagrams × levels × 2.
    pub maximum: u32,
    /// In order of first appearance.
    pub rows: Vec<ModelScores>,
}

impl fmt::Display for ScoreTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<16}", "model")?;
        for l in &self.levels {
            write!(f, " {:>13}", l.as_str())?;
        }
        writeln!(f, " {:>7}", "total")?;
        for row in &self.rows {
            write!(f, "{:<16}", row.model)?;
            for s in &row.per_level {
                write!(f, " {s:>13}")?;
            }
            writeln!(f, " {:>7}", format!("{}/{}", row.total, self.maximum))?;
        }
        Ok(())
    }
}

pub fn aggregate_entries(entries: &[ScoreEntry]) -> Result<ScoreTable, VlmError> {
    let levels: Vec<SemioticLevel> = entries.iter().map(|e| e.level).collect::<BTreeSet<_>>().into_iter().collect();
    let diagrams = entries.iter().map(|e| e.diagram.as_str()).collect::<BTreeSet<_>>().len();
    let mut seen = HashSet::new();
    let mut order: Vec<&str> = Vec::new();
    let mut sums: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for e in entries {
        if e.score > 2 {
            return Err(VlmError::Validation(format!("score {} outside 0..=2", e.score)));
        }
        if !seen.insert((e.model.as_str(), e.diagram.as_str(), e.level)) {
            return Err(VlmError::Validation(format!("duplicate score for {}|{}|{}", e.model, e.diagram, e.level)));
        }
        let row = sums.entry(e.model.as_str()).or_insert_with(|| {
            order.push(e.model.as_str());
            vec![0; levels.len()]
        });
        let col = levels.iter().position(|l| *l == e.level).expect("level collected above");
        row[col] += e.score as u32;
    }
    let rows = order
        .into_iter()
        .map(|m| {
            let per_level = sums.remove(m).expect("row created with order");
            ModelScores { model: m.to_string(), total: per_level.iter().sum(), per_level }
        })
        .collect();
    Ok(ScoreTable { maximum: (diagrams * levels.len() * 2) as u32, levels, diagrams, rows })
}

/// Per-model, per-level sums over a fully scored session.
pub fn aggregate_scores(records: &[InterpretationRecord]) -> Result<ScoreTable, VlmError> {
    let unscored: Vec<String> = records.iter().filter(|r| r.score.is_none()).map(InterpretationRecord::key).collect();
    if !unscored.is_empty() {
        return Err(VlmError::Unscored(unscored));
    }
    let entries: Vec<ScoreEntry> = records
        .iter()
        .map(|r| ScoreEntry {
            model: r.model_name.clone(),
            diagram: r.prompt.diagram.annotation_id.clone(),
            level: r.prompt.level,
            score: r.score.expect("checked above"),
        })
        .collect();
    aggregate_entries(&entries)
}

pub fn load_session(path: &Path) -> Result<Vec<InterpretationRecord>, VlmError> {
    let file = File::open(path).map_err(|e| VlmError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| VlmError::Io(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| VlmError::Validation(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn save_session(path: &Path, records: &[InterpretationRecord]) -> Result<(), VlmError> {
    let io = |e: std::io::Error| VlmError::Io(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| VlmError::Io(e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}
