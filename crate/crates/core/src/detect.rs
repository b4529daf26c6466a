//! Layout detection scoring: IoU matching, all-points AP, mAP@0.5 and the
//! best-F1 operating point.
//!
//! Detections come from any external detector as JSONL, one box per line:
//! `{"page_id": str, "class": "diagram"|"text_block", "x", "y", "w", "h", "confidence": f|null}`
//! where a null confidence marks a ground-truth box.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionClass {
    Diagram,
    TextBlock,
}

impl RegionClass {
    pub const ALL: [RegionClass; 2] = [RegionClass::Diagram, RegionClass::TextBlock];

    pub fn as_str(self) -> &'static str {
        match self {
            RegionClass::Diagram => "diagram",
            RegionClass::TextBlock => "text_block",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "diagram" => Some(RegionClass::Diagram),
            "text_block" => Some(RegionClass::TextBlock),
            _ => None,
        }
    }
}

impl fmt::Display for RegionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Axis-aligned box in canvas pixels. Predictions carry a confidence, ground truth does not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub page_id: String,
    #[serde(rename = "class")]
    pub class: RegionClass,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: Option<f64>,
}

impl BBox {
    pub fn ground_truth(page_id: &str, class: RegionClass, x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { page_id: page_id.to_string(), class, x, y, w, h, confidence: None }
    }

    pub fn prediction(page_id: &str, class: RegionClass, x: f64, y: f64, w: f64, h: f64, confidence: f64) -> Self {
        Self { page_id: page_id.to_string(), class, x, y, w, h, confidence: Some(confidence) }
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        let coords = [self.x, self.y, self.w, self.h];
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(DetectError::InvalidBox(format!("non-finite coordinate in {self:?}")));
        }
        if self.x < 0.0 || self.y < 0.0 {
            return Err(DetectError::InvalidBox(format!("negative origin ({}, {})", self.x, self.y)));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(DetectError::InvalidBox(format!("non-positive size {}x{}", self.w, self.h)));
        }
        if let Some(c) = self.confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(DetectError::InvalidBox(format!("confidence {c} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn score(&self) -> f64 {
        self.confidence.unwrap_or(0.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let iy = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = ix * iy;
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Prediction indices, highest confidence first (ties keep input order).
    pub order: Vec<usize>,
    /// Per prediction (input indexing): whether it is a true positive.
    pub is_tp: Vec<bool>,
    /// Per prediction (input indexing): the ground-truth box it claimed.
    pub matched_gt: Vec<Option<usize>>,
    pub false_negatives: usize,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.is_tp.iter().filter(|&&t| t).count()
    }

    pub fn false_positives(&self) -> usize {
        self.is_tp.len() - self.true_positives()
    }
}

fn confidence_order(preds: &[BBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score().total_cmp(&preds[a].score()));
    order
}

/// Greedy one-to-one matching. Predictions are visited by descending
/// confidence; each claims the unclaimed ground-truth box of the same page and
/// class with the highest IoU at or above `iou_threshold` (lowest index on
/// ties), otherwise it is a false positive.
pub fn match_detections(preds: &[BBox], gts: &[BBox], iou_threshold: f64) -> MatchResult {
    let mut by_key: HashMap<(&str, RegionClass), Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_key.entry((g.page_id.as_str(), g.class)).or_default().push(i);
    }
    let order = confidence_order(preds);
    let mut claimed = vec![false; gts.len()];
    let mut is_tp = vec![false; preds.len()];
    let mut matched_gt = vec![None; preds.len()];
    for &p in &order {
        let pred = &preds[p];
        let Some(candidates) = by_key.get(&(pred.page_id.as_str(), pred.class)) else {
            continue;
        };
        let mut best: Option<(usize, f64)> = None;
        for &g in candidates {
            if claimed[g] {
                continue;
            }
            let overlap = iou(pred, &gts[g]);
            if overlap >= iou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((g, overlap));
            }
        }
        if let Some((g, _)) = best {
            claimed[g] = true;
            is_tp[p] = true;
            matched_gt[p] = Some(g);
        }
    }
    let false_negatives = claimed.iter().filter(|&&c| !c).count();
    MatchResult { order, is_tp, matched_gt, false_negatives }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    /// Confidence cut-off: predictions with confidence ≥ this are kept.
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    /// `None` when the class has no ground-truth boxes.
    pub ap: Option<f64>,
    pub curve: Vec<PrPoint>,
    pub num_gt: usize,
}

/// Cumulative (threshold, tp, fp) after each group of equal confidences.
fn sweep(scored: &[(f64, bool)]) -> Vec<(f64, usize, usize)> {
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (i, &(c, hit)) in sorted.iter().enumerate() {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        if sorted.get(i + 1).is_none_or(|next| next.0 != c) {
            out.push((c, tp, fp));
        }
    }
    out
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Area under the precision envelope (all-points interpolation).
fn area_under_envelope(curve: &[PrPoint]) -> f64 {
    let mut envelope: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (p, env) in curve.iter().zip(envelope) {
        ap += (p.recall - prev_recall) * env;
        prev_recall = p.recall;
    }
    ap
}

fn class_scores(preds: &[BBox], gts: &[BBox], class: RegionClass, iou_threshold: f64) -> (Vec<(f64, bool)>, usize) {
    let p: Vec<BBox> = preds.iter().filter(|b| b.class == class).cloned().collect();
    let g: Vec<BBox> = gts.iter().filter(|b| b.class == class).cloned().collect();
    let m = match_detections(&p, &g, iou_threshold);
    (p.iter().zip(&m.is_tp).map(|(b, &t)| (b.score(), t)).collect(), g.len())
}

fn curve_from(scored: &[(f64, bool)], num_gt: usize) -> Vec<PrPoint> {
    sweep(scored)
        .into_iter()
        .map(|(threshold, tp, fp)| PrPoint { threshold, precision: ratio(tp, tp + fp), recall: ratio(tp, num_gt) })
        .collect()
}

/// AP of one class with the precision/recall curve it was computed from.
pub fn average_precision(preds: &[BBox], gts: &[BBox], class: RegionClass, iou_threshold: f64) -> ApResult {
    let (scored, num_gt) = class_scores(preds, gts, class, iou_threshold);
    let curve = curve_from(&scored, num_gt);
    let ap = (num_gt > 0).then(|| area_under_envelope(&curve));
    ApResult { ap, curve, num_gt }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// `None` when there are no predictions to threshold.
    pub threshold: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: RegionClass,
    pub num_gt: usize,
    pub ap: Option<f64>,
    pub best_f1: OperatingPoint,
    /// TP/FP/FN at the report threshold.
    pub counts: Counts,
    pub curve: Vec<PrPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub iou_threshold: f64,
    pub report_threshold: Option<f64>,
    pub classes: Vec<ClassReport>,
    /// Mean of the defined class APs.
    pub map: Option<f64>,
    /// Best F1 over the sweep with all classes pooled.
    pub best_f1: OperatingPoint,
    pub counts: Counts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// Confidence cut-off for the TP/FP/FN counts; defaults to the pooled best-F1 threshold.
    pub report_threshold: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5, report_threshold: None }
    }
}

/// Highest-F1 point of a sweep; among equal F1 the highest threshold wins.
fn best_point(scored: &[(f64, bool)], num_gt: usize) -> OperatingPoint {
    let mut best = OperatingPoint { threshold: None, precision: 0.0, recall: 0.0, f1: 0.0 };
    for (t, tp, fp) in sweep(scored) {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, num_gt);
        let score = f1(precision, recall);
        if best.threshold.is_none() || score > best.f1 {
            best = OperatingPoint { threshold: Some(t), precision, recall, f1: score };
        }
    }
    best
}

fn counts_at(scored: &[(f64, bool)], num_gt: usize, threshold: Option<f64>) -> Counts {
    let (tp, fp) = match threshold {
        Some(t) => scored.iter().filter(|(c, _)| *c >= t).fold(
            (0, 0),
            |(tp, fp), &(_, hit)| {
                if hit {
                    (tp + 1, fp)
                } else {
                    (tp, fp + 1)
                }
            },
        ),
        None => (0, 0),
    };
    Counts { tp, fp, fn_: num_gt - tp }
}

pub fn evaluate_dataset(
    preds: &[BBox],
    gts: &[BBox],
    classes: &[RegionClass],
    config: &EvalConfig,
) -> Result<DetectionReport, DetectError> {
    for b in preds.iter().chain(gts) {
        b.validate()?;
    }
    let per_class: Vec<(RegionClass, Vec<(f64, bool)>, usize)> = classes
        .iter()
        .map(|&c| {
            let (scored, n) = class_scores(preds, gts, c, config.iou_threshold);
            (c, scored, n)
        })
        .collect();
    let pooled: Vec<(f64, bool)> = per_class.iter().flat_map(|(_, s, _)| s.iter().copied()).collect();
    let pooled_gt: usize = per_class.iter().map(|(_, _, n)| n).sum();
    let best_f1 = best_point(&pooled, pooled_gt);
    let report_threshold = config.report_threshold.or(best_f1.threshold);

    let reports: Vec<ClassReport> = per_class
        .iter()
        .map(|(class, scored, num_gt)| {
            let curve = curve_from(scored, *num_gt);
            ClassReport {
                class: *class,
                num_gt: *num_gt,
                ap: (*num_gt > 0).then(|| area_under_envelope(&curve)),
                best_f1: best_point(scored, *num_gt),
                counts: counts_at(scored, *num_gt, report_threshold),
                curve,
            }
        })
        .collect();
    let defined: Vec<f64> = reports.iter().filter_map(|r| r.ap).collect();
    let map = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(DetectionReport {
        iou_threshold: config.iou_threshold,
        report_threshold,
        classes: reports,
        map,
        best_f1,
        counts: counts_at(&pooled, pooled_gt, report_threshold),
    })
}

#[derive(Deserialize)]
struct Line {
    page_id: String,
    class: String,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    #[serde(default)]
    confidence: Option<f64>,
}

/// Reads detection JSONL (both predictions and ground truth).
pub fn read_boxes(reader: impl BufRead) -> Result<Vec<BBox>, DetectError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: Line =
            serde_json::from_str(&line).map_err(|e| DetectError::Format { line: line_no, message: e.to_string() })?;
        let class = RegionClass::parse(&raw.class)
            .ok_or_else(|| DetectError::Format { line: line_no, message: format!("unknown class `{}`", raw.class) })?;
        let b =
            BBox { page_id: raw.page_id, class, x: raw.x, y: raw.y, w: raw.w, h: raw.h, confidence: raw.confidence };
        b.validate().map_err(|e| DetectError::Format { line: line_no, message: e.to_string() })?;
        out.push(b);
    }
    Ok(out)
}

fn load(path: &Path, want_confidence: bool) -> Result<Vec<BBox>, DetectError> {
    let boxes = read_boxes(BufReader::new(File::open(path)?))?;
    if let Some((i, _)) = boxes.iter().enumerate().find(|(_, b)| b.confidence.is_some() != want_confidence) {
        let message = if want_confidence {
            "prediction without confidence (null marks ground truth)"
        } else {
            "ground-truth box with a confidence"
        };
        return Err(DetectError::Format { line: i + 1, message: message.into() });
    }
    Ok(boxes)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<BBox>, DetectError> {
    load(path.as_ref(), true)
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Vec<BBox>, DetectError> {
    load(path.as_ref(), false)
}
