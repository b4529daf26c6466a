use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use diagramma::detect::{evaluate_dataset, read_boxes, EvalConfig, RegionClass};

use super::{open, write_json};
use crate::config::{input, RunConfig};
use crate::error::{CliError, Result};
use crate::Report;

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Predicted boxes (JSONL, with confidences).
    #[arg(long, value_name = "FILE")]
    pred: Option<PathBuf>,
    /// Ground-truth boxes (JSONL, null confidences).
    #[arg(long, value_name = "FILE")]
    gt: Option<PathBuf>,
    #[arg(long, value_name = "T")]
    iou: Option<f64>,
    /// Confidence cut-off for the TP/FP/FN counts (default: best-F1 threshold).
    #[arg(long, value_name = "C")]
    report_threshold: Option<f64>,
    #[arg(long, value_name = "FILE", default_value = "detection_report.json")]
    out: PathBuf,
}

impl DetectArgs {
    pub fn apply(&self, config: &mut RunConfig) {
        if self.pred.is_some() {
            config.paths.predictions = self.pred.clone();
        }
        if self.gt.is_some() {
            config.paths.ground_truth = self.gt.clone();
        }
        if let Some(t) = self.iou {
            config.detection.iou_threshold = t;
        }
        if self.report_threshold.is_some() {
            config.detection.report_threshold = self.report_threshold;
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

pub fn run(args: &DetectArgs, config: &RunConfig) -> Result<Report> {
    let pred_path = input(&config.paths.predictions, "--pred")?;
    let gt_path = input(&config.paths.ground_truth, "--gt")?;
    let load = |path: &std::path::Path| {
        read_boxes(open(path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    };
    let preds = load(pred_path)?;
    let gts = load(gt_path)?;
    if let Some(b) = preds.iter().find(|b| b.confidence.is_none()) {
        return Err(CliError::Invalid(format!("{}: box on page {} has no confidence", pred_path.display(), b.page_id)));
    }
    if let Some(b) = gts.iter().find(|b| b.confidence.is_some()) {
        return Err(CliError::Invalid(format!("{}: box on page {} has a confidence", gt_path.display(), b.page_id)));
    }
    let cfg = EvalConfig {
        iou_threshold: config.detection.iou_threshold,
        report_threshold: config.detection.report_threshold,
    };
    let report = evaluate_dataset(&preds, &gts, &RegionClass::ALL, &cfg)?;
    let out = config.output(&args.out)?;
    write_json(&out, &report)?;

    let mut human =
        format!("{:<11} {:>6} {:>8} {:>8} {:>5} {:>5} {:>5}\n", "class", "gt", "AP", "best F1", "TP", "FP", "FN");
    for c in &report.classes {
        let _ = writeln!(
            human,
            "{:<11} {:>6} {:>8} {:>8.4} {:>5} {:>5} {:>5}",
            c.class.as_str(),
            c.num_gt,
            fmt_opt(c.ap),
            c.best_f1.f1,
            c.counts.tp,
            c.counts.fp,
            c.counts.fn_
        );
    }
    let _ = write!(
        human,
        "mAP@{}: {}\nbest F1: {:.4} at confidence {}\nreport: {}",
        cfg.iou_threshold,
        fmt_opt(report.map),
        report.best_f1.f1,
        fmt_opt(report.best_f1.threshold),
        out.display()
    );
    let json = serde_json::to_value(&report).expect("report serializes");
    Ok(Report { human, json })
}
