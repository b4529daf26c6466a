use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use diagramma::annotations::{parse_annotation_page, Body, SemioticLevel};
use diagramma::corpus::{build_image_url, parse_manifest, ManifestOptions, Region, Size};
use diagramma::detect::RegionClass;
use diagramma::eg::parse_eg;
use diagramma::vlm::{
    aggregate_entries, aggregate_scores, apply_scores, build_prompt, load_session, read_score_file, resolve_models,
    run_session, save_session, suggest_symbolic, DiagramRef, ImageRef, ScoreTable,
};
use serde_json::{json, Value};

use super::{open, read_bytes, write_jsonl};
use crate::config::{input, load_models, RunConfig};
use crate::error::{io_error, CliError, Result};
use crate::Report;

#[derive(Debug, Args)]
pub struct PromptArgs {
    /// Diagram references (JSONL of `{annotation_id, image}`) or an annotation page.
    #[arg(long, value_name = "FILE")]
    diagrams: Option<PathBuf>,
    /// Manifest used to turn an annotation page's regions into image URLs.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// TOML file with a `[[models]]` list; replaces the configured models.
    #[arg(long, value_name = "FILE")]
    models: Option<PathBuf>,
    /// `all` or a comma-separated subset of morphological, indexical, symbolic.
    #[arg(long, value_name = "LEVELS")]
    levels: Option<String>,
    #[arg(long, value_name = "N")]
    parallel: Option<usize>,
    /// Write the rendered prompts without contacting any model.
    #[arg(long)]
    render_only: bool,
    /// Defaults to session.jsonl (prompts.jsonl with --render-only).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn parse_levels(spec: &str) -> Option<Vec<SemioticLevel>> {
    if spec.trim() == "all" {
        return Some(SemioticLevel::ALL.to_vec());
    }
    spec.split(',').map(|s| SemioticLevel::parse(s.trim())).collect()
}

impl PromptArgs {
    pub fn apply(&self, config: &mut RunConfig) {
        if self.diagrams.is_some() {
            config.paths.diagrams = self.diagrams.clone();
        }
        if self.manifest.is_some() {
            config.paths.manifest = self.manifest.clone();
        }
        if let Some(levels) = self.levels.as_deref().and_then(parse_levels) {
            config.vlm.levels = levels;
        }
        if let Some(n) = self.parallel {
            config.vlm.parallel = n;
        }
    }
}

fn load_diagrams(config: &RunConfig) -> Result<Vec<DiagramRef>> {
    let path = input(&config.paths.diagrams, "--diagrams")?;
    let bytes = read_bytes(path)?;
    let bad = |e: &dyn std::fmt::Display| CliError::Invalid(format!("{}: {e}", path.display()));
    let whole: Option<Value> = serde_json::from_slice(&bytes).ok();
    if whole.as_ref().is_some_and(|v| v.get("items").is_some()) {
        let page = parse_annotation_page(&bytes).map_err(|e| bad(&e))?;
        let manifest_path = input(&config.paths.manifest, "--manifest")?;
        let canvases = parse_manifest(&read_bytes(manifest_path)?, &ManifestOptions::default())
            .map_err(|e| CliError::Invalid(format!("{}: {e}", manifest_path.display())))?;
        let by_uri: HashMap<&str, _> = canvases.iter().map(|c| (c.canvas_uri.as_str(), c)).collect();
        let mut out = Vec::new();
        for a in &page.items {
            let (Body::Tag(RegionClass::Diagram), Some(selector)) = (&a.body, a.target.selector) else {
                continue;
            };
            let canvas = by_uri.get(a.target.source.as_str()).ok_or_else(|| {
                CliError::Invalid(format!("{} targets {}, which is not in the manifest", a.id, a.target.source))
            })?;
            let url = build_image_url(canvas, Region::Box(selector), Size::Full)?;
            out.push(DiagramRef { annotation_id: a.id.clone(), image: ImageRef::Url { url } });
        }
        return Ok(out);
    }
    if let Some(Value::Array(items)) = whole {
        return items.into_iter().map(|v| serde_json::from_value(v).map_err(|e| bad(&e))).collect();
    }
    super::read_jsonl(path)
}

pub fn prompt(args: &PromptArgs, config: &RunConfig) -> Result<Report> {
    if let Some(spec) = &args.levels {
        if parse_levels(spec).is_none() {
            return Err(CliError::Invalid(format!("unknown level in `{spec}`")));
        }
    }
    let models = match &args.models {
        Some(path) => load_models(path)?,
        None => config.vlm.models.clone(),
    };
    let diagrams = load_diagrams(config)?;
    if diagrams.is_empty() {
        return Err(CliError::Invalid("no diagrams to prompt".into()));
    }
    let levels = &config.vlm.levels;

    if args.render_only {
        let prompts: Vec<_> = diagrams.iter().flat_map(|d| levels.iter().map(move |&l| build_prompt(l, d))).collect();
        let out = config.output(args.out.as_deref().unwrap_or("prompts.jsonl".as_ref()))?;
        write_jsonl(&out, &prompts)?;
        return Ok(Report {
            human: format!("prompts: {}\nwritten: {}", prompts.len(), out.display()),
            json: json!({"prompts": prompts.len(), "written": out}),
        });
    }

    if models.is_empty() {
        return Err(CliError::Invalid("no models configured (use --models or [[vlm.models]])".into()));
    }
    let resolved = resolve_models(&models)?;
    let records = run_session(&diagrams, levels, &resolved, config.vlm.parallel)?;
    let out = config.output(args.out.as_deref().unwrap_or("session.jsonl".as_ref()))?;
    save_session(&out, &records)?;

    let mut human = String::new();
    let mut per_model = Vec::new();
    for m in &models {
        let mine: Vec<_> = records.iter().filter(|r| r.model_name == m.name).collect();
        let failed = mine.iter().filter(|r| r.failed()).count();
        let _ = writeln!(human, "{}: {} answered, {failed} failed", m.name, mine.len() - failed);
        per_model.push(json!({"model": m.name, "answered": mine.len() - failed, "failed": failed}));
    }
    let _ = write!(human, "session: {}", out.display());
    if records.iter().all(|r| r.failed()) {
        let first = records[0].error.clone().unwrap_or_default();
        return Err(CliError::Transport(format!("every request failed (session saved to {}): {first}", out.display())));
    }
    Ok(Report { human, json: json!({"records": records.len(), "models": per_model, "session": out}) })
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Session file written by `prompt`.
    #[arg(long, value_name = "FILE")]
    session: Option<PathBuf>,
    /// CSV score sheet with header `model,diagram,level,score`.
    #[arg(long, value_name = "FILE")]
    sheet: Option<PathBuf>,
    /// Suggest scores for symbolic answers by checking them against a reference graph.
    #[arg(long)]
    auto_symbolic: bool,
    /// Reference graph for --auto-symbolic.
    #[arg(long, value_name = "FILE")]
    gt: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    bound: Option<usize>,
    #[arg(long, value_name = "FILE", default_value = "session_scored.jsonl")]
    out: PathBuf,
}

impl ScoreArgs {
    pub fn apply(&self, config: &mut RunConfig) {
        if self.session.is_some() {
            config.paths.session = self.session.clone();
        }
        if self.sheet.is_some() {
            config.paths.score_sheet = self.sheet.clone();
        }
        if self.gt.is_some() {
            config.paths.reference_graph = self.gt.clone();
        }
        if let Some(b) = self.bound {
            config.eg.bound = b;
        }
    }
}

fn table_report(table: &ScoreTable, mut json: Value, prefix: String) -> Report {
    json["table"] = serde_json::to_value(table).expect("table serializes");
    Report { human: format!("{prefix}{table}"), json }
}

pub fn score(args: &ScoreArgs, config: &RunConfig) -> Result<Report> {
    let sheet = match &config.paths.score_sheet {
        Some(_) => Some(input(&config.paths.score_sheet, "--sheet")?),
        None => None,
    };
    let session = match &config.paths.session {
        Some(_) => Some(input(&config.paths.session, "--session")?),
        None => None,
    };
    let reference = if args.auto_symbolic {
        let path = input(&config.paths.reference_graph, "--gt")?;
        let text = std::fs::read_to_string(path).map_err(io_error(path))?;
        Some(parse_eg(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?)
    } else {
        None
    };
    let entries = match sheet {
        Some(path) => {
            Some(read_score_file(open(path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };

    let Some(session) = session else {
        let Some(entries) = entries else {
            return Err(CliError::Usage("score needs --session, --sheet, or both".into()));
        };
        if reference.is_some() {
            return Err(CliError::Usage("--auto-symbolic needs --session".into()));
        }
        let table = aggregate_entries(&entries)?;
        return Ok(table_report(&table, json!({"scored": entries.len()}), String::new()));
    };

    let mut records = load_session(session)?;
    if let Some(entries) = &entries {
        records = apply_scores(&records, entries)?;
    }
    if let Some(graph) = &reference {
        records = records
            .iter()
            .map(|r| suggest_symbolic(r, graph, config.eg.bound))
            .collect::<std::result::Result<_, _>>()?;
    }
    let out = config.output(&args.out)?;
    write_jsonl(&out, &records)?;
    let unscored = records.iter().filter(|r| r.score.is_none()).count();
    let json = json!({"records": records.len(), "unscored": unscored, "session": out});
    if unscored > 0 {
        return Ok(Report {
            human: format!("records: {}\nunscored: {unscored}\nsession: {}", records.len(), out.display()),
            json,
        });
    }
    let table = aggregate_scores(&records)?;
    Ok(table_report(&table, json, format!("session: {}\n", out.display())))
}
