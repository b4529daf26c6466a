use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use diagramma::annotations::{
    attach_interpretation, build_annotation_page, detection_to_annotation, embed_in_manifest, parse_annotation_page,
    AnnotationPage, Provenance,
};
use diagramma::corpus::{parse_manifest, CanvasRecord, ManifestOptions};
use diagramma::detect::read_boxes;
use diagramma::kg::{annotations_to_triples, serialize, validate_graph, RdfFormat};
use diagramma::vlm::load_session;
use serde_json::json;

use super::{open, read_bytes, write_bytes};
use crate::config::{input, RunConfig};
use crate::error::{CliError, Result};
use crate::Report;

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// Detection JSONL; `page_id` is a canvas URI, `<manifest_id>/<index>` or a canvas index.
    #[arg(long, value_name = "FILE")]
    detections: Option<PathBuf>,
    /// The IIIF manifest the detections refer to.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Interpretation session whose answers are attached to the regions.
    #[arg(long, value_name = "FILE")]
    session: Option<PathBuf>,
    #[arg(long, value_name = "FILE", default_value = "annotations.jsonld")]
    out: PathBuf,
    /// Also write the manifest with the annotation page linked from its canvases.
    #[arg(long, value_name = "FILE")]
    embed: Option<PathBuf>,
}

impl AnnotateArgs {
    pub fn apply(&self, config: &mut RunConfig) {
        if self.detections.is_some() {
            config.paths.predictions = self.detections.clone();
        }
        if self.manifest.is_some() {
            config.paths.manifest = self.manifest.clone();
        }
        if self.session.is_some() {
            config.paths.session = self.session.clone();
        }
    }
}

fn canvas_index(canvases: &[CanvasRecord]) -> HashMap<String, usize> {
    let mut index = HashMap::new();
    for (i, c) in canvases.iter().enumerate() {
        index.insert(c.canvas_uri.clone(), i);
        index.insert(format!("{}/{}", c.manifest_id, c.sequence_index), i);
        index.insert(c.sequence_index.to_string(), i);
    }
    index
}

pub fn annotate(args: &AnnotateArgs, config: &RunConfig) -> Result<Report> {
    let det_path = input(&config.paths.predictions, "--detections")?;
    let manifest_path = input(&config.paths.manifest, "--manifest")?;
    let session_path = match &config.paths.session {
        Some(_) => Some(input(&config.paths.session, "--session")?),
        None => None,
    };
    let manifest_bytes = read_bytes(manifest_path)?;
    let canvases = parse_manifest(&manifest_bytes, &ManifestOptions::default())
        .map_err(|e| CliError::Invalid(format!("{}: {e}", manifest_path.display())))?;
    let detections =
        read_boxes(open(det_path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", det_path.display())))?;
    let index = canvas_index(&canvases);

    // number regions per canvas in input order
    let mut per_canvas: BTreeMap<usize, usize> = BTreeMap::new();
    let mut items = Vec::new();
    for det in &detections {
        let &c = index.get(&det.page_id).ok_or_else(|| {
            CliError::Invalid(format!("detection page `{}` matches no canvas of the manifest", det.page_id))
        })?;
        let n = per_canvas.entry(c).or_insert(0);
        items.push(detection_to_annotation(det, &canvases[c], &config.annotations.id_base, *n)?);
        *n += 1;
    }
    let regions = items.len();

    let mut interpretations = 0;
    if let Some(path) = session_path {
        let by_id: HashMap<String, usize> = items.iter().enumerate().map(|(i, a)| (a.id.clone(), i)).collect();
        for record in load_session(path)?.iter().filter(|r| !r.failed()) {
            let id = &record.prompt.diagram.annotation_id;
            let &r = by_id
                .get(id)
                .ok_or_else(|| CliError::Invalid(format!("session answer for `{id}` matches no region annotation")))?;
            let provenance = Provenance::new(&record.model_name, &record.prompt.template_id, &record.timestamp);
            let mut annotation =
                attach_interpretation(&items[r], record.prompt.level, &record.response_text, provenance)?;
            // one interpretation per model and level
            annotation.id = format!("{}/{}", annotation.id, slug(&record.model_name));
            items.push(annotation);
            interpretations += 1;
        }
    }

    let page_uri = format!("{}/page/{}", config.annotations.id_base.trim_end_matches('/'), canvases[0].manifest_id);
    let bytes = build_annotation_page(&items, &page_uri, &config.annotations.vocabulary)?;
    let out = config.output(&args.out)?;
    write_bytes(&out, &bytes)?;
    let mut json =
        json!({"regions": regions, "interpretations": interpretations, "page": page_uri, "annotations": out});
    let mut human = format!("regions: {regions}\ninterpretations: {interpretations}\nannotations: {}", out.display());
    if let Some(embed) = &args.embed {
        let page = AnnotationPage::new(&page_uri, items)?;
        let embedded = embed_in_manifest(&manifest_bytes, &page, &config.annotations.vocabulary)?;
        let path = config.output(embed)?;
        write_bytes(&path, &embedded)?;
        human.push_str(&format!("\nmanifest: {}", path.display()));
        json["manifest"] = json!(path);
    }
    Ok(Report { human, json })
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '-' }).collect()
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Turtle,
    Ntriples,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Annotation page (JSON-LD).
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "turtle")]
    format: Format,
    /// Defaults to annotations.ttl or annotations.nt.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

impl ExportArgs {
    pub fn apply(&self, config: &mut RunConfig) {
        if self.annotations.is_some() {
            config.paths.annotations = self.annotations.clone();
        }
    }
}

pub fn export(args: &ExportArgs, config: &RunConfig) -> Result<Report> {
    let path = input(&config.paths.annotations, "--annotations")?;
    let page =
        parse_annotation_page(&read_bytes(path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    let vocab = &config.annotations.vocabulary;
    let triples = annotations_to_triples(&page, vocab)?;
    let report = validate_graph(&triples, vocab);
    if !report.is_valid() {
        let shown: Vec<String> =
            report.violations.iter().take(5).map(|v| format!("{}: {}", v.subject, v.message)).collect();
        return Err(CliError::Invalid(format!("{} graph violation(s): {}", report.violations.len(), shown.join("; "))));
    }
    let (format, default_name) = match args.format {
        Format::Turtle => (RdfFormat::Turtle, "annotations.ttl"),
        Format::Ntriples => (RdfFormat::Ntriples, "annotations.nt"),
    };
    let text = serialize(&triples, format)?;
    let out = config.output(args.out.as_deref().unwrap_or(default_name.as_ref()))?;
    write_bytes(&out, text.as_bytes())?;
    Ok(Report {
        human: format!("annotations: {}\ntriples: {}\nrdf: {}", page.items.len(), triples.len(), out.display()),
        json: json!({"annotations": page.items.len(), "triples": triples.len(), "rdf": out}),
    })
}
