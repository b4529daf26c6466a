use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use diagramma::corpus::{
    corpus_stats, fetch_corpus, fetch_manifest, filter_blank, parse_manifest, write_stats_csv, CanvasRecord,
    FetchOptions, ManifestOptions, Size,
};
use serde_json::json;

use super::{read_bytes, read_jsonl, write_json, write_jsonl, write_with};
use crate::config::{input, RunConfig};
use crate::error::{io_error, CliError, Result};
use crate::Report;

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// A manifest file, a directory of `*.json` manifests, or a text file listing manifest URLs or paths.
    #[arg(long, value_name = "DIR|FILE")]
    manifests: Option<PathBuf>,
    /// Subdirectory of the output root for records and images.
    #[arg(long, value_name = "DIR", default_value = "corpus")]
    out: PathBuf,
    #[arg(long, value_name = "N")]
    parallel: Option<usize>,
    #[arg(long, value_name = "RE")]
    blank_regex: Option<String>,
    /// Also download the retained pages' images.
    #[arg(long)]
    download: bool,
    #[arg(long, value_name = "PX")]
    max_width: Option<u32>,
}

impl IngestArgs {
    pub fn apply(&self, config: &mut RunConfig) {
        if self.manifests.is_some() {
            config.paths.manifests = self.manifests.clone();
        }
        if let Some(n) = self.parallel {
            config.corpus.parallel = n;
        }
        if self.blank_regex.is_some() {
            config.corpus.blank_regex = self.blank_regex.clone();
        }
        if self.max_width.is_some() {
            config.corpus.max_width = self.max_width;
        }
    }
}

enum Source {
    File(PathBuf),
    Url(String),
}

impl Source {
    fn name(&self) -> String {
        match self {
            Source::File(p) => p.display().to_string(),
            Source::Url(u) => u.clone(),
        }
    }
}

fn is_url(s: &str) -> bool {
    s.starts_with("http://") || s.starts_with("https://")
}

/// Expands the `--manifests` argument and checks every local path up front.
fn sources(path: &Path) -> Result<Vec<Source>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(io_error(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(CliError::Invalid(format!("{} contains no .json manifests", path.display())));
        }
        return Ok(files.into_iter().map(Source::File).collect());
    }
    let bytes = read_bytes(path)?;
    if bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{') {
        return Ok(vec![Source::File(path.to_path_buf())]);
    }
    let text = String::from_utf8(bytes).map_err(|_| CliError::Invalid(format!("{} is not UTF-8", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        if is_url(line) {
            out.push(Source::Url(line.to_string()));
        } else {
            let p = base.join(line);
            if !p.is_file() {
                return Err(CliError::Io { path: Some(p), message: "no such file".into() });
            }
            out.push(Source::File(p));
        }
    }
    Ok(out)
}

pub fn ingest(args: &IngestArgs, config: &RunConfig) -> Result<Report> {
    let manifests = input(&config.paths.manifests, "--manifests")?;
    let sources = sources(manifests)?;
    let options = match &config.corpus.blank_regex {
        Some(re) => ManifestOptions::with_blank_pattern(re)?,
        None => ManifestOptions::default(),
    };
    let out_dir = config.output(&args.out)?;
    std::fs::create_dir_all(&out_dir).map_err(io_error(&out_dir))?;
    let mut records: Vec<CanvasRecord> = Vec::new();
    for source in &sources {
        let bytes = match source {
            Source::File(p) => read_bytes(p)?,
            Source::Url(u) => fetch_manifest(u, &config.corpus.retry, config.corpus.timeout_secs)?,
        };
        let parsed =
            parse_manifest(&bytes, &options).map_err(|e| CliError::Invalid(format!("{}: {e}", source.name())))?;
        log::info!("{}: {} canvases", source.name(), parsed.len());
        records.extend(parsed);
    }
    let records_path = out_dir.join("records.jsonl");
    write_jsonl(&records_path, &records)?;
    let total = records.len();
    let (retained, blank) = filter_blank(records);

    let mut human = format!(
        "manifests: {}\npages: {total}\nblank removed: {blank}\nretained: {}\nrecords: {}\n",
        sources.len(),
        retained.len(),
        records_path.display()
    );
    let mut json = json!({
        "manifests": sources.len(),
        "total_pages": total,
        "blank_removed": blank,
        "retained": retained.len(),
        "records": records_path,
    });
    if args.download {
        let fetch = FetchOptions {
            max_parallel: config.corpus.parallel,
            retry: config.corpus.retry.clone(),
            timeout_secs: config.corpus.timeout_secs,
            size: config.corpus.max_width.map_or(Size::Full, Size::MaxWidth),
        };
        let images = out_dir.join("images");
        let report = fetch_corpus(&retained, &images, &fetch)?;
        let report_path = out_dir.join("fetch_report.json");
        write_json(&report_path, &report)?;
        let _ = writeln!(
            human,
            "downloaded: {}\nskipped: {}\nfailed: {}\nfetch report: {}",
            report.downloaded(),
            report.skipped(),
            report.failed(),
            report_path.display()
        );
        json["download"] = json!({
            "downloaded": report.downloaded(),
            "skipped": report.skipped(),
            "failed": report.failed(),
            "report": report_path,
        });
    }
    Ok(Report { human, json })
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Canvas records written by `ingest`.
    #[arg(long, value_name = "FILE")]
    records: Option<PathBuf>,
    /// Number of catalogue items, when larger than the digitized set.
    #[arg(long, value_name = "N")]
    catalogue_size: Option<usize>,
    #[arg(long, value_name = "DIR", default_value = "stats")]
    out: PathBuf,
}

impl StatsArgs {
    pub fn apply(&self, config: &mut RunConfig) {
        if self.records.is_some() {
            config.paths.records = self.records.clone();
        }
        if self.catalogue_size.is_some() {
            config.corpus.catalogue_size = self.catalogue_size;
        }
    }
}

pub fn stats(args: &StatsArgs, config: &RunConfig) -> Result<Report> {
    let path = input(&config.paths.records, "--records")?;
    let records: Vec<CanvasRecord> = read_jsonl(path)?;
    let mut stats = corpus_stats(&records);
    if let Some(n) = config.corpus.catalogue_size {
        stats = stats.with_catalogue_size(n);
    }
    let dir = config.output(&args.out)?;
    std::fs::create_dir_all(&dir).map_err(io_error(&dir))?;
    let csv_path = dir.join("stats.csv");
    write_with(&csv_path, |w| write_stats_csv(&stats, w).map_err(std::io::Error::other))?;
    write_json(&dir.join("stats.json"), &stats)?;

    let mut human = format!(
        "items: {}\ndigitized items: {}\npages: {}\nblank removed: {}\nretained: {}\n\ncategory period pages\n",
        stats.total_items, stats.digitized_items, stats.total_pages, stats.blank_removed, stats.retained
    );
    for ((category, period), n) in &stats.per_category_per_period {
        let _ = writeln!(human, "{category:<8} {period:<6} {n}");
    }
    if stats.unknown > 0 {
        let _ = writeln!(human, "{:<8} {:<6} {}", "unknown", "", stats.unknown);
    }
    let _ = write!(human, "\ncsv: {}", csv_path.display());
    let json = serde_json::to_value(&stats).expect("stats serialize");
    Ok(Report { human, json })
}
