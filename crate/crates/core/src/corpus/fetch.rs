//! Parallel full-resolution download of canvas images.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{build_image_url, CanvasRecord, CorpusError, Region, Size};
use crate::retry::{self, Attempt, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FetchOptions {
    pub max_parallel: usize,
    pub retry: RetryPolicy,
    pub timeout_secs: u64,
    pub size: Size,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self { max_parallel: 4, retry: RetryPolicy::default(), timeout_secs: 120, size: Size::Full }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FetchOutcome {
    Downloaded {
        bytes: u64,
    },
    /// A complete file was already present.
    Skipped {
        bytes: u64,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchEntry {
    pub canvas_uri: String,
    pub url: String,
    pub path: PathBuf,
    pub outcome: FetchOutcome,
    pub retries: u32,
    /// Transient failures seen before the final outcome.
    pub attempt_log: Vec<String>,
}

/// Per-record outcomes in input order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FetchReport {
    pub entries: Vec<FetchEntry>,
}

impl FetchReport {
    fn count(&self, pred: impl Fn(&FetchOutcome) -> bool) -> usize {
        self.entries.iter().filter(|e| pred(&e.outcome)).count()
    }

    pub fn downloaded(&self) -> usize {
        self.count(|o| matches!(o, FetchOutcome::Downloaded { .. }))
    }

    pub fn skipped(&self) -> usize {
        self.count(|o| matches!(o, FetchOutcome::Skipped { .. }))
    }

    pub fn failed(&self) -> usize {
        self.count(|o| matches!(o, FetchOutcome::Failed { .. }))
    }
}

fn target_path(root: &Path, record: &CanvasRecord) -> PathBuf {
    let category = record.robin_category.as_deref().unwrap_or("unknown");
    root.join(category).join(&record.manifest_id).join(format!("{}.jpg", record.sequence_index))
}

fn probe_writable(root: &Path) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io { path: root.to_path_buf(), source };
    fs::create_dir_all(root).map_err(io_err)?;
    let probe = root.join(".write-probe");
    fs::File::create(&probe).and_then(|mut f| f.write_all(b"")).map_err(io_err)?;
    let _ = fs::remove_file(&probe);
    Ok(())
}

fn agent(timeout_secs: u64) -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(timeout_secs.max(1))))
        .build()
        .into()
}

/// GETs one manifest document, retrying 429, 5xx and transport failures.
pub fn fetch_manifest(url: &str, policy: &RetryPolicy, timeout_secs: u64) -> Result<Vec<u8>, CorpusError> {
    let agent = agent(timeout_secs);
    let outcome = retry::run(policy, |_| {
        let mut response = match agent.get(url).call() {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(format!("transport: {e}")),
        };
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Attempt::Transient(format!("HTTP {status}"));
        }
        if !(200..300).contains(&status) {
            return Attempt::Fatal(format!("HTTP {status}"));
        }
        let mut body = Vec::new();
        match response.body_mut().as_reader().read_to_end(&mut body) {
            Ok(_) => Attempt::Done(body),
            Err(e) => Attempt::Transient(format!("reading body: {e}")),
        }
    });
    outcome.result.map_err(|message| CorpusError::Http { url: url.to_string(), message })
}

fn download(agent: &ureq::Agent, url: &str, path: &Path) -> Attempt<u64, String> {
    let mut response = match agent.get(url).call() {
        Ok(r) => r,
        Err(e) => return Attempt::Transient(format!("transport: {e}")),
    };
    let status = response.status().as_u16();
    if status == 429 || status >= 500 {
        return Attempt::Transient(format!("HTTP {status}"));
    }
    if !(200..300).contains(&status) {
        return Attempt::Fatal(format!("HTTP {status}"));
    }
    let partial = path.with_extension("jpg.part");
    let mut write = || -> io::Result<u64> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut file = fs::File::create(&partial)?;
        let bytes = io::copy(&mut response.body_mut().as_reader(), &mut file)?;
        file.sync_all()?;
        fs::rename(&partial, path)?;
        Ok(bytes)
    };
    match write() {
        Ok(bytes) => Attempt::Done(bytes),
        Err(e) => {
            let _ = fs::remove_file(&partial);
            if e.kind() == io::ErrorKind::PermissionDenied {
                Attempt::Fatal(format!("{}: {e}", path.display()))
            } else {
                Attempt::Transient(format!("reading body: {e}"))
            }
        }
    }
}

fn fetch_one(agent: &ureq::Agent, root: &Path, record: &CanvasRecord, options: &FetchOptions) -> FetchEntry {
    let path = target_path(root, record);
    let mut entry = FetchEntry {
        canvas_uri: record.canvas_uri.clone(),
        url: String::new(),
        path: path.clone(),
        outcome: FetchOutcome::Failed { error: String::new() },
        retries: 0,
        attempt_log: Vec::new(),
    };
    entry.url = match build_image_url(record, Region::Full, options.size) {
        Ok(url) => url,
        Err(e) => {
            entry.outcome = FetchOutcome::Failed { error: e.to_string() };
            return entry;
        }
    };
    if let Ok(meta) = fs::metadata(&path) {
        if meta.is_file() && meta.len() > 0 {
            entry.outcome = FetchOutcome::Skipped { bytes: meta.len() };
            return entry;
        }
    }
    let outcome = retry::run(&options.retry, |_| download(agent, &entry.url, &path));
    entry.retries = outcome.retries;
    entry.attempt_log = outcome.failures;
    entry.outcome = match outcome.result {
        Ok(bytes) => FetchOutcome::Downloaded { bytes },
        Err(error) => FetchOutcome::Failed { error },
    };
    if let FetchOutcome::Failed { error } = &entry.outcome {
        log::warn!("{}: {error}", entry.url);
    }
    entry
}

/// Downloads every record's full image to
/// `<root>/<category|unknown>/<manifest_id>/<sequence_index>.jpg`.
///
/// Files are written to a `.part` sibling and renamed when complete, so a
/// rerun skips exactly the finished ones. Per-record failures end up in the
/// report; only an unusable output root is fatal.
pub fn fetch_corpus(records: &[CanvasRecord], root: &Path, options: &FetchOptions) -> Result<FetchReport, CorpusError> {
    if options.max_parallel == 0 {
        return Err(CorpusError::Config("max_parallel must be at least 1".into()));
    }
    probe_writable(root)?;
    let agent = agent(options.timeout_secs);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<FetchEntry>>> = Mutex::new(vec![None; records.len()]);
    std::thread::scope(|scope| {
        for _ in 0..options.max_parallel.min(records.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(record) = records.get(i) else { break };
                let entry = fetch_one(&agent, root, record, options);
                slots.lock().expect("fetch worker panicked")[i] = Some(entry);
            });
        }
    });
    let entries = slots
        .into_inner()
        .expect("fetch worker panicked")
        .into_iter()
        .map(|e| e.expect("every record is visited"))
        .collect();
    Ok(FetchReport { entries })
}
