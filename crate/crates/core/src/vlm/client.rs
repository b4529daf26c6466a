//! Chat-completions client with retries, rate limiting and session fan-out.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{build_prompt, DiagramRef, ImageRef, InterpretationRecord, PromptRecord, SemioticLevel, VlmError};
use crate::retry::{self, Attempt, RetryPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageMode {
    /// Send image URLs as they are.
    #[default]
    Url,
    /// Download URL images and send them as base64 data URLs.
    Inline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    /// Full chat-completions URL.
    pub endpoint: String,
    /// Environment variable holding the bearer token; none for open endpoints.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default)]
    pub image_mode: ImageMode,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Requests per minute against this endpoint.
    #[serde(default)]
    pub rate_limit_per_minute: Option<u32>,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout() -> u64 {
    120
}

impl ModelConfig {
    pub fn new(name: &str, endpoint: &str) -> Self {
        Self {
            name: name.into(),
            endpoint: endpoint.into(),
            api_key_env: None,
            temperature: 0.0,
            max_tokens: None,
            image_mode: ImageMode::Url,
            timeout_secs: default_timeout(),
            rate_limit_per_minute: None,
            retry: RetryPolicy::default(),
        }
    }
}

struct Secret(String);

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

/// A model configuration with its credential read from the environment.
#[derive(Debug)]
pub struct ResolvedModel {
    pub config: ModelConfig,
    secret: Option<Secret>,
    agent: ureq::Agent,
}

impl ResolvedModel {
    pub fn new(config: ModelConfig, secret: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .build()
            .into();
        Self { config, secret: secret.map(Secret), agent }
    }
}

/// Reads each model's credential once; a named but unset variable is a configuration error.
pub fn resolve_models(configs: &[ModelConfig]) -> Result<Vec<ResolvedModel>, VlmError> {
    configs
        .iter()
        .map(|c| {
            if c.name.trim().is_empty() || c.endpoint.trim().is_empty() {
                return Err(VlmError::Config("model entries need a name and an endpoint".into()));
            }
            let secret = match &c.api_key_env {
                None => None,
                Some(var) => Some(std::env::var(var).map_err(|_| {
                    VlmError::Config(format!("environment variable {var} for model {} is not set", c.name))
                })?),
            };
            Ok(ResolvedModel::new(c.clone(), secret))
        })
        .collect()
}

fn excerpt(body: &str) -> String {
    let mut s: String = body.chars().take(200).collect();
    if body.chars().count() > 200 {
        s.push('…');
    }
    s
}

fn image_url(model: &ResolvedModel, image: &ImageRef) -> Result<String, VlmError> {
    match (image, model.config.image_mode) {
        (ImageRef::Inline { media_type, data }, _) => Ok(format!("data:{media_type};base64,{data}")),
        (ImageRef::Url { url }, ImageMode::Url) => Ok(url.clone()),
        (ImageRef::Url { url }, ImageMode::Inline) => {
            let fetch = |_| -> Attempt<(String, Vec<u8>), VlmError> {
                let transient = |m: String| Attempt::Transient(VlmError::Transport { attempts: vec![m] });
                let mut resp = match model.agent.get(url).call() {
                    Ok(r) => r,
                    Err(e) => return transient(format!("image {url}: {e}")),
                };
                let status = resp.status().as_u16();
                if status == 429 || status >= 500 {
                    return transient(format!("image {url}: HTTP {status}"));
                }
                if !(200..300).contains(&status) {
                    return Attempt::Fatal(VlmError::Transport {
                        attempts: vec![format!("image {url}: HTTP {status}")],
                    });
                }
                let media = resp
                    .headers()
                    .get("content-type")
                    .and_then(|v| v.to_str().ok())
                    .unwrap_or("image/jpeg")
                    .to_string();
                let mut bytes = Vec::new();
                match resp.body_mut().as_reader().read_to_end(&mut bytes) {
                    Ok(_) => Attempt::Done((media, bytes)),
                    Err(e) => transient(format!("image {url}: {e}")),
                }
            };
            let (media, bytes) = retry::run(&model.config.retry, fetch).result?;
            Ok(format!("data:{media};base64,{}", base64::engine::general_purpose::STANDARD.encode(bytes)))
        }
    }
}

fn request_body(model: &ResolvedModel, prompt: &PromptRecord, image: &str) -> Value {
    let mut body = json!({
        "model": model.config.name,
        "temperature": model.config.temperature,
        "messages": [{
            "role": "user",
            "content": [
                {"type": "text", "text": prompt.rendered_text},
                {"type": "image_url", "image_url": {"url": image}},
            ],
        }],
    });
    if let Some(n) = model.config.max_tokens {
        body["max_tokens"] = json!(n);
    }
    body
}

fn response_content(text: &str) -> Result<String, VlmError> {
    let protocol = |message: &str| VlmError::Protocol { message: message.into(), excerpt: excerpt(text) };
    let doc: Value = serde_json::from_str(text).map_err(|_| protocol("response is not JSON"))?;
    match doc.pointer("/choices/0/message/content") {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Array(parts)) => Ok(parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect()),
        _ => Err(protocol("no choices[0].message.content")),
    }
}

fn attempt(model: &ResolvedModel, body: &Value) -> Attempt<String, VlmError> {
    let endpoint = &model.config.endpoint;
    let mut req = model.agent.post(endpoint).header("content-type", "application/json");
    if let Some(secret) = &model.secret {
        req = req.header("authorization", &format!("Bearer {}", secret.0));
    }
    let transient = |m: String| Attempt::Transient(VlmError::Transport { attempts: vec![m] });
    let mut resp = match req.send_json(body) {
        Ok(r) => r,
        Err(e) => return transient(format!("{endpoint}: {e}")),
    };
    let status = resp.status().as_u16();
    log::debug!("{} answered HTTP {status}", endpoint);
    if status == 401 || status == 403 {
        return Attempt::Fatal(VlmError::Credential { endpoint: endpoint.clone(), status });
    }
    if status == 429 || status >= 500 {
        return transient(format!("{endpoint}: HTTP {status}"));
    }
    let text = match resp.body_mut().read_to_string() {
        Ok(t) => t,
        Err(e) => return transient(format!("{endpoint}: reading body: {e}")),
    };
    if !(200..300).contains(&status) {
        return Attempt::Fatal(VlmError::Protocol { message: format!("HTTP {status}"), excerpt: excerpt(&text) });
    }
    match response_content(&text) {
        Ok(content) => Attempt::Done(content),
        Err(e) => Attempt::Fatal(e),
    }
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Sends one prompt and image; transient failures (transport, 429, 5xx) are retried.
pub fn query_vlm(model: &ResolvedModel, prompt: &PromptRecord) -> Result<InterpretationRecord, VlmError> {
    let image = image_url(model, &prompt.diagram.image)?;
    let body = request_body(model, prompt, &image);
    log::info!(
        "querying {} ({}) for {} / {}",
        model.config.name,
        model.config.endpoint,
        prompt.diagram.annotation_id,
        prompt.level
    );
    let started = Instant::now();
    let outcome = retry::run(&model.config.retry, |_| attempt(model, &body));
    let latency_ms = started.elapsed().as_millis() as u64;
    let response_text = match outcome.result {
        Ok(text) => text,
        Err(VlmError::Transport { .. }) => {
            let attempts = outcome
                .failures
                .iter()
                .flat_map(|f| match f {
                    VlmError::Transport { attempts } => attempts.clone(),
                    other => vec![other.to_string()],
                })
                .collect();
            return Err(VlmError::Transport { attempts });
        }
        Err(e) => return Err(e),
    };
    Ok(InterpretationRecord {
        prompt: prompt.clone(),
        model_name: model.config.name.clone(),
        endpoint: model.config.endpoint.clone(),
        response_text,
        latency_ms,
        retries: outcome.retries,
        timestamp: now_rfc3339(),
        temperature: model.config.temperature,
        score: None,
        score_source: None,
        rationale: None,
        error: None,
    })
}

/// Spaces requests to one endpoint at least `60 / rate` seconds apart.
struct RateLimiter {
    next_slot: Mutex<HashMap<String, Instant>>,
}

impl RateLimiter {
    fn wait(&self, endpoint: &str, per_minute: Option<u32>) {
        let Some(rate) = per_minute.filter(|&r| r > 0) else { return };
        let interval = Duration::from_secs_f64(60.0 / rate as f64);
        let now = Instant::now();
        let start = {
            let mut slots = self.next_slot.lock().expect("rate limiter poisoned");
            let slot = slots.entry(endpoint.to_string()).or_insert(now);
            let start = (*slot).max(now);
            *slot = start + interval;
            start
        };
        std::thread::sleep(start.saturating_duration_since(now));
    }
}

/// Runs every (model, diagram, level) combination, in that order.
///
/// Failed requests become records with `error` set; the session goes on.
pub fn run_session(
    diagrams: &[DiagramRef],
    levels: &[SemioticLevel],
    models: &[ResolvedModel],
    max_parallel: usize,
) -> Result<Vec<InterpretationRecord>, VlmError> {
    if diagrams.is_empty() || levels.is_empty() || models.is_empty() {
        return Err(VlmError::Config("a session needs at least one diagram, level and model".into()));
    }
    if max_parallel == 0 {
        return Err(VlmError::Config("max_parallel must be at least 1".into()));
    }
    let jobs: Vec<(&ResolvedModel, PromptRecord)> = models
        .iter()
        .flat_map(|m| diagrams.iter().flat_map(move |d| levels.iter().map(move |&l| (m, build_prompt(l, d)))))
        .collect();
    let limiter = RateLimiter { next_slot: Mutex::new(HashMap::new()) };
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<InterpretationRecord>>> = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..max_parallel.min(jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((model, prompt)) = jobs.get(i) else { break };
                limiter.wait(&model.config.endpoint, model.config.rate_limit_per_minute);
                let record = query_vlm(model, prompt).unwrap_or_else(|e| {
                    log::warn!("{} failed for {}: {e}", model.config.name, prompt.diagram.annotation_id);
                    InterpretationRecord {
                        prompt: prompt.clone(),
                        model_name: model.config.name.clone(),
                        endpoint: model.config.endpoint.clone(),
                        response_text: String::new(),
                        latency_ms: 0,
                        retries: 0,
                        timestamp: now_rfc3339(),
                        temperature: model.config.temperature,
                        score: None,
                        score_source: None,
                        rationale: None,
                        error: Some(e.to_string()),
                    }
                });
                slots.lock().expect("session worker panicked")[i] = Some(record);
            });
        }
    });
    Ok(slots.into_inner().expect("session worker panicked").into_iter().map(|r| r.expect("every job runs")).collect())
}
