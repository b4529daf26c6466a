//! Test helpers: a scripted HTTP/1.1 stub server and a capturing logger.
#![allow(dead_code)]

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex, OnceLock};
use std::thread;

use diagramma::detect::{BBox, RegionClass};

#[derive(Debug, Clone)]
pub struct Request {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Request {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct Reply {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn new(status: u16, body: impl Into<Vec<u8>>) -> Self {
        Self { status, content_type: "application/json", body: body.into() }
    }

    pub fn chat(text: &str) -> Self {
        let body = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]});
        Self::new(200, body.to_string())
    }

    pub fn image(bytes: &[u8]) -> Self {
        Self { status: 200, content_type: "image/jpeg", body: bytes.to_vec() }
    }
}

type Handler = dyn Fn(&Request, usize) -> Reply + Send + Sync;

/// Serves each request with `handler(request, n)`, where `n` counts earlier requests to the same path.
pub struct Stub {
    pub base: String,
    pub requests: Arc<Mutex<Vec<Request>>>,
}

impl Stub {
    pub fn start(handler: impl Fn(&Request, usize) -> Reply + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = Arc::clone(&requests);
        let handler: Arc<Handler> = Arc::new(handler);
        let counts = Arc::new(Mutex::new(HashMap::<String, usize>::new()));
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let (handler, seen, counts) = (Arc::clone(&handler), Arc::clone(&seen), Arc::clone(&counts));
                thread::spawn(move || serve(stream, &*handler, &seen, &counts));
            }
        });
        Self { base, requests }
    }

    /// Replies from `script` in order, repeating the last entry.
    pub fn scripted(script: Vec<Reply>) -> Self {
        Self::start(move |_, n| script[n.min(script.len() - 1)].clone())
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub fn hits(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

fn serve(stream: TcpStream, handler: &Handler, seen: &Mutex<Vec<Request>>, counts: &Mutex<HashMap<String, usize>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h).unwrap_or(0) == 0 || h.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let len = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    let request = Request { method, path: path.clone(), headers, body };
    let n = {
        let mut c = counts.lock().unwrap();
        let e = c.entry(path).or_insert(0);
        *e += 1;
        *e - 1
    };
    seen.lock().unwrap().push(request.clone());
    let reply = handler(&request, n);
    let mut out = stream;
    let head = format!(
        "HTTP/1.1 {} Stub\r\nContent-Type: {}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        reply.status,
        reply.content_type,
        reply.body.len()
    );
    let _ = out.write_all(head.as_bytes());
    let _ = out.write_all(&reply.body);
    let _ = out.flush();
}

struct Capture(Mutex<Vec<String>>);

impl log::Log for Capture {
    fn enabled(&self, _: &log::Metadata) -> bool {
        true
    }

    fn log(&self, record: &log::Record) {
        self.0.lock().unwrap().push(format!("{} {}", record.target(), record.args()));
    }

    fn flush(&self) {}
}

static LOGGER: OnceLock<&'static Capture> = OnceLock::new();

/// Installs a logger recording every message at every level; returns everything logged so far.
pub fn captured_logs() -> Vec<String> {
    let logger = LOGGER.get_or_init(|| {
        let l: &'static Capture = Box::leak(Box::new(Capture(Mutex::new(Vec::new()))));
        let _ = log::set_logger(l);
        log::set_max_level(log::LevelFilter::Trace);
        l
    });
    logger.0.lock().unwrap().clone()
}

/// Independent average precision: for every distinct confidence, re-match the
/// predictions kept at that cut-off from scratch and integrate the interpolated
/// precision over recall.
pub fn oracle_ap(preds: &[BBox], gts: &[BBox], class: RegionClass, iou_thr: f64) -> Option<f64> {
    fn overlap(a: &BBox, b: &BBox) -> f64 {
        let w = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
        let h = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
        let inter = w * h;
        let union = a.w * a.h + b.w * b.h - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }
    let preds: Vec<&BBox> = preds.iter().filter(|b| b.class == class).collect();
    let gts: Vec<&BBox> = gts.iter().filter(|b| b.class == class).collect();
    if gts.is_empty() {
        return None;
    }
    let mut cutoffs: Vec<f64> = preds.iter().map(|b| b.confidence.unwrap()).collect();
    cutoffs.sort_by(|a, b| b.total_cmp(a));
    cutoffs.dedup();
    let mut points = Vec::new();
    for &t in &cutoffs {
        let mut kept: Vec<(usize, &BBox)> =
            preds.iter().copied().enumerate().filter(|(_, b)| b.confidence.unwrap() >= t).collect();
        kept.sort_by(|(i, a), (j, b)| b.confidence.unwrap().total_cmp(&a.confidence.unwrap()).then(i.cmp(j)));
        let mut taken = vec![false; gts.len()];
        let mut tp = 0;
        for (_, p) in &kept {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] || gt.page_id != p.page_id {
                    continue;
                }
                let o = overlap(p, gt);
                if o >= iou_thr && best.is_none_or(|(_, b)| o > b) {
                    best = Some((g, o));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
                tp += 1;
            }
        }
        points.push((tp as f64 / gts.len() as f64, tp as f64 / kept.len() as f64));
    }
    // interpolated precision at recall r: best precision at any recall ≥ r
    let mut recalls: Vec<f64> = points.iter().map(|p| p.0).collect();
    recalls.sort_by(f64::total_cmp);
    recalls.dedup();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for r in recalls {
        let p = points.iter().filter(|q| q.0 >= r).map(|q| q.1).fold(0.0, f64::max);
        ap += (r - prev) * p;
        prev = r;
    }
    Some(ap)
}
