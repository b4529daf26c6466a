use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde_json::{json, Value};
use tempfile::TempDir;

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name).display().to_string()
}

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_diagramma"));
    cmd.env_remove("RUST_LOG");
    cmd
}

/// Runs with the output root set to `root`.
fn run(root: &Path, args: &[&str]) -> Output {
    bin().arg("--output-root").arg(root).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[track_caller]
fn ok(o: Output) -> String {
    assert_eq!(o.status.code(), Some(0), "stdout:\n{}\nstderr:\n{}", stdout(&o), stderr(&o));
    stdout(&o)
}

fn json_out(o: Output) -> Value {
    serde_json::from_str(&ok(o)).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::create_dir_all(p.parent().unwrap()).unwrap();
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eg_check_reports_a_counter_model() {
    let root = TempDir::new().unwrap();
    let out = ok(run(root.path(), &["eg", "check", &fixture("eq1.eg"), &fixture("eq2.eg"), "--bound", "2"]));
    assert!(out.contains("not equivalent"), "{out}");
    assert!(out.contains("counter-model: domain {a"), "{out}");

    let v =
        json_out(run(root.path(), &["--json", "eg", "check", &fixture("eq1.eg"), &fixture("eq2.eg"), "--bound", "2"]));
    let size = v["result"]["model"]["domain_size"].as_u64().unwrap();
    assert!((1..=2).contains(&size), "{v}");
}

#[test]
fn eg_check_accepts_inline_formulas() {
    let root = TempDir::new().unwrap();
    let out = ok(run(root.path(), &["eg", "check", "¬(P ∧ Q)", "¬P ∨ ¬Q"]));
    assert!(out.contains("equivalent on every structure"), "{out}");
}

#[test]
fn eg_translate_prints_latex() {
    let root = TempDir::new().unwrap();
    let out = ok(run(root.path(), &["eg", "translate", &fixture("eq1.eg"), "--syntax", "latex"]));
    assert_eq!(out.trim(), r"\exists x (Man(x) \land \lnot (Wounded(x) \land Disgraced(x)))");
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let root = TempDir::new().unwrap();
    let missing = root.path().join("absent.eg");
    let o = run(root.path(), &["eg", "check", s(&missing), &fixture("eq2.eg")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: "), "{}", stderr(&o));
    assert!(stderr(&o).contains("absent.eg"));

    let o = run(root.path(), &["--json", "classify", "train", "--features", s(&root.path().join("f.jsonl"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.trim().lines().count(), 1, "{err}");
    let v: Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["exit_code"], 2);
    assert_eq!(v["error"], "io");
    assert!(v["path"].as_str().unwrap().ends_with("f.jsonl"));
}

#[test]
fn usage_errors_exit_1() {
    let o = bin().arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("frobnicate"));

    let o = bin().args(["--json", "frobnicate"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(v["error"], "usage");

    let root = TempDir::new().unwrap();
    let o = run(root.path(), &["classify", "train"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--features"), "{}", stderr(&o));

    let o = run(root.path(), &["score"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(bin().arg("--version").output().unwrap().status.code(), Some(0));
}

#[test]
fn config_precedence_is_defaults_then_file_then_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "run.toml", "seed = 5\n[classifier]\nk = 4\n[eg]\nbound = 2\n");
    let v = json_out(
        bin()
            .args([
                "--json",
                "--show-config",
                "--config",
                s(&cfg),
                "--seed",
                "9",
                "eg",
                "check",
                "P",
                "P",
                "--bound",
                "1",
            ])
            .output()
            .unwrap(),
    );
    assert_eq!(v["seed"], 9, "flag beats file");
    assert_eq!(v["classifier"]["k"], 4, "file beats default");
    assert_eq!(v["eg"]["bound"], 1, "subcommand flag beats file");
    assert_eq!(v["corpus"]["parallel"], 4, "default kept");
    assert_eq!(v["detection"]["iou_threshold"], 0.5);

    let text = ok(bin().args(["--show-config", "--config", s(&cfg)]).output().unwrap());
    assert!(text.contains("seed = 5"), "{text}");
}

#[test]
fn bad_config_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "run.toml", "[classifier]\nfolds = 4\n");
    let o = bin().args(["--show-config", "--config", s(&cfg)]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("folds"), "{}", stderr(&o));

    let cfg = write(dir.path(), "k.toml", "[classifier]\nk = 1\n");
    assert_eq!(bin().args(["--show-config", "--config", s(&cfg)]).output().unwrap().status.code(), Some(1));

    let o = bin().args(["--show-config", "--config", s(&dir.path().join("none.toml"))]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

/// Three well separated classes in four dimensions.
fn features(dir: &Path) -> PathBuf {
    let mut text = String::new();
    for i in 0..36 {
        let label = i % 3;
        let jitter = (i / 3) as f64 * 0.05;
        let mut v = [0.0; 4];
        v[label] = 3.0 + jitter;
        v[3] = jitter;
        text.push_str(&json!({"page_id": format!("p{i}"), "label": label, "vector": v}).to_string());
        text.push('\n');
    }
    write(dir, "features.jsonl", &text)
}

#[test]
fn classifier_pipeline_is_reproducible() {
    let root = TempDir::new().unwrap();
    let data = features(root.path());
    let out = ok(run(root.path(), &["classify", "train", "--features", s(&data), "--epochs", "300"]));
    assert!(out.contains("macro"), "{out}");
    let model = root.path().join("model.json");
    assert!(model.is_file());

    let v =
        json_out(run(root.path(), &["--json", "classify", "predict", "--features", s(&data), "--model", s(&model)]));
    assert_eq!(v["predicted"], 36);
    assert_eq!(v["metrics"]["accuracy"], 1.0);
    let first: Value = serde_json::from_str(
        std::fs::read_to_string(root.path().join("predictions.jsonl")).unwrap().lines().next().unwrap(),
    )
    .unwrap();
    assert_eq!(first["page_id"], "p0");
    assert_eq!(first["label"], 0);

    let cv = |name: &str| {
        ok(run(
            root.path(),
            &["--seed", "11", "classify", "crossval", "--features", s(&data), "--k", "3", "--out", name],
        ));
        std::fs::read(root.path().join(name)).unwrap()
    };
    let (a, b) = (cv("a.json"), cv("b.json"));
    assert_eq!(a, b, "same seed, same report");
    let report: Value = serde_json::from_slice(&a).unwrap();
    assert!(report["metrics"]["macro_f1"].as_f64().unwrap() > 0.95);
}

#[test]
fn outputs_may_not_leave_the_root() {
    let root = TempDir::new().unwrap();
    let data = features(root.path());
    let o = run(root.path(), &["classify", "crossval", "--features", s(&data), "--k", "3", "--out", "../escape.json"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(!root.path().parent().unwrap().join("escape.json").exists());

    let o =
        run(root.path(), &["classify", "crossval", "--features", s(&data), "--k", "3", "--out", "/tmp/escape.json"]);
    assert_eq!(o.status.code(), Some(1));

    let inside = root.path().join("nested/cv.json");
    ok(run(root.path(), &["classify", "crossval", "--features", s(&data), "--k", "3", "--out", s(&inside)]));
    assert!(inside.is_file());
}

#[test]
fn hog_labels_images_by_directory() {
    let root = TempDir::new().unwrap();
    let images = root.path().join("pages");
    for (dir, shade) in [("cover", 40u8), ("text", 128), ("diagram_mixed", 220)] {
        std::fs::create_dir_all(images.join(dir)).unwrap();
        let img =
            image::GrayImage::from_fn(64, 96, |x, y| image::Luma([if (x + y) % 8 < 4 { shade } else { 255 - shade }]));
        img.save(images.join(dir).join("p1.png")).unwrap();
    }
    let v = json_out(run(root.path(), &["--json", "classify", "hog", "--images", s(&images)]));
    assert_eq!(v["images"], 3);
    assert_eq!(v["labelled"], 3);
    let text = std::fs::read_to_string(root.path().join("features.jsonl")).unwrap();
    let labels: Vec<u64> =
        text.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()["label"].as_u64().unwrap()).collect();
    assert_eq!(labels, vec![0, 2, 1], "sorted directory order: cover, diagram_mixed, text");
}

fn manifest(id: &str, labels: &[&str]) -> String {
    let canvases: Vec<Value> = labels
        .iter()
        .enumerate()
        .map(|(c, label)| {
            json!({
                "id": format!("https://iiif.example.org/manifests/{id}/canvas/{c}"),
                "type": "Canvas",
                "label": {"none": [label]},
                "width": 2000, "height": 3000,
                "items": [{"type": "AnnotationPage", "items": [{
                    "type": "Annotation", "motivation": "painting",
                    "body": {"id": "i", "type": "Image",
                             "service": [{"id": format!("https://ids.example.org/iiif/{id}-{c}"), "type": "ImageService2"}]}
                }]}]
            })
        })
        .collect();
    json!({
        "@context": "http://iiif.io/api/presentation/3/context.json",
        "id": format!("https://iiif.example.org/manifests/{id}"),
        "type": "Manifest",
        "metadata": [
            {"label": {"en": ["Date"]}, "value": {"en": ["1885"]}},
            {"label": {"en": ["Series"]}, "value": {"en": ["I. Manuscripts, D. Logic"]}}
        ],
        "items": canvases
    })
    .to_string()
}

#[test]
fn ingest_then_stats() {
    let root = TempDir::new().unwrap();
    let src = TempDir::new().unwrap();
    write(src.path(), "a.json", &manifest("ms-1", &["seq. 1", "[blank]", "seq. 3"]));
    write(src.path(), "b.json", &manifest("ms-2", &["[blank]", "seq. 2"]));
    write(src.path(), "notes.txt", "ignored");

    let v = json_out(run(root.path(), &["--json", "ingest", "--manifests", s(src.path())]));
    assert_eq!(v["manifests"], 2);
    assert_eq!(v["total_pages"], 5);
    assert_eq!(v["blank_removed"], 2);
    assert_eq!(v["retained"], 3);
    let records = root.path().join("corpus/records.jsonl");
    assert_eq!(std::fs::read_to_string(&records).unwrap().lines().count(), 5);

    let out = ok(run(root.path(), &["stats", "--records", s(&records), "--catalogue-size", "10"]));
    assert!(out.contains("items: 10"), "{out}");
    assert!(out.contains("digitized items: 2"), "{out}");
    assert!(root.path().join("stats/stats.csv").is_file());
    assert!(root.path().join("stats/stats.json").is_file());

    let list = write(src.path(), "list.txt", "# local manifests\na.json\nmissing.json\n");
    let o = run(root.path(), &["ingest", "--manifests", s(&list)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.json"));
}

fn boxes(dir: &Path, name: &str, rows: &[Value]) -> PathBuf {
    let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
    write(dir, name, &text)
}

#[test]
fn detect_eval_scores_perfect_predictions() {
    let root = TempDir::new().unwrap();
    let gt = boxes(
        root.path(),
        "gt.jsonl",
        &[
            json!({"page_id": "0", "class": "diagram", "x": 10.0, "y": 10.0, "w": 100.0, "h": 80.0}),
            json!({"page_id": "0", "class": "text_block", "x": 200.0, "y": 10.0, "w": 300.0, "h": 40.0}),
        ],
    );
    let pred = boxes(
        root.path(),
        "pred.jsonl",
        &[
            json!({"page_id": "0", "class": "diagram", "x": 10.0, "y": 10.0, "w": 100.0, "h": 80.0, "confidence": 0.9}),
            json!({"page_id": "0", "class": "text_block", "x": 200.0, "y": 10.0, "w": 300.0, "h": 40.0, "confidence": 0.8}),
            json!({"page_id": "0", "class": "diagram", "x": 900.0, "y": 900.0, "w": 10.0, "h": 10.0, "confidence": 0.1}),
        ],
    );
    let v = json_out(run(root.path(), &["--json", "detect-eval", "--pred", s(&pred), "--gt", s(&gt)]));
    assert_eq!(v["map"], 1.0, "{v}");
    assert!(root.path().join("detection_report.json").is_file());

    // ground truth passed as predictions
    let o = run(root.path(), &["detect-eval", "--pred", s(&gt), "--gt", s(&gt)]);
    assert_eq!(o.status.code(), Some(1));
}

/// Answers every chat request with the same text and counts requests.
fn chat_stub(answer: &'static str) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let mut reader = BufReader::new(stream);
            let mut length = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap_or(0);
                    }
                }
            }
            let mut body = vec![0; length];
            let _ = reader.read_exact(&mut body);
            counter.fetch_add(1, Ordering::SeqCst);
            let reply = json!({"choices": [{"message": {"role": "assistant", "content": answer}}]}).to_string();
            let mut stream = reader.into_inner();
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    (url, hits)
}

#[test]
fn annotate_prompt_score_export() {
    let root = TempDir::new().unwrap();
    let m = write(root.path(), "ms-7.json", &manifest("ms-7", &["seq. 1", "seq. 2"]));
    let det = boxes(
        root.path(),
        "det.jsonl",
        &[
            json!({"page_id": "https://iiif.example.org/manifests/ms-7/canvas/1", "class": "diagram",
                   "x": 100.0, "y": 200.0, "w": 300.0, "h": 400.0, "confidence": 0.97}),
            json!({"page_id": "1", "class": "text_block", "x": 100.0, "y": 700.0, "w": 900.0, "h": 200.0, "confidence": 0.91}),
        ],
    );
    let v = json_out(run(root.path(), &["--json", "annotate", "--detections", s(&det), "--manifest", s(&m)]));
    assert_eq!(v["regions"], 2);
    let page = root.path().join("annotations.jsonld");

    // prompts only, no network
    let v = json_out(run(
        root.path(),
        &["--json", "prompt", "--diagrams", s(&page), "--manifest", s(&m), "--render-only", "--levels", "symbolic"],
    ));
    assert_eq!(v["prompts"], 1, "one diagram region, one level");
    let prompts = std::fs::read_to_string(root.path().join("prompts.jsonl")).unwrap();
    assert!(prompts.contains("100,200,300,400"), "{prompts}");

    let (url, hits) = chat_stub("∃x (Man(x) ∧ ¬(Wounded(x) ∧ Disgraced(x)))");
    let models = write(
        root.path(),
        "models.toml",
        &format!("[[models]]\nname = \"stub-a\"\nendpoint = \"{url}\"\n\n[[models]]\nname = \"stub-b\"\nendpoint = \"{url}\"\n"),
    );
    let v = json_out(run(
        root.path(),
        &["--json", "prompt", "--diagrams", s(&page), "--manifest", s(&m), "--models", s(&models)],
    ));
    assert_eq!(v["records"], 6, "{v}");
    assert_eq!(hits.load(Ordering::SeqCst), 6);
    let session = root.path().join("session.jsonl");

    let v = json_out(run(
        root.path(),
        &["--json", "score", "--session", s(&session), "--auto-symbolic", "--gt", &fixture("eq1.eg")],
    ));
    assert_eq!(v["unscored"], 4, "only symbolic answers are auto-scored");
    let scored = std::fs::read_to_string(root.path().join("session_scored.jsonl")).unwrap();
    let symbolic: Vec<Value> =
        scored.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()).filter(|r| r["score"].is_number()).collect();
    assert_eq!(symbolic.len(), 2);
    assert!(symbolic.iter().all(|r| r["score"] == 2));

    let v = json_out(run(
        root.path(),
        &[
            "--json",
            "annotate",
            "--detections",
            s(&det),
            "--manifest",
            s(&m),
            "--session",
            s(&session),
            "--embed",
            "manifest.json",
        ],
    ));
    assert_eq!(v["interpretations"], 6);
    let embedded: Value = serde_json::from_slice(&std::fs::read(root.path().join("manifest.json")).unwrap()).unwrap();
    assert!(embedded["items"][1]["annotations"].is_array());

    let v = json_out(run(root.path(), &["--json", "export-rdf", "--annotations", s(&page), "--format", "ntriples"]));
    let nt = std::fs::read_to_string(root.path().join("annotations.nt")).unwrap();
    assert_eq!(nt.lines().count() as u64, v["triples"].as_u64().unwrap());
    ok(run(root.path(), &["export-rdf", "--annotations", s(&page)]));
    let ttl = std::fs::read_to_string(root.path().join("annotations.ttl")).unwrap();
    assert!(ttl.contains("@prefix"), "{ttl}");
}

#[test]
fn unreachable_models_exit_2() {
    let root = TempDir::new().unwrap();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let diagrams = write(
        root.path(),
        "diagrams.jsonl",
        &format!(
            "{}\n",
            json!({"annotation_id": "https://example.org/anno/d1", "image": {"kind": "url", "url": "https://ids.example.org/iiif/x/full/max/0/default.jpg"}})
        ),
    );
    let models = write(
        root.path(),
        "models.toml",
        &format!(
            "[[models]]\nname = \"down\"\nendpoint = \"http://127.0.0.1:{port}/v1/chat/completions\"\ntimeout_secs = 2\n\
             [models.retry]\nmax_attempts = 1\nbase_delay_ms = 0\nfactor = 1.0\njitter = false\n"
        ),
    );
    let o =
        run(root.path(), &["prompt", "--diagrams", s(&diagrams), "--models", s(&models), "--levels", "morphological"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(root.path().join("session.jsonl").is_file(), "failed records are kept");
}

#[test]
fn score_sheet_aggregates() {
    let root = TempDir::new().unwrap();
    let out = ok(run(root.path(), &["score", "--sheet", &fixture("model_scores.csv")]));
    let gpt = out.lines().find(|l| l.starts_with("GPT-4o")).unwrap();
    let cells: Vec<&str> = gpt.split_whitespace().collect();
    assert_eq!(&cells[1..], ["7", "9", "9", "25/30"]);
}
