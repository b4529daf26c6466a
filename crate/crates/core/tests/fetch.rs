mod common;

use common::{Reply, Stub};
use diagramma::corpus::{fetch_corpus, CanvasRecord, FetchOptions, FetchOutcome};
use diagramma::retry::RetryPolicy;

fn records(base: &str, n: usize) -> Vec<CanvasRecord> {
    (0..n)
        .map(|i| CanvasRecord {
            manifest_id: "drs_1".into(),
            canvas_uri: format!("https://example.org/canvas/{i}"),
            image_service_base: format!("{base}/iiif/{i}"),
            width_px: 100,
            height_px: 150,
            label: format!("seq. {i}"),
            sequence_index: i,
            robin_category: Some("D".into()),
            year: Some(1902),
            is_blank: false,
        })
        .collect()
}

fn options() -> FetchOptions {
    FetchOptions { max_parallel: 2, retry: RetryPolicy::immediate(3), ..FetchOptions::default() }
}

#[test]
fn downloads_then_skips() {
    let stub = Stub::start(|req, _| Reply::image(req.path.as_bytes()));
    let dir = tempfile::tempdir().unwrap();
    let recs = records(&stub.base, 3);
    let first = fetch_corpus(&recs, dir.path(), &options()).unwrap();
    assert_eq!((first.downloaded(), first.failed()), (3, 0));
    for (i, e) in first.entries.iter().enumerate() {
        assert_eq!(e.path, dir.path().join(format!("D/drs_1/{i}.jpg")));
        let expected = format!("/iiif/{i}/full/full/0/default.jpg");
        assert_eq!(std::fs::read(&e.path).unwrap(), expected.as_bytes());
        assert!(!e.path.with_extension("jpg.part").exists());
    }
    let hits = stub.hits();
    let second = fetch_corpus(&recs, dir.path(), &options()).unwrap();
    assert_eq!((second.downloaded(), second.skipped()), (0, 3));
    assert_eq!(stub.hits(), hits);
}

#[test]
fn retries_transient_errors() {
    let stub = Stub::scripted(vec![Reply::new(500, "x"), Reply::new(500, "x"), Reply::image(b"jpeg")]);
    let dir = tempfile::tempdir().unwrap();
    let report = fetch_corpus(&records(&stub.base, 1), dir.path(), &options()).unwrap();
    assert_eq!(report.entries[0].outcome, FetchOutcome::Downloaded { bytes: 4 });
    assert_eq!(report.entries[0].retries, 2);
}

#[test]
fn failures_are_recorded_not_fatal() {
    let stub =
        Stub::start(|req, _| if req.path.starts_with("/iiif/1/") { Reply::new(404, "") } else { Reply::image(b"ok") });
    let dir = tempfile::tempdir().unwrap();
    let report = fetch_corpus(&records(&stub.base, 3), dir.path(), &options()).unwrap();
    assert_eq!((report.downloaded(), report.failed()), (2, 1));
    assert!(matches!(&report.entries[1].outcome, FetchOutcome::Failed { error } if error.contains("404")));
    assert!(!report.entries[1].path.exists());
}

#[test]
fn manifest_fetch_retries_then_fails_on_404() {
    let stub = Stub::start(|req, n| match (req.path.as_str(), n) {
        ("/m.json", 0) => Reply::new(502, ""),
        ("/m.json", _) => Reply::new(200, "{\"id\":\"m\"}"),
        _ => Reply::new(404, ""),
    });
    let body = diagramma::corpus::fetch_manifest(&stub.url("/m.json"), &RetryPolicy::immediate(3), 5).unwrap();
    assert_eq!(body, b"{\"id\":\"m\"}");
    let err = diagramma::corpus::fetch_manifest(&stub.url("/gone.json"), &RetryPolicy::immediate(3), 5).unwrap_err();
    assert!(err.to_string().contains("HTTP 404"), "{err}");
}
