mod common;

use common::{captured_logs, Reply, Stub};
use diagramma::retry::RetryPolicy;
use diagramma::vlm::{
    build_prompt, query_vlm, resolve_models, run_session, DiagramRef, ImageMode, ImageRef, ModelConfig, ResolvedModel,
    SemioticLevel, VlmError,
};

fn model(name: &str, endpoint: String) -> ResolvedModel {
    let mut c = ModelConfig::new(name, &endpoint);
    c.retry = RetryPolicy::immediate(3);
    ResolvedModel::new(c, None)
}

fn diagram(n: usize) -> DiagramRef {
    DiagramRef {
        annotation_id: format!("https://example.org/anno/2/{n}"),
        image: ImageRef::Url { url: format!("https://ids.example.org/iiif/{n}/full/full/0/default.jpg") },
    }
}

#[test]
fn echo_is_verbatim() {
    let text = "  Two ovals;\n\tone line.  \n";
    let stub = Stub::scripted(vec![Reply::chat(text)]);
    let rec = query_vlm(
        &model("m", stub.url("/v1/chat/completions")),
        &build_prompt(SemioticLevel::Morphological, &diagram(0)),
    )
    .unwrap();
    assert_eq!(rec.response_text, text);
    assert_eq!(rec.retries, 0);
    assert_eq!(rec.model_name, "m");
    let req = &stub.requests.lock().unwrap()[0];
    assert_eq!(req.method, "POST");
    let body: serde_json::Value = serde_json::from_slice(&req.body).unwrap();
    assert_eq!(body["messages"][0]["content"][0]["text"], rec.prompt.rendered_text);
    assert_eq!(
        body["messages"][0]["content"][1]["image_url"]["url"],
        "https://ids.example.org/iiif/0/full/full/0/default.jpg"
    );
}

#[test]
fn two_503_then_success() {
    let stub = Stub::scripted(vec![Reply::new(503, "busy"), Reply::new(503, "busy"), Reply::chat("ok")]);
    let rec = query_vlm(&model("m", stub.url("/v1")), &build_prompt(SemioticLevel::Symbolic, &diagram(0))).unwrap();
    assert_eq!((rec.retries, rec.response_text.as_str()), (2, "ok"));
    assert_eq!(stub.hits(), 3);
}

#[test]
fn exhausted_retries_keep_attempt_log() {
    let stub = Stub::scripted(vec![Reply::new(500, "down")]);
    match query_vlm(&model("m", stub.url("/v1")), &build_prompt(SemioticLevel::Symbolic, &diagram(0))) {
        Err(VlmError::Transport { attempts }) => assert_eq!(attempts.len(), 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unauthorized_is_a_credential_error_without_the_secret() {
    let secret = "sk-live-DO-NOT-LEAK-0123456789";
    let var = "DIAGRAMMA_TEST_KEY_UNAUTHORIZED";
    std::env::set_var(var, secret);
    captured_logs();
    let stub = Stub::scripted(vec![Reply::new(401, r#"{"error":"bad key"}"#)]);
    let mut cfg = ModelConfig::new("m", &stub.url("/v1"));
    cfg.api_key_env = Some(var.into());
    cfg.retry = RetryPolicy::immediate(3);
    let models = resolve_models(&[cfg]).unwrap();
    let err = query_vlm(&models[0], &build_prompt(SemioticLevel::Indexical, &diagram(0))).unwrap_err();
    assert!(matches!(err, VlmError::Credential { status: 401, .. }));
    assert_eq!(stub.hits(), 1, "credential errors are not retried");
    assert_eq!(stub.requests.lock().unwrap()[0].header("authorization"), Some(format!("Bearer {secret}").as_str()));
    assert!(!err.to_string().contains(secret));
    assert!(!format!("{err:?}").contains(secret));
    assert!(!format!("{:?}", models[0]).contains(secret));
    assert!(captured_logs().iter().all(|l| !l.contains(secret)));
}

#[test]
fn non_json_is_a_protocol_error() {
    let stub = Stub::scripted(vec![Reply::new(200, "<html>gateway</html>")]);
    match query_vlm(&model("m", stub.url("/v1")), &build_prompt(SemioticLevel::Symbolic, &diagram(0))) {
        Err(VlmError::Protocol { excerpt, .. }) => assert_eq!(excerpt, "<html>gateway</html>"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn inline_mode_sends_data_url() {
    let images = Stub::scripted(vec![Reply::image(b"\xff\xd8jpeg")]);
    let chat = Stub::scripted(vec![Reply::chat("fine")]);
    let mut cfg = ModelConfig::new("m", &chat.url("/v1"));
    cfg.image_mode = ImageMode::Inline;
    cfg.retry = RetryPolicy::immediate(2);
    let m = ResolvedModel::new(cfg, None);
    let d = DiagramRef {
        annotation_id: "https://example.org/a".into(),
        image: ImageRef::Url { url: images.url("/img.jpg") },
    };
    query_vlm(&m, &build_prompt(SemioticLevel::Morphological, &d)).unwrap();
    let body: serde_json::Value = serde_json::from_slice(&chat.requests.lock().unwrap()[0].body).unwrap();
    assert_eq!(body["messages"][0]["content"][1]["image_url"]["url"], "data:image/jpeg;base64,/9hqcGVn");
}

#[test]
fn session_orders_by_model_diagram_level() {
    let stub = Stub::start(|req, _| {
        let body: serde_json::Value = serde_json::from_slice(&req.body).unwrap();
        Reply::chat(&format!("{} says hi", body["model"].as_str().unwrap()))
    });
    let models = vec![model("zeta", stub.url("/a")), model("alpha", stub.url("/b"))];
    let diagrams: Vec<_> = (0..2).collect::<Vec<_>>().into_iter().map(diagram).collect();
    let recs = run_session(&diagrams, &[SemioticLevel::Symbolic], &models, 4).unwrap();
    let keys: Vec<(String, String)> =
        recs.iter().map(|r| (r.model_name.clone(), r.prompt.diagram.annotation_id.clone())).collect();
    assert_eq!(keys[0].0, "zeta");
    assert_eq!(keys[1], ("zeta".to_string(), diagram(1).annotation_id));
    assert_eq!(keys[2].0, "alpha");
    assert_eq!(recs[3].response_text, "alpha says hi");
}

#[test]
fn one_endpoint_down() {
    let up = Stub::scripted(vec![Reply::chat("fine")]);
    let down = Stub::scripted(vec![Reply::new(503, "")]);
    let models = vec![model("down", down.url("/v1")), model("up", up.url("/v1"))];
    let recs = run_session(&[diagram(0)], &SemioticLevel::ALL, &models, 3).unwrap();
    assert_eq!(recs.len(), 6);
    assert!(recs[..3].iter().all(|r| r.failed() && r.response_text.is_empty()));
    assert!(recs[3..].iter().all(|r| !r.failed() && r.response_text == "fine"));
}

#[test]
fn rate_limit_spaces_requests() {
    let stub = Stub::scripted(vec![Reply::chat("x")]);
    let mut cfg = ModelConfig::new("m", &stub.url("/v1"));
    cfg.rate_limit_per_minute = Some(600);
    let m = ResolvedModel::new(cfg, None);
    let started = std::time::Instant::now();
    let recs = run_session(&[diagram(0)], &SemioticLevel::ALL, &[m], 3).unwrap();
    assert_eq!(recs.len(), 3);
    assert!(started.elapsed() >= std::time::Duration::from_millis(200));
}
