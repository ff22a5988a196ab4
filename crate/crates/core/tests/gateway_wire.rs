//! Contract tests for the HTTP profile protocol against an in-process server.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use tiny_http::{Header, Response, Server};
use varsearch::gateway::*;
use varsearch::template::{bundled_template, sample_variation};

struct Mock {
    url: String,
    seen: Arc<Mutex<Vec<(String, Option<String>, Value)>>>,
    hits: Arc<AtomicUsize>,
}

/// `reply(path, hit_number)` returns (status, version header, body).
fn serve(reply: impl Fn(&str, usize) -> (u16, Option<&'static str>, Value) + Send + 'static) -> Mock {
    let server = Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let hits = Arc::new(AtomicUsize::new(0));
    let (seen2, hits2) = (seen.clone(), hits.clone());
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let n = hits2.fetch_add(1, Ordering::SeqCst);
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            let auth = req
                .headers()
                .iter()
                .find(|h| h.field.equiv("Authorization"))
                .map(|h| h.value.to_string());
            let parsed = serde_json::from_str(&body).unwrap_or(Value::Null);
            seen2.lock().unwrap().push((req.url().to_string(), auth, parsed));
            let (status, version, out) = reply(req.url(), n);
            let mut resp = Response::from_string(out.to_string()).with_status_code(status);
            if let Some(v) = version {
                resp.add_header(Header::from_bytes(PROTOCOL_HEADER, v).unwrap());
            }
            let _ = req.respond(resp);
        }
    });
    Mock { url, seen, hits }
}

fn info() -> Value {
    json!({"model_id": "tiny", "layer_count": 32, "hidden_dim": 2, "embedding_dim": 3, "vocab_size": 100})
}

fn profile(topk: Vec<f64>) -> Value {
    json!({
        "model_id": "tiny",
        "layer_index": 21,
        "text": "1 + 1 = 2\n#### 2",
        "tokens": [{"lp": topk[0], "ent": 0.3, "topk": topk}],
        "hidden_mean": [0.5, -1.0],
        "input_embedding_mean": [0.1, 0.2, 0.3],
        "truncated": false
    })
}

fn good_topk(k: usize) -> Vec<f64> {
    (0..k).map(|i| -0.1 - i as f64).collect()
}

fn client(url: &str) -> HttpGateway {
    let mut cfg = HttpConfig::new(url);
    cfg.backoff = Duration::from_millis(1);
    cfg.token = Some("secret".into());
    HttpGateway::new(cfg)
}

fn with_query<R>(f: impl FnOnce(Query) -> R) -> R {
    let t = bundled_template("peel_saute").unwrap();
    let v = sample_variation(&t, 0).unwrap();
    f(Query { prompt: "Question: x\nAnswer:", template: &t, variation: &v })
}

#[test]
fn profile_round_trip_over_http() {
    let mock = serve(|path, _| match path {
        "/v1/info" => (200, Some(PROTOCOL_VERSION), info()),
        _ => (200, Some(PROTOCOL_VERSION), profile(good_topk(DEFAULT_TOPK))),
    });
    let gw = client(&mock.url);
    let i = gw.info().unwrap();
    assert_eq!(i.layer_index(DEFAULT_LAYER_FRACTION), 21);
    let p = with_query(|q| gw.profile(&q, &GenerationParams::default())).unwrap();
    assert_eq!(p.text, "1 + 1 = 2\n#### 2");
    assert_eq!(p.hidden_mean, vec![0.5, -1.0]);
    assert_eq!(extract_answer(&p.text), Some(2.0));
    let seen = mock.seen.lock().unwrap();
    let (path, auth, body) = seen.last().unwrap();
    assert_eq!(path, "/v1/profile");
    assert_eq!(auth.as_deref(), Some("Bearer secret"));
    assert_eq!(body["prompt"], "Question: x\nAnswer:");
    assert_eq!(body["topk"], 50);
    assert!((body["layer_fraction"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn version_mismatch_is_an_error() {
    let mock = serve(|_, _| (200, Some("0"), info()));
    match client(&mock.url).info() {
        Err(GatewayError::VersionMismatch { found, .. }) => assert_eq!(found, "0"),
        other => panic!("{other:?}"),
    }
    let mock = serve(|_, _| (200, None, info()));
    assert!(matches!(client(&mock.url).info(), Err(GatewayError::VersionMismatch { .. })));
}

#[test]
fn transient_failures_are_retried_three_times() {
    let mock = serve(|_, n| {
        if n < 2 {
            (503, Some(PROTOCOL_VERSION), json!({"error": "busy"}))
        } else {
            (200, Some(PROTOCOL_VERSION), info())
        }
    });
    assert_eq!(client(&mock.url).info().unwrap().model_id, "tiny");
    assert_eq!(mock.hits.load(Ordering::SeqCst), 3);

    let mock = serve(|_, _| (503, Some(PROTOCOL_VERSION), json!({})));
    assert!(matches!(client(&mock.url).info(), Err(GatewayError::Status { status: 503, .. })));
    assert_eq!(mock.hits.load(Ordering::SeqCst), 3);

    let mock = serve(|_, _| (400, Some(PROTOCOL_VERSION), json!({})));
    assert!(client(&mock.url).info().is_err());
    assert_eq!(mock.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn unreachable_backend_is_a_transport_error() {
    let mut cfg = HttpConfig::new("http://127.0.0.1:1");
    cfg.backoff = Duration::from_millis(1);
    let err = HttpGateway::new(cfg).info().unwrap_err();
    assert!(matches!(err, GatewayError::Transport(_)), "{err:?}");
}

#[test]
fn invalid_profiles_are_rejected() {
    let mut unsorted = good_topk(DEFAULT_TOPK);
    unsorted.swap(0, 1);
    let mock = serve(move |path, _| match path {
        "/v1/info" => (200, Some(PROTOCOL_VERSION), info()),
        _ => (200, Some(PROTOCOL_VERSION), profile(unsorted.clone())),
    });
    let gw = client(&mock.url);
    let err = with_query(|q| gw.profile(&q, &GenerationParams::default())).unwrap_err();
    assert!(matches!(err, GatewayError::InvalidProfile(_)), "{err:?}");

    let mock = serve(|path, _| match path {
        "/v1/info" => (200, Some(PROTOCOL_VERSION), info()),
        _ => (200, Some(PROTOCOL_VERSION), profile(good_topk(10))),
    });
    let gw = client(&mock.url);
    assert!(with_query(|q| gw.profile(&q, &GenerationParams::default())).is_err());

    let mock = serve(|_, _| (200, Some(PROTOCOL_VERSION), json!({"model_id": 3})));
    assert!(matches!(client(&mock.url).info(), Err(GatewayError::Malformed(_))));
}

#[test]
fn empty_prompt_never_reaches_the_wire() {
    let mock = serve(|_, _| (200, Some(PROTOCOL_VERSION), info()));
    let gw = client(&mock.url);
    let t = bundled_template("peel_saute").unwrap();
    let v = sample_variation(&t, 0).unwrap();
    let q = Query { prompt: "", template: &t, variation: &v };
    assert_eq!(gw.profile(&q, &GenerationParams::default()), Err(GatewayError::EmptyPrompt));
    assert_eq!(mock.hits.load(Ordering::SeqCst), 0);
}

#[test]
fn embed_requests_zero_tokens() {
    let mock = serve(|path, _| match path {
        "/v1/info" => (200, Some(PROTOCOL_VERSION), info()),
        _ => (
            200,
            Some(PROTOCOL_VERSION),
            json!({"model_id": "tiny", "layer_index": 21, "text": "", "tokens": [],
                   "hidden_mean": [], "input_embedding_mean": [1.0, 2.0, 3.0], "truncated": false}),
        ),
    });
    let gw = client(&mock.url);
    let e = with_query(|q| gw.embed(&q, &GenerationParams::default())).unwrap();
    assert_eq!(e, vec![1.0, 2.0, 3.0]);
    assert_eq!(mock.seen.lock().unwrap().last().unwrap().2["max_tokens"], 0);
}
