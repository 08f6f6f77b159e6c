mod common;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use common::data_path;
use degentweb::quality::TokenCounter;
use degentweb::scorer::{
    mock_score, LabelHint, MockProfile, RemoteConfig, RemoteScorer, ScoreRequest, Scorer, ScorerBackend, ScorerError,
};
use serde_json::{json, Value};

/// Status and JSON body for one request; `None` drops the connection
/// without answering.
type Handler = dyn Fn(&str, &str, Option<Value>) -> Option<(u16, String)> + Send + Sync;

/// Minimal scoring service on an ephemeral port. Each request is answered
/// on its own thread so concurrent batches can finish out of order.
struct FakeService {
    server: Arc<tiny_http::Server>,
    url: String,
    log: Arc<Mutex<Vec<(String, String, Option<Value>)>>>,
    acceptor: Option<thread::JoinHandle<()>>,
}

impl FakeService {
    fn start(handler: impl Fn(&str, &str, Option<Value>) -> Option<(u16, String)> + Send + Sync + 'static) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let url = format!("http://{}", server.server_addr().to_ip().unwrap());
        let log = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let (srv, lg) = (server.clone(), log.clone());
        let acceptor = thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                let (handler, lg) = (handler.clone(), lg.clone());
                thread::spawn(move || {
                    let mut body = String::new();
                    req.as_reader().read_to_string(&mut body).unwrap();
                    let value: Option<Value> = serde_json::from_str(&body).ok();
                    let method = req.method().to_string();
                    let path = req.url().to_string();
                    lg.lock().unwrap().push((method.clone(), path.clone(), value.clone()));
                    match handler(&method, &path, value) {
                        Some((status, body)) => {
                            let resp = tiny_http::Response::from_string(body).with_status_code(status).with_header(
                                tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap(),
                            );
                            let _ = req.respond(resp);
                        }
                        None => drop(req),
                    }
                });
            }
        });
        FakeService { server, url, log, acceptor: Some(acceptor) }
    }

    fn requests(&self) -> Vec<(String, String, Option<Value>)> {
        self.log.lock().unwrap().clone()
    }
}

impl Drop for FakeService {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

fn texts_of(body: &Option<Value>) -> Vec<String> {
    body.as_ref().unwrap()["texts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t.as_str().unwrap().to_string())
        .collect()
}

/// A score that identifies its text, so misordering cannot go unnoticed.
fn tag_score(t: &str) -> f64 {
    t.trim_start_matches("t-").parse::<f64>().unwrap() / 1000.0
}

fn fast_config(url: &str) -> RemoteConfig {
    RemoteConfig { batch_size: 8, concurrency: 4, max_attempts: 3, backoff_ms: 1, timeout_s: 10, ..RemoteConfig::new(url) }
}

fn numbered(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("t-{i}")).collect()
}

#[test]
fn out_of_order_batches_are_stitched_by_position() {
    let svc = FakeService::start(|_, _, body| {
        let texts = texts_of(&body);
        // Earlier batches answer later.
        let first: u64 = texts[0].trim_start_matches("t-").parse().unwrap();
        thread::sleep(Duration::from_millis(60u64.saturating_sub(first / 2)));
        let scores: Vec<f64> = texts.iter().map(|t| tag_score(t)).collect();
        Some((200, json!({ "scores": scores }).to_string()))
    });
    let scorer = RemoteScorer::new(fast_config(&svc.url)).unwrap();
    let texts = numbered(103);
    let scores = scorer.score(&texts).unwrap();
    assert_eq!(scores, texts.iter().map(|t| tag_score(t)).collect::<Vec<_>>());
    let reqs = svc.requests();
    assert_eq!(reqs.len(), 13);
    assert!(reqs.iter().all(|(m, p, b)| m == "POST" && p == "/score" && texts_of(b).len() <= 8));
}

#[test]
fn transient_failures_are_retried() {
    let failures: Arc<Mutex<HashMap<String, u32>>> = Arc::new(Mutex::new(HashMap::new()));
    let f = failures.clone();
    let svc = FakeService::start(move |_, _, body| {
        let texts = texts_of(&body);
        let mut seen = f.lock().unwrap();
        let n = seen.entry(texts[0].clone()).or_insert(0);
        *n += 1;
        match (texts[0].as_str(), *n) {
            ("t-16", 1) => Some((503, "busy".into())),
            ("t-16", 2) => None,
            ("t-40", 1) => Some((200, "{not json".into())),
            _ => Some((200, json!({ "scores": texts.iter().map(|t| tag_score(t)).collect::<Vec<_>>() }).to_string())),
        }
    });
    let scorer = RemoteScorer::new(fast_config(&svc.url)).unwrap();
    let texts = numbered(50);
    assert_eq!(scorer.score(&texts).unwrap(), texts.iter().map(|t| tag_score(t)).collect::<Vec<_>>());
    let attempts = failures.lock().unwrap().clone();
    assert_eq!(attempts["t-16"], 3);
    assert_eq!(attempts["t-40"], 2);
    assert_eq!(attempts["t-0"], 1);
}

#[test]
fn persistent_failure_names_the_batch() {
    let svc = FakeService::start(|_, _, body| {
        let texts = texts_of(&body);
        if texts.contains(&"t-20".to_string()) {
            Some((500, "boom".into()))
        } else {
            Some((200, json!({ "scores": texts.iter().map(|t| tag_score(t)).collect::<Vec<_>>() }).to_string()))
        }
    });
    let scorer = RemoteScorer::new(fast_config(&svc.url)).unwrap();
    match scorer.score(&numbered(40)) {
        Err(ScorerError::Batch { first, last, attempts, message }) => {
            assert_eq!((first, last, attempts), (16, 23, 3));
            assert!(message.contains("500"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    let tries = svc.requests().iter().filter(|(_, _, b)| texts_of(b)[0] == "t-16").count();
    assert_eq!(tries, 3);
}

#[test]
fn wrong_length_responses_are_errors() {
    let svc = FakeService::start(|_, _, _| Some((200, json!({ "scores": [0.5] }).to_string())));
    let scorer = RemoteScorer::new(RemoteConfig { max_attempts: 2, ..fast_config(&svc.url) }).unwrap();
    match scorer.score(&numbered(3)) {
        Err(ScorerError::Batch { first: 0, last: 2, attempts: 2, message }) => {
            assert!(message.contains("expected 3"), "{message}")
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn token_counting_and_health() {
    let svc = FakeService::start(|method, path, body| match (method, path) {
        ("POST", "/count_tokens") => {
            let counts: Vec<usize> = texts_of(&body).iter().map(|t| t.split_whitespace().count()).collect();
            Some((200, json!({ "counts": counts }).to_string()))
        }
        ("GET", "/health") => Some((200, json!({ "status": "ok", "model": "fake" }).to_string())),
        _ => Some((404, "{}".into())),
    });
    let scorer = RemoteScorer::new(fast_config(&format!("{}/", svc.url))).unwrap();
    let texts: Vec<String> = (0..30).map(|i| vec!["w"; i].join(" ")).collect();
    assert_eq!(scorer.count_tokens_batch(&texts).unwrap(), (0..30u64).collect::<Vec<_>>());
    assert_eq!(scorer.count_tokens("one two three").unwrap(), 3);
    assert_eq!(scorer.count_tokens("").unwrap(), 0);
    let h = scorer.health().unwrap();
    assert_eq!((h.status.as_str(), h.model.as_str()), ("ok", "fake"));
}

#[test]
fn unreachable_service_is_unavailable() {
    let url = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}", l.local_addr().unwrap())
    };
    let scorer = RemoteScorer::new(fast_config(&url)).unwrap();
    assert!(matches!(scorer.health(), Err(ScorerError::Unavailable(_))));
    assert!(matches!(scorer.score(&numbered(2)), Err(ScorerError::Batch { attempts: 3, .. })));
}

#[test]
fn recorded_exchanges_replay_exactly() {
    let fixture: Value = serde_json::from_str(&std::fs::read_to_string(data_path("scorer_protocol.json")).unwrap()).unwrap();
    let exchanges = fixture["exchanges"].as_array().unwrap().clone();
    let table = exchanges.clone();
    let svc = FakeService::start(move |method, path, body| {
        table
            .iter()
            .find(|x| x["method"] == method && x["path"] == path && x["request"] == body.clone().unwrap_or(Value::Null))
            .map(|x| (200, x["response"].to_string()))
            .or(Some((400, "{\"error\":\"unrecorded request\"}".into())))
    });
    let scorer = RemoteScorer::new(RemoteConfig::new(svc.url.clone())).unwrap();
    for x in &exchanges {
        let texts = || -> Vec<String> { serde_json::from_value(x["request"]["texts"].clone()).unwrap() };
        match x["path"].as_str().unwrap() {
            "/score" => {
                let got = scorer.score(&texts()).unwrap();
                assert_eq!(json!({ "scores": got }), x["response"]);
                // The typed request serializes to the recorded body.
                assert_eq!(serde_json::to_value(ScoreRequest { texts: texts() }).unwrap(), x["request"]);
            }
            "/count_tokens" => {
                let got = scorer.count_tokens_batch(&texts()).unwrap();
                assert_eq!(json!({ "counts": got }), x["response"]);
            }
            "/health" => assert_eq!(serde_json::to_value(scorer.health().unwrap()).unwrap(), x["response"]),
            other => panic!("unknown path {other}"),
        }
    }
    assert_eq!(svc.requests().len(), exchanges.len());
}

#[test]
fn remote_backend_from_config() {
    let svc = FakeService::start(|_, _, body| {
        Some((200, json!({ "scores": texts_of(&body).iter().map(|_| 0.5).collect::<Vec<_>>() }).to_string()))
    });
    let cfg: ScorerBackend = serde_json::from_value(json!({ "kind": "remote", "url": svc.url, "batch_size": 2 })).unwrap();
    let scorer = cfg.build().unwrap();
    assert_eq!(scorer.score(&numbered(5)).unwrap(), [0.5; 5]);
    assert_eq!(svc.requests().len(), 3);
}

#[test]
fn mock_page_accuracy_matches_its_calibration() {
    const DRAWS: usize = 10_000;
    const TOLERANCE: f64 = 0.015;
    let p = MockProfile::default();
    let threshold = (p.human_mean + p.llm_mean) / 2.0;
    let correct = (0..DRAWS)
        .filter(|i| {
            let label = if i % 2 == 0 { LabelHint::Human } else { LabelHint::Llm };
            let s = mock_score(&format!("page {i}"), 3, &p, Some(label));
            (s < threshold) == (label == LabelHint::Llm)
        })
        .count();
    let acc = correct as f64 / DRAWS as f64;
    assert!((acc - 0.93).abs() <= TOLERANCE, "{acc}");
}
