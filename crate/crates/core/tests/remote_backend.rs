use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use latfuse_core::lm::{
    train_ngram, LmBackend, LmError, NGramModel, RemoteBackend, RemoteConfig, ScoreRequest, ScoreResponse,
    SCORE_PATH,
};
use latfuse_core::tokenization::Tokenizer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

type Handler = dyn Fn(&ScoreRequest) -> (u16, String) + Send + Sync;

struct TestServer {
    url: String,
    requests: Arc<AtomicUsize>,
}

/// Serves `handler` on an ephemeral port until the process exits.
fn serve(handler: Arc<Handler>) -> TestServer {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&requests);
    thread::spawn(move || {
        for mut request in server.incoming_requests() {
            counter.fetch_add(1, Ordering::SeqCst);
            let mut body = String::new();
            let _ = request.as_reader().read_to_string(&mut body);
            let (status, text) = if request.url() != SCORE_PATH {
                (404, json!({"error": "not found"}).to_string())
            } else {
                match serde_json::from_str::<ScoreRequest>(&body) {
                    Ok(req) => handler(&req),
                    Err(e) => (400, json!({"error": e.to_string()}).to_string()),
                }
            };
            let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
            let _ = request.respond(
                tiny_http::Response::from_string(text)
                    .with_status_code(status)
                    .with_header(header),
            );
        }
    });
    TestServer { url, requests }
}

fn model() -> NGramModel {
    let tok = Tokenizer::new(
        ["▁the", "▁cat", "▁sat", "▁on", "▁mat", "s", "▁a"].iter().map(|s| s.to_string()).collect(),
        "<unk>",
        "▁",
    )
    .unwrap();
    train_ngram(
        &["the cat sat on the mat", "a cat sat", "the cats sat on a mat"],
        3,
        0.1,
        tok,
    )
    .unwrap()
}

fn scoring_server(model: Arc<NGramModel>, max_batch: usize) -> TestServer {
    serve(Arc::new(move |req: &ScoreRequest| {
        if req.suffixes.is_empty() {
            return (400, json!({"error": "suffixes must be non-empty"}).to_string());
        }
        if req.suffixes.len() > max_batch {
            return (413, json!({"error": "batch too large"}).to_string());
        }
        let resp = model.score_suffixes(req).unwrap();
        (200, serde_json::to_string(&resp).unwrap())
    }))
}

fn client(url: &str) -> RemoteBackend {
    RemoteBackend::new(RemoteConfig::new(url)).unwrap()
}

fn random_text<R: Rng>(rng: &mut R) -> String {
    const WORDS: [&str; 9] = ["the", "cat", "cats", "sat", "on", "a", "mat", "dog", "Zebra!"];
    let n = rng.gen_range(0..6);
    (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

#[test]
fn remote_matches_in_process_scores() {
    let model = Arc::new(model());
    let server = scoring_server(Arc::clone(&model), 1024);
    let remote = client(&server.url);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let n = rng.gen_range(1..5);
        let req = ScoreRequest::new(random_text(&mut rng), (0..n).map(|_| random_text(&mut rng)).collect());
        let local = model.score_suffixes(&req).unwrap();
        let got = remote.score_suffixes(&req).unwrap();
        assert_eq!(got.token_counts, local.token_counts);
        for (a, b) in got.log_probs.iter().zip(&local.log_probs) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn empty_batch_never_reaches_the_server() {
    let server = scoring_server(Arc::new(model()), 16);
    let err = client(&server.url).score_suffixes(&ScoreRequest::new("the", vec![])).unwrap_err();
    assert!(matches!(err, LmError::Validation(_)));
    assert_eq!(server.requests.load(Ordering::SeqCst), 0);
}

#[test]
fn large_batches_are_chunked() {
    let model = Arc::new(model());
    let server = scoring_server(Arc::clone(&model), 4);
    let mut cfg = RemoteConfig::new(&server.url);
    cfg.max_batch = 4;
    let remote = RemoteBackend::new(cfg).unwrap();
    let suffixes: Vec<String> = (0..10).map(|i| ["the cat", "a mat", "sat"][i % 3].to_string()).collect();
    let req = ScoreRequest::new("on", suffixes);
    let got = remote.score_suffixes(&req).unwrap();
    assert_eq!(got, model.score_suffixes(&req).unwrap());
    assert_eq!(server.requests.load(Ordering::SeqCst), 3);
}

#[test]
fn oversized_batch_surfaces_413() {
    let server = scoring_server(Arc::new(model()), 2);
    let req = ScoreRequest::new("", vec!["a".into(), "b".into(), "c".into()]);
    match client(&server.url).score_suffixes(&req) {
        Err(LmError::Server { status: 413, message }) => assert_eq!(message, "batch too large"),
        other => panic!("unexpected {other:?}"),
    }
    // 4xx is not retried.
    assert_eq!(server.requests.load(Ordering::SeqCst), 1);
}

#[test]
fn shape_mismatch_is_rejected() {
    let server = serve(Arc::new(|req: &ScoreRequest| {
        let n = req.suffixes.len() + 1;
        let body = ScoreResponse {
            log_probs: vec![-1.0; n],
            token_counts: vec![1; n],
        };
        (200, serde_json::to_string(&body).unwrap())
    }));
    let err = client(&server.url)
        .score_suffixes(&ScoreRequest::new("", vec!["a".into()]))
        .unwrap_err();
    assert_eq!(err, LmError::ShapeMismatch { expected: 1, found: 2 });
}

#[test]
fn positive_or_garbage_scores_are_malformed() {
    let server = serve(Arc::new(|_: &ScoreRequest| {
        (200, r#"{"log_probs":[0.5],"token_counts":[1]}"#.to_string())
    }));
    let err = client(&server.url)
        .score_suffixes(&ScoreRequest::new("", vec!["a".into()]))
        .unwrap_err();
    assert!(matches!(err, LmError::Malformed(_)));

    let server = serve(Arc::new(|_: &ScoreRequest| (200, "not json".to_string())));
    let err = client(&server.url)
        .score_suffixes(&ScoreRequest::new("", vec!["a".into()]))
        .unwrap_err();
    assert!(matches!(err, LmError::Malformed(_)));
}

#[test]
fn server_errors_are_retried_then_reported() {
    let calls = Arc::new(AtomicUsize::new(0));
    let seen = Arc::clone(&calls);
    let server = serve(Arc::new(move |req: &ScoreRequest| {
        if seen.fetch_add(1, Ordering::SeqCst) == 0 {
            (503, json!({"error": "warming up"}).to_string())
        } else {
            let n = req.suffixes.len();
            (200, json!({"log_probs": vec![-2.0; n], "token_counts": vec![1; n]}).to_string())
        }
    }));
    let got = client(&server.url)
        .score_suffixes(&ScoreRequest::new("", vec!["a".into()]))
        .unwrap();
    assert_eq!(got.log_probs, vec![-2.0]);
    assert_eq!(server.requests.load(Ordering::SeqCst), 2);

    let server = serve(Arc::new(|_: &ScoreRequest| (500, json!({"error": "boom"}).to_string())));
    let mut cfg = RemoteConfig::new(&server.url);
    cfg.retries = 2;
    let err = RemoteBackend::new(cfg)
        .unwrap()
        .score_suffixes(&ScoreRequest::new("", vec!["a".into()]))
        .unwrap_err();
    assert_eq!(
        err,
        LmError::Server {
            status: 500,
            message: "boom".into()
        }
    );
    assert_eq!(server.requests.load(Ordering::SeqCst), 3);
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let mut cfg = RemoteConfig::new(format!("http://{addr}"));
    cfg.retries = 0;
    let err = RemoteBackend::new(cfg)
        .unwrap()
        .score_suffixes(&ScoreRequest::new("", vec!["a".into()]))
        .unwrap_err();
    assert!(matches!(err, LmError::Transport(_)), "{err:?}");
}

#[test]
fn slow_server_times_out() {
    let server = serve(Arc::new(|_: &ScoreRequest| {
        thread::sleep(Duration::from_millis(600));
        (200, r#"{"log_probs":[-1.0],"token_counts":[1]}"#.to_string())
    }));
    let mut cfg = RemoteConfig::new(&server.url);
    cfg.timeout = Duration::from_millis(150);
    cfg.retries = 0;
    let err = RemoteBackend::new(cfg)
        .unwrap()
        .score_suffixes(&ScoreRequest::new("", vec!["a".into()]))
        .unwrap_err();
    assert!(matches!(err, LmError::Timeout(_)), "{err:?}");
}
