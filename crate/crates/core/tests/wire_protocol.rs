//! Golden request/response probes for the model-server wire protocol.

use std::io::{Cursor, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::{mpsc, Arc};

use subsense::gateway::{
    serve_connection, serve_tcp, MaskQuery, MlmBackend, MockBackend, SidecarBackend, WireRequest,
    WireResponse,
};

fn probes() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/probes")
}

fn read(name: &str) -> String {
    std::fs::read_to_string(probes().join(name)).unwrap()
}

fn mock() -> MockBackend {
    MockBackend::from_file(&probes().join("mock.json")).unwrap()
}

#[test]
fn in_process_server_matches_golden_replies() {
    let mut out = Vec::new();
    let served = serve_connection(&mock(), Cursor::new(read("requests.jsonl")), &mut out).unwrap();
    assert_eq!(served, 10);
    assert_eq!(String::from_utf8(out).unwrap(), read("responses.jsonl"));
}

#[test]
fn serve_mock_command_matches_golden_replies() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_subsense"))
        .args(["serve-mock", "--stdio", "--mock"])
        .arg(probes().join("mock.json"))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(read("requests.jsonl").as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), read("responses.jsonl"));
}

#[test]
fn golden_replies_have_protocol_shape() {
    for (req, resp) in read("requests.jsonl").lines().zip(read("responses.jsonl").lines()) {
        let resp: WireResponse = serde_json::from_str(resp).unwrap();
        let Ok(req) = serde_json::from_str::<WireRequest>(req) else {
            assert!(matches!(resp, WireResponse::Err(_)));
            continue;
        };
        assert_eq!(resp.id(), req.id);
        if let WireResponse::Ok { predictions, .. } = resp {
            let q = req.query();
            let expected = if q.mode == subsense::gateway::QueryMode::MaskedTopk { q.mask_count() } else { 1 };
            assert_eq!(predictions.len(), expected);
            for list in predictions {
                assert!(list.len() <= q.top_k);
                assert!(list.windows(2).all(|w| w[0].logprob >= w[1].logprob));
                assert!(list.iter().all(|t| t.logprob <= 0.0));
            }
        }
    }
}

#[test]
fn fallback_is_a_normalized_distribution() {
    let m = mock();
    let r = m.score(&MaskQuery::masked("unscripted <mask>", 100)).unwrap();
    let total: f64 = r.predictions[0].iter().map(|t| t.logprob.exp()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn sidecar_client_over_tcp_sees_the_same_answers() {
    let (tx, rx) = mpsc::channel();
    let backend: Arc<dyn MlmBackend> = Arc::new(mock());
    std::thread::spawn(move || serve_tcp(backend, "127.0.0.1:0", move |a| tx.send(a).unwrap()));
    let client = SidecarBackend::connect_tcp(rx.recv().unwrap()).unwrap();
    let direct = mock();
    for line in read("requests.jsonl").lines() {
        let Ok(req) = serde_json::from_str::<WireRequest>(line) else { continue };
        let q = req.query();
        match (direct.score(&q), client.score(&q)) {
            (Ok(a), Ok(b)) => assert_eq!(a, b),
            (Err(_), Err(e)) => assert!(!e.is_retryable(), "{e}"),
            (a, b) => panic!("{q:?}: {a:?} vs {b:?}"),
        }
    }
}
