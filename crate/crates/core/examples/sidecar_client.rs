//! Talking to a model server over the line-delimited JSON protocol.
//!
//! A mock backend is served on a local port and queried through the
//! sidecar client, from several threads at once.

use std::sync::{mpsc, Arc};
use std::thread;

use subsense::gateway::{serve_tcp, MaskQuery, MlmBackend, MockBackend, MockConfig, SidecarBackend};
use subsense::PredictedToken;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = MockConfig::default();
    for i in 0..4 {
        cfg.insert_masked(format!("query {i} <mask>"), vec![PredictedToken::new(format!("w{i}"), true, -0.1)]);
    }
    let server = Arc::new(MockBackend::new(cfg)?);
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || serve_tcp(server, "127.0.0.1:0", move |addr| tx.send(addr).expect("send address")));
    let addr = rx.recv()?;
    println!("mock server on {addr}");

    let client = Arc::new(SidecarBackend::connect_tcp(addr)?);
    let handles: Vec<_> = (0..4)
        .map(|i| {
            let c = Arc::clone(&client);
            thread::spawn(move || c.score(&MaskQuery::masked(format!("query {i} <mask>"), 1)))
        })
        .collect();
    for (i, h) in handles.into_iter().enumerate() {
        let r = h.join().expect("client thread")?;
        println!("query {i} -> {}", r.predictions[0][0].surface);
    }
    match client.score(&MaskQuery::masked("no mask here", 1)) {
        Ok(_) => println!("unexpected success"),
        Err(e) => println!("invalid query rejected: {e}"),
    }
    Ok(())
}
