use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, ToSocketAddrs};
use std::sync::Arc;

use super::protocol::{WireError, WireRequest, WireResponse};
use super::MlmBackend;

/// Answers newline-delimited requests from `input` until EOF.
///
/// Malformed lines get an error reply with an empty id.
pub fn serve_connection<B, R, W>(backend: &B, input: R, mut output: W) -> std::io::Result<usize>
where
    B: MlmBackend + ?Sized,
    R: BufRead,
    W: Write,
{
    let mut served = 0;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<WireRequest>(&line) {
            Ok(req) => {
                let q = req.query();
                match backend.score(&q) {
                    Ok(resp) => WireResponse::Ok {
                        id: req.id,
                        predictions: resp.predictions,
                    },
                    Err(e) => WireResponse::Err(WireError {
                        id: req.id,
                        error: e.to_string(),
                    }),
                }
            }
            Err(e) => WireResponse::Err(WireError {
                id: serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(str::to_string))
                    .unwrap_or_default(),
                error: format!("malformed request: {e}"),
            }),
        };
        serde_json::to_writer(&mut output, &reply)?;
        output.write_all(b"\n")?;
        output.flush()?;
        served += 1;
    }
    Ok(served)
}

/// Serves the wire protocol on a TCP address, one thread per connection.
///
/// `ready` receives the bound address (useful with port 0). Runs until the
/// listener fails.
pub fn serve_tcp<A: ToSocketAddrs>(
    backend: Arc<dyn MlmBackend>,
    addr: A,
    ready: impl FnOnce(std::net::SocketAddr),
) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr)?;
    ready(listener.local_addr()?);
    for stream in listener.incoming() {
        let stream = stream?;
        let backend = Arc::clone(&backend);
        std::thread::spawn(move || {
            let reader = match stream.try_clone() {
                Ok(s) => BufReader::new(s),
                Err(e) => {
                    log::warn!("connection setup failed: {e}");
                    return;
                }
            };
            if let Err(e) = serve_connection(backend.as_ref(), reader, stream) {
                log::debug!("connection closed: {e}");
            }
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MockBackend, MockConfig, PredictedToken};

    #[test]
    fn answers_and_reports_errors() {
        let mut cfg = MockConfig::default();
        cfg.insert_masked("<mask> are cute", vec![PredictedToken::new("cat", true, -0.5)]);
        let m = MockBackend::new(cfg).unwrap();
        let input = concat!(
            r#"{"id":"1","mode":"masked_topk","text":"<mask> are cute","top_k":1}"#,
            "\n",
            r#"{"id":"2","mode":"masked_topk","text":"no mask","top_k":1}"#,
            "\n",
            "garbage\n"
        );
        let mut out = Vec::new();
        let n = serve_connection(&m, input.as_bytes(), &mut out).unwrap();
        assert_eq!(n, 3);
        let lines: Vec<WireResponse> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert!(matches!(&lines[0], WireResponse::Ok { id, .. } if id == "1"));
        assert!(matches!(&lines[1], WireResponse::Err(e) if e.id == "2"));
        assert!(matches!(&lines[2], WireResponse::Err(e) if e.id.is_empty()));
    }
}
