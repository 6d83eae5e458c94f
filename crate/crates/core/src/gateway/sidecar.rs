use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{channel, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use super::protocol::{WireRequest, WireResponse};
use super::{GatewayError, MaskQuery, MlmBackend, MlmResponse};

type Pending = Arc<Mutex<HashMap<String, Sender<WireResponse>>>>;

/// Client for a scoring sidecar speaking the newline-delimited JSON protocol.
///
/// Requests from many threads share one connection; replies are routed back
/// by id from a dedicated reader thread.
pub struct SidecarBackend {
    writer: Mutex<Box<dyn Write + Send>>,
    pending: Pending,
    closed: Arc<AtomicBool>,
    next_id: AtomicU64,
    reader: Option<JoinHandle<()>>,
    child: Option<Mutex<Child>>,
}

impl SidecarBackend {
    pub fn connect_tcp<A: ToSocketAddrs>(addr: A) -> Result<Self, GatewayError> {
        let stream = TcpStream::connect(addr).map_err(|e| GatewayError::Transport(e.to_string()))?;
        let read_half = stream
            .try_clone()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(Self::from_streams(read_half, stream, None))
    }

    /// Spawns `program args...` and talks to it over stdin/stdout.
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, GatewayError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| GatewayError::Transport(format!("spawning {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self::from_streams(stdout, stdin, Some(child)))
    }

    pub fn from_streams<R, W>(read: R, write: W, child: Option<Child>) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let pending: Pending = Arc::default();
        let closed = Arc::new(AtomicBool::new(false));
        let reader = {
            let pending = Arc::clone(&pending);
            let closed = Arc::clone(&closed);
            std::thread::spawn(move || {
                for line in BufReader::new(read).lines() {
                    let Ok(line) = line else { break };
                    if line.trim().is_empty() {
                        continue;
                    }
                    match serde_json::from_str::<WireResponse>(&line) {
                        Ok(resp) => {
                            let tx = pending.lock().expect("pending lock").remove(resp.id());
                            match tx {
                                Some(tx) => {
                                    let _ = tx.send(resp);
                                }
                                None => log::warn!("sidecar reply for unknown id {}", resp.id()),
                            }
                        }
                        Err(e) => log::warn!("unparseable sidecar reply: {e}"),
                    }
                }
                closed.store(true, Ordering::SeqCst);
                // Dropping the senders wakes every waiter with a disconnect.
                pending.lock().expect("pending lock").clear();
            })
        };
        Self {
            writer: Mutex::new(Box::new(write)),
            pending,
            closed,
            next_id: AtomicU64::new(0),
            reader: Some(reader),
            child: child.map(Mutex::new),
        }
    }
}

impl MlmBackend for SidecarBackend {
    fn score(&self, q: &MaskQuery) -> Result<MlmResponse, GatewayError> {
        q.validate()?;
        if self.closed.load(Ordering::SeqCst) {
            return Err(GatewayError::Transport("sidecar connection closed".into()));
        }
        let id = self.next_id.fetch_add(1, Ordering::Relaxed).to_string();
        let (tx, rx) = channel();
        self.pending
            .lock()
            .expect("pending lock")
            .insert(id.clone(), tx);
        if self.closed.load(Ordering::SeqCst) {
            self.pending.lock().expect("pending lock").remove(&id);
            return Err(GatewayError::Transport("sidecar connection closed".into()));
        }
        let mut line = serde_json::to_string(&WireRequest::new(id.clone(), q))
            .expect("request serializes");
        line.push('\n');
        {
            let mut w = self.writer.lock().expect("writer lock");
            if let Err(e) = w.write_all(line.as_bytes()).and_then(|_| w.flush()) {
                self.pending.lock().expect("pending lock").remove(&id);
                return Err(GatewayError::Transport(e.to_string()));
            }
        }
        match rx.recv() {
            Ok(WireResponse::Ok { predictions, .. }) => {
                let resp = MlmResponse { predictions };
                resp.check_against(q)?;
                Ok(resp)
            }
            Ok(WireResponse::Err(e)) => Err(GatewayError::Backend(e.error)),
            Err(_) => Err(GatewayError::Transport(
                "sidecar closed before replying".into(),
            )),
        }
    }
}

impl Drop for SidecarBackend {
    fn drop(&mut self) {
        if let Some(child) = self.child.take() {
            let mut child = child.into_inner().unwrap_or_else(|e| e.into_inner());
            let _ = child.kill();
            let _ = child.wait();
        }
        // A TCP reader unblocks only when the peer closes; don't join it.
        drop(self.reader.take());
    }
}
