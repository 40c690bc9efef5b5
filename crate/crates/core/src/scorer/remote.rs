use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use log::warn;

use super::protocol::{codes, Handshake, WireRequest, WireResponse, PROTOCOL};
use super::{InfillRequest, LabelWordsRequest, Scorer, ScorerError};

#[derive(Debug, Clone, Copy)]
pub struct RemoteOptions {
    /// Per-request deadline.
    pub timeout: Duration,
    /// Maximum requests in flight on the connection.
    pub window: usize,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(120),
            window: 64,
        }
    }
}

struct Window {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Window);

impl Window {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

type Pending = Mutex<Option<HashMap<String, mpsc::Sender<WireResponse>>>>;

struct Shared {
    writer: Mutex<Box<dyn Write + Send>>,
    /// `None` once the connection has closed.
    pending: Pending,
    window: Window,
    next_id: AtomicU64,
}

/// Client for a model sidecar speaking the JSON-lines protocol.
///
/// Any number of threads may call it at once; requests are multiplexed over
/// one connection and matched to responses by id, so the sidecar may answer
/// in any order.
pub struct RemoteScorer {
    shared: Arc<Shared>,
    model: String,
    opts: RemoteOptions,
    child: Option<Mutex<Child>>,
    socket: Option<TcpStream>,
}

impl std::fmt::Debug for RemoteScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteScorer")
            .field("model", &self.model)
            .field("opts", &self.opts)
            .field("child", &self.child.is_some())
            .field("socket", &self.socket)
            .finish()
    }
}

fn transport(request_id: Option<&str>, message: impl Into<String>, retriable: bool) -> ScorerError {
    ScorerError::Transport {
        request_id: request_id.map(String::from),
        message: message.into(),
        retriable,
    }
}

impl RemoteScorer {
    pub fn connect_tcp(addr: &str, opts: RemoteOptions) -> Result<Self, ScorerError> {
        let sock_addr = addr
            .to_socket_addrs()
            .map_err(|e| transport(None, format!("resolving {addr}: {e}"), false))?
            .next()
            .ok_or_else(|| transport(None, format!("no address for {addr}"), false))?;
        let stream = TcpStream::connect_timeout(&sock_addr, opts.timeout)
            .map_err(|e| transport(None, format!("connecting to {addr}: {e}"), true))?;
        let _ = stream.set_nodelay(true);
        let reader = stream
            .try_clone()
            .map_err(|e| transport(None, e.to_string(), false))?;
        let writer = stream
            .try_clone()
            .map_err(|e| transport(None, e.to_string(), false))?;
        let mut me = Self::from_streams(reader, writer, opts)?;
        me.socket = Some(stream);
        Ok(me)
    }

    /// Launch `program` and talk to it over its stdin/stdout.
    pub fn spawn(program: &str, args: &[String], opts: RemoteOptions) -> Result<Self, ScorerError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| transport(None, format!("spawning {program}: {e}"), false))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        match Self::from_streams(stdout, stdin, opts) {
            Ok(mut me) => {
                me.child = Some(Mutex::new(child));
                Ok(me)
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(e)
            }
        }
    }

    /// Wrap an already-open stream pair. Blocks until the handshake arrives.
    pub fn from_streams<R, W>(reader: R, writer: W, opts: RemoteOptions) -> Result<Self, ScorerError>
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let shared = Arc::new(Shared {
            writer: Mutex::new(Box::new(writer)),
            pending: Mutex::new(Some(HashMap::new())),
            window: Window {
                free: Mutex::new(opts.window.max(1)),
                cv: Condvar::new(),
            },
            next_id: AtomicU64::new(0),
        });

        let (hello_tx, hello_rx) = mpsc::channel();
        let reader_shared = Arc::clone(&shared);
        thread::Builder::new()
            .name("ctrleval-remote-reader".into())
            .spawn(move || read_loop(BufReader::new(reader), reader_shared, hello_tx))
            .map_err(|e| transport(None, e.to_string(), false))?;

        let hello: Handshake = match hello_rx.recv_timeout(opts.timeout) {
            Ok(Ok(h)) => h,
            Ok(Err(e)) => return Err(e),
            Err(_) => return Err(transport(None, "no handshake from sidecar", true)),
        };
        if hello.protocol != PROTOCOL {
            return Err(ScorerError::Protocol {
                request_id: None,
                code: "protocol_mismatch".into(),
                message: format!("sidecar speaks {:?}, expected {PROTOCOL:?}", hello.protocol),
            });
        }
        Ok(Self {
            shared,
            model: hello.model,
            opts,
            child: None,
            socket: None,
        })
    }

    fn call(&self, request_id: &str, make: impl FnOnce(String) -> WireRequest) -> Result<WireResponse, ScorerError> {
        let _permit = self.shared.window.acquire();
        let wire_id = format!(
            "{}#{}",
            self.shared.next_id.fetch_add(1, Ordering::Relaxed),
            request_id
        );
        let (tx, rx) = mpsc::channel();
        match self.shared.pending.lock().unwrap().as_mut() {
            Some(p) => {
                p.insert(wire_id.clone(), tx);
            }
            None => return Err(transport(Some(request_id), "connection closed", false)),
        }

        let line = serde_json::to_string(&make(wire_id.clone())).expect("request serializes");
        let sent = {
            let mut w = self.shared.writer.lock().unwrap();
            writeln!(w, "{line}").and_then(|_| w.flush())
        };
        if let Err(e) = sent {
            self.forget(&wire_id);
            return Err(transport(Some(request_id), format!("write failed: {e}"), false));
        }

        match rx.recv_timeout(self.opts.timeout) {
            Ok(resp) => Ok(resp),
            Err(mpsc::RecvTimeoutError::Timeout) => {
                self.forget(&wire_id);
                Err(transport(Some(request_id), "timed out", true))
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                Err(transport(Some(request_id), "connection lost", false))
            }
        }
    }

    fn forget(&self, wire_id: &str) {
        if let Some(p) = self.shared.pending.lock().unwrap().as_mut() {
            p.remove(wire_id);
        }
    }
}

fn read_loop<R: BufRead>(
    reader: R,
    shared: Arc<Shared>,
    hello: mpsc::Sender<Result<Handshake, ScorerError>>,
) {
    let mut lines = reader.lines();
    let first = match lines.next() {
        Some(Ok(l)) => serde_json::from_str::<Handshake>(&l).map_err(|e| ScorerError::Protocol {
            request_id: None,
            code: "bad_handshake".into(),
            message: format!("{e}: {l:?}"),
        }),
        Some(Err(e)) => Err(transport(None, e.to_string(), false)),
        None => Err(transport(None, "sidecar closed before handshake", false)),
    };
    let ok = first.is_ok();
    let _ = hello.send(first);

    if ok {
        for line in lines {
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    warn!("remote scorer read failed: {e}");
                    break;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let resp: WireResponse = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    warn!("ignoring unparseable sidecar line ({e}): {line:?}");
                    continue;
                }
            };
            let tx = shared
                .pending
                .lock()
                .unwrap()
                .as_mut()
                .and_then(|p| p.remove(&resp.id));
            match tx {
                Some(tx) => {
                    let _ = tx.send(resp);
                }
                None => warn!("response for unknown request id {:?}", resp.id),
            }
        }
    }
    // dropping the senders wakes every waiter with a disconnect
    shared.pending.lock().unwrap().take();
}

fn protocol_error(request_id: &str, resp: WireResponse, expected: &str) -> ScorerError {
    match resp.error {
        Some(e) if e.code == codes::UNENCODABLE_CANDIDATE => ScorerError::CandidateNotEncodable {
            request_id: request_id.to_string(),
            word: e.message,
        },
        Some(e) => ScorerError::Protocol {
            request_id: Some(request_id.to_string()),
            code: e.code,
            message: e.message,
        },
        None => ScorerError::Protocol {
            request_id: Some(request_id.to_string()),
            code: "protocol_violation".into(),
            message: format!("response has no {expected}"),
        },
    }
}

impl Scorer for RemoteScorer {
    fn model_name(&self) -> String {
        self.model.clone()
    }

    fn infill_log_prob(&self, req: &InfillRequest) -> Result<f64, ScorerError> {
        let resp = self.call(&req.request_id, |id| WireRequest::infill(id, req))?;
        match resp.log_prob {
            Some(v) if resp.error.is_none() => Ok(v),
            _ => Err(protocol_error(&req.request_id, resp, "log_prob")),
        }
    }

    fn label_word_probs(&self, req: &LabelWordsRequest) -> Result<Vec<f64>, ScorerError> {
        let resp = self.call(&req.request_id, |id| WireRequest::label_words(id, req))?;
        match resp.probs {
            Some(v) if resp.error.is_none() => Ok(v),
            _ => Err(protocol_error(&req.request_id, resp, "probs")),
        }
    }
}

impl Drop for RemoteScorer {
    fn drop(&mut self) {
        if let Some(s) = &self.socket {
            let _ = s.shutdown(std::net::Shutdown::Both);
        }
        if let Some(child) = &self.child {
            let mut child = child.lock().unwrap();
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::protocol::{answer, serve};
    use crate::scorer::{score_infill, score_label_words, MockScorer};
    use crate::types::MASK;
    use std::net::TcpListener;

    fn serve_tcp(mock: MockScorer) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let m = mock.clone();
                thread::spawn(move || {
                    let r = BufReader::new(stream.try_clone().unwrap());
                    let _ = serve(&m, r, stream);
                });
            }
        });
        addr
    }

    #[test]
    fn tcp_round_trip_matches_local_backend() {
        let mock = MockScorer::with_default_vocab(9);
        let addr = serve_tcp(mock.clone());
        let remote = RemoteScorer::connect_tcp(&addr, RemoteOptions::default()).unwrap();
        assert_eq!(remote.model_name(), mock.model_name());

        let req = InfillRequest::new("q1", format!("The movie {MASK}"), "was good fun.");
        assert_eq!(score_infill(&remote, &req).unwrap(), score_infill(&mock, &req).unwrap());
        let lw = LabelWordsRequest::new("q2", format!("Nice. It was {MASK}."), vec!["good".into(), "bad".into()]);
        assert_eq!(score_label_words(&remote, &lw).unwrap(), score_label_words(&mock, &lw).unwrap());

        let unenc = LabelWordsRequest::new("q4", MASK, vec!["good".into(), "  ".into()]);
        assert!(matches!(
            remote.label_word_probs(&unenc),
            Err(ScorerError::CandidateNotEncodable { .. })
        ));
    }

    #[test]
    fn concurrent_requests_are_correlated() {
        let mock = MockScorer::with_default_vocab(5);
        let addr = serve_tcp(mock.clone());
        let remote = Arc::new(
            RemoteScorer::connect_tcp(&addr, RemoteOptions { window: 4, ..Default::default() }).unwrap(),
        );
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let remote = Arc::clone(&remote);
                let mock = mock.clone();
                thread::spawn(move || {
                    for k in 0..25 {
                        let req = InfillRequest::new(
                            "same-id",
                            format!("thread {t} {MASK}"),
                            format!("good day number {k}"),
                        );
                        assert_eq!(
                            remote.infill_log_prob(&req).unwrap(),
                            mock.infill_log_prob(&req).unwrap()
                        );
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
    }

    /// A sidecar that answers each pair of requests in reverse order.
    #[test]
    fn out_of_order_answers() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let mock = MockScorer::with_default_vocab(1);
        let m2 = mock.clone();
        thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut w = stream.try_clone().unwrap();
            writeln!(w, r#"{{"protocol":"{PROTOCOL}","model":"rev"}}"#).unwrap();
            let mut held: Vec<String> = Vec::new();
            for line in BufReader::new(stream).lines() {
                held.push(line.unwrap());
                if held.len() == 2 {
                    for l in held.drain(..).rev() {
                        let r = answer(&m2, &l);
                        writeln!(w, "{}", serde_json::to_string(&r).unwrap()).unwrap();
                    }
                }
            }
        });
        let remote = Arc::new(RemoteScorer::connect_tcp(&addr, RemoteOptions::default()).unwrap());
        let hs: Vec<_> = (0..2)
            .map(|k| {
                let remote = Arc::clone(&remote);
                let mock = mock.clone();
                thread::spawn(move || {
                    let req = InfillRequest::new(format!("r{k}"), format!("{MASK} end"), format!("the {k} good"));
                    assert_eq!(remote.infill_log_prob(&req).unwrap(), mock.infill_log_prob(&req).unwrap());
                })
            })
            .collect();
        for h in hs {
            h.join().unwrap();
        }
    }

    #[test]
    fn timeout_and_connection_loss() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut w = stream.try_clone().unwrap();
            writeln!(w, r#"{{"protocol":"{PROTOCOL}","model":"silent"}}"#).unwrap();
            let mut lines = BufReader::new(stream).lines();
            // swallow the first request, then hang up after the second
            let _ = lines.next();
            let _ = lines.next();
        });
        let opts = RemoteOptions { timeout: Duration::from_millis(200), window: 2 };
        let remote = RemoteScorer::connect_tcp(&addr, opts).unwrap();
        let req = InfillRequest::new("slow", MASK, "x");
        let e = remote.infill_log_prob(&req).unwrap_err();
        assert!(e.is_retriable(), "{e}");
        assert_eq!(e.request_id(), Some("slow"));
        let e = remote.infill_log_prob(&InfillRequest::new("gone", MASK, "x")).unwrap_err();
        assert!(e.is_transport(), "{e}");
        assert_eq!(e.request_id(), Some("gone"));
    }

    #[test]
    fn bad_handshake_rejected() {
        let (reader, writer) = (
            &b"{\"protocol\":\"other/9\",\"model\":\"m\"}\n"[..],
            Vec::<u8>::new(),
        );
        let e = RemoteScorer::from_streams(reader, writer, RemoteOptions::default()).err().unwrap();
        assert!(matches!(e, ScorerError::Protocol { .. }));
        let e = RemoteScorer::from_streams(&b""[..], Vec::<u8>::new(), RemoteOptions::default())
            .err()
            .unwrap();
        assert!(e.is_transport());
    }

    #[test]
    fn unreachable_endpoint() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        drop(listener);
        let e = RemoteScorer::connect_tcp(&addr, RemoteOptions::default()).err().unwrap();
        assert!(e.is_transport());
    }
}
