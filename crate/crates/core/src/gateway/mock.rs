//! Minimal in-process HTTP test double for the chat-completion contract.
//! Scriptable failure count, artificial latency, and in-flight
//! instrumentation so parallelism limits are assertable from tests.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

#[derive(Debug, Clone)]
pub struct MockConfig {
    /// Completion text returned on success.
    pub reply_text: String,
    /// This many initial requests answer HTTP 500 before the server recovers.
    pub fail_first: usize,
    /// Artificial per-request latency.
    pub delay_ms: u64,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig { reply_text: "wait".into(), fail_first: 0, delay_ms: 0 }
    }
}

struct MockState {
    config: MockConfig,
    hits: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
    stop: AtomicBool,
}

/// A listening server on an ephemeral local port. Shuts down on drop.
pub struct MockServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    accept_thread: Option<std::thread::JoinHandle<()>>,
}

impl MockServer {
    pub fn start(config: MockConfig) -> std::io::Result<MockServer> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let state = Arc::new(MockState {
            config,
            hits: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
            stop: AtomicBool::new(false),
        });
        let accept_state = Arc::clone(&state);
        let accept_thread = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if accept_state.stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let conn_state = Arc::clone(&accept_state);
                // One thread per connection so concurrency is observable.
                std::thread::spawn(move || {
                    let _ = handle(stream, &conn_state);
                });
            }
        });
        Ok(MockServer { addr, state, accept_thread: Some(accept_thread) })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Total requests served (including scripted failures).
    pub fn hits(&self) -> usize {
        self.state.hits.load(Ordering::SeqCst)
    }

    /// Highest number of simultaneously open requests observed.
    pub fn peak_in_flight(&self) -> usize {
        self.state.peak_in_flight.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.state.stop.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

fn handle(mut stream: TcpStream, state: &MockState) -> std::io::Result<()> {
    let current = state.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    state.peak_in_flight.fetch_max(current, Ordering::SeqCst);
    let result = serve_one(&mut stream, state);
    state.in_flight.fetch_sub(1, Ordering::SeqCst);
    result
}

fn serve_one(stream: &mut TcpStream, state: &MockState) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            return Ok(()); // shutdown poke or client hangup
        }
        buf.extend_from_slice(&chunk[..n]);
        if let Some(pos) = find_header_end(&buf) {
            break pos;
        }
        if buf.len() > 1 << 20 {
            return Ok(());
        }
    };
    let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let content_length = headers
        .lines()
        .find_map(|l| {
            let (name, value) = l.split_once(':')?;
            name.trim().eq_ignore_ascii_case("content-length").then(|| value.trim().parse::<usize>().ok())?
        })
        .unwrap_or(0);
    let body_start = header_end + 4;
    while buf.len() < body_start + content_length {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
    }

    if state.config.delay_ms > 0 {
        std::thread::sleep(Duration::from_millis(state.config.delay_ms));
    }
    let hit = state.hits.fetch_add(1, Ordering::SeqCst);
    let (status_line, body) = if hit < state.config.fail_first {
        ("HTTP/1.1 500 Internal Server Error", r#"{"error":"scripted failure"}"#.to_string())
    } else {
        let payload = serde_json::json!({
            "choices": [{"message": {"content": state.config.reply_text}}]
        });
        ("HTTP/1.1 200 OK", payload.to_string())
    };
    let response = format!(
        "{status_line}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(response.as_bytes())?;
    stream.flush()
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Registry;
    use crate::gateway::{
        build_prompt, run_jobs, AgentBackend, AgentEndpoint, HttpBackend, OracleInputs, PromptBundle, QueryError,
        Setting, StepJob, TemplateRegistry,
    };
    use crate::model::{Action, Point, Screen};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn endpoint(url: String, max_retries: u32, max_parallel: usize) -> AgentEndpoint {
        AgentEndpoint {
            base_url: url,
            model_name: "mock-model".into(),
            dialect_id: "json".into(),
            timeout: 10.0,
            max_parallel,
            max_retries,
            api_key_env: None,
            backoff_ms: 5,
            extra_params: BTreeMap::new(),
        }
    }

    fn jobs(n: usize) -> Vec<StepJob> {
        let screen = Arc::new(Screen::filled(100, 100, [3, 3, 3]).unwrap());
        let registry = TemplateRegistry::default();
        (0..n)
            .map(|i| {
                let bundle = PromptBundle {
                    setting: Setting::Low,
                    goal: "g".into(),
                    instruction: Some("tap it".into()),
                    screen: Arc::clone(&screen),
                    history: vec![],
                };
                StepJob {
                    sample_id: format!("m{i:02}"),
                    payload: build_prompt(&registry, "default", &bundle).unwrap(),
                    screen: Arc::clone(&screen),
                    oracle: OracleInputs { original_gt: Action::Wait, remapped_gt: Action::Wait, perturb: None },
                }
            })
            .collect()
    }

    #[test]
    fn fixed_click_reply_parses() {
        let server = MockServer::start(MockConfig {
            reply_text: r#"{"action": "click", "x": 120, "y": 480}"#.into(),
            ..Default::default()
        })
        .unwrap();
        let grammar = Registry::builtin().get("json").unwrap();
        let backend = HttpBackend::new(endpoint(server.base_url(), 0, 1), grammar).unwrap();
        let resp = backend.query(&jobs(1).pop().unwrap()).unwrap();
        assert_eq!(resp.parsed.action, Some(Action::Click(Point::new(120, 480))));
        assert_eq!(resp.attempt_count, 1);
        assert!(resp.latency >= 0.0);
    }

    #[test]
    fn two_failures_then_success_costs_three_attempts() {
        let server = MockServer::start(MockConfig { fail_first: 2, ..Default::default() }).unwrap();
        let grammar = Registry::builtin().get("json").unwrap();
        let backend = HttpBackend::new(endpoint(server.base_url(), 3, 1), grammar).unwrap();
        let resp = backend.query(&jobs(1).pop().unwrap()).unwrap();
        assert_eq!(resp.attempt_count, 3);
        assert_eq!(server.hits(), 3);
    }

    #[test]
    fn persistent_failure_exhausts_retries() {
        let server = MockServer::start(MockConfig { fail_first: usize::MAX, ..Default::default() }).unwrap();
        let grammar = Registry::builtin().get("json").unwrap();
        let backend = HttpBackend::new(endpoint(server.base_url(), 1, 1), grammar).unwrap();
        let err = backend.query(&jobs(1).pop().unwrap()).unwrap_err();
        match err {
            QueryError::Transport { sample_id, attempts, .. } => {
                assert_eq!(sample_id, "m00");
                assert_eq!(attempts, 2, "max_retries=1 means two attempts total");
            }
            other => panic!("expected transport exhaustion, got {other:?}"),
        }
        assert_eq!(server.hits(), 2);
    }

    #[test]
    fn pool_honors_max_parallel_against_live_server() {
        let server = MockServer::start(MockConfig { delay_ms: 25, ..Default::default() }).unwrap();
        let grammar = Registry::builtin().get("json").unwrap();
        let backend = HttpBackend::new(endpoint(server.base_url(), 0, 3), grammar).unwrap();
        let results = run_jobs(&backend, jobs(12), 3);
        assert_eq!(results.len(), 12);
        assert!(results.iter().all(|r| r.response.is_ok()));
        assert!(server.peak_in_flight() <= 3, "peak was {}", server.peak_in_flight());
        assert!(server.peak_in_flight() >= 2, "expected real concurrency, peak {}", server.peak_in_flight());
        // Sorted by sample_id.
        let ids: Vec<_> = results.iter().map(|r| r.sample_id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }
}
