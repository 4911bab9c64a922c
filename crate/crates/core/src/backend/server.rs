//! Minimal HTTP/1.1 server speaking the scoring protocol over any
//! [`ScoringBackend`]. Meant for tests and local smoke runs, not production.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::{ScoreRequest, ScoringBackend, TokenLogprob};

#[derive(Debug, Clone, Default)]
pub struct ServerOptions {
    /// Answer the first `fail_first` requests with HTTP 503.
    pub fail_first: usize,
    /// Reject requests lacking `Authorization: Bearer <token>` with 401.
    pub require_token: Option<String>,
    /// Replace the response tokens with ones that do not reconstruct.
    pub tamper_tokens: bool,
    /// Sleep this long before answering each scoring request.
    pub delay: Duration,
}

pub struct ScoringServer {
    addr: SocketAddr,
    requests: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl ScoringServer {
    pub fn start(backend: Arc<dyn ScoringBackend>) -> io::Result<Self> {
        Self::start_with(backend, ServerOptions::default())
    }

    pub fn start_with(backend: Arc<dyn ScoringBackend>, options: ServerOptions) -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let requests = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let options = Arc::new(options);

        let handle = {
            let requests = Arc::clone(&requests);
            let stop = Arc::clone(&stop);
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let backend = Arc::clone(&backend);
                    let requests = Arc::clone(&requests);
                    let options = Arc::clone(&options);
                    thread::spawn(move || {
                        let _ = handle_connection(stream, backend.as_ref(), &requests, &options);
                    });
                }
            })
        };
        Ok(ScoringServer {
            addr,
            requests,
            stop,
            handle: Some(handle),
        })
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Requests received on `/score`, including rejected ones.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for ScoringServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn respond(stream: &mut TcpStream, status: &str, body: &str) -> io::Result<()> {
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}

fn handle_connection(
    mut stream: TcpStream,
    backend: &dyn ScoringBackend,
    requests: &AtomicUsize,
    options: &ServerOptions,
) -> io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut content_length = 0usize;
    let mut authorization = None;
    loop {
        let mut header = String::new();
        if reader.read_line(&mut header)? == 0 {
            break;
        }
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            let value = value.trim();
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.parse().unwrap_or(0);
            } else if name.eq_ignore_ascii_case("authorization") {
                authorization = Some(value.to_string());
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let mut parts = request_line.split_whitespace();
    let (method, path) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
    if method != "POST" || path != "/score" {
        return respond(&mut stream, "404 Not Found", r#"{"error":"not found"}"#);
    }
    let seen = requests.fetch_add(1, Ordering::SeqCst);
    if !options.delay.is_zero() {
        thread::sleep(options.delay);
    }
    if seen < options.fail_first {
        return respond(&mut stream, "503 Service Unavailable", r#"{"error":"warming up"}"#);
    }
    if let Some(token) = &options.require_token {
        if authorization.as_deref() != Some(format!("Bearer {token}").as_str()) {
            return respond(&mut stream, "401 Unauthorized", r#"{"error":"bad token"}"#);
        }
    }
    let request: ScoreRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            let msg = serde_json::json!({ "error": e.to_string() }).to_string();
            return respond(&mut stream, "400 Bad Request", &msg);
        }
    };
    match backend.score(&request) {
        Ok(mut response) => {
            if options.tamper_tokens {
                response.tokens = vec![TokenLogprob::new("B", -0.5), TokenLogprob::new("?", -0.5)];
            }
            let body = serde_json::to_string(&response).expect("response serializes");
            respond(&mut stream, "200 OK", &body)
        }
        Err(e) => {
            let msg = serde_json::json!({ "error": e.to_string() }).to_string();
            respond(&mut stream, "422 Unprocessable Entity", &msg)
        }
    }
}
