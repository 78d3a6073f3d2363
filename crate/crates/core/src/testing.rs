//! In-process stand-in for the remote embedding and chat endpoints, for
//! exercising the HTTP providers without network access.
//!
//! Embeddings come from a [`HashingEmbedder`]; chat completions from an
//! [`EchoPolicy`]. Responses can be skewed to provoke contract errors.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::{json, Value};

use crate::embedding::HashingEmbedder;
use crate::pipeline::EchoPolicy;

#[derive(Debug, Default)]
struct Behaviour {
    /// Truncates or pads every returned vector to this length.
    dimension_override: Option<usize>,
    /// Drops the last vector of each response.
    drop_last: bool,
    /// Status returned by the chat endpoint instead of an answer.
    chat_status: Option<u16>,
}

struct Shared {
    embedder: HashingEmbedder,
    echo: EchoPolicy,
    behaviour: Mutex<Behaviour>,
    embed_calls: AtomicUsize,
    chat_calls: AtomicUsize,
    last_auth: Mutex<Option<String>>,
    stop: AtomicBool,
}

/// Listens on a loopback port until dropped.
pub struct MockProviderServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
}

impl MockProviderServer {
    pub fn start(embedder: HashingEmbedder, echo: EchoPolicy) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            embedder,
            echo,
            behaviour: Mutex::new(Behaviour::default()),
            embed_calls: AtomicUsize::new(0),
            chat_calls: AtomicUsize::new(0),
            last_auth: Mutex::new(None),
            stop: AtomicBool::new(false),
        });
        let s = Arc::clone(&shared);
        thread::spawn(move || {
            for stream in listener.incoming() {
                if s.stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let s = Arc::clone(&s);
                thread::spawn(move || {
                    let _ = handle(stream, &s);
                });
            }
        });
        Ok(MockProviderServer { addr, shared })
    }

    /// Base URL to use as `EMBED_API_BASE` / `LLM_API_BASE`.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn set_dimension_override(&self, dim: Option<usize>) {
        self.shared.behaviour.lock().unwrap().dimension_override = dim;
    }

    pub fn set_drop_last(&self, drop: bool) {
        self.shared.behaviour.lock().unwrap().drop_last = drop;
    }

    pub fn set_chat_status(&self, status: Option<u16>) {
        self.shared.behaviour.lock().unwrap().chat_status = status;
    }

    pub fn embed_calls(&self) -> usize {
        self.shared.embed_calls.load(Ordering::SeqCst)
    }

    pub fn chat_calls(&self) -> usize {
        self.shared.chat_calls.load(Ordering::SeqCst)
    }

    pub fn last_authorization(&self) -> Option<String> {
        self.shared.last_auth.lock().unwrap().clone()
    }
}

impl Drop for MockProviderServer {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop so it sees the flag.
        let _ = TcpStream::connect(self.addr);
    }
}

fn handle(stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            let value = value.trim();
            match name.to_ascii_lowercase().as_str() {
                "content-length" => content_length = value.parse().unwrap_or(0),
                "authorization" => *shared.last_auth.lock().unwrap() = Some(value.to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; content_length];
    reader.read_exact(&mut body)?;
    let request: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);

    let (status, payload) = if path.ends_with("/embeddings") {
        shared.embed_calls.fetch_add(1, Ordering::SeqCst);
        embeddings(shared, &request)
    } else if path.ends_with("/chat/completions") {
        shared.chat_calls.fetch_add(1, Ordering::SeqCst);
        chat(shared, &request)
    } else {
        (404, json!({"error": "not found"}))
    };
    let body = payload.to_string();
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}

fn embeddings(shared: &Shared, request: &Value) -> (u16, Value) {
    let Some(inputs) = request.get("input").and_then(Value::as_array) else {
        return (400, json!({"error": "input must be an array"}));
    };
    let behaviour = shared.behaviour.lock().unwrap();
    let mut data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let mut v = shared.embedder.vector_for(text.as_str().unwrap_or(""));
            if let Some(d) = behaviour.dimension_override {
                v.resize(d, 0.0);
            }
            json!({"object": "embedding", "index": i, "embedding": v})
        })
        .collect();
    if behaviour.drop_last {
        data.pop();
    }
    (200, json!({"object": "list", "data": data}))
}

fn chat(shared: &Shared, request: &Value) -> (u16, Value) {
    if let Some(status) = shared.behaviour.lock().unwrap().chat_status {
        return (status, json!({"error": "unavailable"}));
    }
    let prompt = request
        .pointer("/messages/0/content")
        .and_then(Value::as_str)
        .unwrap_or("");
    let answer = shared.echo.respond(prompt);
    (
        200,
        json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": answer}}]}),
    )
}
