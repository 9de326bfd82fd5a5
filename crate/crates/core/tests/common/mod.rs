//! Test helpers shared by the integration targets.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

/// What the mock server does with the next request on a path.
#[derive(Clone, Debug)]
pub enum Action {
    /// Reply with this status and an error body.
    Status(u16),
    /// Read the request and close the connection without replying.
    Reset,
    /// Sleep before giving the normal reply.
    Delay(Duration),
}

#[derive(Default)]
struct State {
    scripts: HashMap<String, VecDeque<Action>>,
    hits: HashMap<String, usize>,
}

/// Minimal HTTP/1.1 model server on a loopback port. Every connection
/// carries one request.
pub struct MockServer {
    port: u16,
    state: Arc<Mutex<State>>,
}

impl MockServer {
    pub fn start() -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let port = listener.local_addr().unwrap().port();
        let state = Arc::new(Mutex::new(State::default()));
        let shared = Arc::clone(&state);
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let state = Arc::clone(&shared);
                thread::spawn(move || serve(stream, &state));
            }
        });
        Self { port, state }
    }

    pub fn url(&self) -> String {
        format!("http://127.0.0.1:{}", self.port)
    }

    /// Queues actions for the next requests on `path`.
    pub fn script(&self, path: &str, actions: VecDeque<Action>) {
        self.state.lock().unwrap().scripts.insert(path.to_string(), actions);
    }

    pub fn hits(&self, path: &str) -> usize {
        self.state.lock().unwrap().hits.get(path).copied().unwrap_or(0)
    }
}

fn read_request(stream: &TcpStream) -> Option<(String, Value)> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let path = line.split_whitespace().nth(1)?.to_string();
    let mut length = 0usize;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).ok()?;
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body).ok()?;
    Some((path, serde_json::from_slice(&body).unwrap_or(Value::Null)))
}

fn normal_reply(path: &str, body: &Value) -> Value {
    match path {
        "/v1/text" => {
            let last = body["messages"]
                .as_array()
                .and_then(|m| m.last())
                .and_then(|m| m["text"].as_str())
                .unwrap_or("");
            json!({ "text": format!("echo: {last}") })
        }
        "/v1/images" => json!({ "image_b64": "AAEC", "token_ids": [1, 5, 2] }),
        "/v1/vqa" => json!({ "p_yes": 0.75, "p_no": 0.25 }),
        _ => json!({ "error": "unknown path" }),
    }
}

fn respond(mut stream: TcpStream, status: u16, body: &Value) {
    let text = body.to_string();
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        429 => "Too Many Requests",
        _ => "Error",
    };
    let _ = write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
    let _ = stream.flush();
}

fn serve(stream: TcpStream, state: &Mutex<State>) {
    let Some((path, body)) = read_request(&stream) else {
        return;
    };
    let action = {
        let mut s = state.lock().unwrap();
        *s.hits.entry(path.clone()).or_default() += 1;
        s.scripts.get_mut(&path).and_then(VecDeque::pop_front)
    };
    match action {
        Some(Action::Status(code)) => respond(stream, code, &json!({ "error": format!("scripted {code}") })),
        Some(Action::Reset) => drop(stream),
        Some(Action::Delay(d)) => {
            thread::sleep(d);
            respond(stream, 200, &normal_reply(&path, &body));
        }
        None if path.starts_with("/v1/") => respond(stream, 200, &normal_reply(&path, &body)),
        None => respond(stream, 404, &json!({ "error": "not found" })),
    }
}
