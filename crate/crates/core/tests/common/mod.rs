#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Instant;

use pag_core::{LabelVocabulary, ScriptedBackend};

pub const DAY_OFF: &str = "what is the day off request status";
pub const EXISTENCE: &str = "what is the reason humans even exist";

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn clinc() -> LabelVocabulary {
    LabelVocabulary::load(fixtures_dir().join("clinc150.txt")).expect("clinc150.txt")
}

pub fn worked_examples() -> ScriptedBackend {
    ScriptedBackend::load(fixtures_dir().join("worked_examples.jsonl")).expect("worked_examples.jsonl")
}

pub fn all_fixtures() -> ScriptedBackend {
    ScriptedBackend::load(fixtures_dir().join("fixtures.jsonl")).expect("fixtures.jsonl")
}

#[derive(Debug, Clone)]
pub struct Recorded {
    pub at: Instant,
    pub request_line: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Recorded {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).expect("request body is JSON")
    }
}

/// A one-response-per-connection HTTP server replaying `(status, body)`
/// pairs in order; the last pair repeats once the script runs out.
pub struct StubServer {
    pub base_url: String,
    log: Arc<Mutex<Vec<Recorded>>>,
}

impl StubServer {
    pub fn start(script: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let log = Arc::new(Mutex::new(Vec::new()));
        let server_log = Arc::clone(&log);
        thread::spawn(move || {
            for (i, stream) in listener.incoming().enumerate() {
                let Ok(stream) = stream else { break };
                let (status, body) = script[i.min(script.len() - 1)].clone();
                if let Some(rec) = serve(stream, status, &body) {
                    server_log.lock().unwrap().push(rec);
                }
            }
        });
        Self { base_url, log }
    }

    pub fn requests(&self) -> Vec<Recorded> {
        self.log.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, status: u16, body: &str) -> Option<Recorded> {
    let at = Instant::now();
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line).ok()?;
    let mut headers = Vec::new();
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).ok()?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            headers.push((k.trim().to_owned(), v.trim().to_owned()));
        }
    }
    let len: usize = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0);
    let mut req_body = vec![0; len];
    reader.read_exact(&mut req_body).ok()?;
    let mut stream = stream;
    let reason = match status {
        200 => "OK",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(response.as_bytes()).ok()?;
    stream.flush().ok()?;
    Some(Recorded {
        at,
        request_line: request_line.trim_end().to_owned(),
        headers,
        body: req_body,
    })
}

/// A completions response with one choice per `(text, logprobs)`.
pub fn completion(choices: &[(&str, Option<&[f64]>)]) -> String {
    let choices: Vec<serde_json::Value> = choices
        .iter()
        .enumerate()
        .map(|(i, (text, lp))| match lp {
            Some(lp) => serde_json::json!({"index": i, "text": text, "logprobs": {"token_logprobs": lp}}),
            None => serde_json::json!({"index": i, "text": text, "logprobs": null}),
        })
        .collect();
    serde_json::json!({"id": "cmpl-1", "object": "text_completion", "choices": choices}).to_string()
}
