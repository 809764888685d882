#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn ssdau(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssdau"))
        .args(args)
        .env_remove("SSDAU_EMBED_ENDPOINT")
        .output()
        .expect("spawn ssdau")
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[derive(Debug, Clone)]
pub struct Request {
    pub method: String,
    pub path: String,
    pub body: String,
}

pub struct Reply {
    pub status: u16,
    pub body: String,
}

pub type Handler = dyn Fn(&Request, usize) -> Reply + Send + Sync;

/// Minimal HTTP/1.1 server answering every connection with `handler`, which
/// also receives the running request number.
pub struct MockServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Request>>>,
    pub peak_in_flight: Arc<AtomicUsize>,
}

fn read_request(stream: &mut TcpStream) -> Option<Request> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let mut len = 0usize;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some(Request {
        method,
        path,
        body: String::from_utf8(body).ok()?,
    })
}

impl MockServer {
    pub fn start(handler: Arc<Handler>, delay_ms: u64) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let count = Arc::new(AtomicUsize::new(0));
        {
            let requests = requests.clone();
            let peak = peak.clone();
            thread::spawn(move || {
                for stream in listener.incoming() {
                    let Ok(mut stream) = stream else { continue };
                    let handler = handler.clone();
                    let requests = requests.clone();
                    let in_flight = in_flight.clone();
                    let peak = peak.clone();
                    let count = count.clone();
                    thread::spawn(move || {
                        let Some(req) = read_request(&mut stream) else { return };
                        let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        let n = count.fetch_add(1, Ordering::SeqCst);
                        requests.lock().unwrap().push(req.clone());
                        if delay_ms > 0 {
                            thread::sleep(std::time::Duration::from_millis(delay_ms));
                        }
                        let reply = handler(&req, n);
                        in_flight.fetch_sub(1, Ordering::SeqCst);
                        let reason = if reply.status == 200 { "OK" } else { "Error" };
                        let msg = format!(
                            "HTTP/1.1 {} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                            reply.status,
                            reply.body.len(),
                            reply.body
                        );
                        let _ = stream.write_all(msg.as_bytes());
                        let _ = stream.flush();
                    });
                }
            });
        }
        Self {
            url,
            requests,
            peak_in_flight: peak,
        }
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

/// Reply body of a service whose token vectors come from the hash embedder
/// applied to each requested character range.
pub fn hash_service_reply(req: &Request, dim: usize, with_pooled: bool) -> Reply {
    use ssdau_core::embedding::{mean_pool, HashEmbedder};
    let body: serde_json::Value = serde_json::from_str(&req.body).unwrap();
    let e = HashEmbedder::new(dim);
    let texts = body["texts"].as_array().unwrap();
    let tokens = body["tokens"].as_array().unwrap();
    let mut vectors = Vec::new();
    let mut pooled = Vec::new();
    for (t, toks) in texts.iter().zip(tokens) {
        let chars: Vec<char> = t.as_str().unwrap().chars().collect();
        let per: Vec<_> = toks
            .as_array()
            .unwrap()
            .iter()
            .map(|r| {
                let s = r[0].as_u64().unwrap() as usize;
                let end = r[1].as_u64().unwrap() as usize;
                e.token_vector(&chars[s..end].iter().collect::<String>())
            })
            .collect();
        pooled.push(mean_pool(&per).map(|v| v.0).unwrap_or_else(|| vec![0.0; dim]));
        vectors.push(per.into_iter().map(|v| v.0).collect::<Vec<_>>());
    }
    let mut out = serde_json::json!({ "dim": dim, "vectors": vectors });
    if with_pooled {
        out["pooled"] = serde_json::json!(pooled);
    }
    Reply {
        status: 200,
        body: out.to_string(),
    }
}
