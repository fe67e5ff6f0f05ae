//! Test-only HTTP fixture server with per-path request counters.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

#[derive(Debug, Clone)]
pub struct Route {
    pub status: u16,
    /// Status for HEAD requests when it differs from GET.
    pub head_status: Option<u16>,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Route {
    pub fn status(status: u16) -> Self {
        Route {
            status,
            head_status: None,
            headers: vec![("Content-Type".into(), "text/plain".into())],
            body: format!("status {status}\n").into_bytes(),
        }
    }

    pub fn ok() -> Self {
        Route::status(200)
    }

    pub fn html(body: &str) -> Self {
        Route {
            status: 200,
            head_status: None,
            headers: vec![("Content-Type".into(), "text/html; charset=utf-8".into())],
            body: body.as_bytes().to_vec(),
        }
    }

    pub fn redirect(status: u16, location: &str) -> Self {
        Route {
            status,
            head_status: None,
            headers: vec![("Location".into(), location.into())],
            body: Vec::new(),
        }
    }

    pub fn head_status(mut self, status: u16) -> Self {
        self.head_status = Some(status);
        self
    }
}

#[derive(Default)]
struct Counters {
    by_path: BTreeMap<String, usize>,
    by_method: BTreeMap<(String, String), usize>,
}

pub struct FixtureServer {
    pub addr: SocketAddr,
    counters: Arc<Mutex<Counters>>,
}

impl FixtureServer {
    pub fn start(routes: Vec<(&str, Route)>) -> FixtureServer {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let routes: Arc<BTreeMap<String, Route>> =
            Arc::new(routes.into_iter().map(|(p, r)| (p.to_string(), r)).collect());
        let counters = Arc::new(Mutex::new(Counters::default()));
        let c = Arc::clone(&counters);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let routes = Arc::clone(&routes);
                let c = Arc::clone(&c);
                thread::spawn(move || handle(stream, &routes, &c));
            }
        });
        FixtureServer { addr, counters }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    /// Requests seen for `path`, any method.
    pub fn hits(&self, path: &str) -> usize {
        self.counters.lock().unwrap().by_path.get(path).copied().unwrap_or(0)
    }

    pub fn hits_with(&self, method: &str, path: &str) -> usize {
        self.counters
            .lock()
            .unwrap()
            .by_method
            .get(&(method.to_string(), path.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn total_hits(&self) -> usize {
        self.counters.lock().unwrap().by_path.values().sum()
    }
}

fn handle(mut stream: TcpStream, routes: &BTreeMap<String, Route>, counters: &Mutex<Counters>) {
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok();
    let mut buf = Vec::new();
    let mut chunk = [0u8; 1024];
    while !buf.windows(4).any(|w| w == b"\r\n\r\n") {
        match stream.read(&mut chunk) {
            Ok(0) | Err(_) => return,
            Ok(n) => buf.extend_from_slice(&chunk[..n]),
        }
    }
    let head = String::from_utf8_lossy(&buf);
    let mut parts = head.lines().next().unwrap_or("").split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let path = parts.next().unwrap_or("").to_string();
    {
        let mut c = counters.lock().unwrap();
        *c.by_path.entry(path.clone()).or_insert(0) += 1;
        *c.by_method.entry((method.clone(), path.clone())).or_insert(0) += 1;
    }
    let route = routes.get(&path).cloned().unwrap_or_else(|| Route::status(404));
    let status = if method == "HEAD" {
        route.head_status.unwrap_or(route.status)
    } else {
        route.status
    };
    let mut response = format!("HTTP/1.1 {status} Fixture\r\nConnection: close\r\n");
    for (k, v) in &route.headers {
        response.push_str(&format!("{k}: {v}\r\n"));
    }
    response.push_str(&format!("Content-Length: {}\r\n\r\n", route.body.len()));
    let mut bytes = response.into_bytes();
    if method != "HEAD" {
        bytes.extend_from_slice(&route.body);
    }
    let _ = stream.write_all(&bytes);
    let _ = stream.flush();
}

/// A listening socket that accepts connections at the kernel level but
/// never reads or answers. Keep the listener alive for the test's duration.
pub fn silent_socket() -> (TcpListener, SocketAddr) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    (listener, addr)
}

/// A loopback port with nothing listening on it.
pub fn closed_port() -> u16 {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    drop(listener);
    port
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Copies a directory tree (files only) into `dest`.
pub fn copy_tree(src: &Path, dest: &Path) {
    for entry in walkdir::WalkDir::new(src) {
        let entry = entry.unwrap();
        let rel = entry.path().strip_prefix(src).unwrap();
        let target = dest.join(rel);
        if entry.file_type().is_dir() {
            std::fs::create_dir_all(&target).unwrap();
        } else {
            std::fs::copy(entry.path(), &target).unwrap();
        }
    }
}

pub mod xml_tree;

/// Runs the CLI in-process and captures its output.
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["sitecheck"];
    argv.extend_from_slice(args);
    let code = sitecheck::cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}
