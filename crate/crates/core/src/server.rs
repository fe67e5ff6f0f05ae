//! Embedded static file server for crawling a working tree before deploy.
//!
//! HTTP/1.1, `GET` and `HEAD` only, one request per connection. Paths map
//! under the served root; any `..` segment is refused with 403. A directory
//! serves its `index.html` or 404s. The served tree is assumed not to change
//! while the server runs.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{IpAddr, Ipv4Addr, Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::crawler::{crawl, CrawlOptions};
use crate::model::{CheckKind, Code, Finding, Location, Report};
use crate::url::NormalizedUrl;
use crate::Error;

const MAX_HEAD: usize = 16 * 1024;

/// Content type by file extension.
pub fn content_type(path: &Path) -> &'static str {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("html" | "htm") => "text/html; charset=utf-8",
        Some("css") => "text/css",
        Some("js") => "text/javascript",
        Some("json") => "application/json",
        Some("xml") => "application/xml",
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("svg") => "image/svg+xml",
        Some("ico") => "image/x-icon",
        Some("txt") => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestRecord {
    pub method: String,
    pub path: String,
    pub status: u16,
}

type Workers = Arc<Mutex<Vec<JoinHandle<()>>>>;

/// A running server. Dropping it shuts it down.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    root: PathBuf,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    workers: Workers,
    log: Arc<Mutex<Vec<RequestRecord>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// `http://<addr>/`
    pub fn base_url(&self) -> NormalizedUrl {
        NormalizedUrl::parse(&format!("http://{}/", self.addr)).expect("socket address is a valid host")
    }

    /// Every request answered so far, in arrival order.
    pub fn requests(&self) -> Vec<RequestRecord> {
        self.log.lock().expect("request log poisoned").clone()
    }

    /// Stops accepting, waits for in-flight requests, closes the socket.
    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        let Some(accept) = self.accept.take() else {
            return;
        };
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept().
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
        let _ = accept.join();
        let workers = std::mem::take(&mut *self.workers.lock().expect("worker list poisoned"));
        for w in workers {
            let _ = w.join();
        }
    }

    /// Blocks until the process is killed.
    pub fn wait(mut self) {
        if let Some(accept) = self.accept.take() {
            let _ = accept.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_now();
    }
}

/// Serves `root` on `bind_host:port`; port 0 picks a free port.
pub fn serve(root: &Path, port: u16, bind_host: IpAddr) -> Result<ServerHandle, Error> {
    if !root.is_dir() {
        return Err(if root.exists() {
            Error::NotADirectory(root.to_path_buf())
        } else {
            Error::MissingPath(root.to_path_buf())
        });
    }
    let bind = SocketAddr::new(bind_host, port);
    let listener = TcpListener::bind(bind).map_err(|source| Error::Bind {
        addr: bind.to_string(),
        source,
    })?;
    let addr = listener.local_addr().map_err(|source| Error::Bind {
        addr: bind.to_string(),
        source,
    })?;

    let stop = Arc::new(AtomicBool::new(false));
    let workers: Workers = Arc::default();
    let log: Arc<Mutex<Vec<RequestRecord>>> = Arc::default();
    let accept = {
        let root = root.to_path_buf();
        let stop = Arc::clone(&stop);
        let workers = Arc::clone(&workers);
        let log = Arc::clone(&log);
        std::thread::Builder::new()
            .name("sitecheck-serve".into())
            .spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let root = root.clone();
                    let log = Arc::clone(&log);
                    let handle = std::thread::spawn(move || {
                        if let Err(e) = handle_connection(stream, &root, &log) {
                            log::debug!("connection error: {e}");
                        }
                    });
                    let mut list = workers.lock().expect("worker list poisoned");
                    list.retain(|h| !h.is_finished());
                    list.push(handle);
                }
                // listener dropped here: further connects are refused
            })
            .map_err(|source| Error::Bind {
                addr: addr.to_string(),
                source,
            })?
    };

    Ok(ServerHandle {
        addr,
        root: root.to_path_buf(),
        stop,
        accept: Some(accept),
        workers,
        log,
    })
}

/// Serves on an ephemeral loopback port.
pub fn serve_ephemeral(root: &Path) -> Result<ServerHandle, Error> {
    serve(root, 0, IpAddr::V4(Ipv4Addr::LOCALHOST))
}

#[derive(Debug, PartialEq, Eq)]
enum Resolved {
    File(PathBuf),
    Forbidden,
    NotFound,
    BadRequest,
}

fn percent_decode(s: &str) -> Option<Vec<u8>> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = std::str::from_utf8(bytes.get(i + 1..i + 3)?).ok()?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    Some(out)
}

/// Maps a request target onto the filesystem under `root`.
fn resolve(root: &Path, target: &str) -> Resolved {
    let path = target.split(['?', '#']).next().unwrap_or("");
    if !path.starts_with('/') {
        return Resolved::BadRequest;
    }
    let Some(decoded) = percent_decode(path).and_then(|b| String::from_utf8(b).ok()) else {
        return Resolved::BadRequest;
    };
    let mut fs_path = root.to_path_buf();
    for segment in decoded.split('/') {
        match segment {
            "" | "." => {}
            ".." => return Resolved::Forbidden,
            s if s.contains(['\\', '\0']) => return Resolved::Forbidden,
            s => fs_path.push(s),
        }
    }
    if fs_path.is_dir() {
        fs_path.push("index.html");
    }
    if fs_path.is_file() {
        Resolved::File(fs_path)
    } else {
        Resolved::NotFound
    }
}

fn reason_phrase(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        403 => "Forbidden",
        404 => "Not Found",
        405 => "Method Not Allowed",
        _ => "Internal Server Error",
    }
}

fn handle_connection(stream: TcpStream, root: &Path, log: &Mutex<Vec<RequestRecord>>) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    // Drain headers; bodies are not expected for GET/HEAD.
    let mut head_len = request_line.len();
    loop {
        let mut line = String::new();
        let n = reader.read_line(&mut line)?;
        head_len += n;
        if n == 0 || line == "\r\n" || line == "\n" || head_len > MAX_HEAD {
            break;
        }
    }

    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let target = parts.next().unwrap_or("").to_string();

    let (status, body, ctype): (u16, Vec<u8>, &str) = if method != "GET" && method != "HEAD" {
        (405, b"method not allowed\n".to_vec(), "text/plain; charset=utf-8")
    } else {
        match resolve(root, &target) {
            Resolved::File(path) => match std::fs::read(&path) {
                Ok(bytes) => (200, bytes, content_type(&path)),
                Err(_) => (404, b"not found\n".to_vec(), "text/plain; charset=utf-8"),
            },
            Resolved::Forbidden => (403, b"forbidden\n".to_vec(), "text/plain; charset=utf-8"),
            Resolved::NotFound => (404, b"not found\n".to_vec(), "text/plain; charset=utf-8"),
            Resolved::BadRequest => (400, b"bad request\n".to_vec(), "text/plain; charset=utf-8"),
        }
    };

    log.lock().expect("request log poisoned").push(RequestRecord {
        method: method.clone(),
        path: target,
        status,
    });

    let mut out = stream;
    let mut head = format!(
        "HTTP/1.1 {status} {}\r\nContent-Type: {ctype}\r\nContent-Length: {}\r\nConnection: close\r\n",
        reason_phrase(status),
        body.len()
    );
    if status == 405 {
        head.push_str("Allow: GET, HEAD\r\n");
    }
    head.push_str("\r\n");
    out.write_all(head.as_bytes())?;
    if method != "HEAD" {
        out.write_all(&body)?;
    }
    out.flush()?;
    let _ = out.shutdown(Shutdown::Write);
    // Let the client see EOF before the socket closes.
    let _ = out.set_read_timeout(Some(Duration::from_millis(200)));
    let _ = reader.get_mut().read(&mut [0u8; 64]);
    Ok(())
}

/// Maps a URL on the local server back to the file it came from.
fn url_to_file(root: &Path, base: &NormalizedUrl, url: &str) -> Option<String> {
    let prefix = base.origin();
    let rest = url.strip_prefix(&prefix)?;
    let path = rest.split(['?', '#']).next().unwrap_or("/");
    let decoded = String::from_utf8(percent_decode(path)?).ok()?;
    let mut fs_path = root.to_path_buf();
    for segment in decoded.split('/').filter(|s| !s.is_empty()) {
        fs_path.push(segment);
    }
    if decoded.ends_with('/') || fs_path.is_dir() {
        fs_path.push("index.html");
    }
    Some(fs_path.display().to_string())
}

/// Serves `root` on an ephemeral port, crawls it from `seed_path`, and
/// rewrites localhost URLs in the report to file paths (locations) and
/// site paths (messages).
pub async fn serve_and_crawl(root: &Path, seed_path: &str, options: &CrawlOptions) -> Result<Report, Error> {
    let server = serve_ephemeral(root)?;
    let base = server.base_url();
    let seed = base.join(seed_path)?;

    let seed_file = url_to_file(root, &base, &seed.to_string());
    let seed_exists = seed_file.as_deref().is_some_and(|f| Path::new(f).is_file());
    if !seed_exists {
        drop(server);
        let mut report = Report::started_now();
        report.push(Finding::error(
            CheckKind::Link,
            Code::LinkSeedUnreachable,
            Location::file(root.join(seed_path.trim_start_matches('/')).display().to_string()),
            format!("seed {seed_path} does not exist under {}", root.display()),
        ));
        report.finish();
        return Ok(report);
    }

    let outcome = crawl(&seed, options).await;
    server.shutdown();
    let mut report = outcome?.report;

    let origin = base.origin();
    let relocate = |loc: &mut Location| {
        if let Some(file) = url_to_file(root, &base, &loc.source) {
            *loc = Location {
                source: file,
                kind: crate::model::SourceLocatorKind::File,
                ..loc.clone()
            };
        }
    };
    report.map_findings(|f| {
        relocate(&mut f.location);
        f.related.iter_mut().for_each(relocate);
        f.message = f.message.replace(&origin, "");
    });
    Ok(report)
}
