mod common;

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::Path;
use std::time::Duration;

use common::{copy_tree, fixtures, run_cli};
use sitecheck::crawler::{crawl, CrawlOptions};
use sitecheck::server::{content_type, serve, serve_and_crawl, serve_ephemeral};
use sitecheck::Code;

struct Response {
    status: u16,
    headers: String,
    body: Vec<u8>,
}

fn request(addr: SocketAddr, method: &str, target: &str) -> Response {
    let mut stream = TcpStream::connect(addr).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    write!(
        stream,
        "{method} {target} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).unwrap();
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
    let headers = String::from_utf8(raw[..split].to_vec()).unwrap();
    let status = headers.split_whitespace().nth(1).unwrap().parse().unwrap();
    Response {
        status,
        headers,
        body: raw[split + 4..].to_vec(),
    }
}

fn get(addr: SocketAddr, target: &str) -> Response {
    request(addr, "GET", target)
}

fn options() -> CrawlOptions {
    let mut o = CrawlOptions::default();
    o.probe_policy.retries = 0;
    o.probe_policy.backoff = Duration::ZERO;
    o
}

#[test]
fn every_file_is_served_byte_for_byte() {
    let root = fixtures().join("site");
    let server = serve_ephemeral(&root).unwrap();
    let mut count = 0;
    for entry in walkdir::WalkDir::new(&root) {
        let entry = entry.unwrap();
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(&root).unwrap();
        let response = get(server.addr(), &format!("/{}", rel.display()));
        assert_eq!(response.status, 200, "{}", rel.display());
        assert_eq!(response.body, std::fs::read(entry.path()).unwrap());
        assert!(response
            .headers
            .to_ascii_lowercase()
            .contains(&format!("content-type: {}", content_type(entry.path()))));
        count += 1;
    }
    assert_eq!(count, 10);
}

#[test]
fn status_codes() {
    let server = serve_ephemeral(&fixtures().join("site")).unwrap();
    let addr = server.addr();
    assert_eq!(get(addr, "/missing").status, 404);
    assert_eq!(get(addr, "/../etc/passwd").status, 403);
    assert_eq!(get(addr, "/%2e%2e/etc/passwd").status, 403);
    assert_eq!(get(addr, "/a/../../x").status, 403);
    assert_eq!(request(addr, "POST", "/nav.html").status, 405);
    let index = get(addr, "/");
    assert_eq!(index.status, 200);
    assert_eq!(index.body, std::fs::read(fixtures().join("site/index.html")).unwrap());
    let head = request(addr, "HEAD", "/nav.html");
    assert_eq!(head.status, 200);
    assert!(head.body.is_empty());
}

#[test]
fn directory_without_index_is_404() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    std::fs::create_dir(dir.path().join("docs")).unwrap();
    std::fs::write(dir.path().join("docs/index.html"), "<p>docs</p>").unwrap();
    let server = serve_ephemeral(dir.path()).unwrap();
    assert_eq!(get(server.addr(), "/empty/").status, 404);
    assert_eq!(get(server.addr(), "/docs/").body, b"<p>docs</p>");
}

#[test]
fn content_type_map() {
    let cases = [
        ("a.html", "text/html; charset=utf-8"),
        ("A.HTM", "text/html; charset=utf-8"),
        ("a.css", "text/css"),
        ("a.js", "text/javascript"),
        ("a.json", "application/json"),
        ("a.xml", "application/xml"),
        ("a.png", "image/png"),
        ("a.jpg", "image/jpeg"),
        ("a.svg", "image/svg+xml"),
        ("a.ico", "image/x-icon"),
        ("a.txt", "text/plain; charset=utf-8"),
        ("a.bin", "application/octet-stream"),
        ("noext", "application/octet-stream"),
    ];
    for (name, expected) in cases {
        assert_eq!(content_type(Path::new(name)), expected, "{name}");
    }
}

#[test]
fn no_answers_after_shutdown() {
    let server = serve_ephemeral(&fixtures().join("site")).unwrap();
    let addr = server.addr();
    assert_eq!(get(addr, "/nav.html").status, 200);
    server.shutdown();
    assert!(TcpStream::connect_timeout(&addr, Duration::from_secs(1)).is_err());
}

#[test]
fn busy_port_is_a_startup_error() {
    let first = serve_ephemeral(&fixtures().join("site")).unwrap();
    let port = first.addr().port();
    assert!(serve(&fixtures().join("site"), port, "127.0.0.1".parse().unwrap()).is_err());
    let (code, _, err) = run_cli(&["serve", "tests/fixtures/site", "--port", &port.to_string()]);
    assert_eq!(code, 2);
    assert!(err.contains("error:"), "{err}");
}

#[tokio::test]
async fn serve_and_crawl_reports_file_paths() {
    let root = fixtures().join("site");
    let report = serve_and_crawl(&root, "/nav.html", &options()).await.unwrap();
    assert_eq!(report.findings().len(), 3);
    for f in report.findings() {
        assert!(Path::new(&f.location.source).is_file(), "{}", f.location.source);
        assert!(!f.message.contains("127.0.0.1"), "{}", f.message);
    }
}

#[tokio::test]
async fn missing_seed_file() {
    let report = serve_and_crawl(&fixtures().join("site"), "/nope.html", &options())
        .await
        .unwrap();
    let codes: Vec<_> = report.findings().iter().map(|f| f.machine_code).collect();
    assert_eq!(codes, vec![Code::LinkSeedUnreachable]);
}

#[tokio::test]
async fn concurrent_runs_do_not_conflict() {
    let root = fixtures().join("site");
    let opts = options();
    let (a, b) = tokio::join!(
        serve_and_crawl(&root, "/nav.html", &opts),
        serve_and_crawl(&root, "/nav.html", &opts)
    );
    assert_eq!(a.unwrap().findings(), b.unwrap().findings());
}

/// A working tree with a new broken link, next to the deployed copy
/// that predates it. Only the local-server mode sees the new defect.
#[tokio::test]
async fn working_tree_versus_deployed_copy() {
    let deployed = tempfile::tempdir().unwrap();
    let working = tempfile::tempdir().unwrap();
    copy_tree(&fixtures().join("site"), deployed.path());
    copy_tree(&fixtures().join("site"), working.path());
    let contact = working.path().join("contact.html");
    let text = std::fs::read_to_string(&contact).unwrap();
    std::fs::write(
        &contact,
        text.replace(
            "<h1>Contact</h1>",
            "<h1>Contact</h1>\n  <p><a href=\"map.html\">Map</a></p>",
        ),
    )
    .unwrap();

    let host = serve_ephemeral(deployed.path()).unwrap();
    let seed = host.base_url().join("/nav.html").unwrap();
    let deployed_report = crawl(&seed, &options()).await.unwrap().report;
    let working_report = serve_and_crawl(working.path(), "/nav.html", &options()).await.unwrap();

    let messages = |r: &sitecheck::Report| -> Vec<String> {
        r.findings()
            .iter()
            .map(|f| f.message.clone())
            .filter(|m| m.contains("map.html"))
            .collect()
    };
    assert!(messages(&deployed_report).is_empty());
    assert_eq!(messages(&working_report).len(), 1);
    assert_eq!(working_report.findings().len(), deployed_report.findings().len() + 1);
    let new = working_report
        .findings()
        .iter()
        .find(|f| f.message.contains("map.html"))
        .unwrap();
    assert_eq!(Path::new(&new.location.source), contact);
}
