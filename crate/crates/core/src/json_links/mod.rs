//! URLs embedded in JSON data files.
//!
//! Every `*.json` file under a directory is parsed, every string value is
//! scanned for `http://` / `https://` URLs, and each distinct URL is probed
//! exactly once.

mod parser;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub use parser::{escape_pointer_token, string_values, JsonError, StringValue};

use crate::crawler::ProbePool;
use crate::model::{CheckKind, CheckStatus, Code, Finding, Location, Report};
use crate::probe::{ProbePolicy, Prober};
use crate::url::{normalize_url, NormalizedUrl};
use crate::walk::find_files;
use crate::Error;

/// Characters trimmed from the end of a match, repeatedly.
pub const TRAILING_PUNCTUATION: &[char] = &['.', ',', ';', ')', ']'];

/// RFC 3986 unreserved and reserved characters, plus `%`.
pub fn is_url_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || "-._~:/?#[]@!$&'()*+,;=%".contains(c)
}

/// One URL found inside a JSON string value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JsonUrlHit {
    pub file: PathBuf,
    /// RFC 6901 pointer to the containing string value.
    pub json_pointer: String,
    /// Line of the string token.
    pub line: u32,
    pub column: u32,
    pub url_text: String,
}

impl JsonUrlHit {
    pub fn location(&self) -> Location {
        Location::file(self.file.display().to_string()).at(self.line, Some(self.column))
    }
}

#[derive(Debug)]
pub enum ExtractError {
    Unreadable(std::io::Error),
    Parse(JsonError),
}

/// Every maximal `https?://` run of URL characters in `text`, with trailing
/// punctuation trimmed.
pub fn find_urls(text: &str) -> Vec<&str> {
    let mut hits = Vec::new();
    let mut from = 0;
    while let Some(rel) = text[from..].find("http") {
        let start = from + rel;
        let after_http = &text[start + 4..];
        let scheme_len = if after_http.starts_with("s://") {
            8
        } else if after_http.starts_with("://") {
            7
        } else {
            from = start + 4;
            continue;
        };
        let body_start = start + scheme_len;
        let body_len: usize = text[body_start..]
            .chars()
            .take_while(|&c| is_url_char(c))
            .map(char::len_utf8)
            .sum();
        if body_len == 0 {
            from = body_start;
            continue;
        }
        let end = body_start + body_len;
        let trimmed = text[start..end].trim_end_matches(TRAILING_PUNCTUATION);
        hits.push(trimmed);
        from = end;
    }
    hits
}

fn read(file: &Path) -> Result<Vec<StringValue>, ExtractError> {
    let bytes = std::fs::read(file).map_err(ExtractError::Unreadable)?;
    let text = String::from_utf8(bytes).map_err(|e| {
        let valid = &e.as_bytes()[..e.utf8_error().valid_up_to()];
        let prefix = std::str::from_utf8(valid).unwrap_or("");
        ExtractError::Parse(JsonError {
            line: 1 + prefix.matches('\n').count() as u32,
            column: 1 + prefix.rsplit('\n').next().map_or(0, |l| l.chars().count()) as u32,
            message: "invalid UTF-8".into(),
        })
    })?;
    string_values(&text).map_err(ExtractError::Parse)
}

/// URLs in the string values of one JSON file.
pub fn extract_urls(file: &Path) -> Result<Vec<JsonUrlHit>, ExtractError> {
    Ok(hits_from(file, &read(file)?))
}

fn hits_from(file: &Path, values: &[StringValue]) -> Vec<JsonUrlHit> {
    values
        .iter()
        .flat_map(|v| {
            find_urls(&v.value).into_iter().map(|url| JsonUrlHit {
                file: file.to_path_buf(),
                json_pointer: v.pointer.clone(),
                line: v.line,
                column: v.column,
                url_text: url.to_string(),
            })
        })
        .collect()
}

/// Keys whose values may hold site-relative links.
fn is_link_key(key: &str) -> bool {
    let key = key.to_ascii_lowercase();
    key.ends_with("url") || key.ends_with("link") || key.ends_with("href")
}

/// Relative references stored under link-like keys (`*url`, `*link`,
/// `*href`), for resolution against a base URL.
fn relative_refs(file: &Path, values: &[StringValue]) -> Vec<JsonUrlHit> {
    values
        .iter()
        .filter(|v| v.key.as_deref().is_some_and(is_link_key))
        .filter(|v| {
            let t = v.value.trim();
            !t.is_empty() && find_urls(t).is_empty() && !t.contains("://") && !t.contains(':')
        })
        .map(|v| JsonUrlHit {
            file: file.to_path_buf(),
            json_pointer: v.pointer.clone(),
            line: v.line,
            column: v.column,
            url_text: v.value.trim().to_string(),
        })
        .collect()
}

/// Every `.json` file under `root`, in path order.
pub fn scan_json_dir(root: &Path) -> Result<Vec<PathBuf>, Error> {
    Ok(find_files(root, is_json_file)?.files)
}

fn is_json_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

#[derive(Debug, Clone)]
pub struct JsonLinkOptions {
    pub probe_policy: ProbePolicy,
    /// Enables resolution of relative values under link-like keys.
    pub base_for_relatives: Option<NormalizedUrl>,
    pub concurrency: usize,
    pub per_host_concurrency: usize,
}

impl Default for JsonLinkOptions {
    fn default() -> Self {
        JsonLinkOptions {
            probe_policy: ProbePolicy::default(),
            base_for_relatives: None,
            concurrency: 8,
            per_host_concurrency: 2,
        }
    }
}

/// Probes each distinct URL once. The single `LINK_BROKEN` for a broken
/// URL lists every place it appears.
pub async fn check_json_links(root: &Path, options: &JsonLinkOptions) -> Result<Report, Error> {
    let walked = find_files(root, is_json_file)?;
    let prober = Prober::new(options.probe_policy.clone())?;
    let mut report = Report::started_now();

    for (path, reason) in &walked.unreadable {
        report.push(Finding::error(
            CheckKind::Link,
            Code::JsonUnreadable,
            Location::file(path.display().to_string()),
            format!("cannot read: {reason}"),
        ));
    }

    let mut by_url: BTreeMap<NormalizedUrl, Vec<JsonUrlHit>> = BTreeMap::new();
    let mut invalid: Vec<(JsonUrlHit, String)> = Vec::new();
    for file in &walked.files {
        let values = match read(file) {
            Ok(v) => v,
            Err(ExtractError::Unreadable(e)) => {
                report.push(Finding::error(
                    CheckKind::Link,
                    Code::JsonUnreadable,
                    Location::file(file.display().to_string()),
                    format!("cannot read: {e}"),
                ));
                continue;
            }
            Err(ExtractError::Parse(e)) => {
                report.push(Finding::error(
                    CheckKind::Link,
                    Code::JsonParseError,
                    Location::file(file.display().to_string()).at(e.line, Some(e.column)),
                    format!("malformed JSON: {}", e.message),
                ));
                continue;
            }
        };
        let mut hits = hits_from(file, &values);
        let base = options.base_for_relatives.as_ref();
        if base.is_some() {
            hits.extend(relative_refs(file, &values));
        }
        for hit in hits {
            match normalize_url(base, &hit.url_text) {
                Ok(url) => by_url.entry(url).or_default().push(hit),
                Err(e) => invalid.push((hit, e.to_string())),
            }
        }
    }

    let urls: Vec<NormalizedUrl> = by_url.keys().cloned().collect();
    let mut pool = ProbePool::new(
        options.concurrency,
        options.per_host_concurrency,
        std::time::Duration::ZERO,
    );
    let statuses = pool
        .run(&urls, |url| {
            let prober = prober.clone();
            async move { prober.probe(&url).await }
        })
        .await;
    report.count(CheckKind::Link, urls.len() as u64);

    for ((url, hits), status) in by_url.iter().zip(statuses) {
        let CheckStatus::Broken(reason) = status else {
            continue;
        };
        let occurrences: Vec<String> = hits
            .iter()
            .map(|h| format!("{}:{} {}", h.file.display(), h.line, pointer_display(&h.json_pointer)))
            .collect();
        let related = hits[1..].iter().map(JsonUrlHit::location).collect();
        report.push(
            Finding::error(
                CheckKind::Link,
                Code::LinkBroken,
                hits[0].location(),
                format!("broken link to {url} ({reason}); found at {}", occurrences.join(", ")),
            )
            .with_related(related),
        );
    }
    for (hit, reason) in invalid {
        report.push(Finding::error(
            CheckKind::Link,
            Code::LinkBroken,
            hit.location(),
            format!(
                "invalid URL `{}` at {}: {reason}",
                hit.url_text,
                pointer_display(&hit.json_pointer)
            ),
        ));
    }

    report.finish();
    Ok(report)
}

fn pointer_display(pointer: &str) -> &str {
    if pointer.is_empty() {
        "(root)"
    } else {
        pointer
    }
}
