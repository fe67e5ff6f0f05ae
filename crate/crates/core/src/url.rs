//! Canonical absolute URLs.
//!
//! A [`NormalizedUrl`] is the key used everywhere a URL is compared, from the
//! crawl frontier through to report output. Parsing
//! and relative-reference resolution follow RFC 3986 with a fixed set of
//! normalizations applied on top:
//!
//! * scheme and host are lowercased, the default port is filled in;
//! * percent-escapes use uppercase hex and unreserved characters are decoded;
//! * characters that may not appear literally are percent-encoded (UTF-8);
//! * `.` and `..` path segments are removed;
//! * the fragment is dropped.
//!
//! Only `http` and `https` URLs are representable. Other absolute schemes are
//! reported as [`UrlError::UnsupportedScheme`] so callers can skip them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UrlError {
    #[error("empty URL")]
    Empty,
    #[error("unsupported scheme `{0}`")]
    UnsupportedScheme(String),
    #[error("relative reference `{0}` without a base URL")]
    RelativeWithoutBase(String),
    #[error("invalid URL `{raw}`: {reason}")]
    Invalid { raw: String, reason: &'static str },
}

impl UrlError {
    fn invalid(raw: &str, reason: &'static str) -> Self {
        UrlError::Invalid {
            raw: raw.to_string(),
            reason,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Http,
    Https,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Http => "http",
            Scheme::Https => "https",
        }
    }

    pub fn default_port(self) -> u16 {
        match self {
            Scheme::Http => 80,
            Scheme::Https => 443,
        }
    }
}

/// Internal or external relative to a crawl seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Internal,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NormalizedUrl {
    scheme: Scheme,
    host: String,
    port: u16,
    path: String,
    query: Option<String>,
}

impl NormalizedUrl {
    /// Parses an absolute URL.
    pub fn parse(raw: &str) -> Result<Self, UrlError> {
        normalize_url(None, raw)
    }

    /// Resolves `raw` against `self`.
    pub fn join(&self, raw: &str) -> Result<Self, UrlError> {
        normalize_url(Some(self), raw)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn host(&self) -> &str {
        &self.host
    }

    pub fn port(&self) -> u16 {
        self.port
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn query(&self) -> Option<&str> {
        self.query.as_deref()
    }

    /// `scheme://host:port`, the part that decides scope.
    pub fn origin(&self) -> String {
        format!("{}://{}:{}", self.scheme.as_str(), self.host, self.port)
    }

    /// Path plus query, as sent on the request line.
    pub fn path_and_query(&self) -> String {
        match &self.query {
            Some(q) => format!("{}?{}", self.path, q),
            None => self.path.clone(),
        }
    }

    pub fn same_authority(&self, other: &NormalizedUrl) -> bool {
        self.scheme == other.scheme && self.host == other.host && self.port == other.port
    }
}

impl fmt::Display for NormalizedUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}://{}:{}{}", self.scheme.as_str(), self.host, self.port, self.path)?;
        if let Some(q) = &self.query {
            write!(f, "?{q}")?;
        }
        Ok(())
    }
}

impl FromStr for NormalizedUrl {
    type Err = UrlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NormalizedUrl::parse(s)
    }
}

impl Serialize for NormalizedUrl {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NormalizedUrl {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        NormalizedUrl::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Internal iff the origin matches the seed's origin.
pub fn classify_scope(seed: &NormalizedUrl, target: &NormalizedUrl) -> Scope {
    if seed.same_authority(target) {
        Scope::Internal
    } else {
        Scope::External
    }
}

/// Resolves `raw` against `base` (when relative) and normalizes the result.
pub fn normalize_url(base: Option<&NormalizedUrl>, raw: &str) -> Result<NormalizedUrl, UrlError> {
    let raw = raw.trim_matches(|c: char| c.is_ascii_whitespace() || c.is_ascii_control());
    if raw.is_empty() && base.is_none() {
        return Err(UrlError::Empty);
    }
    let reference = split_reference(raw)?;

    if let Some(scheme) = reference.scheme {
        let scheme = match scheme.to_ascii_lowercase().as_str() {
            "http" => Scheme::Http,
            "https" => Scheme::Https,
            other => return Err(UrlError::UnsupportedScheme(other.to_string())),
        };
        let authority = reference
            .authority
            .ok_or_else(|| UrlError::invalid(raw, "missing authority"))?;
        let (host, port) = parse_authority(raw, authority, scheme)?;
        return Ok(NormalizedUrl {
            scheme,
            host,
            port,
            path: normalize_path(reference.path, true),
            query: reference.query.map(normalize_query),
        });
    }

    let base = base.ok_or_else(|| UrlError::RelativeWithoutBase(raw.to_string()))?;

    if let Some(authority) = reference.authority {
        let (host, port) = parse_authority(raw, authority, base.scheme)?;
        return Ok(NormalizedUrl {
            scheme: base.scheme,
            host,
            port,
            path: normalize_path(reference.path, true),
            query: reference.query.map(normalize_query),
        });
    }

    let (path, query) = if reference.path.is_empty() {
        let query = match reference.query {
            Some(q) => Some(normalize_query(q)),
            None => base.query.clone(),
        };
        (base.path.clone(), query)
    } else if reference.path.starts_with('/') {
        (
            normalize_path(reference.path, true),
            reference.query.map(normalize_query),
        )
    } else {
        let dir_end = base.path.rfind('/').map_or(0, |i| i + 1);
        let merged = format!("{}{}", &base.path[..dir_end], reference.path);
        (normalize_path(&merged, true), reference.query.map(normalize_query))
    };

    Ok(NormalizedUrl {
        scheme: base.scheme,
        host: base.host.clone(),
        port: base.port,
        path,
        query,
    })
}

struct Reference<'a> {
    scheme: Option<&'a str>,
    authority: Option<&'a str>,
    path: &'a str,
    query: Option<&'a str>,
}

fn split_reference(raw: &str) -> Result<Reference<'_>, UrlError> {
    let without_fragment = raw.split_once('#').map_or(raw, |(head, _)| head);
    let (rest, query) = match without_fragment.split_once('?') {
        Some((head, q)) => (head, Some(q)),
        None => (without_fragment, None),
    };

    let (scheme, rest) = match scheme_end(rest) {
        Some(end) => (Some(&rest[..end]), &rest[end + 1..]),
        None => (None, rest),
    };

    let (authority, path) = match rest.strip_prefix("//") {
        Some(after) => {
            let end = after.find('/').unwrap_or(after.len());
            (Some(&after[..end]), &after[end..])
        }
        None => (None, rest),
    };

    if scheme.is_some() && authority.is_none() && !is_special_opaque(scheme) {
        // e.g. "http:foo". RFC 3986 would treat it as a path, but for
        // http(s) an authority is mandatory.
        return Err(UrlError::invalid(raw, "missing authority"));
    }

    Ok(Reference {
        scheme,
        authority,
        path,
        query,
    })
}

// Non-http schemes are rejected later; only flag missing authority for http(s).
fn is_special_opaque(scheme: Option<&str>) -> bool {
    !matches!(
        scheme.map(|s| s.to_ascii_lowercase()).as_deref(),
        Some("http") | Some("https")
    )
}

fn scheme_end(s: &str) -> Option<usize> {
    let colon = s.find(':')?;
    let candidate = &s[..colon];
    let mut chars = candidate.chars();
    let first = chars.next()?;
    if !first.is_ascii_alphabetic() {
        return None;
    }
    if chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.')) {
        Some(colon)
    } else {
        None
    }
}

fn parse_authority(raw: &str, authority: &str, scheme: Scheme) -> Result<(String, u16), UrlError> {
    // userinfo is not part of the canonical form
    let host_port = authority.rsplit_once('@').map_or(authority, |(_, hp)| hp);

    let (host, port) = if let Some(rest) = host_port.strip_prefix('[') {
        let close = rest
            .find(']')
            .ok_or_else(|| UrlError::invalid(raw, "unterminated IPv6 literal"))?;
        let literal = &rest[..close];
        if literal.is_empty() || !literal.chars().all(|c| c.is_ascii_hexdigit() || c == ':' || c == '.') {
            return Err(UrlError::invalid(raw, "invalid IPv6 literal"));
        }
        let after = &rest[close + 1..];
        let port = match after {
            "" => None,
            p => Some(
                p.strip_prefix(':')
                    .ok_or_else(|| UrlError::invalid(raw, "garbage after IPv6 literal"))?,
            ),
        };
        (format!("[{}]", literal.to_ascii_lowercase()), port)
    } else {
        match host_port.rsplit_once(':') {
            Some((h, p)) => (h.to_string(), Some(p)),
            None => (host_port.to_string(), None),
        }
    };

    let host = if host.starts_with('[') {
        host
    } else {
        if host.is_empty() {
            return Err(UrlError::invalid(raw, "empty host"));
        }
        if !host
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-._~%!$&'()*+,;=".contains(c))
        {
            return Err(UrlError::invalid(raw, "invalid character in host"));
        }
        normalize_component(&host, |_| false).to_ascii_lowercase()
    };

    let port = match port {
        None | Some("") => scheme.default_port(),
        Some(p) => {
            if !p.chars().all(|c| c.is_ascii_digit()) {
                return Err(UrlError::invalid(raw, "non-numeric port"));
            }
            p.parse::<u16>()
                .map_err(|_| UrlError::invalid(raw, "port out of range"))?
        }
    };

    Ok((host, port))
}

fn is_unreserved(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'-' | b'.' | b'_' | b'~')
}

fn is_sub_delim(b: u8) -> bool {
    matches!(
        b,
        b'!' | b'$' | b'&' | b'\'' | b'(' | b')' | b'*' | b'+' | b',' | b';' | b'='
    )
}

fn is_pchar(b: u8) -> bool {
    is_unreserved(b) || is_sub_delim(b) || matches!(b, b':' | b'@')
}

/// Normalizes percent-escapes and encodes bytes outside the allowed set.
/// `extra` admits additional literal bytes (e.g. `/` in paths).
fn normalize_component(input: &str, extra: impl Fn(u8) -> bool) -> String {
    let bytes = input.as_bytes();
    let mut out = String::with_capacity(input.len());
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'%' {
            let hex = bytes.get(i + 1..i + 3).and_then(|h| {
                let s = std::str::from_utf8(h).ok()?;
                u8::from_str_radix(s, 16).ok()
            });
            match hex {
                Some(decoded) if is_unreserved(decoded) => out.push(decoded as char),
                Some(decoded) => push_escape(&mut out, decoded),
                None => {
                    push_escape(&mut out, b'%');
                    i += 1;
                    continue;
                }
            }
            i += 3;
        } else if is_pchar(b) || extra(b) {
            out.push(b as char);
            i += 1;
        } else {
            push_escape(&mut out, b);
            i += 1;
        }
    }
    out
}

fn push_escape(out: &mut String, b: u8) {
    const HEX: &[u8; 16] = b"0123456789ABCDEF";
    out.push('%');
    out.push(HEX[(b >> 4) as usize] as char);
    out.push(HEX[(b & 0xF) as usize] as char);
}

fn normalize_query(q: &str) -> String {
    normalize_component(q, |b| b == b'/' || b == b'?')
}

fn normalize_path(path: &str, absolute: bool) -> String {
    let encoded = normalize_component(path, |b| b == b'/');
    let mut out = remove_dot_segments(&encoded);
    if absolute && !out.starts_with('/') {
        out.insert(0, '/');
    }
    out
}

/// RFC 3986 section 5.2.4.
fn remove_dot_segments(path: &str) -> String {
    let mut input = path;
    let mut output: Vec<&str> = Vec::new();
    // Each pushed item is a segment including its leading '/', if any.
    while !input.is_empty() {
        if let Some(rest) = input.strip_prefix("../") {
            input = rest;
        } else if let Some(rest) = input.strip_prefix("./") {
            input = rest;
        } else if input.starts_with("/./") {
            input = &input[2..];
        } else if input == "/." {
            input = "/";
        } else if input.starts_with("/../") {
            input = &input[3..];
            output.pop();
        } else if input == "/.." {
            input = "/";
            output.pop();
        } else if input == "." || input == ".." {
            input = "";
        } else {
            let start = usize::from(input.starts_with('/'));
            let end = input[start..].find('/').map_or(input.len(), |i| i + start);
            output.push(&input[..end]);
            input = &input[end..];
        }
    }
    output.concat()
}
