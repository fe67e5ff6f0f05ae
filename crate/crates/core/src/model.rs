//! Data types shared by every checker.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::url::{NormalizedUrl, Scope};

/// Where something was found: a file on disk or a page URL, plus a position.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Location {
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<u32>,
    pub kind: SourceLocatorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceLocatorKind {
    File,
    Url,
    /// Command-line input; no file to point at.
    Argument,
}

impl Location {
    pub fn file(path: impl Into<String>) -> Self {
        Location {
            source: path.into(),
            line: None,
            column: None,
            kind: SourceLocatorKind::File,
        }
    }

    pub fn url(url: impl Into<String>) -> Self {
        Location {
            source: url.into(),
            line: None,
            column: None,
            kind: SourceLocatorKind::Url,
        }
    }

    pub fn argument(text: impl Into<String>) -> Self {
        Location {
            source: text.into(),
            line: None,
            column: None,
            kind: SourceLocatorKind::Argument,
        }
    }

    pub fn at(mut self, line: u32, column: Option<u32>) -> Self {
        debug_assert!(line >= 1);
        self.line = Some(line.max(1));
        self.column = column.map(|c| c.max(1));
        self
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
            if let Some(col) = self.column {
                write!(f, ":{col}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "attr", rename_all = "snake_case")]
pub enum SourceKind {
    HtmlAttr(String),
    JsonString,
    CliSeed,
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceKind::HtmlAttr(attr) => write!(f, "{attr} attribute"),
            SourceKind::JsonString => f.write_str("JSON string"),
            SourceKind::CliSeed => f.write_str("command line"),
        }
    }
}

/// A discovered link.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkRecord {
    pub target: NormalizedUrl,
    pub origin: Location,
    pub source_kind: SourceKind,
    pub scope: Scope,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "status", rename_all = "snake_case")]
pub enum BrokenReason {
    HttpStatus(u16),
    ConnectionFailed,
    Timeout,
    TooManyRedirects,
    InvalidUrl,
}

impl fmt::Display for BrokenReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BrokenReason::HttpStatus(code) => write!(f, "HTTP {code}"),
            BrokenReason::ConnectionFailed => f.write_str("connection failed"),
            BrokenReason::Timeout => f.write_str("timed out"),
            BrokenReason::TooManyRedirects => f.write_str("too many redirects"),
            BrokenReason::InvalidUrl => f.write_str("invalid URL"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    ExternalNotChecked,
    SchemeUnsupported,
    ExcludedByPattern,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipReason::ExternalNotChecked => "external link not checked",
            SkipReason::SchemeUnsupported => "unsupported scheme",
            SkipReason::ExcludedByPattern => "excluded by pattern",
        })
    }
}

/// Outcome of probing one URL.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Ok(u16),
    Redirected {
        chain: Vec<NormalizedUrl>,
        final_status: u16,
    },
    Broken(BrokenReason),
    Skipped(SkipReason),
}

impl CheckStatus {
    pub fn is_broken(&self) -> bool {
        matches!(self, CheckStatus::Broken(_))
    }

    pub fn is_success(&self) -> bool {
        matches!(self, CheckStatus::Ok(_) | CheckStatus::Redirected { .. })
    }
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckStatus::Ok(code) => write!(f, "ok (HTTP {code})"),
            CheckStatus::Redirected { chain, final_status } => write!(
                f,
                "ok after {} redirect(s) to {} (HTTP {final_status})",
                chain.len(),
                chain.last().map(ToString::to_string).unwrap_or_default()
            ),
            CheckStatus::Broken(reason) => write!(f, "broken ({reason})"),
            CheckStatus::Skipped(reason) => write!(f, "skipped ({reason})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Link,
    Html,
    Xml,
    Reach,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        }
    }
}

macro_rules! finding_codes {
    ($($variant:ident => $token:literal,)*) => {
        /// Stable machine-readable finding codes.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum Code {
            $(#[serde(rename = $token)] $variant,)*
        }

        impl Code {
            pub const ALL: &'static [Code] = &[$(Code::$variant,)*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(Code::$variant => $token,)*
                }
            }
        }

        impl std::str::FromStr for Code {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($token => Ok(Code::$variant),)*
                    other => Err(format!("unknown finding code `{other}`")),
                }
            }
        }
    };
}

finding_codes! {
    LinkBroken => "LINK_BROKEN",
    LinkSeedUnreachable => "LINK_SEED_UNREACHABLE",
    HtmlNoDoctype => "HTML_NO_DOCTYPE",
    HtmlUnclosedTag => "HTML_UNCLOSED_TAG",
    HtmlStrayEndTag => "HTML_STRAY_END_TAG",
    HtmlVoidEndTag => "HTML_VOID_END_TAG",
    HtmlDuplicateId => "HTML_DUPLICATE_ID",
    HtmlUnknownElement => "HTML_UNKNOWN_ELEMENT",
    HtmlUnquotedSpecialAttr => "HTML_UNQUOTED_SPECIAL_ATTR",
    HtmlMalformedMarkup => "HTML_MALFORMED_MARKUP",
    HtmlInvalidUtf8 => "HTML_INVALID_UTF8",
    HtmlUnreadable => "HTML_UNREADABLE",
    JsonParseError => "JSON_PARSE_ERROR",
    JsonUnreadable => "JSON_UNREADABLE",
    XmlParseError => "XML_PARSE_ERROR",
    XmlUnknownTag => "XML_UNKNOWN_TAG",
    ReachFailed => "REACH_FAILED",
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One defect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub check: CheckKind,
    pub severity: Severity,
    pub location: Location,
    #[serde(rename = "code")]
    pub machine_code: Code,
    pub message: String,
    /// Further locations involved, e.g. every page referencing a broken URL.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub related: Vec<Location>,
}

impl Finding {
    pub fn new(
        check: CheckKind,
        severity: Severity,
        machine_code: Code,
        location: Location,
        message: impl Into<String>,
    ) -> Self {
        Finding {
            check,
            severity,
            location,
            machine_code,
            message: message.into(),
            related: Vec::new(),
        }
    }

    pub fn error(check: CheckKind, code: Code, location: Location, message: impl Into<String>) -> Self {
        Finding::new(check, Severity::Error, code, location, message)
    }

    pub fn warning(check: CheckKind, code: Code, location: Location, message: impl Into<String>) -> Self {
        Finding::new(check, Severity::Warning, code, location, message)
    }

    pub fn with_related(mut self, related: Vec<Location>) -> Self {
        self.related = related;
        self
    }

    fn sort_key(&self) -> (&str, Option<u32>, &str, Option<u32>, &str, &[Location]) {
        (
            &self.location.source,
            self.location.line,
            self.machine_code.as_str(),
            self.location.column,
            &self.message,
            &self.related,
        )
    }
}

/// Findings plus run metadata. Findings are kept sorted by
/// (location source, line, code) so output never depends on probe order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    findings: Vec<Finding>,
    pub checked: BTreeMap<CheckKind, u64>,
    pub started: Option<DateTime<Utc>>,
    pub finished: Option<DateTime<Utc>>,
    pub tool_version: String,
}

impl Default for Report {
    fn default() -> Self {
        Report {
            findings: Vec::new(),
            checked: BTreeMap::new(),
            started: None,
            finished: None,
            tool_version: crate::VERSION.to_string(),
        }
    }
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    /// An empty report stamped with the current time as its start.
    pub fn started_now() -> Self {
        Report {
            started: Some(Utc::now()),
            ..Report::default()
        }
    }

    pub fn finish(&mut self) {
        self.finished = Some(Utc::now());
        self.sort();
    }

    pub fn findings(&self) -> &[Finding] {
        &self.findings
    }

    pub fn into_findings(self) -> Vec<Finding> {
        self.findings
    }

    pub fn push(&mut self, finding: Finding) {
        self.findings.push(finding);
        self.sort();
    }

    pub fn extend(&mut self, findings: impl IntoIterator<Item = Finding>) {
        self.findings.extend(findings);
        self.sort();
    }

    /// Applies `f` to every finding and restores the ordering invariant.
    pub fn map_findings(&mut self, f: impl FnMut(&mut Finding)) {
        self.findings.iter_mut().for_each(f);
        self.sort();
    }

    pub fn retain(&mut self, f: impl FnMut(&Finding) -> bool) {
        self.findings.retain(f);
    }

    pub fn count(&mut self, kind: CheckKind, n: u64) {
        *self.checked.entry(kind).or_insert(0) += n;
    }

    pub fn checked_count(&self, kind: CheckKind) -> u64 {
        self.checked.get(&kind).copied().unwrap_or(0)
    }

    pub fn error_count(&self) -> usize {
        self.findings.iter().filter(|f| f.severity == Severity::Error).count()
    }

    pub fn warning_count(&self) -> usize {
        self.findings.iter().filter(|f| f.severity == Severity::Warning).count()
    }

    /// Promotes every warning to an error (`--strict`).
    pub fn promote_warnings(&mut self) {
        for f in &mut self.findings {
            f.severity = Severity::Error;
        }
    }

    /// Clears timestamps so two runs can be compared byte for byte.
    pub fn strip_timestamps(&mut self) {
        self.started = None;
        self.finished = None;
    }

    fn sort(&mut self) {
        self.findings.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    }
}

/// Concatenates findings, re-sorts, and sums counts. Timestamps span the
/// earliest start to the latest finish.
pub fn merge_reports(reports: impl IntoIterator<Item = Report>) -> Report {
    let mut merged = Report::new();
    for report in reports {
        merged.findings.extend(report.findings);
        for (kind, n) in report.checked {
            merged.count(kind, n);
        }
        merged.started = match (merged.started, report.started) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        merged.finished = match (merged.finished, report.finished) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
    }
    merged.sort();
    merged
}
