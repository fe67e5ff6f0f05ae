//! Rendering of reports and the exit-code contract.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{CheckKind, Finding, Report, Severity, SourceLocatorKind};

/// Version of the JSON report layout described in `docs/report.schema.json`.
pub const JSON_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
    Github,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(OutputFormat::Text),
            "json" => Ok(OutputFormat::Json),
            "github" => Ok(OutputFormat::Github),
            other => Err(format!("unknown format `{other}` (expected text, json or github)")),
        }
    }
}

/// 0 when the report holds no error-severity finding, 1 otherwise.
pub fn exit_code(report: &Report) -> i32 {
    i32::from(report.error_count() > 0)
}

pub fn render(report: &Report, format: OutputFormat) -> String {
    match format {
        OutputFormat::Text => render_text(report),
        OutputFormat::Json => render_json(report),
        OutputFormat::Github => render_github(report),
    }
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("{n} {word}")
    } else {
        format!("{n} {word}s")
    }
}

fn summary(report: &Report) -> String {
    format!(
        "{}, {}",
        plural(report.error_count(), "error"),
        plural(report.warning_count(), "warning")
    )
}

fn render_text(report: &Report) -> String {
    let mut out = String::new();
    for f in report.findings() {
        let _ = write!(
            out,
            "{} {} {} {}",
            f.severity.as_str().to_ascii_uppercase(),
            f.machine_code,
            f.location,
            f.message
        );
        for related in &f.related {
            let _ = write!(out, "\n    also at {related}");
        }
        out.push('\n');
    }
    out.push_str(&summary(report));
    out.push('\n');
    out
}

#[derive(Serialize)]
struct JsonCounts {
    errors: usize,
    warnings: usize,
    checked: BTreeMap<CheckKind, u64>,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    schema_version: u32,
    tool: &'static str,
    tool_version: &'a str,
    started: Option<String>,
    finished: Option<String>,
    counts: JsonCounts,
    findings: &'a [Finding],
}

fn timestamp(t: Option<DateTime<Utc>>) -> Option<String> {
    t.map(|t| t.to_rfc3339_opts(SecondsFormat::Millis, true))
}

fn render_json(report: &Report) -> String {
    let doc = JsonReport {
        schema_version: JSON_SCHEMA_VERSION,
        tool: "sitecheck",
        tool_version: &report.tool_version,
        started: timestamp(report.started),
        finished: timestamp(report.finished),
        counts: JsonCounts {
            errors: report.error_count(),
            warnings: report.warning_count(),
            checked: report.checked.clone(),
        },
        findings: report.findings(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("report serializes");
    out.push('\n');
    out
}

/// Escapes an annotation message.
pub fn escape_data(s: &str) -> String {
    s.replace('%', "%25").replace('\r', "%0D").replace('\n', "%0A")
}

/// Escapes an annotation property value.
pub fn escape_property(s: &str) -> String {
    escape_data(s).replace(':', "%3A").replace(',', "%2C")
}

fn github_line(f: &Finding) -> String {
    let command = match f.severity {
        Severity::Error => "error",
        Severity::Warning => "warning",
    };
    let loc = &f.location;
    if loc.kind == SourceLocatorKind::File {
        let mut props = format!("file={}", escape_property(&loc.source));
        if let Some(line) = loc.line {
            let _ = write!(props, ",line={line}");
        }
        format!("::{command} {props}::{}: {}", f.machine_code, escape_data(&f.message))
    } else {
        // No file to annotate; keep the page URL or argument in the text.
        format!(
            "::{command}::{}: {}",
            f.machine_code,
            escape_data(&format!("{} ({loc})", f.message))
        )
    }
}

fn render_github(report: &Report) -> String {
    let mut out = String::new();
    for f in report.findings() {
        out.push_str(&github_line(f));
        out.push('\n');
    }
    out
}
