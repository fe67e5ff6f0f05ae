//! HTML structure checks and static link extraction.

mod parser;
mod rules;

use std::collections::BTreeMap;
use std::path::Path;

pub use parser::{
    decode_char_refs, parse_document, Attribute, DocTree, Doctype, Element, ParseError, ParseErrorKind, Quote,
};
pub use rules::{is_known, is_void, HtmlRuleSet, KNOWN_ELEMENTS, VOID_ELEMENTS};

use crate::model::{
    BrokenReason, CheckKind, CheckStatus, Code, Finding, LinkRecord, Location, Report, SkipReason, SourceKind,
};
use crate::url::{classify_scope, normalize_url, NormalizedUrl, UrlError};
use crate::Error;

/// Characters that must not appear in an unquoted attribute value.
const UNQUOTED_SPECIALS: &[char] = &['<', '>', '"'];

fn located(doc: &DocTree, line: u32, column: u32) -> Location {
    doc.source.clone().at(line.min(doc.line_count.max(1)), Some(column))
}

/// Runs every enabled structural rule over `doc`.
pub fn validate_structure(doc: &DocTree, rules: &HtmlRuleSet) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut emit = |code: Code, finding: Finding| {
        if rules.is_enabled(code) {
            findings.push(finding);
        }
    };

    match &doc.doctype {
        None => emit(
            Code::HtmlNoDoctype,
            Finding::error(
                CheckKind::Html,
                Code::HtmlNoDoctype,
                located(doc, 1, 1),
                "missing <!DOCTYPE html>",
            ),
        ),
        Some(dt) if dt.name != "html" => emit(
            Code::HtmlNoDoctype,
            Finding::error(
                CheckKind::Html,
                Code::HtmlNoDoctype,
                located(doc, dt.line, 1),
                format!("doctype `{}` is not <!DOCTYPE html>", dt.name),
            ),
        ),
        Some(_) => {}
    }

    for err in &doc.errors {
        let (code, location, message) = match &err.kind {
            ParseErrorKind::UnclosedTag { name, line, column } => (
                Code::HtmlUnclosedTag,
                located(doc, *line, *column),
                format!("<{name}> is never closed (implicitly closed at line {})", err.line),
            ),
            ParseErrorKind::StrayEndTag { name } => (
                Code::HtmlStrayEndTag,
                located(doc, err.line, err.column),
                format!("end tag </{name}> has no matching open element"),
            ),
            ParseErrorKind::VoidEndTag { name } => (
                Code::HtmlVoidEndTag,
                located(doc, err.line, err.column),
                format!("void element <{name}> must not have an end tag"),
            ),
            ParseErrorKind::InvalidUtf8 => {
                emit(
                    Code::HtmlInvalidUtf8,
                    Finding::warning(
                        CheckKind::Html,
                        Code::HtmlInvalidUtf8,
                        located(doc, err.line, err.column),
                        "invalid UTF-8; bytes replaced with U+FFFD",
                    ),
                );
                continue;
            }
            ParseErrorKind::Malformed(what) => (
                Code::HtmlMalformedMarkup,
                located(doc, err.line, err.column),
                (*what).to_string(),
            ),
        };
        emit(code, Finding::error(CheckKind::Html, code, location, message));
    }

    let mut ids: BTreeMap<&str, Vec<(u32, u32)>> = BTreeMap::new();
    for (index, el) in doc.elements.iter().enumerate() {
        if let Some(id) = el.attr("id").and_then(|a| a.value.as_deref()) {
            if let Some(attr) = el.attr("id") {
                ids.entry(id).or_default().push((attr.line, attr.column));
            }
        }

        let foreign =
            el.name == "svg" || el.name == "math" || doc.ancestors(index).any(|a| a.name == "svg" || a.name == "math");
        if !foreign && !is_known(&el.name) {
            emit(
                Code::HtmlUnknownElement,
                Finding::warning(
                    CheckKind::Html,
                    Code::HtmlUnknownElement,
                    located(doc, el.line, el.column),
                    format!("unknown element <{}>", el.name),
                ),
            );
        }

        for attr in &el.attributes {
            let Some(raw) = &attr.raw_value else { continue };
            if attr.quote == Quote::None {
                if let Some(c) = raw.chars().find(|c| UNQUOTED_SPECIALS.contains(c)) {
                    emit(
                        Code::HtmlUnquotedSpecialAttr,
                        Finding::error(
                            CheckKind::Html,
                            Code::HtmlUnquotedSpecialAttr,
                            located(doc, attr.line, attr.column),
                            format!("unquoted value of `{}` contains `{c}`; quote it", attr.name),
                        ),
                    );
                }
            }
        }
    }

    for (id, positions) in ids {
        if positions.len() < 2 {
            continue;
        }
        let lines: Vec<String> = positions.iter().map(|(l, _)| l.to_string()).collect();
        let (line, column) = positions[1];
        let related = positions
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != 1)
            .map(|(_, &(l, c))| located(doc, l, c))
            .collect();
        emit(
            Code::HtmlDuplicateId,
            Finding::error(
                CheckKind::Html,
                Code::HtmlDuplicateId,
                located(doc, line, column),
                format!("duplicate id \"{id}\" (lines {})", lines.join(", ")),
            )
            .with_related(related),
        );
    }

    findings
}

/// Attributes scanned for links, keyed by element.
pub const LINK_ATTRIBUTES: &[(&str, &str)] = &[
    ("a", "href"),
    ("link", "href"),
    ("area", "href"),
    ("img", "src"),
    ("script", "src"),
    ("iframe", "src"),
    ("source", "src"),
    ("audio", "src"),
    ("video", "src"),
    ("embed", "src"),
    ("track", "src"),
    ("img", "srcset"),
    ("source", "srcset"),
    ("form", "action"),
];

/// A link value that could not become a [`LinkRecord`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnresolvedLink {
    pub raw: String,
    pub origin: Location,
    pub source_kind: SourceKind,
    pub status: CheckStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub links: Vec<LinkRecord>,
    pub unresolved: Vec<UnresolvedLink>,
}

/// Splits a `srcset` value into its candidate URLs.
pub fn srcset_urls(value: &str) -> Vec<&str> {
    value
        .split(',')
        .filter_map(|candidate| candidate.split_whitespace().next())
        .collect()
}

/// Collects every statically present link in `doc`, resolved against `base`
/// (or the document's `<base href>` when it has one). Scope is relative to
/// `base`.
pub fn extract_links(doc: &DocTree, base: &NormalizedUrl) -> Extraction {
    let effective_base = doc
        .iter()
        .find(|e| e.name == "base")
        .and_then(|e| e.attr("href")?.value.as_deref())
        .and_then(|href| base.join(href).ok())
        .unwrap_or_else(|| base.clone());

    let mut out = Extraction::default();
    for el in doc.iter() {
        for attr in &el.attributes {
            if !LINK_ATTRIBUTES
                .iter()
                .any(|&(tag, name)| tag == el.name && name == attr.name)
            {
                continue;
            }
            let Some(value) = attr.value.as_deref() else {
                continue;
            };
            let candidates = if attr.name == "srcset" {
                srcset_urls(value)
            } else {
                vec![value]
            };
            let origin = doc.source.clone().at(attr.line, Some(attr.column));
            for raw in candidates {
                if raw.trim().is_empty() {
                    continue;
                }
                let source_kind = SourceKind::HtmlAttr(attr.name.clone());
                match normalize_url(Some(&effective_base), raw) {
                    Ok(target) => out.links.push(LinkRecord {
                        scope: classify_scope(base, &target),
                        target,
                        origin: origin.clone(),
                        source_kind,
                    }),
                    Err(e) => {
                        let status = match e {
                            UrlError::UnsupportedScheme(_) => CheckStatus::Skipped(SkipReason::SchemeUnsupported),
                            _ => CheckStatus::Broken(BrokenReason::InvalidUrl),
                        };
                        out.unresolved.push(UnresolvedLink {
                            raw: raw.to_string(),
                            origin: origin.clone(),
                            source_kind,
                            status,
                        });
                    }
                }
            }
        }
    }
    out
}

fn is_html_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("html") || e.eq_ignore_ascii_case("htm"))
}

/// Validates every `*.html` / `*.htm` file under `root` (or `root` itself
/// when it is a file).
pub fn check_html_dir(root: &Path, rules: &HtmlRuleSet) -> Result<Report, Error> {
    if !root.exists() {
        return Err(Error::MissingPath(root.to_path_buf()));
    }
    let mut report = Report::started_now();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Walk {
            path: root.to_path_buf(),
            source: e,
        })?;
        let path = entry.path();
        if !entry.file_type().is_file() || !(is_html_file(path) || path == root) {
            continue;
        }
        let source = Location::file(path.display().to_string());
        report.count(CheckKind::Html, 1);
        match std::fs::read(path) {
            Ok(bytes) => {
                let doc = parse_document(&bytes, source);
                report.extend(validate_structure(&doc, rules));
            }
            Err(e) => report.push(Finding::error(
                CheckKind::Html,
                Code::HtmlUnreadable,
                source,
                format!("cannot read file: {e}"),
            )),
        }
    }
    report.finish();
    Ok(report)
}
