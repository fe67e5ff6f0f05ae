//! User/main XML configuration subset checks.
//!
//! A main configuration file defines the permitted element paths; every user
//! file may only use paths that also occur in the main file. Paths run from
//! the document root (`["jetscape", "outputFile"]`), so a valid tag name under
//! the wrong parent is still rejected. Attributes, text, element order and
//! multiplicity are ignored. Namespace prefixes are part of the name.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use quick_xml::events::Event;
use quick_xml::Reader;

use crate::model::{CheckKind, Code, Finding, Location, Report};
use crate::walk::find_files;
use crate::Error;

pub const DEFAULT_USER_PATTERN: &str = "*user*.xml";

/// Element names from the root down to one element.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TagPath(Vec<String>);

impl TagPath {
    pub fn new(names: Vec<String>) -> Self {
        assert!(!names.is_empty(), "tag paths are never empty");
        TagPath(names)
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn leaf(&self) -> &str {
        self.0.last().expect("non-empty")
    }

    /// Every proper ancestor path, shortest first.
    pub fn prefixes(&self) -> impl Iterator<Item = TagPath> + '_ {
        (1..self.0.len()).map(|n| TagPath(self.0[..n].to_vec()))
    }
}

impl fmt::Display for TagPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("/"))
    }
}

impl<S: Into<String>> FromIterator<S> for TagPath {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TagPath::new(iter.into_iter().map(Into::into).collect())
    }
}

/// The set of paths permitted by a main file. Prefix-closed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagUniverse {
    paths: BTreeSet<TagPath>,
    source: PathBuf,
}

impl TagUniverse {
    pub fn from_paths(paths: impl IntoIterator<Item = TagPath>, source: impl Into<PathBuf>) -> Self {
        let mut set = BTreeSet::new();
        for path in paths {
            set.extend(path.prefixes());
            set.insert(path);
        }
        TagUniverse {
            paths: set,
            source: source.into(),
        }
    }

    pub fn contains(&self, path: &TagPath) -> bool {
        self.paths.contains(path)
    }

    pub fn paths(&self) -> &BTreeSet<TagPath> {
        &self.paths
    }

    pub fn source(&self) -> &Path {
        &self.source
    }

    pub fn is_prefix_closed(&self) -> bool {
        self.paths
            .iter()
            .all(|p| p.prefixes().all(|prefix| self.paths.contains(&prefix)))
    }

    fn knows_name(&self, name: &str) -> bool {
        self.paths.iter().any(|p| p.leaf() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XmlError {
    pub line: u32,
    pub column: u32,
    pub message: String,
}

impl fmt::Display for XmlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at line {} column {}", self.message, self.line, self.column)
    }
}

/// One element occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementAt {
    pub path: TagPath,
    pub line: u32,
    pub column: u32,
}

struct LineIndex(Vec<usize>);

impl LineIndex {
    fn new(text: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(text.match_indices('\n').map(|(i, _)| i + 1));
        LineIndex(starts)
    }

    fn position(&self, text: &str, offset: usize) -> (u32, u32) {
        let offset = offset.min(text.len());
        let line = self.0.partition_point(|&s| s <= offset);
        let start = self.0[line - 1];
        let column = text.get(start..offset).map_or(offset - start, |s| s.chars().count()) + 1;
        (line as u32, column as u32)
    }
}

/// Every element of a well-formed document, in document order.
pub fn element_paths(text: &str) -> Result<Vec<ElementAt>, XmlError> {
    let lines = LineIndex::new(text);
    let error_at = |offset: usize, message: String| {
        let (line, column) = lines.position(text, offset);
        XmlError { line, column, message }
    };

    let mut reader = Reader::from_str(text);
    reader.config_mut().check_end_names = true;
    let mut stack: Vec<(String, usize)> = Vec::new();
    let mut out = Vec::new();
    let mut roots = 0usize;

    loop {
        let start = reader.buffer_position() as usize;
        let event = reader
            .read_event()
            .map_err(|e| error_at(reader.error_position() as usize, e.to_string()))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                if stack.is_empty() {
                    roots += 1;
                    if roots > 1 {
                        return Err(error_at(start, "more than one root element".into()));
                    }
                }
                for attr in e.attributes().with_checks(true) {
                    attr.map_err(|err| error_at(start, format!("malformed attribute: {err}")))?;
                }
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                let mut names: Vec<String> = stack.iter().map(|(n, _)| n.clone()).collect();
                names.push(name.clone());
                let (line, column) = lines.position(text, start);
                out.push(ElementAt {
                    path: TagPath::new(names),
                    line,
                    column,
                });
                if matches!(event, Event::Start(_)) {
                    stack.push((name, start));
                }
            }
            Event::End(_) => {
                stack.pop();
            }
            Event::Text(ref t) => {
                let raw = String::from_utf8_lossy(t.as_ref());
                if stack.is_empty() && !raw.trim().is_empty() {
                    return Err(error_at(start, "text outside the root element".into()));
                }
            }
            Event::CData(_) if stack.is_empty() => {
                return Err(error_at(start, "CDATA outside the root element".into()));
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if let Some((name, offset)) = stack.last() {
        return Err(error_at(offset.to_owned(), format!("element <{name}> is never closed")));
    }
    if roots == 0 {
        return Err(error_at(text.len(), "no root element".into()));
    }
    Ok(out)
}

fn read_xml(file: &Path) -> Result<String, XmlError> {
    std::fs::read(file)
        .map_err(|e| XmlError {
            line: 1,
            column: 1,
            message: format!("cannot read file: {e}"),
        })
        .and_then(|bytes| {
            String::from_utf8(bytes).map_err(|_| XmlError {
                line: 1,
                column: 1,
                message: "file is not valid UTF-8".into(),
            })
        })
}

/// Builds the universe of element paths present in `xml_file`.
pub fn collect_tag_paths(xml_file: &Path) -> Result<TagUniverse, XmlError> {
    let text = read_xml(xml_file)?;
    let elements = element_paths(&text)?;
    let universe = TagUniverse::from_paths(elements.into_iter().map(|e| e.path), xml_file);
    debug_assert!(universe.is_prefix_closed());
    Ok(universe)
}

fn parse_error_finding(file: &Path, err: &XmlError) -> Finding {
    Finding::error(
        CheckKind::Xml,
        Code::XmlParseError,
        Location::file(file.display().to_string()).at(err.line, Some(err.column)),
        format!("malformed XML: {}", err.message),
    )
}

/// One `XML_UNKNOWN_TAG` per distinct path of `elements` missing from the
/// universe, at its first occurrence.
pub fn unknown_tag_findings(file: &Path, elements: &[ElementAt], universe: &TagUniverse) -> Vec<Finding> {
    let mut unknown: BTreeMap<&TagPath, Vec<&ElementAt>> = BTreeMap::new();
    for el in elements {
        if !universe.contains(&el.path) {
            unknown.entry(&el.path).or_default().push(el);
        }
    }
    let at = |el: &ElementAt| Location::file(file.display().to_string()).at(el.line, Some(el.column));
    unknown
        .into_iter()
        .map(|(path, occurrences)| {
            let leaf = path.leaf();
            let hint = if universe.knows_name(leaf) {
                format!("<{leaf}> is not allowed at this position")
            } else {
                format!("<{leaf}> does not appear in the main file")
            };
            Finding::error(
                CheckKind::Xml,
                Code::XmlUnknownTag,
                at(occurrences[0]),
                format!("unknown tag path {path}: {hint} ({})", universe.source().display()),
            )
            .with_related(occurrences[1..].iter().map(|e| at(e)).collect())
        })
        .collect()
}

/// Findings for one user file; empty when every element path is permitted.
pub fn validate_user_file(user_file: &Path, universe: &TagUniverse) -> Vec<Finding> {
    let elements = read_xml(user_file).and_then(|text| element_paths(&text));
    match elements {
        Ok(elements) => unknown_tag_findings(user_file, &elements, universe),
        Err(err) => vec![parse_error_finding(user_file, &err)],
    }
}

/// Files under `root` whose name matches the glob `pattern`, in path order.
pub fn find_user_files(root: &Path, pattern: &str) -> Result<Vec<PathBuf>, Error> {
    let glob = glob::Pattern::new(pattern).map_err(|e| Error::Pattern(pattern.to_string(), e.to_string()))?;
    let walked = find_files(root, |p| {
        p.file_name().and_then(|n| n.to_str()).is_some_and(|n| glob.matches(n))
    })?;
    Ok(walked.files)
}

/// Outcome of [`check_xml_tree_detailed`].
#[derive(Debug, Clone)]
pub struct XmlTreeCheck {
    pub report: Report,
    pub user_files: Vec<PathBuf>,
    /// How many times the main file was parsed into a universe.
    pub universe_builds: usize,
}

/// Validates every user file under `roots` against `main`.
pub fn check_xml_tree(main: &Path, roots: &[PathBuf], pattern: &str) -> Result<Report, Error> {
    check_xml_tree_detailed(main, roots, pattern).map(|c| c.report)
}

pub fn check_xml_tree_detailed(main: &Path, roots: &[PathBuf], pattern: &str) -> Result<XmlTreeCheck, Error> {
    let mut report = Report::started_now();
    let universe = collect_tag_paths(main).map_err(|e| Error::MainXml {
        path: main.to_path_buf(),
        reason: e.to_string(),
    })?;
    let universe_builds = 1;

    let mut user_files = Vec::new();
    for root in roots {
        user_files.extend(find_user_files(root, pattern)?);
    }
    user_files.sort();
    user_files.dedup();

    for file in &user_files {
        report.count(CheckKind::Xml, 1);
        report.extend(validate_user_file(file, &universe));
    }
    report.finish();
    Ok(XmlTreeCheck {
        report,
        user_files,
        universe_builds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paths(text: &str) -> BTreeSet<String> {
        let universe = TagUniverse::from_paths(element_paths(text).unwrap().into_iter().map(|e| e.path), "main.xml");
        universe.paths().iter().map(ToString::to_string).collect()
    }

    #[test]
    fn collects_every_path() {
        assert_eq!(
            paths("<a><b/><c><d/></c></a>"),
            ["a", "a/b", "a/c", "a/c/d"].map(String::from).into()
        );
    }

    #[test]
    fn multiplicity_collapses() {
        assert_eq!(paths("<a><b/><b/></a>"), ["a", "a/b"].map(String::from).into());
    }

    #[test]
    fn malformed_documents() {
        for bad in [
            "",
            "   ",
            "<a>",
            "<a></b>",
            "<a/><b/>",
            "text<a/>",
            "<a x=1/>",
            "<a x='1' x='2'/>",
        ] {
            assert!(element_paths(bad).is_err(), "{bad:?} should not parse");
        }
    }

    #[test]
    fn positions_are_reported() {
        let els = element_paths("<?xml version=\"1.0\"?>\n<a>\n  <b/>\n</a>").unwrap();
        assert_eq!((els[1].line, els[1].column), (3, 3));
        let err = element_paths("<a>\n<b>\n</a>").unwrap_err();
        assert_eq!(err.line, 3);
    }

    #[test]
    fn prefixes_are_literal() {
        assert_eq!(
            paths("<x:a xmlns:x=\"urn:x\"><x:b/><y:b/></x:a>"),
            ["x:a", "x:a/x:b", "x:a/y:b"].map(String::from).into()
        );
    }

    #[test]
    fn universe_is_prefix_closed() {
        let u = TagUniverse::from_paths([TagPath::from_iter(["a", "b", "c"])], "m");
        assert!(u.is_prefix_closed());
        assert_eq!(u.paths().len(), 3);
    }

    #[test]
    fn path_semantics_reject_wrong_parent() {
        let main = element_paths("<r><p><x/></p><q/></r>").unwrap();
        let universe = TagUniverse::from_paths(main.into_iter().map(|e| e.path), "main.xml");
        let user = element_paths("<r><q><x/></q></r>").unwrap();
        let findings = unknown_tag_findings(Path::new("user.xml"), &user, &universe);
        assert_eq!(findings.len(), 1);
        assert!(findings[0].message.contains("r/q/x"));
        assert!(findings[0].message.contains("not allowed at this position"));
    }
}
