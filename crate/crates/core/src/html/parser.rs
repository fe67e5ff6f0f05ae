//! Tolerant HTML tokenizer and tree builder.
//!
//! Never fails: every syntax problem becomes a [`ParseError`] and the tree is
//! repaired. Recovery is deliberately simple:
//!
//! * an end tag closes every open element above its matching start tag
//!   (each one reported unclosed), or is reported stray and dropped;
//! * an end tag for a void element is reported and dropped;
//! * elements still open at end of input are reported unclosed.
//!
//! `script`, `style`, `textarea` and `title` contents are opaque text.

use super::rules::{is_raw_text, is_void};
use crate::model::Location;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quote {
    Double,
    Single,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    /// Lowercased.
    pub name: String,
    /// Value with character references decoded; `None` for bare attributes.
    pub value: Option<String>,
    pub raw_value: Option<String>,
    pub quote: Quote,
    pub line: u32,
    pub column: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    /// Lowercased.
    pub name: String,
    pub attributes: Vec<Attribute>,
    pub line: u32,
    pub column: u32,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

impl Element {
    pub fn attr(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    /// Closed implicitly (by an outer end tag or end of input).
    UnclosedTag {
        name: String,
        line: u32,
        column: u32,
    },
    StrayEndTag {
        name: String,
    },
    VoidEndTag {
        name: String,
    },
    InvalidUtf8,
    Malformed(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Where the problem was detected.
    pub line: u32,
    pub column: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Doctype {
    pub name: String,
    pub line: u32,
}

/// Element tree plus the errors found while building it. Elements are stored
/// in document order; `roots` are the top-level elements.
#[derive(Debug, Clone)]
pub struct DocTree {
    pub source: Location,
    pub elements: Vec<Element>,
    pub roots: Vec<usize>,
    pub doctype: Option<Doctype>,
    pub errors: Vec<ParseError>,
    pub line_count: u32,
}

impl DocTree {
    /// Elements in document order.
    pub fn iter(&self) -> impl Iterator<Item = &Element> {
        self.elements.iter()
    }

    pub fn ancestors(&self, index: usize) -> impl Iterator<Item = &Element> {
        std::iter::successors(self.elements[index].parent, |&i| self.elements[i].parent).map(|i| &self.elements[i])
    }
}

/// Parses `bytes` as UTF-8 HTML. Invalid sequences are replaced and reported.
pub fn parse_document(bytes: &[u8], source: Location) -> DocTree {
    let mut errors = Vec::new();
    let text = match std::str::from_utf8(bytes) {
        Ok(s) => std::borrow::Cow::Borrowed(s),
        Err(e) => {
            let valid = &bytes[..e.valid_up_to()];
            let (line, column) = position_after(std::str::from_utf8(valid).unwrap_or(""));
            errors.push(ParseError {
                kind: ParseErrorKind::InvalidUtf8,
                line,
                column,
            });
            String::from_utf8_lossy(bytes)
        }
    };
    let mut builder = TreeBuilder {
        cursor: Cursor::new(&text),
        elements: Vec::new(),
        roots: Vec::new(),
        stack: Vec::new(),
        doctype: None,
        errors,
    };
    builder.run();
    let line_count = text.lines().count().max(1) as u32;
    DocTree {
        source,
        elements: builder.elements,
        roots: builder.roots,
        doctype: builder.doctype,
        errors: builder.errors,
        line_count,
    }
}

fn position_after(s: &str) -> (u32, u32) {
    let line = 1 + s.matches('\n').count() as u32;
    let column = 1 + s.rsplit('\n').next().map_or(0, |l| l.chars().count()) as u32;
    (line, column)
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    line: u32,
    column: u32,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor {
            text,
            pos: 0,
            line: 1,
            column: 1,
        }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.text.len()
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_nth(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn advance_by(&mut self, bytes: usize) {
        let target = (self.pos + bytes).min(self.text.len());
        while self.pos < target {
            self.bump();
        }
    }

    fn starts_with_ci(&self, prefix: &str) -> bool {
        let rest = self.rest().as_bytes();
        rest.len() >= prefix.len() && rest[..prefix.len()].eq_ignore_ascii_case(prefix.as_bytes())
    }

    fn skip_whitespace(&mut self) {
        while self.peek().is_some_and(|c| c.is_ascii_whitespace()) {
            self.bump();
        }
    }

    /// Consumes up to and including `needle`. Returns false (having consumed
    /// everything) when it never appears.
    fn skip_past(&mut self, needle: &str) -> bool {
        match self.rest().find(needle) {
            Some(i) => {
                self.advance_by(i + needle.len());
                true
            }
            None => {
                self.advance_by(self.rest().len());
                false
            }
        }
    }
}

struct StartTag {
    name: String,
    attributes: Vec<Attribute>,
    self_closing: bool,
    line: u32,
    column: u32,
}

struct TreeBuilder<'a> {
    cursor: Cursor<'a>,
    elements: Vec<Element>,
    roots: Vec<usize>,
    stack: Vec<usize>,
    doctype: Option<Doctype>,
    errors: Vec<ParseError>,
}

impl TreeBuilder<'_> {
    fn error(&mut self, kind: ParseErrorKind, line: u32, column: u32) {
        self.errors.push(ParseError { kind, line, column });
    }

    fn run(&mut self) {
        while !self.cursor.at_end() {
            match self.cursor.rest().find('<') {
                Some(0) => self.markup(),
                Some(i) => self.cursor.advance_by(i),
                None => self.cursor.advance_by(self.cursor.rest().len()),
            }
        }
        let (line, column) = (self.cursor.line, self.cursor.column);
        while let Some(open) = self.stack.pop() {
            let el = &self.elements[open];
            let kind = ParseErrorKind::UnclosedTag {
                name: el.name.clone(),
                line: el.line,
                column: el.column,
            };
            self.error(kind, line, column);
        }
    }

    /// Cursor is on `<`.
    fn markup(&mut self) {
        let (line, column) = (self.cursor.line, self.cursor.column);
        if self.cursor.starts_with_ci("<!--") {
            self.cursor.advance_by(4);
            if !self.cursor.skip_past("-->") {
                self.error(ParseErrorKind::Malformed("unterminated comment"), line, column);
            }
        } else if self.cursor.starts_with_ci("<!doctype") {
            self.cursor.advance_by(9);
            self.doctype_token(line, column);
        } else if self.cursor.starts_with_ci("<!") || self.cursor.starts_with_ci("<?") {
            self.cursor.advance_by(2);
            if !self.cursor.skip_past(">") {
                self.error(
                    ParseErrorKind::Malformed("unterminated markup declaration"),
                    line,
                    column,
                );
            }
        } else if self.cursor.starts_with_ci("</") {
            match self.cursor.peek_nth(2) {
                Some(c) if c.is_ascii_alphabetic() => {
                    self.cursor.advance_by(2);
                    self.end_tag(line, column);
                }
                Some('>') => {
                    self.cursor.advance_by(3);
                    self.error(ParseErrorKind::Malformed("empty end tag"), line, column);
                }
                _ => {
                    self.cursor.advance_by(2);
                    self.error(ParseErrorKind::Malformed("invalid end tag"), line, column);
                    self.cursor.skip_past(">");
                }
            }
        } else if self.cursor.peek_nth(1).is_some_and(|c| c.is_ascii_alphabetic()) {
            self.cursor.bump();
            if let Some(tag) = self.start_tag(line, column) {
                self.insert(tag);
            }
        } else {
            // A lone '<' in text.
            self.cursor.bump();
        }
    }

    fn doctype_token(&mut self, line: u32, column: u32) {
        self.cursor.skip_whitespace();
        let start = self.cursor.pos;
        while self.cursor.peek().is_some_and(|c| !c.is_ascii_whitespace() && c != '>') {
            self.cursor.bump();
        }
        let name = self.cursor.text[start..self.cursor.pos].to_ascii_lowercase();
        if !self.cursor.skip_past(">") {
            self.error(ParseErrorKind::Malformed("unterminated doctype"), line, column);
        }
        if !self.elements.is_empty() || self.doctype.is_some() {
            self.error(ParseErrorKind::Malformed("misplaced doctype"), line, column);
            return;
        }
        self.doctype = Some(Doctype { name, line });
    }

    fn tag_name(&mut self) -> String {
        let start = self.cursor.pos;
        while self
            .cursor
            .peek()
            .is_some_and(|c| !c.is_ascii_whitespace() && c != '/' && c != '>')
        {
            self.cursor.bump();
        }
        self.cursor.text[start..self.cursor.pos].to_ascii_lowercase()
    }

    /// Cursor is just past `<`.
    fn start_tag(&mut self, line: u32, column: u32) -> Option<StartTag> {
        let name = self.tag_name();
        let mut attributes: Vec<Attribute> = Vec::new();
        let mut self_closing = false;
        loop {
            self.cursor.skip_whitespace();
            match self.cursor.peek() {
                None => {
                    self.error(ParseErrorKind::Malformed("end of input inside tag"), line, column);
                    return None;
                }
                Some('>') => {
                    self.cursor.bump();
                    break;
                }
                Some('/') => {
                    self.cursor.bump();
                    if self.cursor.peek() == Some('>') {
                        self.cursor.bump();
                        self_closing = true;
                        break;
                    }
                }
                Some(_) => {
                    let attr = self.attribute()?;
                    if attributes.iter().any(|a| a.name == attr.name) {
                        self.error(ParseErrorKind::Malformed("duplicate attribute"), attr.line, attr.column);
                    } else {
                        attributes.push(attr);
                    }
                }
            }
        }
        Some(StartTag {
            name,
            attributes,
            self_closing,
            line,
            column,
        })
    }

    fn attribute(&mut self) -> Option<Attribute> {
        let (line, column) = (self.cursor.line, self.cursor.column);
        let start = self.cursor.pos;
        // A leading '=' belongs to the name.
        if self.cursor.peek() == Some('=') {
            self.cursor.bump();
        }
        while self
            .cursor
            .peek()
            .is_some_and(|c| !c.is_ascii_whitespace() && !matches!(c, '/' | '>' | '='))
        {
            self.cursor.bump();
        }
        let name = self.cursor.text[start..self.cursor.pos].to_ascii_lowercase();

        let save = (self.cursor.pos, self.cursor.line, self.cursor.column);
        self.cursor.skip_whitespace();
        if self.cursor.peek() != Some('=') {
            (self.cursor.pos, self.cursor.line, self.cursor.column) = save;
            return Some(Attribute {
                name,
                value: None,
                raw_value: None,
                quote: Quote::None,
                line,
                column,
            });
        }
        self.cursor.bump();
        self.cursor.skip_whitespace();

        let (raw, quote) = match self.cursor.peek() {
            Some(q @ ('"' | '\'')) => {
                self.cursor.bump();
                let start = self.cursor.pos;
                match self.cursor.rest().find(q) {
                    Some(i) => {
                        self.cursor.advance_by(i);
                        let raw = self.cursor.text[start..self.cursor.pos].to_string();
                        self.cursor.bump();
                        (raw, if q == '"' { Quote::Double } else { Quote::Single })
                    }
                    None => {
                        self.cursor.advance_by(self.cursor.rest().len());
                        self.error(ParseErrorKind::Malformed("unterminated attribute value"), line, column);
                        return None;
                    }
                }
            }
            _ => {
                let start = self.cursor.pos;
                while self.cursor.peek().is_some_and(|c| !c.is_ascii_whitespace() && c != '>') {
                    self.cursor.bump();
                }
                (self.cursor.text[start..self.cursor.pos].to_string(), Quote::None)
            }
        };
        Some(Attribute {
            name,
            value: Some(decode_char_refs(&raw)),
            raw_value: Some(raw),
            quote,
            line,
            column,
        })
    }

    /// Cursor is just past `</`.
    fn end_tag(&mut self, line: u32, column: u32) {
        let name = self.tag_name();
        if !self.cursor.skip_past(">") {
            self.error(ParseErrorKind::Malformed("end of input inside end tag"), line, column);
        }
        if is_void(&name) {
            self.error(ParseErrorKind::VoidEndTag { name }, line, column);
            return;
        }
        let Some(depth) = self.stack.iter().rposition(|&i| self.elements[i].name == name) else {
            self.error(ParseErrorKind::StrayEndTag { name }, line, column);
            return;
        };
        while self.stack.len() > depth + 1 {
            let open = self.stack.pop().expect("stack deeper than match");
            let el = &self.elements[open];
            let kind = ParseErrorKind::UnclosedTag {
                name: el.name.clone(),
                line: el.line,
                column: el.column,
            };
            self.error(kind, line, column);
        }
        self.stack.pop();
    }

    fn in_foreign_content(&self) -> bool {
        self.stack
            .iter()
            .any(|&i| matches!(self.elements[i].name.as_str(), "svg" | "math"))
    }

    fn insert(&mut self, tag: StartTag) {
        let index = self.elements.len();
        let parent = self.stack.last().copied();
        let foreign = self.in_foreign_content() || tag.name == "svg" || tag.name == "math";
        self.elements.push(Element {
            name: tag.name.clone(),
            attributes: tag.attributes,
            line: tag.line,
            column: tag.column,
            parent,
            children: Vec::new(),
        });
        match parent {
            Some(p) => self.elements[p].children.push(index),
            None => self.roots.push(index),
        }

        // A trailing slash only closes elements in SVG/MathML; on HTML
        // elements it is ignored.
        if is_void(&tag.name) || (tag.self_closing && foreign) {
            return;
        }
        self.stack.push(index);
        if is_raw_text(&tag.name) {
            self.raw_text(index);
        }
    }

    /// The element is on top of the stack; its matching end tag pops it.
    fn raw_text(&mut self, index: usize) {
        let name = self.elements[index].name.clone();
        let closing = format!("</{name}");
        loop {
            let rest = self.cursor.rest().as_bytes();
            let found = rest
                .windows(closing.len())
                .position(|w| w.eq_ignore_ascii_case(closing.as_bytes()));
            match found {
                Some(i) => {
                    let after = rest.get(i + closing.len()).copied();
                    self.cursor.advance_by(i);
                    if matches!(after, Some(b'>' | b'/' | b' ' | b'\t' | b'\n' | b'\r' | b'\x0c') | None) {
                        let (line, column) = (self.cursor.line, self.cursor.column);
                        self.cursor.advance_by(2);
                        self.end_tag(line, column);
                        return;
                    }
                    self.cursor.advance_by(closing.len());
                }
                None => {
                    self.cursor.advance_by(self.cursor.rest().len());
                    self.stack.pop();
                    let el = &self.elements[index];
                    let kind = ParseErrorKind::UnclosedTag {
                        name,
                        line: el.line,
                        column: el.column,
                    };
                    self.error(kind, self.cursor.line, self.cursor.column);
                    return;
                }
            }
        }
    }
}

/// Decodes the character references that matter inside URLs.
pub fn decode_char_refs(raw: &str) -> String {
    if !raw.contains('&') {
        return raw.to_string();
    }
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let Some(semi) = rest[1..].find(';').map(|i| i + 1).filter(|&i| i <= 10) else {
            out.push('&');
            rest = &rest[1..];
            continue;
        };
        let entity = &rest[1..semi];
        let decoded = match entity {
            "amp" => Some('&'),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "quot" => Some('"'),
            "apos" => Some('\''),
            "nbsp" => Some('\u{a0}'),
            _ => entity
                .strip_prefix('#')
                .and_then(|num| match num.strip_prefix(['x', 'X']) {
                    Some(hex) => u32::from_str_radix(hex, 16).ok(),
                    None => num.parse().ok(),
                })
                .and_then(char::from_u32),
        };
        match decoded {
            Some(c) => {
                out.push(c);
                rest = &rest[semi + 1..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> DocTree {
        parse_document(s.as_bytes(), Location::file("t.html"))
    }

    #[test]
    fn single_paragraph() {
        let doc = parse("<p>hi</p>");
        assert_eq!(doc.elements.len(), 1);
        assert_eq!(doc.elements[0].name, "p");
        assert!(doc.errors.is_empty());
    }

    #[test]
    fn unclosed_paragraph_closed_at_eof() {
        let doc = parse("<p>hi");
        assert_eq!(doc.elements.len(), 1);
        assert_eq!(doc.errors.len(), 1);
        let err = &doc.errors[0];
        assert_eq!(
            err.kind,
            ParseErrorKind::UnclosedTag {
                name: "p".into(),
                line: 1,
                column: 1
            }
        );
        assert_eq!((err.line, err.column), (1, 6));
    }

    #[test]
    fn void_end_tag() {
        let doc = parse("<br></br>");
        assert_eq!(doc.elements.len(), 1);
        assert_eq!(doc.elements[0].name, "br");
        assert_eq!(
            doc.errors,
            vec![ParseError {
                kind: ParseErrorKind::VoidEndTag { name: "br".into() },
                line: 1,
                column: 5
            }]
        );
    }

    #[test]
    fn end_tag_closes_intermediate_elements() {
        let doc = parse("<div>\n<span>\n</div>");
        assert_eq!(doc.errors.len(), 1);
        assert!(matches!(
            &doc.errors[0].kind,
            ParseErrorKind::UnclosedTag { name, line: 2, .. } if name == "span"
        ));
        assert_eq!(doc.elements[1].parent, Some(0));
    }

    #[test]
    fn stray_end_tag_dropped() {
        let doc = parse("<div></span></div>");
        assert_eq!(doc.errors.len(), 1);
        assert!(matches!(&doc.errors[0].kind, ParseErrorKind::StrayEndTag { name } if name == "span"));
    }

    #[test]
    fn script_content_is_opaque() {
        let doc = parse("<script>document.write('<a href=\"x\">'); if (a < b) {}</script><p></p>");
        let names: Vec<_> = doc.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["script", "p"]);
        assert!(doc.errors.is_empty(), "{:?}", doc.errors);
    }

    #[test]
    fn unterminated_script() {
        let doc = parse("<script>var x;");
        assert_eq!(doc.errors.len(), 1);
        assert!(matches!(&doc.errors[0].kind, ParseErrorKind::UnclosedTag { name, .. } if name == "script"));
    }

    #[test]
    fn attributes_and_positions() {
        let doc = parse("<!DOCTYPE html>\n<a\n  HREF=\"a&amp;b\" data-x=y checked>t</a>");
        assert_eq!(doc.doctype.as_ref().unwrap().name, "html");
        let a = &doc.elements[0];
        assert_eq!((a.line, a.column), (2, 1));
        let href = a.attr("href").unwrap();
        assert_eq!(href.value.as_deref(), Some("a&b"));
        assert_eq!(href.quote, Quote::Double);
        assert_eq!((href.line, href.column), (3, 3));
        let x = a.attr("data-x").unwrap();
        assert_eq!(x.quote, Quote::None);
        assert_eq!(x.value.as_deref(), Some("y"));
        assert_eq!(a.attr("checked").unwrap().value, None);
    }

    #[test]
    fn comments_and_doctype() {
        let doc = parse("<!-- <p> --><!doctype HTML><html></html>");
        assert_eq!(doc.doctype.as_ref().unwrap().name, "html");
        assert_eq!(doc.elements.len(), 1);
        assert!(doc.errors.is_empty());
    }

    #[test]
    fn svg_self_closing_elements() {
        let doc = parse("<svg><path d=\"M0\"/><circle/></svg><div/>");
        assert_eq!(doc.errors.len(), 1);
        assert!(matches!(&doc.errors[0].kind, ParseErrorKind::UnclosedTag { name, .. } if name == "div"));
    }

    #[test]
    fn invalid_utf8_reported() {
        let doc = parse_document(b"<p>\n\xff</p>", Location::file("t.html"));
        assert_eq!(doc.errors.len(), 1);
        assert_eq!(doc.errors[0].kind, ParseErrorKind::InvalidUtf8);
        assert_eq!(doc.errors[0].line, 2);
    }

    #[test]
    fn char_refs() {
        assert_eq!(decode_char_refs("a&amp;b&#47;c&#x2F;&bogus;&"), "a&b/c/&bogus;&");
    }
}
