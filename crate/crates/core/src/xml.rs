//! Minimal element tree over quick-xml, shared by the three XML readers.
//!
//! Names are stored without namespace prefixes. Text content is dropped;
//! none of the supported formats carry data in text nodes.

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct XmlError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub(crate) struct Element {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Element>,
    pub line: usize,
}

impl Element {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn required_attr(&self, name: &str) -> Result<&str, XmlError> {
        self.attr(name).ok_or_else(|| XmlError {
            line: self.line,
            message: format!("<{}> is missing attribute `{name}`", self.name),
        })
    }

    pub fn children_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Element> + 'a {
        self.children.iter().filter(move |c| c.name == name)
    }

    pub fn error(&self, message: impl Into<String>) -> XmlError {
        XmlError {
            line: self.line,
            message: message.into(),
        }
    }
}

fn local(name: &[u8]) -> String {
    let s = String::from_utf8_lossy(name);
    match s.rsplit_once(':') {
        Some((_, l)) => l.to_string(),
        None => s.into_owned(),
    }
}

/// Maps byte offsets to 1-based line numbers. Offsets are queried in
/// increasing order, so counting resumes where the last query stopped.
struct Lines<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Lines {
            bytes,
            pos: 0,
            line: 1,
        }
    }

    fn at(&mut self, pos: usize) -> usize {
        let pos = pos.min(self.bytes.len());
        if pos < self.pos {
            self.pos = 0;
            self.line = 1;
        }
        self.line += self.bytes[self.pos..pos].iter().filter(|&&b| b == b'\n').count();
        self.pos = pos;
        self.line
    }
}

fn element(start: &BytesStart<'_>, line: usize) -> Result<Element, XmlError> {
    let mut attrs = Vec::new();
    for attr in start.attributes() {
        let attr = attr.map_err(|e| XmlError {
            line,
            message: format!("bad attribute: {e}"),
        })?;
        let key = attr.key.as_ref();
        if key == b"xmlns" || key.starts_with(b"xmlns:") {
            continue;
        }
        let value = attr.unescape_value().map_err(|e| XmlError {
            line,
            message: format!("bad attribute value: {e}"),
        })?;
        attrs.push((local(key), value.into_owned()));
    }
    Ok(Element {
        name: local(start.name().as_ref()),
        attrs,
        children: Vec::new(),
        line,
    })
}

/// Parses a whole document and returns its root element.
pub(crate) fn parse_document(bytes: &[u8]) -> Result<Element, XmlError> {
    let mut reader = Reader::from_reader(bytes);
    reader.config_mut().trim_text(true);
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;
    let mut buf = Vec::new();
    let mut lines = Lines::new(bytes);
    loop {
        let event = reader.read_event_into(&mut buf).map_err(|e| XmlError {
            line: lines.at(reader.buffer_position() as usize),
            message: format!("malformed XML: {e}"),
        })?;
        // Raw '<' cannot occur inside a tag, so the last one before the
        // reader position opens the tag just read.
        let end = (reader.buffer_position() as usize).min(bytes.len());
        let pos = bytes[..end].iter().rposition(|&b| b == b'<').unwrap_or(0);
        let line = lines.at(pos);
        match event {
            Event::Start(start) => stack.push(element(&start, line)?),
            Event::Empty(start) => {
                let el = element(&start, line)?;
                attach(&mut stack, &mut root, el, line)?;
            }
            Event::End(_) => {
                let el = stack.pop().ok_or_else(|| XmlError {
                    line,
                    message: "unexpected closing tag".into(),
                })?;
                attach(&mut stack, &mut root, el, line)?;
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if let Some(open) = stack.last() {
        return Err(open.error(format!("unclosed element <{}>", open.name)));
    }
    root.ok_or_else(|| XmlError {
        line: 1,
        message: "document has no root element".into(),
    })
}

fn attach(
    stack: &mut [Element],
    root: &mut Option<Element>,
    el: Element,
    line: usize,
) -> Result<(), XmlError> {
    match stack.last_mut() {
        Some(parent) => parent.children.push(el),
        None if root.is_none() => *root = Some(el),
        None => {
            return Err(XmlError {
                line,
                message: "multiple root elements".into(),
            })
        }
    }
    Ok(())
}

/// Escapes text for use inside a double-quoted attribute.
pub(crate) fn escape_attr(value: &str) -> std::borrow::Cow<'_, str> {
    quick_xml::escape::escape(value)
}
