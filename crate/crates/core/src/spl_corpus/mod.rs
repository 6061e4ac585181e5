//! Structured Product Label documents: parsing, section filtering and
//! flattening to plain text.

mod dedup;
mod ratcliff;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dedup::{adverse_digest, deduplicate, DedupReport, DEFAULT_THRESHOLD};
pub use ratcliff::{matched_characters, ratcliff_ratio};

/// LOINC code of the "Adverse Reactions" section.
pub const ADVERSE_REACTIONS_LOINC: &str = "34084-4";

const DEFAULT_BLACKLIST: &str = include_str!("../../data/loinc_blacklist.txt");

#[derive(Debug, Error)]
pub enum SplError {
    #[error("XML error at byte {position}: {message}")]
    Xml { position: u64, message: String },
    #[error("document has no setId")]
    MissingSetId,
    #[error("line {line}: {message}")]
    Mapping { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SplError> = std::result::Result<T, E>;

pub type Table = Vec<Vec<String>>;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Section {
    pub loinc_code: String,
    pub title: String,
    pub paragraphs: Vec<String>,
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplDocument {
    pub set_id: String,
    #[serde(default)]
    pub product_rxcuis: Vec<String>,
    pub sections: Vec<Section>,
}

/// The bundled blacklist of non-clinical section codes.
pub fn default_blacklist() -> BTreeSet<String> {
    parse_code_list(DEFAULT_BLACKLIST)
}

/// One code per line; blank lines and `#` comments ignored.
pub fn parse_code_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub fn adverse_codes() -> BTreeSet<String> {
    BTreeSet::from([ADVERSE_REACTIONS_LOINC.to_string()])
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

enum CaptureKind {
    Title,
    Paragraph,
    Cell,
}

struct Capture {
    kind: CaptureKind,
    depth: usize,
    section: usize,
    buf: String,
}

#[derive(Default)]
struct Builder {
    sections: Vec<Section>,
    section_stack: Vec<(usize, usize)>,
    // (section index, depth of the <table> element)
    table: Option<(usize, usize)>,
    capture: Option<Capture>,
    loose: String,
    set_id: Option<String>,
}

impl Builder {
    fn current_section(&self) -> Option<usize> {
        self.section_stack.last().map(|(i, _)| *i)
    }

    fn flush_loose(&mut self) {
        let text = normalize_ws(&self.loose);
        self.loose.clear();
        if let (false, Some(idx)) = (text.is_empty(), self.current_section()) {
            self.sections[idx].paragraphs.push(text);
        }
    }

    fn start(&mut self, e: &BytesStart<'_>, stack: &[String]) {
        let name = local(e);
        let depth = stack.len() + 1;
        let parent = stack.last().map(String::as_str);
        match name.as_str() {
            "setId" if stack.len() == 1 && self.set_id.is_none() => {
                self.set_id = attr(e, "root").filter(|v| !v.is_empty());
            }
            "section" => {
                self.flush_loose();
                self.sections.push(Section::default());
                self.section_stack.push((self.sections.len() - 1, depth));
            }
            "code" if parent == Some("section") => {
                if let Some(idx) = self.current_section() {
                    let s = &mut self.sections[idx];
                    if s.loinc_code.is_empty() {
                        s.loinc_code = attr(e, "code").unwrap_or_default();
                    }
                }
            }
            "title" if parent == Some("section") && self.capture.is_none() => {
                self.open(CaptureKind::Title, depth);
            }
            "table" if self.table.is_none() && self.capture.is_none() => {
                if let Some(idx) = self.current_section() {
                    self.flush_loose();
                    self.sections[idx].tables.push(Vec::new());
                    self.table = Some((idx, depth));
                }
            }
            "tr" if self.capture.is_none() => {
                if let Some((idx, _)) = self.table {
                    if let Some(t) = self.sections[idx].tables.last_mut() {
                        t.push(Vec::new());
                    }
                }
            }
            "td" | "th" if self.table.is_some() && self.capture.is_none() => {
                self.open(CaptureKind::Cell, depth);
            }
            "paragraph" | "item" if self.table.is_none() && self.capture.is_none() => {
                self.flush_loose();
                self.open(CaptureKind::Paragraph, depth);
            }
            "br" => self.text(" "),
            _ => {}
        }
    }

    fn open(&mut self, kind: CaptureKind, depth: usize) {
        if let Some(section) = self.current_section() {
            self.capture = Some(Capture {
                kind,
                depth,
                section,
                buf: String::new(),
            });
        }
    }

    fn end(&mut self, name: &str, depth: usize) {
        if self.capture.as_ref().is_some_and(|c| c.depth == depth) {
            let c = self.capture.take().expect("checked");
            let text = normalize_ws(&c.buf);
            let section = &mut self.sections[c.section];
            match c.kind {
                CaptureKind::Title => {
                    if section.title.is_empty() {
                        section.title = text;
                    }
                }
                CaptureKind::Paragraph => {
                    if !text.is_empty() {
                        section.paragraphs.push(text);
                    }
                }
                CaptureKind::Cell => {
                    if let Some(row) = section.tables.last_mut().and_then(|t| t.last_mut()) {
                        row.push(text);
                    }
                }
            }
            return;
        }
        match name {
            "table" if self.table.is_some_and(|(_, d)| d == depth) => {
                let (idx, _) = self.table.take().expect("checked");
                if let Some(t) = self.sections[idx].tables.last_mut() {
                    t.retain(|row| !row.is_empty());
                }
            }
            "text" => self.flush_loose(),
            "section" if self.section_stack.last().is_some_and(|(_, d)| *d == depth) => {
                self.flush_loose();
                self.section_stack.pop();
            }
            _ => {}
        }
    }

    fn text(&mut self, s: &str) {
        if let Some(c) = self.capture.as_mut() {
            c.buf.push_str(s);
        } else if self.table.is_none() && self.current_section().is_some() {
            self.loose.push_str(s);
        }
    }
}

fn local(e: &BytesStart<'_>) -> String {
    String::from_utf8_lossy(e.local_name().as_ref()).into_owned()
}

fn attr(e: &BytesStart<'_>, key: &str) -> Option<String> {
    e.attributes()
        .flatten()
        .find(|a| a.key.local_name().as_ref() == key.as_bytes())
        .and_then(|a| a.unescape_value().ok().map(|v| v.into_owned()))
}

/// Parses one SPL XML document. Product RxCUIs are attached separately.
pub fn parse_spl(xml: &[u8]) -> Result<SplDocument> {
    let mut reader = Reader::from_reader(xml);
    reader.config_mut().trim_text(false);
    let mut buf = Vec::new();
    let mut stack: Vec<String> = Vec::new();
    let mut b = Builder::default();
    // Text nodes only count inside a section's <text>, <title> or table cells.
    loop {
        let event = reader.read_event_into(&mut buf).map_err(|e| SplError::Xml {
            position: reader.error_position(),
            message: e.to_string(),
        })?;
        match event {
            Event::Start(e) => {
                b.start(&e, &stack);
                stack.push(local(&e));
            }
            Event::Empty(e) => {
                b.start(&e, &stack);
                let name = local(&e);
                stack.push(name.clone());
                b.end(&name, stack.len());
                stack.pop();
            }
            Event::End(_) => {
                let name = stack.pop().unwrap_or_default();
                b.end(&name, stack.len() + 1);
            }
            Event::Text(t) => {
                if in_content(&stack) {
                    let text = t
                        .unescape()
                        .map(|c| c.into_owned())
                        .unwrap_or_else(|_| String::from_utf8_lossy(&t).into_owned());
                    b.text(&text);
                }
            }
            Event::CData(t) => {
                if in_content(&stack) {
                    b.text(&String::from_utf8_lossy(&t));
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    let set_id = b.set_id.take().ok_or(SplError::MissingSetId)?;
    Ok(SplDocument {
        set_id,
        product_rxcuis: Vec::new(),
        sections: b.sections,
    })
}

fn in_content(stack: &[String]) -> bool {
    let last_section = stack.iter().rposition(|n| n == "section");
    match last_section {
        Some(pos) => stack[pos + 1..].iter().any(|n| n == "text" || n == "title"),
        None => false,
    }
}

pub fn parse_spl_file(path: impl AsRef<Path>) -> Result<SplDocument> {
    parse_spl(&std::fs::read(path)?)
}

/// Removes sections whose code is blacklisted; survivors keep their order.
pub fn filter_sections(doc: &SplDocument, blacklist: &BTreeSet<String>) -> SplDocument {
    SplDocument {
        set_id: doc.set_id.clone(),
        product_rxcuis: doc.product_rxcuis.clone(),
        sections: doc
            .sections
            .iter()
            .filter(|s| !blacklist.contains(&s.loinc_code))
            .cloned()
            .collect(),
    }
}

pub fn render_table(table: &Table) -> String {
    table.iter().map(|row| row.join(" | ")).collect::<Vec<_>>().join("\n")
}

fn render_section(s: &Section) -> String {
    let mut lines: Vec<String> = Vec::new();
    if !s.title.is_empty() {
        lines.push(s.title.clone());
    }
    lines.extend(s.paragraphs.iter().cloned());
    lines.extend(s.tables.iter().filter(|t| !t.is_empty()).map(render_table));
    lines.join("\n")
}

fn flatten_where(doc: &SplDocument, keep: impl Fn(&Section) -> bool) -> String {
    doc.sections
        .iter()
        .filter(|s| keep(s))
        .map(render_section)
        .filter(|b| !b.is_empty())
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Plain-text rendering: per section a title line, one line per paragraph,
/// then tables as ` | `-separated rows. Sections are separated by a blank line.
pub fn flatten(doc: &SplDocument) -> String {
    flatten_where(doc, |_| true)
}

/// Flattened text of the sections coded in `codes`.
pub fn adverse_section_text_with(doc: &SplDocument, codes: &BTreeSet<String>) -> String {
    flatten_where(doc, |s| codes.contains(&s.loinc_code))
}

pub fn adverse_section_text(doc: &SplDocument) -> String {
    adverse_section_text_with(doc, &adverse_codes())
}

/// Reads the NLM SPL-to-RxNorm mapping file
/// (`SETID|SPL_VERSION|RXCUI|RXSTRING|RXTTY`) into set id → product RxCUIs.
pub fn parse_rxnorm_mappings(text: &str) -> Result<BTreeMap<String, Vec<String>>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("SETID") {
            continue;
        }
        let cols: Vec<&str> = line.split('|').collect();
        if cols.len() < 3 || cols[0].is_empty() || cols[2].is_empty() {
            return Err(SplError::Mapping {
                line: idx + 1,
                message: format!("expected SETID|SPL_VERSION|RXCUI|..., got `{line}`"),
            });
        }
        let entry = out.entry(cols[0].to_string()).or_default();
        if !entry.iter().any(|r| r == cols[2]) {
            entry.push(cols[2].to_string());
        }
    }
    Ok(out)
}

/// Product RxCUI → RXSTRING from the same mapping file; the first name seen
/// for an RxCUI wins.
pub fn parse_rxnorm_products(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("SETID") {
            continue;
        }
        let cols: Vec<&str> = line.split('|').collect();
        if cols.len() < 3 || cols[2].is_empty() {
            return Err(SplError::Mapping {
                line: idx + 1,
                message: format!("expected SETID|SPL_VERSION|RXCUI|..., got `{line}`"),
            });
        }
        let name = cols.get(3).map(|s| s.trim()).unwrap_or("");
        out.entry(cols[2].to_string()).or_insert_with(|| name.to_string());
    }
    Ok(out)
}
