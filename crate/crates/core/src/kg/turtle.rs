//! Deterministic Turtle writer and a reader for the subset it needs.

use std::collections::BTreeMap;
use std::fmt::Write;

use thiserror::Error;

use super::{
    xsd, Iri, Literal, Term, Triple, TripleSet, DCTERMS, OBO, OWL, RDF, RDFS, RDF_TYPE, RXNORM, SIO, SK, VOID, XSD,
};

#[derive(Debug, Error, PartialEq)]
#[error("Turtle syntax error at line {line}, column {column}: {message}")]
pub struct TurtleError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// Prefix name → namespace IRI.
#[derive(Debug, Clone, PartialEq)]
pub struct Prefixes(BTreeMap<String, String>);

impl Default for Prefixes {
    fn default() -> Self {
        Prefixes::with_rxnorm(RXNORM)
    }
}

impl Prefixes {
    pub fn with_rxnorm(rxnorm: &str) -> Self {
        let mut m = BTreeMap::new();
        for (p, ns) in [
            ("dcterms", DCTERMS),
            ("obo", OBO),
            ("owl", OWL),
            ("rdf", RDF),
            ("rdfs", RDFS),
            ("rxnorm", rxnorm),
            ("sio", SIO),
            ("sk", SK),
            ("void", VOID),
            ("xsd", XSD),
        ] {
            m.insert(p.to_string(), ns.to_string());
        }
        Prefixes(m)
    }

    pub fn empty() -> Self {
        Prefixes(BTreeMap::new())
    }

    pub fn insert(&mut self, prefix: &str, namespace: &str) {
        self.0.insert(prefix.to_string(), namespace.to_string());
    }

    fn shorten(&self, iri: &str) -> Option<String> {
        self.0
            .iter()
            .filter_map(|(p, ns)| iri.strip_prefix(ns.as_str()).map(|local| (p, ns.len(), local)))
            .filter(|(_, _, local)| is_plain_local(local))
            .max_by_key(|(p, len, _)| (*len, std::cmp::Reverse(p.as_str())))
            .map(|(p, _, local)| format!("{p}:{local}"))
    }
}

// Conservative PN_LOCAL: no escapes needed.
fn is_plain_local(s: &str) -> bool {
    if s.is_empty() {
        return true;
    }
    let ok = |c: char| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.';
    let first = s.chars().next().expect("non-empty");
    (first.is_ascii_alphanumeric() || first == '_') && s.chars().all(ok) && !s.ends_with('.')
}

fn write_iri(out: &mut String, iri: &Iri, prefixes: &Prefixes) {
    match prefixes.shorten(iri.as_str()) {
        Some(short) => out.push_str(&short),
        None => {
            out.push('<');
            out.push_str(iri.as_str());
            out.push('>');
        }
    }
}

fn escape_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            '\u{8}' => out.push_str("\\b"),
            '\u{c}' => out.push_str("\\f"),
            c if (c as u32) < 0x20 || c == '\u{7f}' => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

fn is_integer_lexical(s: &str) -> bool {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

fn write_term(out: &mut String, term: &Term, prefixes: &Prefixes) {
    match term {
        Term::Iri(i) => write_iri(out, i, prefixes),
        Term::Literal(l) => {
            if l.lang.is_none()
                && l.datatype
                    .as_ref()
                    .is_some_and(|d| d.as_str() == format!("{XSD}integer"))
                && is_integer_lexical(&l.lexical)
            {
                out.push_str(&l.lexical);
                return;
            }
            escape_string(out, &l.lexical);
            if let Some(lang) = &l.lang {
                out.push('@');
                out.push_str(lang);
            } else if let Some(dt) = &l.datatype {
                out.push_str("^^");
                write_iri(out, dt, prefixes);
            }
        }
    }
}

pub fn serialize_turtle(triples: &TripleSet) -> String {
    serialize_turtle_with(triples, &Prefixes::default())
}

/// Prefixes sorted by name, subjects by IRI, `rdf:type` first and then
/// predicates by IRI, objects in term order.
pub fn serialize_turtle_with(triples: &TripleSet, prefixes: &Prefixes) -> String {
    let mut out = String::new();
    for (p, ns) in &prefixes.0 {
        let _ = writeln!(out, "@prefix {p}: <{ns}> .");
    }
    let mut by_subject: BTreeMap<&Iri, BTreeMap<(bool, &Iri), Vec<&Term>>> = BTreeMap::new();
    for t in triples {
        by_subject
            .entry(&t.subject)
            .or_default()
            .entry((t.predicate.as_str() != RDF_TYPE, &t.predicate))
            .or_default()
            .push(&t.object);
    }
    for (subject, preds) in by_subject {
        out.push('\n');
        write_iri(&mut out, subject, prefixes);
        let n = preds.len();
        for (i, ((not_type, pred), objects)) in preds.into_iter().enumerate() {
            out.push_str(if i == 0 { " " } else { "    " });
            if not_type {
                write_iri(&mut out, pred, prefixes);
            } else {
                out.push('a');
            }
            for (j, o) in objects.iter().enumerate() {
                out.push_str(if j == 0 { " " } else { ", " });
                write_term(&mut out, o, prefixes);
            }
            out.push_str(if i + 1 == n { " .\n" } else { " ;\n" });
        }
    }
    out
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    column: usize,
    prefixes: BTreeMap<String, String>,
    base: Option<String>,
    out: &'a mut TripleSet,
    anon: usize,
}

pub(crate) const BNODE_PREFIX: &str = "urn:x-bnode:";

/// Reads IRIs, prefixed names, `a`, string/number/boolean literals, blank
/// nodes and collections. Blank nodes become `urn:x-bnode:` IRIs.
pub fn parse_turtle(text: &str) -> Result<TripleSet, TurtleError> {
    let mut out = TripleSet::new();
    let mut p = Parser {
        chars: text.chars().collect(),
        pos: 0,
        line: 1,
        column: 1,
        prefixes: BTreeMap::new(),
        base: None,
        out: &mut out,
        anon: 0,
    };
    p.document()?;
    Ok(out)
}

impl Parser<'_> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, TurtleError> {
        Err(TurtleError {
            line: self.line,
            column: self.column,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, k: usize) -> Option<char> {
        self.chars.get(self.pos + k).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn expect(&mut self, c: char) -> Result<(), TurtleError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            match self.peek() {
                Some(f) => self.err(format!("expected '{c}', found '{f}'")),
                None => self.err(format!("expected '{c}', found end of input")),
            }
        }
    }

    fn starts_with_ci(&self, word: &str) -> bool {
        word.chars()
            .enumerate()
            .all(|(k, w)| self.peek_at(k).is_some_and(|c| c.eq_ignore_ascii_case(&w)))
    }

    fn document(&mut self) -> Result<(), TurtleError> {
        loop {
            self.skip_ws();
            let Some(c) = self.peek() else { return Ok(()) };
            if c == '@' {
                self.bump();
                let word = self.bare_word();
                match word.as_str() {
                    "prefix" => {
                        self.prefix_decl()?;
                        self.expect('.')?;
                    }
                    "base" => {
                        self.skip_ws();
                        let iri = self.iri_ref()?;
                        self.base = Some(iri);
                        self.expect('.')?;
                    }
                    _ => return self.err(format!("unknown directive @{word}")),
                }
            } else if self.starts_with_ci("prefix") && self.peek_at(6).is_some_and(char::is_whitespace) {
                self.bare_word();
                self.prefix_decl()?;
            } else if self.starts_with_ci("base") && self.peek_at(4).is_some_and(char::is_whitespace) {
                self.bare_word();
                self.skip_ws();
                let iri = self.iri_ref()?;
                self.base = Some(iri);
            } else {
                self.statement()?;
            }
        }
    }

    fn bare_word(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' {
                s.push(c);
                self.bump();
            } else {
                break;
            }
        }
        s
    }

    fn prefix_decl(&mut self) -> Result<(), TurtleError> {
        self.skip_ws();
        let mut name = String::new();
        while let Some(c) = self.peek() {
            if c == ':' {
                break;
            }
            if c.is_alphanumeric() || c == '_' || c == '-' || c == '.' {
                name.push(c);
                self.bump();
            } else {
                return self.err(format!("bad character '{c}' in prefix name"));
            }
        }
        self.expect(':')?;
        self.skip_ws();
        let iri = self.iri_ref()?;
        self.prefixes.insert(name, iri);
        Ok(())
    }

    fn resolve(&self, iri: String) -> Result<Iri, TurtleError> {
        let has_scheme = iri
            .split_once(':')
            .is_some_and(|(s, _)| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c)));
        let full = match (&self.base, has_scheme) {
            (Some(base), false) => format!("{base}{iri}"),
            _ => iri,
        };
        match Iri::new(full.clone()) {
            Ok(i) => Ok(i),
            Err(_) => self.err(format!("invalid IRI <{full}>")),
        }
    }

    fn hex_escape(&mut self, n: usize) -> Result<char, TurtleError> {
        let mut v = 0u32;
        for _ in 0..n {
            let Some(d) = self.bump().and_then(|c| c.to_digit(16)) else {
                return self.err("bad \\u escape");
            };
            v = v * 16 + d;
        }
        match char::from_u32(v) {
            Some(c) => Ok(c),
            None => self.err("escape is not a character"),
        }
    }

    fn iri_ref(&mut self) -> Result<String, TurtleError> {
        if self.peek() != Some('<') {
            return self.err("expected '<'");
        }
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                Some('>') => return Ok(s),
                Some('\\') => match self.bump() {
                    Some('u') => s.push(self.hex_escape(4)?),
                    Some('U') => s.push(self.hex_escape(8)?),
                    _ => return self.err("bad escape in IRI"),
                },
                Some(c) if c.is_whitespace() => return self.err("whitespace in IRI"),
                Some(c) => s.push(c),
                None => return self.err("unterminated IRI"),
            }
        }
    }

    fn fresh_bnode(&mut self) -> Iri {
        self.anon += 1;
        Iri::from_trusted(format!("{BNODE_PREFIX}anon{}", self.anon))
    }

    fn statement(&mut self) -> Result<(), TurtleError> {
        self.skip_ws();
        if self.peek() == Some('[') {
            let node = self.blank_property_list()?;
            self.skip_ws();
            if self.peek() != Some('.') {
                self.predicate_object_list(&node)?;
            }
        } else {
            let subject = self.subject()?;
            self.predicate_object_list(&subject)?;
        }
        self.expect('.')
    }

    fn subject(&mut self) -> Result<Iri, TurtleError> {
        self.skip_ws();
        match self.peek() {
            Some('<') => {
                let s = self.iri_ref()?;
                self.resolve(s)
            }
            Some('(') => self.collection(),
            Some('_') if self.peek_at(1) == Some(':') => self.blank_label(),
            Some(_) => match self.name_token()? {
                Name::Prefixed(i) => Ok(i),
                _ => self.err("expected subject"),
            },
            None => self.err("unexpected end of input"),
        }
    }

    fn blank_label(&mut self) -> Result<Iri, TurtleError> {
        self.bump();
        self.bump();
        let mut label = String::new();
        while let Some(c) = self.peek() {
            if c.is_alphanumeric()
                || c == '_'
                || c == '-'
                || (c == '.' && self.peek_at(1).is_some_and(|n| n.is_alphanumeric() || n == '_'))
            {
                label.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if label.is_empty() {
            return self.err("empty blank node label");
        }
        Ok(Iri::from_trusted(format!("{BNODE_PREFIX}{label}")))
    }

    fn predicate_object_list(&mut self, subject: &Iri) -> Result<(), TurtleError> {
        loop {
            let predicate = self.verb()?;
            loop {
                let object = self.object()?;
                self.out.insert(Triple::new(subject.clone(), predicate.clone(), object));
                self.skip_ws();
                if self.peek() == Some(',') {
                    self.bump();
                } else {
                    break;
                }
            }
            self.skip_ws();
            if self.peek() != Some(';') {
                return Ok(());
            }
            while self.peek() == Some(';') {
                self.bump();
                self.skip_ws();
            }
            if matches!(self.peek(), Some('.') | Some(']') | None) {
                return Ok(());
            }
        }
    }

    fn verb(&mut self) -> Result<Iri, TurtleError> {
        self.skip_ws();
        match self.peek() {
            Some('<') => {
                let s = self.iri_ref()?;
                self.resolve(s)
            }
            Some(_) => match self.name_token()? {
                Name::A => Ok(Iri::from_trusted(RDF_TYPE.to_string())),
                Name::Prefixed(i) => Ok(i),
                Name::Bool(_) => self.err("boolean cannot be a predicate"),
            },
            None => self.err("expected predicate"),
        }
    }

    fn object(&mut self) -> Result<Term, TurtleError> {
        self.skip_ws();
        match self.peek() {
            Some('<') => {
                let s = self.iri_ref()?;
                Ok(Term::Iri(self.resolve(s)?))
            }
            Some('"') | Some('\'') => self.literal().map(Term::Literal),
            Some('[') => self.blank_property_list().map(Term::Iri),
            Some('(') => self.collection().map(Term::Iri),
            Some('_') if self.peek_at(1) == Some(':') => self.blank_label().map(Term::Iri),
            Some(c) if c.is_ascii_digit() || c == '+' || c == '-' || c == '.' => self.number().map(Term::Literal),
            Some(_) => match self.name_token()? {
                Name::Prefixed(i) => Ok(Term::Iri(i)),
                Name::Bool(b) => Ok(Term::Literal(Literal::typed(b.to_string(), xsd("boolean")))),
                Name::A => self.err("'a' cannot be an object"),
            },
            None => self.err("expected object"),
        }
    }

    fn blank_property_list(&mut self) -> Result<Iri, TurtleError> {
        self.expect('[')?;
        let node = self.fresh_bnode();
        self.skip_ws();
        if self.peek() != Some(']') {
            self.predicate_object_list(&node)?;
        }
        self.expect(']')?;
        Ok(node)
    }

    fn collection(&mut self) -> Result<Iri, TurtleError> {
        self.expect('(')?;
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(')') => {
                    self.bump();
                    break;
                }
                None => return self.err("unterminated collection"),
                _ => items.push(self.object()?),
            }
        }
        let nil = Iri::from_trusted(format!("{RDF}nil"));
        let mut head = nil;
        for item in items.into_iter().rev() {
            let node = self.fresh_bnode();
            self.out.insert(Triple::new(
                node.clone(),
                Iri::from_trusted(format!("{RDF}first")),
                item,
            ));
            self.out
                .insert(Triple::new(node.clone(), Iri::from_trusted(format!("{RDF}rest")), head));
            head = node;
        }
        Ok(head)
    }

    fn number(&mut self) -> Result<Literal, TurtleError> {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            let next_is_digit = self.peek_at(1).is_some_and(|n| n.is_ascii_digit());
            if c.is_ascii_digit()
                || ((c == '+' || c == '-') && (s.is_empty() || s.ends_with(['e', 'E'])))
                || (c == '.' && next_is_digit)
                || ((c == 'e' || c == 'E') && !s.is_empty())
            {
                s.push(c);
                self.bump();
            } else {
                break;
            }
        }
        let dt = if s.contains(['e', 'E']) {
            "double"
        } else if s.contains('.') {
            "decimal"
        } else {
            "integer"
        };
        if !s.chars().any(|c| c.is_ascii_digit()) {
            return self.err(format!("bad number {s:?}"));
        }
        Ok(Literal::typed(s, xsd(dt)))
    }

    fn literal(&mut self) -> Result<Literal, TurtleError> {
        let quote = self.bump().expect("quote");
        let long = self.peek() == Some(quote) && self.peek_at(1) == Some(quote);
        if long {
            self.bump();
            self.bump();
        }
        let mut s = String::new();
        loop {
            let Some(c) = self.bump() else {
                return self.err("unterminated string");
            };
            if c == quote {
                if !long {
                    break;
                }
                if self.peek() == Some(quote) && self.peek_at(1) == Some(quote) && self.peek_at(2) != Some(quote) {
                    self.bump();
                    self.bump();
                    break;
                }
                s.push(c);
                continue;
            }
            match c {
                '\\' => {
                    let e = match self.bump() {
                        Some('t') => '\t',
                        Some('b') => '\u{8}',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('f') => '\u{c}',
                        Some('"') => '"',
                        Some('\'') => '\'',
                        Some('\\') => '\\',
                        Some('u') => self.hex_escape(4)?,
                        Some('U') => self.hex_escape(8)?,
                        _ => return self.err("bad string escape"),
                    };
                    s.push(e);
                }
                '\n' | '\r' if !long => return self.err("newline in string"),
                c => s.push(c),
            }
        }
        let mut lit = Literal::plain(s);
        match self.peek() {
            Some('@') => {
                self.bump();
                let mut lang = String::new();
                while let Some(c) = self.peek() {
                    if c.is_ascii_alphanumeric() || c == '-' {
                        lang.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
                if lang.is_empty() {
                    return self.err("empty language tag");
                }
                lit.lang = Some(lang);
            }
            Some('^') if self.peek_at(1) == Some('^') => {
                self.bump();
                self.bump();
                let dt = match self.peek() {
                    Some('<') => {
                        let s = self.iri_ref()?;
                        self.resolve(s)?
                    }
                    _ => match self.name_token()? {
                        Name::Prefixed(i) => i,
                        _ => return self.err("expected datatype IRI"),
                    },
                };
                lit.datatype = Some(dt);
            }
            _ => {}
        }
        Ok(lit)
    }

    fn name_token(&mut self) -> Result<Name, TurtleError> {
        let (line, column) = (self.line, self.column);
        let mut prefix = String::new();
        while let Some(c) = self.peek() {
            if c.is_alphanumeric()
                || c == '_'
                || c == '-'
                || (c == '.'
                    && self
                        .peek_at(1)
                        .is_some_and(|n| n.is_alphanumeric() || n == '_' || n == '-'))
            {
                prefix.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if self.peek() != Some(':') {
            return match prefix.as_str() {
                "a" => Ok(Name::A),
                "true" => Ok(Name::Bool(true)),
                "false" => Ok(Name::Bool(false)),
                "" => match self.peek() {
                    Some(c) => self.err(format!("unexpected character '{c}'")),
                    None => self.err("unexpected end of input"),
                },
                other => Err(TurtleError {
                    line,
                    column,
                    message: format!("unexpected token {other:?}"),
                }),
            };
        }
        self.bump();
        let mut local = String::new();
        while let Some(c) = self.peek() {
            let continues = |n: Option<char>| n.is_some_and(|n| n.is_alphanumeric() || "_-:%\\".contains(n));
            if c.is_alphanumeric() || "_-:%".contains(c) || (c == '.' && continues(self.peek_at(1))) {
                local.push(c);
                self.bump();
            } else if c == '\\' {
                self.bump();
                match self.bump() {
                    Some(e) if "_~.-!$&'()*+,;=/?#@%".contains(e) => local.push(e),
                    _ => return self.err("bad local-name escape"),
                }
            } else {
                break;
            }
        }
        let Some(ns) = self.prefixes.get(&prefix) else {
            return Err(TurtleError {
                line,
                column,
                message: format!("undeclared prefix {prefix:?}"),
            });
        };
        let full = format!("{ns}{local}");
        match Iri::new(full.clone()) {
            Ok(i) => Ok(Name::Prefixed(i)),
            Err(_) => self.err(format!("invalid IRI <{full}>")),
        }
    }
}

enum Name {
    A,
    Bool(bool),
    Prefixed(Iri),
}
