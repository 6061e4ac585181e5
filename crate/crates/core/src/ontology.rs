//! OBO ontology loading and is_a hierarchy traversal.
//!
//! Only `[Term]` stanzas are interpreted, and within them the `id`, `name`,
//! `def`, `synonym`, `is_a` and `is_obsolete` tags. Everything else is skipped.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OntologyError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid term id `{0}`")]
    InvalidId(String),
    #[error("is_a cycle detected through {0}")]
    Cycle(TermId),
    #[error("term {child} has undefined parent {parent}")]
    DanglingParent { child: TermId, parent: TermId },
    #[error("term {0} defined more than once")]
    Duplicate(TermId),
    #[error("unknown term {0}")]
    NotFound(TermId),
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T, E = OntologyError> = std::result::Result<T, E>;

/// A compact identifier of the form `PREFIX:LOCAL`, e.g. `HP:0001626`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TermId(String);

impl TermId {
    pub fn new(curie: impl Into<String>) -> Result<Self> {
        let curie = curie.into();
        if is_valid_curie(&curie) {
            Ok(TermId(curie))
        } else {
            Err(OntologyError::InvalidId(curie))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn prefix(&self) -> &str {
        self.0.split_once(':').map(|(p, _)| p).unwrap_or("")
    }

    pub fn local(&self) -> &str {
        self.0.split_once(':').map(|(_, l)| l).unwrap_or("")
    }
}

fn is_valid_curie(s: &str) -> bool {
    let Some((prefix, local)) = s.split_once(':') else {
        return false;
    };
    let mut pchars = prefix.chars();
    let head_ok = matches!(pchars.next(), Some(c) if c.is_ascii_alphabetic());
    head_ok
        && pchars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !local.is_empty()
        && local.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

impl fmt::Display for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for TermId {
    type Err = OntologyError;
    fn from_str(s: &str) -> Result<Self> {
        TermId::new(s)
    }
}

impl TryFrom<String> for TermId {
    type Error = OntologyError;
    fn try_from(s: String) -> Result<Self> {
        TermId::new(s)
    }
}

impl From<TermId> for String {
    fn from(id: TermId) -> String {
        id.0
    }
}

impl AsRef<str> for TermId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OntologyTerm {
    pub id: TermId,
    pub name: String,
    pub definition: Option<String>,
    pub synonyms: Vec<String>,
    pub parents: Vec<TermId>,
    pub obsolete: bool,
    /// Free-form level tag (e.g. MedDRA `PT`, `HLT`); unused for OBO sources.
    pub level: Option<String>,
}

impl OntologyTerm {
    pub fn new(id: TermId, name: impl Into<String>) -> Self {
        OntologyTerm {
            id,
            name: name.into(),
            definition: None,
            synonyms: Vec::new(),
            parents: Vec::new(),
            obsolete: false,
            level: None,
        }
    }
}

/// Relation of a context term to the seed it was reached from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Parent,
    Child,
    Sibling,
}

impl Relation {
    pub fn tag(self) -> &'static str {
        match self {
            Relation::Parent => "parent",
            Relation::Child => "child",
            Relation::Sibling => "sibling",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

pub fn normalize_label(label: &str) -> String {
    label.trim().to_lowercase()
}

/// Immutable is_a graph with a label/synonym index.
#[derive(Debug, Clone, Default)]
pub struct OntologyGraph {
    terms: BTreeMap<TermId, OntologyTerm>,
    children: BTreeMap<TermId, BTreeSet<TermId>>,
    labels: HashMap<String, BTreeSet<TermId>>,
    roots: BTreeSet<TermId>,
}

impl OntologyGraph {
    /// Builds a graph from terms, checking parent references and acyclicity.
    pub fn from_terms(terms: impl IntoIterator<Item = OntologyTerm>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for mut term in terms {
            let mut seen = BTreeSet::new();
            let own = term.id.clone();
            term.parents.retain(|p| *p != own && seen.insert(p.clone()));
            if map.contains_key(&term.id) {
                return Err(OntologyError::Duplicate(term.id));
            }
            map.insert(term.id.clone(), term);
        }

        let mut children: BTreeMap<TermId, BTreeSet<TermId>> = BTreeMap::new();
        let mut roots = BTreeSet::new();
        for term in map.values() {
            if term.parents.is_empty() {
                roots.insert(term.id.clone());
            }
            for parent in &term.parents {
                if !map.contains_key(parent) {
                    return Err(OntologyError::DanglingParent {
                        child: term.id.clone(),
                        parent: parent.clone(),
                    });
                }
                children.entry(parent.clone()).or_default().insert(term.id.clone());
            }
        }

        let mut labels: HashMap<String, BTreeSet<TermId>> = HashMap::new();
        for term in map.values().filter(|t| !t.obsolete) {
            for label in std::iter::once(&term.name).chain(term.synonyms.iter()) {
                let key = normalize_label(label);
                if !key.is_empty() {
                    labels.entry(key).or_default().insert(term.id.clone());
                }
            }
        }

        let graph = OntologyGraph {
            terms: map,
            children,
            labels,
            roots,
        };
        graph.check_acyclic()?;
        Ok(graph)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| OntologyError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        parse_obo(&text)
    }

    // Kahn's algorithm; a leftover node sits on or below a cycle, so walk
    // parents among leftovers until a node repeats.
    fn check_acyclic(&self) -> Result<()> {
        let mut indegree: BTreeMap<&TermId, usize> = self.terms.values().map(|t| (&t.id, t.parents.len())).collect();
        let mut queue: VecDeque<&TermId> = indegree.iter().filter(|(_, d)| **d == 0).map(|(id, _)| *id).collect();
        let mut visited = 0usize;
        while let Some(id) = queue.pop_front() {
            visited += 1;
            for child in self.children.get(id).into_iter().flatten() {
                let d = indegree.get_mut(child).expect("child indexed");
                *d -= 1;
                if *d == 0 {
                    queue.push_back(child);
                }
            }
        }
        if visited == self.terms.len() {
            return Ok(());
        }
        let leftover: BTreeSet<&TermId> = indegree.iter().filter(|(_, d)| **d > 0).map(|(id, _)| *id).collect();
        let mut cur = *leftover.iter().next().expect("non-empty leftover");
        let mut seen = BTreeSet::new();
        while seen.insert(cur) {
            cur = self.terms[cur]
                .parents
                .iter()
                .find(|p| leftover.contains(p))
                .expect("leftover node has a leftover parent");
        }
        Err(OntologyError::Cycle(cur.clone()))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, id: &TermId) -> bool {
        self.terms.contains_key(id)
    }

    pub fn term(&self, id: &TermId) -> Option<&OntologyTerm> {
        self.terms.get(id)
    }

    pub fn get(&self, id: &TermId) -> Result<&OntologyTerm> {
        self.terms.get(id).ok_or_else(|| OntologyError::NotFound(id.clone()))
    }

    pub fn terms(&self) -> impl Iterator<Item = &OntologyTerm> {
        self.terms.values()
    }

    pub fn roots(&self) -> &BTreeSet<TermId> {
        &self.roots
    }

    pub fn parents(&self, id: &TermId) -> Result<&[TermId]> {
        Ok(&self.get(id)?.parents)
    }

    pub fn children(&self, id: &TermId) -> Result<impl Iterator<Item = &TermId>> {
        self.get(id)?;
        Ok(self.children.get(id).into_iter().flatten())
    }

    /// Number of distinct normalized names and synonyms of live terms.
    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    /// Transitive is_a closure of `id`, including `id`.
    pub fn ancestors_or_self(&self, id: &TermId) -> Result<BTreeSet<TermId>> {
        self.get(id)?;
        Ok(self.closure(id, |t| self.terms[t].parents.iter()))
    }

    /// Inverse closure of `id`, including `id`.
    pub fn descendants_or_self(&self, id: &TermId) -> Result<BTreeSet<TermId>> {
        self.get(id)?;
        Ok(self.closure(id, |t| self.children.get(t).into_iter().flatten()))
    }

    fn closure<'a, F, I>(&'a self, start: &TermId, next: F) -> BTreeSet<TermId>
    where
        F: Fn(&TermId) -> I,
        I: Iterator<Item = &'a TermId>,
    {
        let mut out = BTreeSet::new();
        let mut stack = vec![start.clone()];
        while let Some(t) = stack.pop() {
            if out.insert(t.clone()) {
                stack.extend(next(&t).filter(|n| !out.contains(*n)).cloned());
            }
        }
        out
    }

    /// Graph neighbourhood used as disambiguation context.
    ///
    /// Parents of every seed come first, then children, then siblings
    /// (children of any parent). Seeds and obsolete terms are excluded and the
    /// list is truncated at `limit`.
    pub fn related_context(&self, seeds: &[TermId], limit: usize) -> Result<Vec<(TermId, Relation)>> {
        for seed in seeds {
            self.get(seed)?;
        }
        let seed_set: BTreeSet<&TermId> = seeds.iter().collect();
        let mut seen: BTreeSet<TermId> = BTreeSet::new();
        let mut out = Vec::new();
        let mut push = |id: &TermId, rel: Relation, out: &mut Vec<(TermId, Relation)>| {
            if out.len() < limit && !seed_set.contains(id) && !self.terms[id].obsolete && seen.insert(id.clone()) {
                out.push((id.clone(), rel));
            }
        };

        for seed in seeds {
            for parent in &self.terms[seed].parents {
                push(parent, Relation::Parent, &mut out);
            }
        }
        for seed in seeds {
            for child in self.children.get(seed).into_iter().flatten() {
                push(child, Relation::Child, &mut out);
            }
        }
        for seed in seeds {
            for parent in &self.terms[seed].parents {
                for sibling in self.children.get(parent).into_iter().flatten() {
                    push(sibling, Relation::Sibling, &mut out);
                }
            }
        }
        Ok(out)
    }

    /// Case-insensitive exact match against names and synonyms.
    pub fn lookup_exact(&self, label: &str) -> BTreeSet<TermId> {
        self.labels.get(&normalize_label(label)).cloned().unwrap_or_default()
    }
}

/// Parses an OBO flat file.
pub fn parse_obo(text: &str) -> Result<OntologyGraph> {
    struct Pending {
        line: usize,
        id: Option<TermId>,
        term: OntologyTerm,
    }

    fn finish(p: Pending, out: &mut Vec<OntologyTerm>) -> Result<()> {
        let id = p.id.ok_or_else(|| OntologyError::Parse {
            line: p.line,
            message: "[Term] stanza without id".into(),
        })?;
        if p.term.name.is_empty() && !p.term.obsolete {
            return Err(OntologyError::Parse {
                line: p.line,
                message: format!("term {id} has no name"),
            });
        }
        out.push(OntologyTerm { id, ..p.term });
        Ok(())
    }

    let placeholder = TermId("X:0".into());
    let mut terms = Vec::new();
    let mut current: Option<Pending> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('!') {
            continue;
        }
        if line.starts_with('[') {
            if let Some(p) = current.take() {
                finish(p, &mut terms)?;
            }
            if line == "[Term]" {
                current = Some(Pending {
                    line: lineno,
                    id: None,
                    term: OntologyTerm::new(placeholder.clone(), ""),
                });
            }
            continue;
        }
        let Some(p) = current.as_mut() else {
            continue;
        };
        let Some((tag, value)) = line.split_once(':') else {
            return Err(OntologyError::Parse {
                line: lineno,
                message: format!("expected `tag: value`, got `{line}`"),
            });
        };
        let value = value.trim();
        let bad_id = |v: &str| OntologyError::Parse {
            line: lineno,
            message: format!("invalid term id `{v}`"),
        };
        match tag.trim() {
            "id" => p.id = Some(TermId::new(value).map_err(|_| bad_id(value))?),
            "name" => p.term.name = value.to_string(),
            "def" => p.term.definition = Some(first_quoted(value).unwrap_or(value).to_string()),
            "synonym" => {
                if let Some(s) = first_quoted(value) {
                    p.term.synonyms.push(s.to_string());
                }
            }
            "is_a" => {
                let target = value
                    .split('!')
                    .next()
                    .unwrap_or("")
                    .split_whitespace()
                    .next()
                    .unwrap_or("");
                p.term.parents.push(TermId::new(target).map_err(|_| bad_id(target))?);
            }
            "is_obsolete" => p.term.obsolete = value == "true",
            _ => {}
        }
    }
    if let Some(p) = current.take() {
        finish(p, &mut terms)?;
    }
    OntologyGraph::from_terms(terms)
}

/// Contents of the first double-quoted span, honouring `\"` escapes.
fn first_quoted(value: &str) -> Option<&str> {
    let start = value.find('"')? + 1;
    let bytes = value.as_bytes();
    let mut i = start;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'"' => return Some(&value[start..i]),
            _ => i += 1,
        }
    }
    None
}
