//! Information-content similarity between drug annotation profiles and the
//! target-prediction benchmark built on it.
//!
//! IC uses the natural log over descendant-propagated drug frequencies.
//! Resnik takes the most informative common ancestor and BMA averages the
//! row-wise and column-wise best Resnik matches of two term sets.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{OntologyError, OntologyGraph, OntologyTerm, TermId};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("annotation corpus is empty")]
    EmptyCorpus,
    #[error("drug {0} has no annotations")]
    EmptyAnnotation(String),
    #[error("term set is empty")]
    EmptySet,
    #[error("term {0} is not in the ontology")]
    UnknownTerm(TermId),
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("AUC needs both classes, got {positives} positive and {negatives} negative")]
    SingleClass { positives: usize, negatives: usize },
    #[error("score {0} is not a number")]
    NotANumber(usize),
    #[error("pairs reference drugs without annotations: {}", .0.join(", "))]
    Unannotated(Vec<String>),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Ontology(#[from] OntologyError),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

/// Drug → annotated ontology terms. Every drug has at least one term.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationCorpus {
    annotations: BTreeMap<String, BTreeSet<TermId>>,
}

impl AnnotationCorpus {
    pub fn new(annotations: BTreeMap<String, BTreeSet<TermId>>) -> Result<Self> {
        if let Some((drug, _)) = annotations.iter().find(|(_, terms)| terms.is_empty()) {
            return Err(SimError::EmptyAnnotation(drug.clone()));
        }
        Ok(AnnotationCorpus { annotations })
    }

    /// Number of annotated drugs.
    pub fn universe(&self) -> usize {
        self.annotations.len()
    }

    pub fn get(&self, drug: &str) -> Option<&BTreeSet<TermId>> {
        self.annotations.get(drug)
    }

    pub fn drugs(&self) -> impl Iterator<Item = &String> {
        self.annotations.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<TermId>)> {
        self.annotations.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }

    /// Distinct annotated terms.
    pub fn terms(&self) -> BTreeSet<&TermId> {
        self.annotations.values().flatten().collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IcTable {
    ic: BTreeMap<TermId, f64>,
}

impl IcTable {
    pub fn get(&self, id: &TermId) -> Option<f64> {
        self.ic.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.ic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ic.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TermId, f64)> {
        self.ic.iter().map(|(k, v)| (k, *v))
    }
}

/// `ic(t) = -ln(freq(t) / N)`, where `freq(t)` counts the drugs annotated
/// with `t` or any of its descendants. Terms no drug reaches are left out.
pub fn compute_ic(corpus: &AnnotationCorpus, graph: &OntologyGraph) -> Result<IcTable> {
    if corpus.is_empty() {
        return Err(SimError::EmptyCorpus);
    }
    let mut closure_of: HashMap<&TermId, BTreeSet<TermId>> = HashMap::new();
    for t in corpus.terms() {
        let up = graph
            .ancestors_or_self(t)
            .map_err(|_| SimError::UnknownTerm(t.clone()))?;
        closure_of.insert(t, up);
    }
    let mut freq: BTreeMap<TermId, usize> = BTreeMap::new();
    for (_, terms) in corpus.iter() {
        let reached: BTreeSet<&TermId> = terms.iter().flat_map(|t| closure_of[t].iter()).collect();
        for t in reached {
            *freq.entry(t.clone()).or_default() += 1;
        }
    }
    let n = corpus.universe() as f64;
    let ic = freq
        .into_iter()
        .map(|(t, f)| {
            // -ln(1) is -0.0; keep the sign tidy.
            let v = -(f as f64 / n).ln();
            (t, if v == 0.0 { 0.0 } else { v })
        })
        .collect();
    Ok(IcTable { ic })
}

/// IC of the most informative common ancestor; 0 when no common ancestor
/// carries an IC value.
pub fn resnik(t1: &TermId, t2: &TermId, ic: &IcTable, graph: &OntologyGraph) -> Result<f64> {
    let a = graph
        .ancestors_or_self(t1)
        .map_err(|_| SimError::UnknownTerm(t1.clone()))?;
    let b = graph
        .ancestors_or_self(t2)
        .map_err(|_| SimError::UnknownTerm(t2.clone()))?;
    Ok(a.intersection(&b).filter_map(|t| ic.get(t)).fold(0.0, f64::max))
}

/// Best match average of two non-empty term sets.
pub fn bma(d1: &BTreeSet<TermId>, d2: &BTreeSet<TermId>, ic: &IcTable, graph: &OntologyGraph) -> Result<f64> {
    if d1.is_empty() || d2.is_empty() {
        return Err(SimError::EmptySet);
    }
    let mut scores = vec![vec![0.0; d2.len()]; d1.len()];
    for (i, a) in d1.iter().enumerate() {
        for (j, b) in d2.iter().enumerate() {
            scores[i][j] = resnik(a, b, ic, graph)?;
        }
    }
    Ok(bma_from_matrix(&scores))
}

fn bma_from_matrix(scores: &[Vec<f64>]) -> f64 {
    let rows = scores.len();
    let cols = scores[0].len();
    let row_best: f64 = scores.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).sum();
    let col_best: f64 = (0..cols).map(|j| scores.iter().map(|r| r[j]).fold(0.0, f64::max)).sum();
    0.5 * (row_best / rows as f64 + col_best / cols as f64)
}

/// Ancestor lists precomputed for every annotated term, so pair scoring does
/// not walk the graph.
pub struct SimilarityIndex {
    // Per term: ancestors with an IC value, most informative first.
    ranked: HashMap<TermId, Vec<(usize, f64)>>,
    member: HashMap<TermId, HashSet<usize>>,
}

impl SimilarityIndex {
    pub fn new(corpus: &AnnotationCorpus, ic: &IcTable, graph: &OntologyGraph) -> Result<Self> {
        let slots: HashMap<&TermId, usize> = ic.ic.keys().enumerate().map(|(i, t)| (t, i)).collect();
        let mut ranked = HashMap::new();
        let mut member = HashMap::new();
        for t in corpus.terms() {
            let up = graph
                .ancestors_or_self(t)
                .map_err(|_| SimError::UnknownTerm(t.clone()))?;
            let mut list: Vec<(usize, f64)> = up.iter().filter_map(|a| Some((*slots.get(a)?, ic.get(a)?))).collect();
            list.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
            member.insert(t.clone(), list.iter().map(|(i, _)| *i).collect());
            ranked.insert(t.clone(), list);
        }
        Ok(SimilarityIndex { ranked, member })
    }

    pub fn resnik(&self, t1: &TermId, t2: &TermId) -> Result<f64> {
        let a = self.ranked.get(t1).ok_or_else(|| SimError::UnknownTerm(t1.clone()))?;
        let b = self.member.get(t2).ok_or_else(|| SimError::UnknownTerm(t2.clone()))?;
        Ok(a.iter().find(|(i, _)| b.contains(i)).map_or(0.0, |(_, v)| *v))
    }

    pub fn bma(&self, d1: &BTreeSet<TermId>, d2: &BTreeSet<TermId>) -> Result<f64> {
        if d1.is_empty() || d2.is_empty() {
            return Err(SimError::EmptySet);
        }
        let mut scores = vec![vec![0.0; d2.len()]; d1.len()];
        for (i, a) in d1.iter().enumerate() {
            for (j, b) in d2.iter().enumerate() {
                scores[i][j] = self.resnik(a, b)?;
            }
        }
        Ok(bma_from_matrix(&scores))
    }
}

/// Unordered drug pair, `a < b`. Positive when the drugs share a target.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DrugPair {
    pub a: String,
    pub b: String,
    pub positive: bool,
}

/// Drugs present in both the annotation corpus and the target table.
pub fn matched_drugs(corpus: &AnnotationCorpus, targets: &BTreeMap<String, BTreeSet<String>>) -> Vec<String> {
    corpus.drugs().filter(|d| targets.contains_key(*d)).cloned().collect()
}

/// Every unordered pair over `drugs`; a drug missing from `targets` has no
/// targets and only forms negative pairs.
pub fn build_pairs(targets: &BTreeMap<String, BTreeSet<String>>, drugs: &[String]) -> Vec<DrugPair> {
    let drugs: Vec<&String> = drugs.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let none = BTreeSet::new();
    let mut out = Vec::with_capacity(drugs.len() * drugs.len().saturating_sub(1) / 2);
    for (i, a) in drugs.iter().enumerate() {
        let ta = targets.get(*a).unwrap_or(&none);
        for b in &drugs[i + 1..] {
            let tb = targets.get(*b).unwrap_or(&none);
            out.push(DrugPair {
                a: (*a).clone(),
                b: (*b).clone(),
                positive: !ta.is_disjoint(tb),
            });
        }
    }
    out
}

/// Mann-Whitney AUC with midranks for ties.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(SimError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(SimError::NotANumber(i));
    }
    let positives = labels.iter().filter(|l| **l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(SimError::SingleClass { positives, negatives });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    // Ranks are 1-based; a tie group spanning ranks lo..=hi gets (lo+hi)/2.
    // Working in doubled ranks keeps every intermediate an integer.
    let mut doubled_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let doubled = (start + 1 + end) as u64;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i]).count() as u64;
        doubled_rank_sum += doubled * pos_in_group;
        start = end;
    }
    let p = positives as u64;
    let doubled_u = doubled_rank_sum - p * (p + 1);
    Ok(doubled_u as f64 / 2.0 / (positives as f64 * negatives as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub mean_pos: f64,
    pub mean_neg: f64,
    pub delta: f64,
    pub counts: PairCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub a: String,
    pub b: String,
    pub positive: bool,
    pub score: f64,
}

pub fn evaluate(corpus: &AnnotationCorpus, graph: &OntologyGraph, pairs: &[DrugPair]) -> Result<EvalReport> {
    evaluate_with_scores(corpus, graph, pairs).map(|(r, _)| r)
}

/// Scores every pair by BMA (in parallel) and summarizes the separation of
/// positives from negatives.
pub fn evaluate_with_scores(
    corpus: &AnnotationCorpus,
    graph: &OntologyGraph,
    pairs: &[DrugPair],
) -> Result<(EvalReport, Vec<PairScore>)> {
    let missing: BTreeSet<&String> = pairs
        .iter()
        .flat_map(|p| [&p.a, &p.b])
        .filter(|d| corpus.get(d).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(SimError::Unannotated(missing.into_iter().cloned().collect()));
    }
    let ic = compute_ic(corpus, graph)?;
    let index = SimilarityIndex::new(corpus, &ic, graph)?;
    let scored: Vec<PairScore> = pairs
        .par_iter()
        .map(|p| {
            let score = index.bma(&corpus.annotations[&p.a], &corpus.annotations[&p.b])?;
            Ok(PairScore {
                a: p.a.clone(),
                b: p.b.clone(),
                positive: p.positive,
                score,
            })
        })
        .collect::<Result<_>>()?;

    let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    let labels: Vec<bool> = scored.iter().map(|s| s.positive).collect();
    let auc = auc_roc(&scores, &labels)?;
    let mean = |want: bool| {
        let picked: Vec<f64> = scored.iter().filter(|s| s.positive == want).map(|s| s.score).collect();
        picked.iter().sum::<f64>() / picked.len() as f64
    };
    let (mean_pos, mean_neg) = (mean(true), mean(false));
    let positives = labels.iter().filter(|l| **l).count();
    Ok((
        EvalReport {
            auc,
            mean_pos,
            mean_neg,
            delta: mean_pos - mean_neg,
            counts: PairCounts {
                positives,
                negatives: labels.len() - positives,
            },
        },
        scored,
    ))
}

/// One row of a level-tagged hierarchy file. A row without a parent only
/// declares its term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyEdge {
    pub child: TermId,
    pub parent: Option<TermId>,
    pub level: Option<String>,
}

pub const MEDDRA_PREFIX: &str = "MEDDRA";
const MEDDRA_LEVELS: [&str; 5] = ["LLT", "PT", "HLT", "HLGT", "SOC"];

/// Bare MedDRA codes get the `MEDDRA:` prefix; CURIEs pass through.
pub fn meddra_id(code: &str) -> Result<TermId, OntologyError> {
    let code = code.trim();
    if code.contains(':') {
        TermId::new(code)
    } else {
        TermId::new(format!("{MEDDRA_PREFIX}:{code}"))
    }
}

/// Builds a graph from child → parent rows so the same similarity code runs
/// over non-OBO hierarchies. Parents never listed as children take the level
/// above their child's when the levels are MedDRA's.
pub fn load_hierarchy_edges(edges: &[HierarchyEdge]) -> Result<OntologyGraph> {
    let mut terms: BTreeMap<TermId, OntologyTerm> = BTreeMap::new();
    let mut levels: BTreeMap<TermId, String> = BTreeMap::new();
    for e in edges {
        let term = terms
            .entry(e.child.clone())
            .or_insert_with(|| OntologyTerm::new(e.child.clone(), e.child.as_str()));
        if let Some(p) = &e.parent {
            if !term.parents.contains(p) {
                term.parents.push(p.clone());
            }
        }
        if let Some(level) = &e.level {
            levels.insert(e.child.clone(), level.clone());
        }
    }
    for e in edges {
        let Some(p) = &e.parent else { continue };
        terms
            .entry(p.clone())
            .or_insert_with(|| OntologyTerm::new(p.clone(), p.as_str()));
        if !levels.contains_key(p) {
            let above = e
                .level
                .as_deref()
                .and_then(|l| MEDDRA_LEVELS.iter().position(|m| m.eq_ignore_ascii_case(l)))
                .and_then(|i| MEDDRA_LEVELS.get(i + 1));
            if let Some(above) = above {
                levels.insert(p.clone(), (*above).to_string());
            }
        }
    }
    for (id, level) in levels {
        if let Some(t) = terms.get_mut(&id) {
            t.level = Some(level);
        }
    }
    Ok(OntologyGraph::from_terms(terms.into_values())?)
}

/// Parses `child<TAB>parent<TAB>level` rows. Blank lines and `#` comments
/// are skipped, as is a first row whose code field has no digits (a header).
pub fn parse_hierarchy_tsv(text: &str) -> Result<Vec<HierarchyEdge>> {
    let mut out = Vec::new();
    for (n, line) in data_lines(text) {
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if n == first_data_line(text) && !cols[0].bytes().any(|b| b.is_ascii_digit()) {
            continue;
        }
        let child = meddra_id(cols[0]).map_err(|e| parse_err(n, e.to_string()))?;
        let parent = match cols.get(1).filter(|s| !s.is_empty()) {
            Some(p) => Some(meddra_id(p).map_err(|e| parse_err(n, e.to_string()))?),
            None => None,
        };
        let level = cols.get(2).filter(|s| !s.is_empty()).map(|s| s.to_ascii_uppercase());
        out.push(HierarchyEdge { child, parent, level });
    }
    Ok(out)
}

/// How raw baseline codes were turned into preferred terms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Normalization {
    pub replaced: usize,
    pub dropped: Vec<TermId>,
    pub drugs_dropped: Vec<String>,
}

/// Replaces lowest-level (`LLT`) codes by their `PT` parents and drops codes
/// the hierarchy does not know. Drugs left without terms are removed.
pub fn normalize_to_preferred(
    raw: &BTreeMap<String, BTreeSet<TermId>>,
    graph: &OntologyGraph,
) -> Result<(AnnotationCorpus, Normalization)> {
    let mut report = Normalization::default();
    let mut dropped = BTreeSet::new();
    let mut out = BTreeMap::new();
    for (drug, codes) in raw {
        let mut terms = BTreeSet::new();
        for code in codes {
            let Some(term) = graph.term(code) else {
                dropped.insert(code.clone());
                continue;
            };
            if term.level.as_deref() == Some("LLT") {
                report.replaced += 1;
                terms.extend(term.parents.iter().cloned());
            } else {
                terms.insert(code.clone());
            }
        }
        if terms.is_empty() {
            report.drugs_dropped.push(drug.clone());
        } else {
            out.insert(drug.clone(), terms);
        }
    }
    report.dropped = dropped.into_iter().collect();
    Ok((AnnotationCorpus::new(out)?, report))
}

fn parse_err(line: usize, message: impl Into<String>) -> SimError {
    SimError::Parse {
        line,
        message: message.into(),
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn first_data_line(text: &str) -> usize {
    data_lines(text).next().map_or(0, |(n, _)| n)
}

fn two_columns(line: &str, n: usize) -> Result<(&str, &str)> {
    let mut cols = line.split('\t').map(str::trim);
    match (cols.next(), cols.next()) {
        (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => Ok((a, b)),
        _ => Err(parse_err(n, "expected two tab-separated columns")),
    }
}

/// `drug<TAB>term` rows. A first row whose term column is not a CURIE is
/// taken as a header.
pub fn parse_annotations_tsv(text: &str) -> Result<BTreeMap<String, BTreeSet<TermId>>> {
    parse_annotation_rows(text, |s| TermId::new(s))
}

/// `drug<TAB>MedDRA code` rows; bare codes get the `MEDDRA:` prefix.
pub fn parse_meddra_annotations_tsv(text: &str) -> Result<BTreeMap<String, BTreeSet<TermId>>> {
    parse_annotation_rows(text, |code| {
        if code.bytes().any(|b| b.is_ascii_digit()) {
            meddra_id(code)
        } else {
            Err(OntologyError::InvalidId(code.to_string()))
        }
    })
}

fn parse_annotation_rows(
    text: &str,
    to_id: impl Fn(&str) -> Result<TermId, OntologyError>,
) -> Result<BTreeMap<String, BTreeSet<TermId>>> {
    let header = first_data_line(text);
    let mut out: BTreeMap<String, BTreeSet<TermId>> = BTreeMap::new();
    for (n, line) in data_lines(text) {
        let (drug, term) = two_columns(line, n)?;
        let id = match to_id(term) {
            Ok(id) => id,
            Err(_) if n == header => continue,
            Err(e) => return Err(parse_err(n, e.to_string())),
        };
        out.entry(drug.to_string()).or_default().insert(id);
    }
    Ok(out)
}

/// `drug<TAB>target` rows.
pub fn parse_targets_tsv(text: &str) -> Result<BTreeMap<String, BTreeSet<String>>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (n, line) in data_lines(text) {
        let (drug, target) = two_columns(line, n)?;
        out.entry(drug.to_string()).or_default().insert(target.to_string());
    }
    Ok(out)
}

/// Same terms, with every non-root term hung directly under the roots.
/// Useful as a control showing how much depth contributes.
pub fn flatten_hierarchy(graph: &OntologyGraph) -> Result<OntologyGraph> {
    let roots: Vec<TermId> = graph.roots().iter().cloned().collect();
    let terms = graph.terms().map(|t| {
        let mut t = t.clone();
        t.parents = if graph.roots().contains(&t.id) {
            Vec::new()
        } else {
            roots.clone()
        };
        t
    });
    Ok(OntologyGraph::from_terms(terms)?)
}
