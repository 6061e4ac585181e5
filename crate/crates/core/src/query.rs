//! Competency questions answered by subsumption closure over the ontologies
//! plus label filters, without a general SPARQL engine.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{rdf, rdfs, sk, term_id_from_iri, Iri, Kind, Term, TripleSet};
use crate::ontology::{OntologyGraph, TermId};

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("root {0} is not in any loaded ontology")]
    RootNotFound(TermId),
    #[error("query `{0}` has neither a root nor a label filter")]
    EmptySpec(String),
    #[error("query `{0}` selects no association kinds")]
    NoKinds(String),
}

pub type Result<T, E = QueryError> = std::result::Result<T, E>;

/// One pattern: associations of the given kinds whose target lies under
/// `root` or whose target label contains one of `label_contains`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub kinds: BTreeSet<Kind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<TermId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub label_contains: Vec<String>,
}

impl QuerySpec {
    pub fn under(kind: Kind, root: &str) -> Self {
        QuerySpec {
            kinds: BTreeSet::from([kind]),
            root: Some(TermId::new(root).expect("valid root id")),
            label_contains: Vec::new(),
        }
    }

    pub fn labelled(kind: Kind, needles: &[&str]) -> Self {
        QuerySpec {
            kinds: BTreeSet::from([kind]),
            root: None,
            label_contains: needles.iter().map(|s| s.to_lowercase()).collect(),
        }
    }

    fn check(&self, name: &str) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(QueryError::NoKinds(name.to_string()));
        }
        if self.root.is_none() && self.label_contains.is_empty() {
            return Err(QueryError::EmptySpec(name.to_string()));
        }
        Ok(())
    }
}

/// A named question; its result is the union over `specs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub title: String,
    pub specs: Vec<QuerySpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub questions: Vec<Question>,
}

pub const CARDIOVASCULAR_ROOT: &str = "HP:0001626";
pub const NERVOUS_SYSTEM_ROOT: &str = "HP:0000707";
pub const ARRHYTHMIA_ROOT: &str = "HP:0011675";
/// Abnormality of metabolism/homeostasis. The question only names
/// "metabolic side effects", so this root is a default, not a given.
pub const METABOLIC_ROOT: &str = "HP:0001939";
pub const KIDNEY_ROOT: &str = "HP:0000077";
pub const INFECTIOUS_DISEASE_ROOT: &str = "MONDO:0005550";

impl Default for QuestionSet {
    fn default() -> Self {
        let q = |id: &str, title: &str, specs: Vec<QuerySpec>| Question {
            id: id.to_string(),
            title: title.to_string(),
            specs,
        };
        QuestionSet {
            questions: vec![
                q(
                    "cardiovascular",
                    "Find all drugs with any cardiovascular side effect",
                    vec![QuerySpec::under(Kind::SideEffect, CARDIOVASCULAR_ROOT)],
                ),
                q(
                    "nervous_system",
                    "Find all drugs with any nervous system side effect",
                    vec![QuerySpec::under(Kind::SideEffect, NERVOUS_SYSTEM_ROOT)],
                ),
                q(
                    "arrhythmia",
                    "Find drugs affecting cardiac rhythm (Arrhythmia)",
                    vec![QuerySpec::under(Kind::SideEffect, ARRHYTHMIA_ROOT)],
                ),
                q(
                    "metabolic",
                    "Find drugs with metabolic side effects",
                    vec![QuerySpec::under(Kind::SideEffect, METABOLIC_ROOT)],
                ),
                q(
                    "renal_contraindication",
                    "Find drugs contraindicated in kidney conditions",
                    vec![
                        QuerySpec::under(Kind::PhenotypeContraindication, KIDNEY_ROOT),
                        QuerySpec::labelled(Kind::DiseaseContraindication, &["renal", "kidney"]),
                    ],
                ),
                q(
                    "infectious_indication",
                    "Find drugs indicated for any infectious disease",
                    vec![QuerySpec::under(Kind::DiseaseIndication, INFECTIOUS_DISEASE_ROOT)],
                ),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct AssociationRow {
    kind: Kind,
    drug: Iri,
    target: Iri,
}

/// Association rows and labels pulled out of a graph once, for repeated
/// querying.
#[derive(Debug, Clone, Default)]
pub struct KgIndex {
    rows: Vec<AssociationRow>,
    labels: HashMap<Iri, String>,
}

impl KgIndex {
    /// Association nodes lacking a drug or a target are skipped; a node with
    /// several yields one row per combination.
    pub fn new(triples: &TripleSet) -> Self {
        let type_p = rdf("type");
        let label_p = rdfs("label");
        let refers = sk("refersToDrug");
        let kind_of: BTreeMap<Iri, Kind> = Kind::ALL.into_iter().map(|k| (k.class_iri(), k)).collect();

        let mut labels = HashMap::new();
        let mut kinds: BTreeMap<&Iri, BTreeSet<Kind>> = BTreeMap::new();
        let mut drugs: BTreeMap<&Iri, Vec<&Iri>> = BTreeMap::new();
        let mut targets: BTreeMap<(&Iri, &Iri), Vec<&Iri>> = BTreeMap::new();
        for t in triples {
            match &t.object {
                Term::Literal(l) if t.predicate == label_p => {
                    labels.entry(t.subject.clone()).or_insert_with(|| l.lexical.clone());
                }
                Term::Iri(o) if t.predicate == type_p => {
                    if let Some(k) = kind_of.get(o) {
                        kinds.entry(&t.subject).or_default().insert(*k);
                    }
                }
                Term::Iri(o) if t.predicate == refers => drugs.entry(&t.subject).or_default().push(o),
                Term::Iri(o) => targets.entry((&t.subject, &t.predicate)).or_default().push(o),
                _ => {}
            }
        }
        let mut rows = Vec::new();
        for (node, node_kinds) in &kinds {
            for kind in node_kinds {
                let pred = kind.target_predicate();
                let Some(ts) = targets.get(&(*node, &pred)) else {
                    continue;
                };
                for d in drugs.get(node).into_iter().flatten() {
                    for target in ts {
                        rows.push(AssociationRow {
                            kind: *kind,
                            drug: (*d).clone(),
                            target: (*target).clone(),
                        });
                    }
                }
            }
        }
        KgIndex { rows, labels }
    }

    pub fn associations(&self) -> usize {
        self.rows.len()
    }

    pub fn label(&self, iri: &Iri) -> Option<&str> {
        self.labels.get(iri).map(String::as_str)
    }
}

/// The ontologies consulted for closures and target labels.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ontologies<'a> {
    pub graphs: &'a [&'a OntologyGraph],
}

impl<'a> Ontologies<'a> {
    pub fn new(graphs: &'a [&'a OntologyGraph]) -> Self {
        Ontologies { graphs }
    }

    fn owner(&self, id: &TermId) -> Option<&'a OntologyGraph> {
        self.graphs.iter().copied().find(|g| g.contains(id))
    }

    fn name(&self, id: &TermId) -> Option<&'a str> {
        self.owner(id).and_then(|g| g.term(id)).map(|t| t.name.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Match {
    pub drug_label: String,
    pub drug: Iri,
    pub kind: Kind,
    /// CURIE for ontology targets, IRI for drug collections.
    pub target: String,
    pub target_label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryResult {
    pub drugs: BTreeSet<(Iri, String)>,
    pub matches: BTreeSet<Match>,
}

impl QueryResult {
    fn push(&mut self, m: Match) {
        self.drugs.insert((m.drug.clone(), m.drug_label.clone()));
        self.matches.insert(m);
    }

    fn extend(&mut self, other: QueryResult) {
        self.drugs.extend(other.drugs);
        self.matches.extend(other.matches);
    }

    /// Distinct drug labels, the way a `SELECT DISTINCT ?drug_name` count
    /// sees them.
    pub fn unique_drugs(&self) -> usize {
        self.drugs.iter().map(|(_, l)| l).collect::<BTreeSet<_>>().len()
    }
}

pub fn drugs_under(index: &KgIndex, ontologies: Ontologies<'_>, spec: &QuerySpec) -> Result<QueryResult> {
    let closure = match &spec.root {
        Some(root) => {
            let graph = ontologies
                .owner(root)
                .ok_or_else(|| QueryError::RootNotFound(root.clone()))?;
            graph
                .descendants_or_self(root)
                .map_err(|_| QueryError::RootNotFound(root.clone()))?
        }
        None => BTreeSet::new(),
    };
    let needles: Vec<String> = spec.label_contains.iter().map(|s| s.to_lowercase()).collect();

    let mut result = QueryResult::default();
    for row in index.rows.iter().filter(|r| spec.kinds.contains(&r.kind)) {
        let target_id = term_id_from_iri(&row.target);
        let target_label = target_id
            .as_ref()
            .and_then(|id| ontologies.name(id))
            .or_else(|| index.label(&row.target))
            .unwrap_or("")
            .to_string();
        let in_closure = target_id.as_ref().is_some_and(|id| closure.contains(id));
        let lower = target_label.to_lowercase();
        let labelled = needles.iter().any(|n| lower.contains(n.as_str()));
        if !(in_closure || labelled) {
            continue;
        }
        result.push(Match {
            drug_label: index.label(&row.drug).unwrap_or(row.drug.as_str()).to_string(),
            drug: row.drug.clone(),
            kind: row.kind,
            target: target_id.map_or_else(|| row.target.to_string(), |id| id.to_string()),
            target_label,
        });
    }
    Ok(result)
}

pub fn run_question(index: &KgIndex, ontologies: Ontologies<'_>, question: &Question) -> Result<QueryResult> {
    let mut out = QueryResult::default();
    for spec in &question.specs {
        spec.check(&question.id)?;
        out.extend(drugs_under(index, ontologies, spec)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionOutcome {
    pub id: String,
    pub title: String,
    pub unique_drugs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub result: QueryResult,
}

/// Runs every question in parallel. A question that cannot run (say its root
/// is missing from the loaded ontologies) reports zero drugs and the reason.
pub fn run_competency_suite(
    index: &KgIndex,
    ontologies: Ontologies<'_>,
    questions: &QuestionSet,
) -> Vec<QuestionOutcome> {
    questions
        .questions
        .par_iter()
        .map(|q| match run_question(index, ontologies, q) {
            Ok(result) => QuestionOutcome {
                id: q.id.clone(),
                title: q.title.clone(),
                unique_drugs: result.unique_drugs(),
                error: None,
                result,
            },
            Err(e) => QuestionOutcome {
                id: q.id.clone(),
                title: q.title.clone(),
                unique_drugs: 0,
                error: Some(e.to_string()),
                result: QueryResult::default(),
            },
        })
        .collect()
}
