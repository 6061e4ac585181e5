//! Shape rules for association and collection nodes.
//!
//! Rule 1: structural integrity (typed drug collections with members).
//! Rule 2: provenance (at least one source, each a declared SPL document).
//! Rule 3: target IRI pattern for the association kind.
//! Rule 4: cardinality (one drug, one target, one kind).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{rdf, sio, sk, Iri, Kind, Term, TripleSet, SIO_ACTIVE_INGREDIENT, SIO_HAS_MEMBER, SIO_HAS_SOURCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum ShapeRule {
    Structure = 1,
    Provenance = 2,
    TargetPattern = 3,
    Cardinality = 4,
}

impl From<ShapeRule> for u8 {
    fn from(r: ShapeRule) -> u8 {
        r as u8
    }
}

impl TryFrom<u8> for ShapeRule {
    type Error = String;

    fn try_from(n: u8) -> Result<Self, String> {
        match n {
            1 => Ok(ShapeRule::Structure),
            2 => Ok(ShapeRule::Provenance),
            3 => Ok(ShapeRule::TargetPattern),
            4 => Ok(ShapeRule::Cardinality),
            _ => Err(format!("no shape rule {n}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub node: Iri,
    pub rule: ShapeRule,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub associations_checked: usize,
    pub collections_checked: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, rule: ShapeRule) -> usize {
        self.violations.iter().filter(|v| v.rule == rule).count()
    }
}

#[derive(Default)]
struct Node<'a> {
    types: BTreeSet<&'a Iri>,
    out: BTreeMap<&'a Iri, Vec<&'a Term>>,
}

impl<'a> Node<'a> {
    fn objects(&self, p: &Iri) -> &[&'a Term] {
        self.out.get(p).map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn validate_shapes(triples: &TripleSet) -> ValidationReport {
    let type_p = rdf("type");
    let mut nodes: BTreeMap<&Iri, Node> = BTreeMap::new();
    for t in triples {
        let node = nodes.entry(&t.subject).or_default();
        if t.predicate == type_p {
            if let Term::Iri(c) = &t.object {
                node.types.insert(c);
            }
        }
        node.out.entry(&t.predicate).or_default().push(&t.object);
    }

    let collection_class = sk("DrugCollection");
    let document_class = sk("SPLDocument");
    let ingredient_class = sio(SIO_ACTIVE_INGREDIENT);
    let refers = sk("refersToDrug");
    let has_source = sio(SIO_HAS_SOURCE);
    let has_member = sio(SIO_HAS_MEMBER);
    let kind_classes: BTreeMap<Iri, Kind> = Kind::ALL.into_iter().map(|k| (k.class_iri(), k)).collect();
    let target_predicates: BTreeMap<Iri, Kind> = Kind::ALL.into_iter().map(|k| (k.target_predicate(), k)).collect();
    let has_type = |iri: &Iri, class: &Iri| nodes.get(iri).is_some_and(|n| n.types.contains(class));

    let mut report = ValidationReport::default();
    let mut flag = |node: &Iri, rule: ShapeRule, message: String| {
        report.violations.push(Violation {
            node: node.clone(),
            rule,
            message,
        });
    };
    let mut associations = 0;
    let mut collections = 0;

    for (iri, node) in &nodes {
        let kinds: Vec<Kind> = node
            .types
            .iter()
            .filter_map(|c| kind_classes.get(*c).copied())
            .collect();

        if node.types.contains(&collection_class) {
            collections += 1;
            let members = node.objects(&has_member);
            if members.is_empty() {
                flag(iri, ShapeRule::Structure, "drug collection has no member".into());
            }
            for m in members {
                match m {
                    Term::Iri(m) if has_type(m, &ingredient_class) => {}
                    other => flag(
                        iri,
                        ShapeRule::Structure,
                        format!("member {} is not an active ingredient", show(other)),
                    ),
                }
            }
        }

        if kinds.is_empty() {
            if !node.objects(&refers).is_empty() {
                flag(
                    iri,
                    ShapeRule::Structure,
                    "refersToDrug on a node without an association type".into(),
                );
            }
            continue;
        }
        associations += 1;
        if kinds.len() > 1 {
            flag(
                iri,
                ShapeRule::Cardinality,
                format!("{} association types", kinds.len()),
            );
        }

        let drugs = node.objects(&refers);
        if drugs.len() != 1 {
            flag(
                iri,
                ShapeRule::Cardinality,
                format!("expected 1 refersToDrug, found {}", drugs.len()),
            );
        }
        for d in drugs {
            match d {
                Term::Iri(d) if has_type(d, &collection_class) => {}
                other => flag(
                    iri,
                    ShapeRule::Structure,
                    format!("refersToDrug target {} is not a drug collection", show(other)),
                ),
            }
        }

        let sources = node.objects(&has_source);
        if sources.is_empty() {
            flag(iri, ShapeRule::Provenance, "no source document".into());
        }
        for s in sources {
            match s {
                Term::Iri(s) if has_type(s, &document_class) => {}
                other => flag(
                    iri,
                    ShapeRule::Provenance,
                    format!("source {} is not a declared SPL document", show(other)),
                ),
            }
        }

        for kind in &kinds {
            let targets = node.objects(&kind.target_predicate());
            if targets.len() != 1 {
                flag(
                    iri,
                    ShapeRule::Cardinality,
                    format!("expected 1 {}, found {}", kind.target_predicate_name(), targets.len()),
                );
            }
            for t in targets {
                match t {
                    Term::Iri(t) if kind.target_kind().matches(t) => {}
                    other => flag(
                        iri,
                        ShapeRule::TargetPattern,
                        format!("{} target {} does not match the expected pattern", kind, show(other)),
                    ),
                }
            }
        }
        for (pred, other_kind) in &target_predicates {
            if !kinds.contains(other_kind) && !node.objects(pred).is_empty() {
                flag(
                    iri,
                    ShapeRule::Cardinality,
                    format!(
                        "unexpected {} on a {} node",
                        other_kind.target_predicate_name(),
                        kinds[0]
                    ),
                );
            }
        }
    }
    report.associations_checked = associations;
    report.collections_checked = collections;
    report.violations.sort();
    report
}

fn show(t: &Term) -> String {
    match t {
        Term::Iri(i) => i.to_string(),
        Term::Literal(l) => format!("{:?}", l.lexical),
    }
}
