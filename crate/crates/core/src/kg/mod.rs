//! Reified drug-association RDF graph: IRIs, construction, Turtle I/O,
//! shape validation and statistics.

mod assemble;
mod shapes;
mod stats;
mod turtle;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::TermId;

pub use assemble::{assemble, AssemblyOptions, AssemblySummary, ProductInfo};
pub use shapes::{validate_shapes, ShapeRule, ValidationReport, Violation};
pub use stats::{compute_stats, emit_void, GraphStats};
pub use turtle::{parse_turtle, serialize_turtle, serialize_turtle_with, Prefixes, TurtleError};

pub const SK: &str = "http://sidekick.bio2vec.net/";
pub const SIO: &str = "http://semanticscience.org/resource/";
pub const OBO: &str = "http://purl.obolibrary.org/obo/";
pub const RXNORM: &str = "http://purl.bioontology.org/ontology/RXNORM/";
pub const RDF: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const RDFS: &str = "http://www.w3.org/2000/01/rdf-schema#";
pub const OWL: &str = "http://www.w3.org/2002/07/owl#";
pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";
pub const DCTERMS: &str = "http://purl.org/dc/terms/";
pub const VOID: &str = "http://rdfs.org/ns/void#";

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

// SIO classes and relations.
pub const SIO_ASSOCIATION: &str = "SIO_000897";
pub const SIO_COLLECTION: &str = "SIO_000616";
pub const SIO_PHARMACEUTICAL_DRUG: &str = "SIO_010039";
pub const SIO_ACTIVE_INGREDIENT: &str = "SIO_010077";
pub const SIO_DOCUMENT: &str = "SIO_000148";
pub const SIO_HAS_PART: &str = "SIO_000028";
pub const SIO_HAS_MEMBER: &str = "SIO_000059";
pub const SIO_HAS_SOURCE: &str = "SIO_000253";
pub const SIO_REFERS_TO: &str = "SIO_000628";

pub const CC_BY_4: &str = "https://creativecommons.org/licenses/by/4.0/";

#[derive(Debug, Error, PartialEq)]
pub enum KgError {
    #[error("invalid IRI {0:?}")]
    InvalidIri(String),
    #[error("collection needs at least one ingredient")]
    EmptyCollection,
    #[error("ingredient id {0:?} is not numeric")]
    NonNumericId(String),
    #[error("ingredient id {0:?} listed twice")]
    DuplicateId(String),
    #[error("dangling reference to {0}")]
    Dangling(String),
    #[error("{kind} association cannot target {target}")]
    TargetPattern { kind: Kind, target: String },
    #[error("association {0} has no source document")]
    NoSource(String),
}

pub type Result<T, E = KgError> = std::result::Result<T, E>;

/// An absolute IRI.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Iri(String);

impl Iri {
    pub fn new(s: impl Into<String>) -> Result<Self> {
        let s = s.into();
        let scheme_ok = s.split_once(':').is_some_and(|(scheme, _)| {
            let mut cs = scheme.chars();
            cs.next().is_some_and(|c| c.is_ascii_alphabetic())
                && cs.all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c))
        });
        let chars_ok = s
            .chars()
            .all(|c| !c.is_whitespace() && !c.is_control() && !"<>\"{}|^`\\".contains(c));
        if scheme_ok && chars_ok {
            Ok(Iri(s))
        } else {
            Err(KgError::InvalidIri(s))
        }
    }

    pub(crate) fn from_trusted(s: String) -> Self {
        debug_assert!(Iri::new(s.clone()).is_ok(), "{s}");
        Iri(s)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn local_after<'a>(&'a self, namespace: &str) -> Option<&'a str> {
        self.0.strip_prefix(namespace)
    }
}

impl TryFrom<String> for Iri {
    type Error = KgError;

    fn try_from(s: String) -> Result<Self> {
        Iri::new(s)
    }
}

impl From<Iri> for String {
    fn from(i: Iri) -> String {
        i.0
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn sk(local: &str) -> Iri {
    Iri::from_trusted(format!("{SK}{local}"))
}

pub fn sio(local: &str) -> Iri {
    Iri::from_trusted(format!("{SIO}{local}"))
}

pub fn rdf(local: &str) -> Iri {
    Iri::from_trusted(format!("{RDF}{local}"))
}

pub fn rdfs(local: &str) -> Iri {
    Iri::from_trusted(format!("{RDFS}{local}"))
}

pub fn owl(local: &str) -> Iri {
    Iri::from_trusted(format!("{OWL}{local}"))
}

pub fn xsd(local: &str) -> Iri {
    Iri::from_trusted(format!("{XSD}{local}"))
}

pub fn dcterms(local: &str) -> Iri {
    Iri::from_trusted(format!("{DCTERMS}{local}"))
}

pub fn void(local: &str) -> Iri {
    Iri::from_trusted(format!("{VOID}{local}"))
}

/// `HP:0002315` → `http://purl.obolibrary.org/obo/HP_0002315`.
pub fn obo_iri(id: &TermId) -> Iri {
    Iri::from_trusted(format!("{OBO}{}_{}", id.prefix(), id.local()))
}

/// Inverse of [`obo_iri`].
pub fn term_id_from_iri(iri: &Iri) -> Option<TermId> {
    let local = iri.local_after(OBO)?;
    let (prefix, rest) = local.split_once('_')?;
    TermId::new(format!("{prefix}:{rest}")).ok()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub lexical: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub datatype: Option<Iri>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lang: Option<String>,
}

impl Literal {
    pub fn plain(s: impl Into<String>) -> Self {
        Literal {
            lexical: s.into(),
            datatype: None,
            lang: None,
        }
    }

    pub fn typed(s: impl Into<String>, datatype: Iri) -> Self {
        Literal {
            lexical: s.into(),
            datatype: Some(datatype),
            lang: None,
        }
    }

    pub fn integer(n: u64) -> Self {
        Literal::typed(n.to_string(), xsd("integer"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    Iri(Iri),
    Literal(Literal),
}

impl Term {
    pub fn as_iri(&self) -> Option<&Iri> {
        match self {
            Term::Iri(i) => Some(i),
            Term::Literal(_) => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Term::Literal(l) => Some(l),
            Term::Iri(_) => None,
        }
    }
}

impl From<Iri> for Term {
    fn from(i: Iri) -> Self {
        Term::Iri(i)
    }
}

impl From<Literal> for Term {
    fn from(l: Literal) -> Self {
        Term::Literal(l)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: Iri,
    pub predicate: Iri,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: Iri, predicate: Iri, object: impl Into<Term>) -> Self {
        Triple {
            subject,
            predicate,
            object: object.into(),
        }
    }
}

pub type TripleSet = BTreeSet<Triple>;

/// What an association's target must look like.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Phenotype,
    Disease,
    Drug,
}

impl TargetKind {
    pub fn matches(self, iri: &Iri) -> bool {
        match self {
            TargetKind::Phenotype => obo_pattern(iri, "HP"),
            TargetKind::Disease => obo_pattern(iri, "MONDO"),
            TargetKind::Drug => is_collection_iri(iri),
        }
    }
}

fn obo_pattern(iri: &Iri, prefix: &str) -> bool {
    iri.local_after(OBO)
        .and_then(|l| l.strip_prefix(prefix))
        .and_then(|l| l.strip_prefix('_'))
        .is_some_and(|digits| digits.len() == 7 && digits.bytes().all(|b| b.is_ascii_digit()))
}

const COLLECTION_PREFIX: &str = "ingredient_set_";

pub fn is_collection_iri(iri: &Iri) -> bool {
    iri.local_after(SK)
        .and_then(|l| l.strip_prefix(COLLECTION_PREFIX))
        .is_some_and(|ids| {
            ids.split('_')
                .all(|id| !id.is_empty() && id.bytes().all(|b| b.is_ascii_digit()))
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Kind {
    SideEffect,
    DiseaseIndication,
    PhenotypeIndication,
    DrugIndication,
    DiseaseContraindication,
    PhenotypeContraindication,
    DrugContraindication,
}

impl Kind {
    pub const ALL: [Kind; 7] = [
        Kind::SideEffect,
        Kind::DiseaseIndication,
        Kind::PhenotypeIndication,
        Kind::DrugIndication,
        Kind::DiseaseContraindication,
        Kind::PhenotypeContraindication,
        Kind::DrugContraindication,
    ];

    pub fn class_name(self) -> &'static str {
        match self {
            Kind::SideEffect => "SideEffect",
            Kind::DiseaseIndication => "DiseaseIndication",
            Kind::PhenotypeIndication => "PhenotypeIndication",
            Kind::DrugIndication => "DrugIndication",
            Kind::DiseaseContraindication => "DiseaseContraindication",
            Kind::PhenotypeContraindication => "PhenotypeContraindication",
            Kind::DrugContraindication => "DrugContraindication",
        }
    }

    pub fn from_class_name(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.class_name() == s)
    }

    /// Used in association IRIs.
    pub fn tag(self) -> &'static str {
        match self {
            Kind::SideEffect => "side_effect",
            Kind::DiseaseIndication => "disease_indication",
            Kind::PhenotypeIndication => "phenotype_indication",
            Kind::DrugIndication => "drug_indication",
            Kind::DiseaseContraindication => "disease_contraindication",
            Kind::PhenotypeContraindication => "phenotype_contraindication",
            Kind::DrugContraindication => "drug_contraindication",
        }
    }

    pub fn target_predicate_name(self) -> &'static str {
        match self {
            Kind::SideEffect => "hasSideEffect",
            Kind::DiseaseIndication => "isIndicatedForDisease",
            Kind::PhenotypeIndication => "isIndicatedForPhenotype",
            Kind::DrugIndication => "isIndicatedWithDrug",
            Kind::DiseaseContraindication => "isContraindicatedInDisease",
            Kind::PhenotypeContraindication => "isContraindicatedInPhenotype",
            Kind::DrugContraindication => "isContraindicatedWithDrug",
        }
    }

    pub fn class_iri(self) -> Iri {
        sk(self.class_name())
    }

    pub fn target_predicate(self) -> Iri {
        sk(self.target_predicate_name())
    }

    pub fn target_kind(self) -> TargetKind {
        match self {
            Kind::SideEffect | Kind::PhenotypeIndication | Kind::PhenotypeContraindication => TargetKind::Phenotype,
            Kind::DiseaseIndication | Kind::DiseaseContraindication => TargetKind::Disease,
            Kind::DrugIndication | Kind::DrugContraindication => TargetKind::Drug,
        }
    }

    fn description(self) -> &'static str {
        match self {
            Kind::SideEffect => {
                "Association between a drug collection and a phenotype reported as an adverse reaction."
            }
            Kind::DiseaseIndication => "Association between a drug collection and a disease it is indicated for.",
            Kind::PhenotypeIndication => "Association between a drug collection and a phenotype it is indicated for.",
            Kind::DrugIndication => {
                "Association between a drug collection and another drug collection it is indicated with."
            }
            Kind::DiseaseContraindication => {
                "Association between a drug collection and a disease in which it is contraindicated."
            }
            Kind::PhenotypeContraindication => {
                "Association between a drug collection and a phenotype in which it is contraindicated."
            }
            Kind::DrugContraindication => {
                "Association between a drug collection and another drug collection it must not be combined with."
            }
        }
    }

    fn phrase(self) -> &'static str {
        match self {
            Kind::SideEffect => "has side effect",
            Kind::DiseaseIndication | Kind::PhenotypeIndication => "is indicated for",
            Kind::DrugIndication => "is indicated with",
            Kind::DiseaseContraindication | Kind::PhenotypeContraindication => "is contraindicated in",
            Kind::DrugContraindication => "is contraindicated with",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.class_name())
    }
}

/// Sorts ingredient ids numerically; rejects empty, non-numeric or
/// repeated ids.
pub fn sorted_ingredient_ids<S: AsRef<str>>(rxcuis: &[S]) -> Result<Vec<String>> {
    if rxcuis.is_empty() {
        return Err(KgError::EmptyCollection);
    }
    let mut ids: Vec<(u64, String)> = Vec::with_capacity(rxcuis.len());
    for r in rxcuis {
        let r = r.as_ref().trim();
        let n: u64 = r
            .parse()
            .ok()
            .filter(|_| r.bytes().all(|b| b.is_ascii_digit()))
            .ok_or_else(|| KgError::NonNumericId(r.to_string()))?;
        ids.push((n, n.to_string()));
    }
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(KgError::DuplicateId(w[0].1.clone()));
    }
    Ok(ids.into_iter().map(|(_, s)| s).collect())
}

/// `sk:ingredient_set_<ids ascending, joined by _>`.
pub fn mint_collection_iri<S: AsRef<str>>(rxcuis: &[S]) -> Result<Iri> {
    let ids = sorted_ingredient_ids(rxcuis)?;
    Ok(sk(&format!("{COLLECTION_PREFIX}{}", ids.join("_"))))
}

/// `sk:<kind tag>_<collection local>_<target local>`.
pub fn mint_association_iri(kind: Kind, drug: &Iri, target: &Iri) -> Iri {
    let drug_local = drug.local_after(SK).unwrap_or(drug.as_str());
    let target_local = target.as_str().rsplit(['/', '#']).next().unwrap_or(target.as_str());
    sk(&format!(
        "{}_{}_{}",
        kind.tag(),
        drug_local,
        sanitize_local(target_local)
    ))
}

fn sanitize_local(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn document_iri(set_id: &str) -> Iri {
    sk(&format!("spl_{}", sanitize_local(set_id)))
}

/// Namespace settings that vary between deployments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Namespaces {
    pub rxnorm: String,
}

impl Default for Namespaces {
    fn default() -> Self {
        Namespaces {
            rxnorm: RXNORM.to_string(),
        }
    }
}

impl Namespaces {
    pub fn rxnorm_iri(&self, rxcui: &str) -> Iri {
        Iri::from_trusted(format!("{}{}", self.rxnorm, sanitize_local(rxcui)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetMetadata {
    pub title: String,
    pub description: String,
    pub creator: String,
    pub license: String,
    /// `YYYY-MM-DD`.
    pub created: String,
}

impl Default for DatasetMetadata {
    fn default() -> Self {
        DatasetMetadata {
            title: "SIDEKICK".into(),
            description: "Drug indications, contraindications and side effects extracted from FDA Structured Product Labels, mapped to HPO, MONDO and RxNorm.".into(),
            creator: "SIDEKICK contributors".into(),
            license: CC_BY_4.into(),
            created: "1970-01-01".into(),
        }
    }
}

pub fn dataset_iri() -> Iri {
    sk("dataset")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IngredientNode {
    pub rxcui: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionNode {
    pub iri: Iri,
    /// Ascending numerically.
    pub member_rxcuis: Vec<String>,
    pub label: String,
}

impl CollectionNode {
    /// Label is the member names in id order joined by `/`.
    pub fn new(members: &[IngredientNode]) -> Result<Self> {
        let ids: Vec<&str> = members.iter().map(|m| m.rxcui.as_str()).collect();
        let sorted = sorted_ingredient_ids(&ids)?;
        let names: BTreeMap<String, &str> = members
            .iter()
            .map(|m| (m.rxcui.trim().trim_start_matches('0').to_string(), m.label.as_str()))
            .collect();
        let label = sorted
            .iter()
            .map(|id| {
                let name = names.get(id.trim_start_matches('0')).copied().unwrap_or("");
                if name.is_empty() {
                    id.clone()
                } else {
                    name.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("/");
        Ok(CollectionNode {
            iri: mint_collection_iri(&sorted)?,
            member_rxcuis: sorted,
            label,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductNode {
    pub rxcui: String,
    pub label: String,
    pub collection: Iri,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentNode {
    pub set_id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationNode {
    pub iri: Iri,
    pub kind: Kind,
    pub drug: Iri,
    pub target: Iri,
    pub target_label: String,
    /// Set ids of the source documents.
    pub sources: BTreeSet<String>,
}

/// Everything that goes into the graph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgInput {
    pub ingredients: BTreeMap<String, IngredientNode>,
    pub collections: BTreeMap<Iri, CollectionNode>,
    pub products: BTreeMap<String, ProductNode>,
    pub documents: BTreeMap<String, DocumentNode>,
    pub associations: BTreeMap<Iri, AssociationNode>,
}

impl KgInput {
    pub fn add_ingredient(&mut self, rxcui: &str, label: &str) {
        let entry = self
            .ingredients
            .entry(rxcui.to_string())
            .or_insert_with(|| IngredientNode {
                rxcui: rxcui.to_string(),
                label: String::new(),
            });
        if entry.label.is_empty() {
            entry.label = label.to_string();
        }
    }

    /// Adds the collection (and its ingredients) if new; returns its IRI.
    pub fn add_collection(&mut self, members: &[IngredientNode]) -> Result<Iri> {
        let node = CollectionNode::new(members)?;
        for m in members {
            self.add_ingredient(&m.rxcui, &m.label);
        }
        let iri = node.iri.clone();
        self.collections.entry(iri.clone()).or_insert(node);
        Ok(iri)
    }

    pub fn add_product(&mut self, rxcui: &str, label: &str, collection: Iri) {
        self.products.entry(rxcui.to_string()).or_insert_with(|| ProductNode {
            rxcui: rxcui.to_string(),
            label: label.to_string(),
            collection,
        });
    }

    pub fn add_document(&mut self, set_id: &str) {
        self.documents
            .entry(set_id.to_string())
            .or_insert_with(|| DocumentNode {
                set_id: set_id.to_string(),
                label: format!("SPL {set_id}"),
            });
    }

    /// One node per (kind, drug, target); further sources accumulate.
    pub fn add_association(
        &mut self,
        kind: Kind,
        drug: &Iri,
        target: &Iri,
        target_label: &str,
        set_id: &str,
    ) -> Result<Iri> {
        if !kind.target_kind().matches(target) {
            return Err(KgError::TargetPattern {
                kind,
                target: target.to_string(),
            });
        }
        let iri = mint_association_iri(kind, drug, target);
        let node = self.associations.entry(iri.clone()).or_insert_with(|| AssociationNode {
            iri: iri.clone(),
            kind,
            drug: drug.clone(),
            target: target.clone(),
            target_label: target_label.to_string(),
            sources: BTreeSet::new(),
        });
        node.sources.insert(set_id.to_string());
        Ok(iri)
    }
}

fn label(s: &str) -> Literal {
    Literal::plain(s)
}

fn schema_triples(out: &mut TripleSet) {
    let a = rdf("type");
    let sub_class = rdfs("subClassOf");
    let lbl = rdfs("label");
    let desc = dcterms("description");
    let class = owl("Class");
    let prop = owl("ObjectProperty");

    let collection = sk("DrugCollection");
    out.insert(Triple::new(collection.clone(), a.clone(), class.clone()));
    out.insert(Triple::new(collection.clone(), sub_class.clone(), sio(SIO_COLLECTION)));
    out.insert(Triple::new(collection.clone(), lbl.clone(), label("drug collection")));
    out.insert(Triple::new(
        collection,
        desc.clone(),
        label(
            "The set of active ingredients of a pharmaceutical product, independent of manufacturer and formulation.",
        ),
    ));

    let document = sk("SPLDocument");
    out.insert(Triple::new(document.clone(), a.clone(), class.clone()));
    out.insert(Triple::new(document.clone(), sub_class.clone(), sio(SIO_DOCUMENT)));
    out.insert(Triple::new(document.clone(), lbl.clone(), label("SPL document")));
    out.insert(Triple::new(
        document,
        desc.clone(),
        label("An FDA Structured Product Label document, identified by its SET ID."),
    ));

    for kind in Kind::ALL {
        let c = kind.class_iri();
        out.insert(Triple::new(c.clone(), a.clone(), class.clone()));
        out.insert(Triple::new(c.clone(), sub_class.clone(), sio(SIO_ASSOCIATION)));
        out.insert(Triple::new(
            c.clone(),
            lbl.clone(),
            label(&split_camel(kind.class_name())),
        ));
        out.insert(Triple::new(c, desc.clone(), label(kind.description())));

        let p = kind.target_predicate();
        out.insert(Triple::new(p.clone(), a.clone(), prop.clone()));
        out.insert(Triple::new(
            p.clone(),
            lbl.clone(),
            label(&split_camel(kind.target_predicate_name())),
        ));
        out.insert(Triple::new(
            p,
            desc.clone(),
            label(&format!(
                "Links a {} association to its target.",
                split_camel(kind.class_name())
            )),
        ));
    }

    let refers = sk("refersToDrug");
    out.insert(Triple::new(refers.clone(), a.clone(), prop.clone()));
    out.insert(Triple::new(refers.clone(), rdfs("subPropertyOf"), sio(SIO_REFERS_TO)));
    out.insert(Triple::new(refers.clone(), lbl.clone(), label("refers to drug")));
    out.insert(Triple::new(
        refers,
        desc,
        label("Links an association to the drug collection it describes."),
    ));

    // has part o has member -> has part, as a named RDF list.
    let chain = sk("has_part_has_member_chain");
    let chain_rest = sk("has_part_has_member_chain_rest");
    out.insert(Triple::new(sio(SIO_HAS_PART), owl("propertyChainAxiom"), chain.clone()));
    out.insert(Triple::new(chain.clone(), rdf("first"), sio(SIO_HAS_PART)));
    out.insert(Triple::new(chain, rdf("rest"), chain_rest.clone()));
    out.insert(Triple::new(chain_rest.clone(), rdf("first"), sio(SIO_HAS_MEMBER)));
    out.insert(Triple::new(chain_rest, rdf("rest"), rdf("nil")));
}

/// Number of triples [`build_graph`] emits regardless of input.
pub const SCHEMA_TRIPLES: usize = 4 + 4 + 7 * 7 + 4 + 5;
pub const METADATA_TRIPLES: usize = 6;

fn split_camel(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_uppercase() && !out.is_empty() {
            out.push(' ');
        }
        out.push(c.to_ascii_lowercase());
    }
    out
}

fn metadata_triples(meta: &DatasetMetadata, out: &mut TripleSet) -> Result<()> {
    let ds = dataset_iri();
    out.insert(Triple::new(ds.clone(), rdf("type"), void("Dataset")));
    out.insert(Triple::new(ds.clone(), dcterms("title"), label(&meta.title)));
    out.insert(Triple::new(
        ds.clone(),
        dcterms("description"),
        label(&meta.description),
    ));
    out.insert(Triple::new(ds.clone(), dcterms("creator"), label(&meta.creator)));
    out.insert(Triple::new(
        ds.clone(),
        dcterms("license"),
        Iri::new(meta.license.clone())?,
    ));
    out.insert(Triple::new(
        ds,
        dcterms("created"),
        Literal::typed(meta.created.clone(), xsd("date")),
    ));
    Ok(())
}

/// Emits schema, metadata, node and association triples.
///
/// Every reference must resolve: product and association drugs to declared
/// collections, collection members to declared ingredients, sources to
/// declared documents, drug targets to declared collections.
pub fn build_graph(input: &KgInput, meta: &DatasetMetadata, ns: &Namespaces) -> Result<TripleSet> {
    let mut out = TripleSet::new();
    schema_triples(&mut out);
    metadata_triples(meta, &mut out)?;

    let a = rdf("type");
    let lbl = rdfs("label");

    for ing in input.ingredients.values() {
        let iri = ns.rxnorm_iri(&ing.rxcui);
        out.insert(Triple::new(iri.clone(), a.clone(), sio(SIO_ACTIVE_INGREDIENT)));
        let text = if ing.label.is_empty() { &ing.rxcui } else { &ing.label };
        out.insert(Triple::new(iri, lbl.clone(), label(text)));
    }

    for c in input.collections.values() {
        out.insert(Triple::new(c.iri.clone(), a.clone(), sk("DrugCollection")));
        out.insert(Triple::new(c.iri.clone(), lbl.clone(), label(&c.label)));
        for m in &c.member_rxcuis {
            if !input.ingredients.contains_key(m) {
                return Err(KgError::Dangling(ns.rxnorm_iri(m).to_string()));
            }
            out.insert(Triple::new(c.iri.clone(), sio(SIO_HAS_MEMBER), ns.rxnorm_iri(m)));
        }
    }

    for p in input.products.values() {
        if !input.collections.contains_key(&p.collection) {
            return Err(KgError::Dangling(p.collection.to_string()));
        }
        let iri = ns.rxnorm_iri(&p.rxcui);
        out.insert(Triple::new(iri.clone(), a.clone(), sio(SIO_PHARMACEUTICAL_DRUG)));
        let text = if p.label.is_empty() { &p.rxcui } else { &p.label };
        out.insert(Triple::new(iri.clone(), lbl.clone(), label(text)));
        out.insert(Triple::new(iri, sio(SIO_HAS_PART), p.collection.clone()));
    }

    for d in input.documents.values() {
        let iri = document_iri(&d.set_id);
        out.insert(Triple::new(iri.clone(), a.clone(), sk("SPLDocument")));
        out.insert(Triple::new(iri, lbl.clone(), label(&d.label)));
    }

    for assoc in input.associations.values() {
        let drug = input
            .collections
            .get(&assoc.drug)
            .ok_or_else(|| KgError::Dangling(assoc.drug.to_string()))?;
        let target_kind = assoc.kind.target_kind();
        if !target_kind.matches(&assoc.target) {
            return Err(KgError::TargetPattern {
                kind: assoc.kind,
                target: assoc.target.to_string(),
            });
        }
        if target_kind == TargetKind::Drug && !input.collections.contains_key(&assoc.target) {
            return Err(KgError::Dangling(assoc.target.to_string()));
        }
        if assoc.sources.is_empty() {
            return Err(KgError::NoSource(assoc.iri.to_string()));
        }
        let iri = &assoc.iri;
        out.insert(Triple::new(iri.clone(), a.clone(), assoc.kind.class_iri()));
        out.insert(Triple::new(iri.clone(), sk("refersToDrug"), assoc.drug.clone()));
        out.insert(Triple::new(
            iri.clone(),
            assoc.kind.target_predicate(),
            assoc.target.clone(),
        ));
        let target_label = if assoc.target_label.is_empty() {
            assoc.target.as_str().rsplit('/').next().unwrap_or_default()
        } else {
            &assoc.target_label
        };
        out.insert(Triple::new(
            iri.clone(),
            lbl.clone(),
            label(&format!("{} {} {}", drug.label, assoc.kind.phrase(), target_label)),
        ));
        for set_id in &assoc.sources {
            if !input.documents.contains_key(set_id) {
                return Err(KgError::Dangling(document_iri(set_id).to_string()));
            }
            out.insert(Triple::new(iri.clone(), sio(SIO_HAS_SOURCE), document_iri(set_id)));
        }
    }
    Ok(out)
}
