//! Resolution of extracted clinical terms to ontology classes and RxNorm
//! ingredients.

mod drugs;
mod rxnav;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingMatrix;
use crate::llm_gateway::{
    classify_batch, disambiguate_once, ContextEntry, DisambiguationCandidate, Gateway, GatewayError,
    CLASSIFY_BATCH_LIMIT,
};
use crate::ontology::{normalize_label, OntologyGraph, TermId};

pub use drugs::{
    extract_drug_entities, heuristic_drug_entities, resolve_drug, DrugGroup, DrugResolution, EntityRecognizer,
    HeuristicRecognizer, SubprocessRecognizer, DEFAULT_STOP_PHRASES,
};
pub use rxnav::{
    HttpRxNav, Ingredient, RecordingRxNav, ReplayRxNav, RxNavClient, RxNavError, RxNavFixture, RXNAV_BASE_URL,
};

/// Allergy keywords that bypass LLM classification.
pub const ALLERGY_KEYWORDS: [&str; 3] = ["hypersensitivity", "allergic", "anaphylaxis"];
pub const SEMANTIC_TOP_K: usize = 10;
pub const LLM_CANDIDATES: usize = 5;
pub const CONTEXT_LIMIT: usize = 15;
pub const MAX_MAPPING_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Disease,
    Phenotype,
    DrugOrChemical,
    AllergyOrHypersensitivity,
    PatientPopulation,
    Procedure,
    Other,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Disease,
        Category::Phenotype,
        Category::DrugOrChemical,
        Category::AllergyOrHypersensitivity,
        Category::PatientPopulation,
        Category::Procedure,
        Category::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::Disease => "Disease",
            Category::Phenotype => "Phenotype",
            Category::DrugOrChemical => "Drug or Chemical",
            Category::AllergyOrHypersensitivity => "Allergy or Hypersensitivity",
            Category::PatientPopulation => "Patient Population",
            Category::Procedure => "Procedure",
            Category::Other => "Other",
        }
    }

    /// Matches labels ignoring case, spacing and punctuation.
    pub fn from_label(s: &str) -> Option<Category> {
        fn key(s: &str) -> String {
            s.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect()
        }
        let k = key(s);
        Category::ALL.into_iter().find(|c| key(c.label()) == k)
    }

    /// Like [`Category::from_label`], with `Other` for anything unrecognized.
    pub fn parse_lenient(s: &str) -> Category {
        Category::from_label(s).unwrap_or(Category::Other)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingStage {
    Exact,
    Semantic,
    Llm,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingResult {
    pub surface: String,
    pub target: TermId,
    pub canonical_name: String,
    pub stage: MappingStage,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub score: Option<f64>,
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OntologyKind {
    Hpo,
    Mondo,
}

impl OntologyKind {
    pub fn display_name(self) -> &'static str {
        match self {
            OntologyKind::Hpo => "HPO",
            OntologyKind::Mondo => "MONDO",
        }
    }

    pub fn root(self) -> TermId {
        TermId::new(match self {
            OntologyKind::Hpo => "HP:0000001",
            OntologyKind::Mondo => "MONDO:0000001",
        })
        .expect("valid root id")
    }

    fn root_name(self) -> &'static str {
        match self {
            OntologyKind::Hpo => "All",
            OntologyKind::Mondo => "disease or disorder",
        }
    }
}

/// An ontology with its label embeddings.
pub struct OntologyResource {
    pub kind: OntologyKind,
    pub graph: OntologyGraph,
    pub matrix: EmbeddingMatrix,
}

impl OntologyResource {
    fn result(
        &self,
        surface: &str,
        target: TermId,
        stage: MappingStage,
        score: Option<f64>,
        attempts: u32,
    ) -> MappingResult {
        let canonical_name = self
            .graph
            .term(&target)
            .map(|t| t.name.clone())
            .unwrap_or_else(|| self.kind.root_name().to_string());
        MappingResult {
            surface: surface.to_string(),
            target,
            canonical_name,
            stage,
            score,
            attempts,
        }
    }

    fn fallback(&self, surface: &str, attempts: u32) -> MappingResult {
        self.result(surface, self.kind.root(), MappingStage::Fallback, None, attempts)
    }

    fn candidate(&self, id: &TermId, score: f64) -> DisambiguationCandidate {
        let term = self.graph.term(id);
        DisambiguationCandidate {
            id: id.clone(),
            name: term.map(|t| t.name.clone()).unwrap_or_default(),
            score,
            definition: term.and_then(|t| t.definition.clone()),
        }
    }
}

/// Three-stage mapping: exact label match, embedding retrieval, then LLM
/// disambiguation over the retrieved candidates and their graph neighbours.
///
/// Never fails: every failure path ends at the ontology root. Without a
/// gateway the semantic top hit is returned as is.
pub fn map_term(
    term: &str,
    resource: &OntologyResource,
    query: Option<&[f64]>,
    gateway: Option<&Gateway>,
) -> MappingResult {
    let exact = resource.graph.lookup_exact(term);
    if exact.len() == 1 {
        let id = exact.into_iter().next().expect("one id");
        return resource.result(term, id, MappingStage::Exact, None, 0);
    }

    let candidates: Vec<DisambiguationCandidate> = if exact.len() > 1 {
        exact.iter().map(|id| resource.candidate(id, 1.0)).collect()
    } else {
        let ranked = match query.map(|q| resource.matrix.top_k_dedup(q, SEMANTIC_TOP_K)) {
            Some(Ok(ranked)) => ranked,
            Some(Err(e)) => {
                log::warn!("semantic search failed for {term:?}: {e}");
                Vec::new()
            }
            None => Vec::new(),
        };
        ranked
            .iter()
            .filter(|c| resource.graph.contains(&c.term_id))
            .take(LLM_CANDIDATES)
            .map(|c| resource.candidate(&c.term_id, c.score))
            .collect()
    };
    if candidates.is_empty() {
        return resource.fallback(term, 0);
    }

    let Some(gateway) = gateway else {
        if exact.len() > 1 {
            return resource.fallback(term, 0);
        }
        let top = &candidates[0];
        return resource.result(term, top.id.clone(), MappingStage::Semantic, Some(top.score), 0);
    };

    let seeds: Vec<TermId> = candidates.iter().map(|c| c.id.clone()).collect();
    let context: Vec<ContextEntry> = resource
        .graph
        .related_context(&seeds, CONTEXT_LIMIT)
        .unwrap_or_default()
        .into_iter()
        .map(|(id, relation)| ContextEntry {
            name: resource.graph.term(&id).map(|t| t.name.clone()).unwrap_or_default(),
            id,
            relation,
        })
        .collect();

    let mut attempts = 0;
    while attempts < MAX_MAPPING_ATTEMPTS {
        if attempts > 0 {
            gateway.clock().sleep(gateway.config().retry_delay());
        }
        attempts += 1;
        let answer = disambiguate_once(gateway, term, resource.kind.display_name(), &candidates, &context);
        match answer {
            Ok((id, name)) => match resource.graph.term(&id) {
                Some(t) if normalize_label(&t.name) == normalize_label(&name) => {
                    let score = candidates
                        .iter()
                        .find(|c| c.id == id)
                        .map(|c| c.score)
                        .or_else(|| query.and_then(|q| resource.matrix.best_score_for(&id, q).ok().flatten()))
                        .unwrap_or(0.0);
                    return resource.result(term, id, MappingStage::Llm, Some(score), attempts);
                }
                Some(t) => log::debug!("{term:?}: name {name:?} does not match {:?}", t.name),
                None => log::debug!("{term:?}: unknown id {id}"),
            },
            Err(GatewayError::Fatal(e)) => {
                log::warn!("{term:?}: {e}");
                break;
            }
            Err(e) => log::debug!("{term:?}: {e}"),
        }
    }
    resource.fallback(term, attempts)
}

fn has_allergy_keyword(term: &str) -> bool {
    let lower = term.to_lowercase();
    ALLERGY_KEYWORDS.iter().any(|k| lower.contains(k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub categories: Vec<Category>,
    pub warnings: Vec<String>,
    pub llm_batches: usize,
}

/// Keyword rule first, then the remaining terms in arrival order through
/// the LLM in batches of 15. Without a gateway those terms are `Other`.
pub fn classify_terms(terms: &[&str], gateway: Option<&Gateway>) -> Classification {
    let mut categories = vec![Category::Other; terms.len()];
    let mut pending: Vec<usize> = Vec::new();
    for (i, t) in terms.iter().enumerate() {
        if has_allergy_keyword(t) {
            categories[i] = Category::AllergyOrHypersensitivity;
        } else {
            pending.push(i);
        }
    }
    let mut warnings = Vec::new();
    let mut llm_batches = 0;
    if let Some(gateway) = gateway {
        for chunk in pending.chunks(CLASSIFY_BATCH_LIMIT) {
            let batch: Vec<&str> = chunk.iter().map(|&i| terms[i]).collect();
            llm_batches += 1;
            match classify_batch(gateway, &batch) {
                Ok(r) => {
                    warnings.extend(r.warning);
                    for (&i, c) in chunk.iter().zip(r.categories) {
                        categories[i] = c;
                    }
                }
                Err(e) => warnings.push(e.to_string()),
            }
        }
    }
    Classification {
        categories,
        warnings,
        llm_batches,
    }
}

pub fn classify_term(term: &str, gateway: Option<&Gateway>) -> Category {
    classify_terms(&[term], gateway).categories[0]
}

/// Where a category is mapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Mondo,
    Hpo,
    RxNorm,
    Unrouted,
}

pub fn route_for(category: Category) -> Route {
    match category {
        Category::Disease => Route::Mondo,
        Category::Phenotype => Route::Hpo,
        Category::DrugOrChemical => Route::RxNorm,
        Category::AllergyOrHypersensitivity | Category::PatientPopulation | Category::Procedure | Category::Other => {
            Route::Unrouted
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Routed {
    Ontology(MappingResult),
    Drug(DrugResolution),
    Unrouted { surface: String },
}

/// Everything a routed mapping may need.
pub struct MappingResources<'a> {
    pub hpo: &'a OntologyResource,
    pub mondo: &'a OntologyResource,
    pub rxnav: &'a dyn RxNavClient,
    pub recognizer: Option<&'a dyn EntityRecognizer>,
    pub query: Option<&'a [f64]>,
    pub gateway: Option<&'a Gateway>,
}

pub fn route_mapping(term: &str, category: Category, resources: &MappingResources<'_>) -> Routed {
    match route_for(category) {
        Route::Mondo => Routed::Ontology(map_term(term, resources.mondo, resources.query, resources.gateway)),
        Route::Hpo => Routed::Ontology(map_term(term, resources.hpo, resources.query, resources.gateway)),
        Route::RxNorm => Routed::Drug(resolve_drug(term, resources.rxnav, resources.recognizer)),
        Route::Unrouted => Routed::Unrouted {
            surface: term.to_string(),
        },
    }
}

/// Label section a term was extracted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermSource {
    Indication,
    Contraindication,
    SideEffect,
}

/// One line of the mappings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingRecord {
    pub set_id: String,
    pub source: TermSource,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub category: Option<Category>,
    pub mapping: Routed,
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::from_label(s).ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::embeddings::EmbeddingRow;
    use crate::llm_gateway::{ChatRequest, FnTransport, GatewayConfig, ManualClock, TransportError};
    use crate::ontology::parse_obo;

    const OBO: &str = "\
[Term]
id: HP:0000001
name: All

[Term]
id: HP:0000118
name: Phenotypic abnormality
is_a: HP:0000001

[Term]
id: HP:0002315
name: Headache
synonym: \"Cephalgia\" EXACT []
is_a: HP:0000118

[Term]
id: HP:0002018
name: Nausea
is_a: HP:0000118

[Term]
id: HP:0000200
name: Cold
is_a: HP:0000118

[Term]
id: HP:0000201
name: Cold intolerance
synonym: \"cold\" RELATED []
is_a: HP:0000118
";

    fn resource() -> OntologyResource {
        let graph = parse_obo(OBO).unwrap();
        let row = |s: &str, id: &str, v: Vec<f64>| EmbeddingRow {
            surface: s.into(),
            term_id: TermId::new(id).unwrap(),
            vector: v,
        };
        let matrix = EmbeddingMatrix::new(
            3,
            "test",
            vec![
                row("Headache", "HP:0002315", vec![1.0, 0.0, 0.0]),
                row("Cephalgia", "HP:0002315", vec![0.9, 0.1, 0.0]),
                row("Nausea", "HP:0002018", vec![0.0, 1.0, 0.0]),
                row("Phenotypic abnormality", "HP:0000118", vec![0.0, 0.0, 1.0]),
            ],
        )
        .unwrap();
        OntologyResource {
            kind: OntologyKind::Hpo,
            graph,
            matrix,
        }
    }

    #[allow(clippy::type_complexity)]
    fn gateway(
        answer: &'static str,
    ) -> (
        Gateway,
        Arc<FnTransport<impl Fn(&ChatRequest, usize) -> Result<String, TransportError> + Send + Sync>>,
    ) {
        let t = Arc::new(FnTransport::new(move |_: &ChatRequest, _| Ok(answer.to_string())));
        let g = Gateway::new(GatewayConfig::mapping(), t.clone(), Arc::new(ManualClock::new())).unwrap();
        (g, t)
    }

    #[test]
    fn exact_stage_skips_gateway() {
        let r = resource();
        let (g, t) = gateway("{}");
        let m = map_term("headache", &r, None, Some(&g));
        assert_eq!(m.stage, MappingStage::Exact);
        assert_eq!(m.target.as_str(), "HP:0002315");
        assert_eq!(m.score, None);
        assert_eq!(t.calls(), 0);
    }

    #[test]
    fn malformed_gateway_falls_back_after_three() {
        let r = resource();
        let (g, t) = gateway("nonsense");
        let m = map_term("blorp", &r, Some(&[0.5, 0.5, 0.0]), Some(&g));
        assert_eq!(m.stage, MappingStage::Fallback);
        assert_eq!(m.target.as_str(), "HP:0000001");
        assert_eq!(m.attempts, 3);
        assert_eq!(t.calls(), 3);
    }

    #[test]
    fn llm_stage_validates_name() {
        let r = resource();
        let (g, _) = gateway(r#"{"id":"HP:0002315","name":"headache "}"#);
        let m = map_term("head pain", &r, Some(&[0.9, 0.1, 0.0]), Some(&g));
        assert_eq!(m.stage, MappingStage::Llm);
        assert_eq!(m.target.as_str(), "HP:0002315");
        assert!((m.score.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(m.attempts, 1);

        let (g, _) = gateway(r#"{"id":"HP:0002315","name":"Nausea"}"#);
        let m = map_term("head pain", &r, Some(&[0.9, 0.1, 0.0]), Some(&g));
        assert_eq!(m.stage, MappingStage::Fallback);
        let (g, _) = gateway(r#"{"id":"HP:9999999","name":"Nausea"}"#);
        assert_eq!(
            map_term("head pain", &r, Some(&[0.9, 0.1, 0.0]), Some(&g)).stage,
            MappingStage::Fallback
        );
    }

    #[test]
    fn ambiguous_exact_goes_to_llm() {
        let r = resource();
        let (g, t) = gateway(r#"{"id":"HP:0000200","name":"Cold"}"#);
        let m = map_term("cold", &r, None, Some(&g));
        assert_eq!(m.stage, MappingStage::Llm);
        assert_eq!(m.score, Some(1.0));
        assert_eq!(t.calls(), 1);
    }

    #[test]
    fn semantic_without_gateway() {
        let r = resource();
        let m = map_term("queasy", &r, Some(&[0.1, 1.0, 0.0]), None);
        assert_eq!(m.stage, MappingStage::Semantic);
        assert_eq!(m.target.as_str(), "HP:0002018");
        assert!(m.score.is_some());
        let m = map_term("queasy", &r, None, None);
        assert_eq!(m.stage, MappingStage::Fallback);
    }

    #[test]
    fn keyword_classification() {
        let (g, t) = gateway(r#"[{"index":1,"category":"Disease"}]"#);
        assert_eq!(
            classify_term("hypersensitivity to aspirin", Some(&g)),
            Category::AllergyOrHypersensitivity
        );
        assert_eq!(
            classify_term("Anaphylaxis history", Some(&g)),
            Category::AllergyOrHypersensitivity
        );
        assert_eq!(t.calls(), 0);
        assert_eq!(classify_term("renal failure", Some(&g)), Category::Disease);
        assert_eq!(t.calls(), 1);
    }

    #[test]
    fn classification_batches_of_fifteen() {
        let (g, t) = gateway("[]");
        let terms: Vec<String> = (0..31).map(|i| format!("term {i}")).collect();
        let refs: Vec<&str> = terms.iter().map(String::as_str).collect();
        let c = classify_terms(&refs, Some(&g));
        assert_eq!(c.categories.len(), 31);
        assert_eq!(c.llm_batches, 3);
        assert_eq!(t.calls(), 3);
    }

    #[test]
    fn routing_table() {
        assert_eq!(route_for(Category::Phenotype), Route::Hpo);
        assert_eq!(route_for(Category::Disease), Route::Mondo);
        assert_eq!(route_for(Category::DrugOrChemical), Route::RxNorm);
        for c in [
            Category::Procedure,
            Category::PatientPopulation,
            Category::AllergyOrHypersensitivity,
            Category::Other,
        ] {
            assert_eq!(route_for(c), Route::Unrouted);
        }
    }

    #[test]
    fn category_parsing() {
        assert_eq!(Category::parse_lenient("drug or chemical"), Category::DrugOrChemical);
        assert_eq!(
            Category::parse_lenient("Patient_Population"),
            Category::PatientPopulation
        );
        assert_eq!(Category::parse_lenient("Foo"), Category::Other);
        assert!("Foo".parse::<Category>().is_err());
        assert_eq!("other".parse::<Category>().unwrap(), Category::Other);
    }
}
