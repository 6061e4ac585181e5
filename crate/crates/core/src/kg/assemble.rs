use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{obo_iri, IngredientNode, Iri, KgInput, Kind, Result};
use crate::mapper::{DrugGroup, Ingredient, MappingRecord, MappingStage, Routed, TermSource};

/// A product RxCUI with its ingredient-level concepts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductInfo {
    pub rxcui: String,
    #[serde(default)]
    pub label: String,
    pub ingredients: Vec<Ingredient>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssemblyOptions {
    /// Keep mappings that fell back to the ontology root.
    pub include_fallback: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { include_fallback: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblySummary {
    pub records: usize,
    pub used: usize,
    pub unrouted: usize,
    pub unresolved_drugs: usize,
    pub fallback_skipped: usize,
    pub without_drug: usize,
}

fn ingredient_nodes(list: &[Ingredient]) -> Vec<IngredientNode> {
    list.iter()
        .map(|i| IngredientNode {
            rxcui: i.rxcui.clone(),
            label: i.name.clone(),
        })
        .collect()
}

fn kind_for(source: TermSource, target: &str) -> Option<Kind> {
    let phenotype = target.starts_with("HP:");
    let disease = target.starts_with("MONDO:");
    match source {
        TermSource::SideEffect if phenotype => Some(Kind::SideEffect),
        TermSource::Indication if phenotype => Some(Kind::PhenotypeIndication),
        TermSource::Indication if disease => Some(Kind::DiseaseIndication),
        TermSource::Contraindication if phenotype => Some(Kind::PhenotypeContraindication),
        TermSource::Contraindication if disease => Some(Kind::DiseaseContraindication),
        _ => None,
    }
}

/// Turns per-document products and mapped terms into graph input. Each
/// document's associations refer to the ingredient collections of its
/// products; documents without any resolvable product contribute nothing.
pub fn assemble(
    documents: &[(String, Vec<String>)],
    products: &BTreeMap<String, ProductInfo>,
    records: &[MappingRecord],
    options: &AssemblyOptions,
) -> Result<(KgInput, AssemblySummary)> {
    let mut input = KgInput::default();
    let mut drugs_of: BTreeMap<&str, BTreeSet<Iri>> = BTreeMap::new();
    for (set_id, rxcuis) in documents {
        for rx in rxcuis {
            let Some(info) = products.get(rx) else { continue };
            if info.ingredients.is_empty() {
                continue;
            }
            let collection = input.add_collection(&ingredient_nodes(&info.ingredients))?;
            input.add_product(&info.rxcui, &info.label, collection.clone());
            drugs_of.entry(set_id.as_str()).or_default().insert(collection);
        }
        if drugs_of.contains_key(set_id.as_str()) {
            input.add_document(set_id);
        }
    }

    let mut summary = AssemblySummary {
        records: records.len(),
        ..Default::default()
    };
    for record in records {
        let Some(drugs) = drugs_of.get(record.set_id.as_str()) else {
            summary.without_drug += 1;
            continue;
        };
        let (kind, target, target_label) = match &record.mapping {
            Routed::Unrouted { .. } => {
                summary.unrouted += 1;
                continue;
            }
            Routed::Drug(d) => {
                if d.group == DrugGroup::Other {
                    summary.unresolved_drugs += 1;
                    continue;
                }
                let kind = match record.source {
                    TermSource::Indication => Kind::DrugIndication,
                    TermSource::Contraindication => Kind::DrugContraindication,
                    TermSource::SideEffect => {
                        summary.unrouted += 1;
                        continue;
                    }
                };
                let members: Vec<Ingredient> = d
                    .rxcuis
                    .iter()
                    .zip(d.names.iter().chain(std::iter::repeat(&String::new())))
                    .map(|(rxcui, name)| Ingredient {
                        rxcui: rxcui.clone(),
                        name: name.clone(),
                    })
                    .collect();
                let target = input.add_collection(&ingredient_nodes(&members))?;
                let label = input.collections[&target].label.clone();
                (kind, target, label)
            }
            Routed::Ontology(m) => {
                if m.stage == MappingStage::Fallback && !options.include_fallback {
                    summary.fallback_skipped += 1;
                    continue;
                }
                let Some(kind) = kind_for(record.source, m.target.as_str()) else {
                    summary.unrouted += 1;
                    continue;
                };
                (kind, obo_iri(&m.target), m.canonical_name.clone())
            }
        };
        for drug in drugs {
            input.add_association(kind, drug, &target, &target_label, &record.set_id)?;
        }
        summary.used += 1;
    }
    Ok((input, summary))
}
