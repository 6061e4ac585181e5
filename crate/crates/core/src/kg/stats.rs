use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    dataset_iri, dcterms, rdf, serialize_turtle, sio, sk, void, xsd, DatasetMetadata, Iri, Kind, Literal, TargetKind,
    Term, Triple, TripleSet, SIO_ACTIVE_INGREDIENT, SIO_HAS_MEMBER, SIO_PHARMACEUTICAL_DRUG, SK,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub total_triples: usize,
    pub collections: usize,
    pub ingredients: usize,
    pub products: usize,
    pub documents: usize,
    pub associations: usize,
    /// Every kind is present, zero or not.
    pub associations_by_kind: BTreeMap<Kind, usize>,
    pub unique_hpo_terms: usize,
    pub unique_mondo_terms: usize,
    pub unique_rxnorm_ingredients: usize,
}

impl GraphStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize") + "\n"
    }
}

/// Counts typed nodes, association kinds and distinct association targets.
///
/// Unique RxNorm ingredients are the members of collections that some
/// association refers to or targets.
pub fn compute_stats(triples: &TripleSet) -> GraphStats {
    let type_p = rdf("type");
    let mut typed: BTreeMap<&Iri, BTreeSet<&Iri>> = BTreeMap::new();
    for t in triples {
        if t.predicate == type_p {
            if let Term::Iri(o) = &t.object {
                typed.entry(o).or_default().insert(&t.subject);
            }
        }
    }
    let count = |class: &Iri| typed.get(class).map_or(0, BTreeSet::len);

    let mut by_kind: BTreeMap<Kind, usize> = Kind::ALL.into_iter().map(|k| (k, 0)).collect();
    let mut assoc_nodes: BTreeMap<&Iri, Kind> = BTreeMap::new();
    for kind in Kind::ALL {
        if let Some(nodes) = typed.get(&kind.class_iri()) {
            *by_kind.get_mut(&kind).expect("all kinds") = nodes.len();
            for n in nodes {
                assoc_nodes.entry(n).or_insert(kind);
            }
        }
    }

    let refers = sk("refersToDrug");
    let has_member = sio(SIO_HAS_MEMBER);
    let target_preds: BTreeMap<Iri, Kind> = Kind::ALL.into_iter().map(|k| (k.target_predicate(), k)).collect();
    let mut hpo: BTreeSet<&Iri> = BTreeSet::new();
    let mut mondo: BTreeSet<&Iri> = BTreeSet::new();
    let mut drug_nodes: BTreeSet<&Iri> = BTreeSet::new();
    let mut members: BTreeMap<&Iri, Vec<&Iri>> = BTreeMap::new();
    for t in triples {
        let Term::Iri(o) = &t.object else { continue };
        if t.predicate == has_member {
            members.entry(&t.subject).or_default().push(o);
            continue;
        }
        if !assoc_nodes.contains_key(&t.subject) {
            continue;
        }
        if t.predicate == refers {
            drug_nodes.insert(o);
        } else if target_preds.contains_key(&t.predicate) {
            if TargetKind::Phenotype.matches(o) {
                hpo.insert(o);
            } else if TargetKind::Disease.matches(o) {
                mondo.insert(o);
            } else if TargetKind::Drug.matches(o) {
                drug_nodes.insert(o);
            }
        }
    }
    let ingredients_used: BTreeSet<&Iri> = drug_nodes
        .iter()
        .filter_map(|d| members.get(d))
        .flatten()
        .copied()
        .collect();

    GraphStats {
        total_triples: triples.len(),
        collections: count(&sk("DrugCollection")),
        ingredients: count(&sio(SIO_ACTIVE_INGREDIENT)),
        products: count(&sio(SIO_PHARMACEUTICAL_DRUG)),
        documents: count(&sk("SPLDocument")),
        associations: assoc_nodes.len(),
        associations_by_kind: by_kind,
        unique_hpo_terms: hpo.len(),
        unique_mondo_terms: mondo.len(),
        unique_rxnorm_ingredients: ingredients_used.len(),
    }
}

/// VOID description of the dataset, one class partition per association
/// kind.
pub fn emit_void(stats: &GraphStats, meta: &DatasetMetadata) -> String {
    let ds = dataset_iri();
    let mut g = TripleSet::new();
    let add = |g: &mut TripleSet, p: Iri, o: Term| {
        g.insert(Triple::new(ds.clone(), p, o));
    };
    add(&mut g, rdf("type"), void("Dataset").into());
    add(&mut g, dcterms("title"), Literal::plain(&meta.title).into());
    add(&mut g, dcterms("description"), Literal::plain(&meta.description).into());
    add(&mut g, dcterms("creator"), Literal::plain(&meta.creator).into());
    if let Ok(license) = Iri::new(meta.license.clone()) {
        add(&mut g, dcterms("license"), license.into());
    }
    add(
        &mut g,
        dcterms("created"),
        Literal::typed(meta.created.clone(), xsd("date")).into(),
    );
    add(
        &mut g,
        void("triples"),
        Literal::integer(stats.total_triples as u64).into(),
    );
    add(
        &mut g,
        void("entities"),
        Literal::integer(stats.associations as u64).into(),
    );
    add(&mut g, void("uriSpace"), Literal::plain(SK).into());
    add(
        &mut g,
        void("vocabulary"),
        Iri::new(super::SIO).expect("namespace").into(),
    );
    for kind in Kind::ALL {
        let part = sk(&format!("dataset_{}", kind.tag()));
        add(&mut g, void("classPartition"), part.clone().into());
        g.insert(Triple::new(part.clone(), void("class"), kind.class_iri()));
        g.insert(Triple::new(
            part,
            void("entities"),
            Literal::integer(stats.associations_by_kind.get(&kind).copied().unwrap_or(0) as u64),
        ));
    }
    serialize_turtle(&g)
}
