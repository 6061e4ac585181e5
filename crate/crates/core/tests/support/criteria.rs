//! Acceptance checks shared by the integration tests and the acceptance
//! runner. Each returns a one-line summary on success and the first
//! discrepancy on failure. Seeds and tolerances are fixed here.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sidekick_core::embeddings::{load_matrix_file, QueryVectors};
use sidekick_core::kg::{
    build_graph, mint_collection_iri, obo_iri, parse_turtle, rdf, rdfs, serialize_turtle, sio, sk, validate_shapes,
    xsd, DatasetMetadata, IngredientNode, Iri, KgInput, Kind, Literal, Namespaces, ShapeRule, Term, Triple, TripleSet,
    SIO_HAS_MEMBER, SIO_HAS_SOURCE,
};
use sidekick_core::llm_gateway::{FnTransport, Gateway, GatewayConfig, JournalTransport, ManualClock, Transport};
use sidekick_core::mapper::{map_term, MappingStage, OntologyKind, OntologyResource};
use sidekick_core::ontology::{parse_obo, OntologyGraph, TermId};
use sidekick_core::simeval::{
    auc_roc, bma, build_pairs, compute_ic, evaluate, flatten_hierarchy, resnik, AnnotationCorpus, SimilarityIndex,
};
use sidekick_core::spl_corpus::{deduplicate, ratcliff_ratio, Section, SplDocument, ADVERSE_REACTIONS_LOINC};

use super::oracles::{self, Dag};

pub type Outcome = Result<String, String>;

pub const SIMILARITY_TOLERANCE: f64 = 1e-9;
pub const SIMILARITY_DAGS: u64 = 120;
pub const SIMILARITY_BUDGET: Duration = Duration::from_secs(30);
pub const AUC_CASES: u64 = 150;
pub const BENCHMARK_MIN_AUC: f64 = 0.95;
pub const BENCHMARK_BUDGET: Duration = Duration::from_secs(10);
pub const DEDUP_CORPORA: u64 = 12;
pub const ROUND_TRIPS: u64 = 150;
pub const GRAPHS: u64 = 30;

pub fn mini_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mini")
}

fn tid(s: &str) -> TermId {
    TermId::new(s).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= SIMILARITY_TOLERANCE
}

/// Resnik and BMA against exhaustive ancestor intersection on random DAGs.
pub fn similarity_oracle() -> Outcome {
    let started = Instant::now();
    let mut checked = 0usize;
    for seed in 0..SIMILARITY_DAGS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=30);
        let dag = Dag::random(&mut rng, n);
        let drugs = rng.gen_range(1..=12);
        let ann = oracles::random_annotations(&mut rng, &dag, drugs);
        let graph = parse_obo(&dag.to_obo()).map_err(|e| e.to_string())?;
        let corpus = AnnotationCorpus::new(
            ann.iter()
                .map(|(d, ts)| (d.clone(), ts.iter().map(|&t| tid(&Dag::id(t))).collect()))
                .collect(),
        )
        .map_err(|e| e.to_string())?;
        let ic = compute_ic(&corpus, &graph).map_err(|e| e.to_string())?;
        let index = SimilarityIndex::new(&corpus, &ic, &graph).map_err(|e| e.to_string())?;
        let reference = oracles::Reference::new(&dag, &ann);

        for t in 0..n {
            let got = ic.get(&tid(&Dag::id(t)));
            let want = reference.ic[t];
            let same = match (got, want) {
                (Some(g), Some(w)) => close(g, w),
                (None, None) => true,
                _ => false,
            };
            if !same {
                return Err(format!("seed {seed}: ic({t}) = {got:?}, oracle {want:?}"));
            }
        }
        let annotated: BTreeSet<usize> = ann.values().flatten().copied().collect();
        for a in 0..n {
            for b in 0..n {
                let want = reference.resnik(a, b);
                let got = resnik(&tid(&Dag::id(a)), &tid(&Dag::id(b)), &ic, &graph).map_err(|e| e.to_string())?;
                if !close(got, want) {
                    return Err(format!("seed {seed}: resnik({a},{b}) = {got}, oracle {want}"));
                }
                if annotated.contains(&a) && annotated.contains(&b) {
                    let fast = index
                        .resnik(&tid(&Dag::id(a)), &tid(&Dag::id(b)))
                        .map_err(|e| e.to_string())?;
                    if !close(fast, want) {
                        return Err(format!("seed {seed}: indexed resnik({a},{b}) = {fast}, oracle {want}"));
                    }
                }
                checked += 1;
            }
        }
        for (d1, s1) in &ann {
            for (d2, s2) in &ann {
                let want = reference.bma(s1, s2);
                let ids = |s: &BTreeSet<usize>| s.iter().map(|&t| tid(&Dag::id(t))).collect::<BTreeSet<_>>();
                let got = bma(&ids(s1), &ids(s2), &ic, &graph).map_err(|e| e.to_string())?;
                let fast = index.bma(&ids(s1), &ids(s2)).map_err(|e| e.to_string())?;
                if !close(got, want) || !close(fast, want) {
                    return Err(format!("seed {seed}: bma({d1},{d2}) = {got} / {fast}, oracle {want}"));
                }
                checked += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    if elapsed > SIMILARITY_BUDGET {
        return Err(format!("took {elapsed:.1?}, budget {SIMILARITY_BUDGET:?}"));
    }
    Ok(format!(
        "{SIMILARITY_DAGS} DAGs, {checked} comparisons within {SIMILARITY_TOLERANCE:e} in {elapsed:.1?}"
    ))
}

/// AUC against the pairwise win/half-tie count, compared for exact equality.
pub fn auc_oracle() -> Outcome {
    let mut compared = 0;
    for seed in 0..AUC_CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + seed);
        let n = rng.gen_range(1..=200);
        // A small value grid forces plenty of ties.
        let grid = rng.gen_range(1..=12);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..grid) as f64 / 3.0).collect();
        let p = rng.gen_range(0.05..0.95);
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(p)).collect();
        match (auc_roc(&scores, &labels), oracles::auc(&scores, &labels)) {
            (Ok(got), Some(want)) if got == want => compared += 1,
            (Err(_), None) => {}
            (got, want) => return Err(format!("seed {seed}: auc {got:?}, oracle {want:?}")),
        }
    }
    let fixed: [(&str, Vec<f64>, Vec<bool>, f64); 3] = [
        ("all tied", vec![0.3; 10], (0..10).map(|i| i % 3 == 0).collect(), 0.5),
        (
            "separated",
            (0..10).map(f64::from).collect(),
            (0..10).map(|i| i >= 6).collect(),
            1.0,
        ),
        (
            "inverted",
            (0..10).map(f64::from).collect(),
            (0..10).map(|i| i < 6).collect(),
            0.0,
        ),
    ];
    for (name, scores, labels, want) in fixed {
        let got = auc_roc(&scores, &labels).map_err(|e| e.to_string())?;
        if got != want || oracles::auc(&scores, &labels) != Some(want) {
            return Err(format!("{name}: auc {got}, expected exactly {want}"));
        }
    }
    Ok(format!(
        "{compared} random sets equal to the pairwise oracle; tied 0.5, separated 1.0"
    ))
}

/// A 40-drug benchmark whose positive pairs draw annotations from a shared
/// subtree, evaluated on the deep hierarchy and on its two-level flattening.
pub struct Benchmark {
    pub graph: OntologyGraph,
    pub corpus: AnnotationCorpus,
    pub targets: BTreeMap<String, BTreeSet<String>>,
}

pub fn synthetic_benchmark(seed: u64) -> Benchmark {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Root, 4 organ systems, 3 groups each, 3 subgroups each, 4 leaves each.
    let mut obo = String::from("[Term]\nid: B:0000000\nname: root\n\n");
    let mut next = 1;
    let mut term = |parent: &str, obo: &mut String| -> String {
        let id = format!("B:{next:07}");
        obo.push_str(&format!("[Term]\nid: {id}\nname: term {next}\nis_a: {parent}\n\n"));
        next += 1;
        id
    };
    let mut groups: Vec<Vec<String>> = Vec::new();
    let mut all_leaves = Vec::new();
    for _ in 0..4 {
        let system = term("B:0000000", &mut obo);
        for _ in 0..3 {
            let group = term(&system, &mut obo);
            let mut leaves = Vec::new();
            for _ in 0..3 {
                let sub = term(&group, &mut obo);
                for _ in 0..4 {
                    leaves.push(term(&sub, &mut obo));
                }
            }
            all_leaves.extend(leaves.iter().cloned());
            groups.push(leaves);
        }
    }
    let graph = parse_obo(&obo).expect("benchmark ontology");

    // 10 targets of 4 drugs; each target is tied to its own group subtree.
    let mut annotations = BTreeMap::new();
    let mut targets = BTreeMap::new();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut rng);
    for target in 0..10 {
        let leaves = &groups[order[target]];
        for k in 0..4 {
            let drug = format!("drug{:02}", target * 4 + k);
            let mut terms: BTreeSet<TermId> = (0..3).map(|_| tid(leaves.choose(&mut rng).unwrap())).collect();
            terms.insert(tid(all_leaves.choose(&mut rng).unwrap()));
            annotations.insert(drug.clone(), terms);
            targets.insert(drug, BTreeSet::from([format!("target{target}")]));
        }
    }
    Benchmark {
        graph,
        corpus: AnnotationCorpus::new(annotations).expect("non-empty annotations"),
        targets,
    }
}

pub fn benchmark_aucs(seed: u64) -> Result<(f64, f64), String> {
    let b = synthetic_benchmark(seed);
    let drugs: Vec<String> = b.corpus.drugs().cloned().collect();
    let pairs = build_pairs(&b.targets, &drugs);
    let deep = evaluate(&b.corpus, &b.graph, &pairs).map_err(|e| e.to_string())?;
    let flat_graph = flatten_hierarchy(&b.graph).map_err(|e| e.to_string())?;
    let flat = evaluate(&b.corpus, &flat_graph, &pairs).map_err(|e| e.to_string())?;
    Ok((deep.auc, flat.auc))
}

pub fn synthetic_hierarchy() -> Outcome {
    let started = Instant::now();
    let (deep, flat) = benchmark_aucs(7)?;
    let elapsed = started.elapsed();
    if elapsed > BENCHMARK_BUDGET {
        return Err(format!("took {elapsed:.1?}, budget {BENCHMARK_BUDGET:?}"));
    }
    if deep < BENCHMARK_MIN_AUC {
        return Err(format!("deep AUC {deep:.4} < {BENCHMARK_MIN_AUC}"));
    }
    if flat >= deep {
        return Err(format!("flattened AUC {flat:.4} is not below deep AUC {deep:.4}"));
    }
    Ok(format!("deep AUC {deep:.4}, flattened {flat:.4}, {elapsed:.1?}"))
}

const WORDS: [&str; 24] = [
    "nausea",
    "headache",
    "rash",
    "dizziness",
    "fatigue",
    "vomiting",
    "diarrhea",
    "insomnia",
    "were",
    "reported",
    "in",
    "patients",
    "treated",
    "with",
    "placebo",
    "percent",
    "of",
    "mild",
    "severe",
    "cases",
    "pruritus",
    "edema",
    "pain",
    "cough",
];

fn sentence(rng: &mut impl Rng, words: usize) -> String {
    (0..words)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

/// One word replaced; repeated until the oracle agrees it is a near copy.
fn near_copy(rng: &mut impl Rng, base: &str, threshold: f64) -> String {
    loop {
        let mut words: Vec<&str> = base.split(' ').collect();
        let i = rng.gen_range(0..words.len());
        words[i] = WORDS.choose(rng).unwrap();
        let text = words.join(" ");
        if text != base && oracles::ratcliff(base, &text) >= threshold {
            return text;
        }
    }
}

fn label(set_id: String, products: &[&str], text: &str) -> SplDocument {
    SplDocument {
        set_id,
        product_rxcuis: products.iter().map(|s| s.to_string()).collect(),
        sections: vec![Section {
            loinc_code: ADVERSE_REACTIONS_LOINC.into(),
            title: String::new(),
            paragraphs: vec![text.to_string()],
            tables: Vec::new(),
        }],
    }
}

/// Planted exact and fuzzy duplicates; everything else kept apart by the
/// oracle's ratio.
pub fn dedup_oracle() -> Outcome {
    let threshold = 0.95;
    let (got, want) = (ratcliff_ratio("abcd", "bcde"), oracles::ratcliff("abcd", "bcde"));
    if got != 0.75 || want != 0.75 {
        return Err(format!("ratio(abcd, bcde) = {got}, oracle {want}, expected 0.75"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..300 {
        let a: String = (0..rng.gen_range(0..25))
            .map(|_| *b"abcab ".choose(&mut rng).unwrap() as char)
            .collect();
        let b: String = (0..rng.gen_range(0..25))
            .map(|_| *b"abcab ".choose(&mut rng).unwrap() as char)
            .collect();
        if ratcliff_ratio(&a, &b) != oracles::ratcliff(&a, &b) {
            return Err(format!(
                "ratio({a:?}, {b:?}) = {}, oracle {}",
                ratcliff_ratio(&a, &b),
                oracles::ratcliff(&a, &b)
            ));
        }
    }

    let mut planted_total = 0;
    for corpus_seed in 0..DEDUP_CORPORA {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + corpus_seed);
        let mut docs: Vec<SplDocument> = Vec::new();
        let mut truth: Vec<usize> = Vec::new(); // cluster of each doc
        let mut bases: Vec<String> = Vec::new();
        let clusters = rng.gen_range(3..=6);
        for c in 0..clusters {
            // Bases far from each other by construction, checked below.
            let base = format!("cluster {c} {}", sentence(&mut rng, 40));
            bases.push(base.clone());
            docs.push(label(format!("c{c}-base"), &["100"], &base));
            truth.push(c);
            for e in 0..rng.gen_range(0..=2) {
                docs.push(label(format!("c{c}-exact{e}"), &["100"], &base));
                truth.push(c);
            }
            for f in 0..rng.gen_range(0..=2) {
                let text = near_copy(&mut rng, &base, threshold);
                docs.push(label(format!("c{c}-fuzzy{f}"), &["100"], &text));
                truth.push(c);
            }
        }
        // Same text under another product never merges.
        let decoy = bases[0].clone();
        docs.push(label("decoy-other-product".into(), &["200"], &decoy));
        truth.push(clusters);
        // Empty adverse text never merges either.
        docs.push(label("empty-a".into(), &["100"], ""));
        truth.push(clusters + 1);
        docs.push(label("empty-b".into(), &["100"], ""));
        truth.push(clusters + 2);

        let mut order: Vec<usize> = (0..docs.len()).collect();
        order.shuffle(&mut rng);
        let docs: Vec<SplDocument> = order.iter().map(|&i| docs[i].clone()).collect();
        let truth: Vec<usize> = order.iter().map(|&i| truth[i]).collect();

        // The planted clustering must be what the oracle implies: every
        // cross-cluster pair in a shared product is below threshold and each
        // cluster is connected by pairs at or above it.
        let text = |d: &SplDocument| d.sections[0].paragraphs[0].clone();
        for i in 0..docs.len() {
            for j in i + 1..docs.len() {
                let shared = docs[i].product_rxcuis == docs[j].product_rxcuis;
                let (ti, tj) = (text(&docs[i]), text(&docs[j]));
                if shared && truth[i] != truth[j] && !ti.is_empty() && oracles::ratcliff(&ti, &tj) >= threshold {
                    return Err(format!("corpus {corpus_seed}: generator planted overlapping clusters"));
                }
            }
        }

        let report = deduplicate(&docs, threshold);
        let mut want: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
        let mut first: BTreeMap<usize, String> = BTreeMap::new();
        for (d, c) in docs.iter().zip(&truth) {
            want.entry(*c).or_default().insert(d.set_id.clone());
            first.entry(*c).or_insert_with(|| d.set_id.clone());
        }
        let want: BTreeSet<BTreeSet<String>> = want.into_values().collect();
        let got: BTreeSet<BTreeSet<String>> = report.clusters.iter().map(|c| c.iter().cloned().collect()).collect();
        if got != want {
            return Err(format!("corpus {corpus_seed}: clusters {got:?}, planted {want:?}"));
        }
        // The kept label is the earliest one of each cluster.
        let reps: BTreeSet<String> = report.representatives.iter().cloned().collect();
        if reps != first.into_values().collect() {
            return Err(format!(
                "corpus {corpus_seed}: representatives are not the earliest labels"
            ));
        }
        planted_total += docs.len() - report.representatives.len();
    }
    Ok(format!(
        "abcd/bcde = 0.75; {DEDUP_CORPORA} corpora, {planted_total} planted duplicates recovered exactly"
    ))
}

struct Counting<T> {
    inner: T,
    calls: std::sync::atomic::AtomicUsize,
}

impl<T: Transport> Transport for Counting<T> {
    fn send(
        &self,
        request: &sidekick_core::llm_gateway::ChatRequest,
    ) -> Result<String, sidekick_core::llm_gateway::TransportError> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        self.inner.send(request)
    }
}

fn resource(kind: OntologyKind) -> Result<OntologyResource, String> {
    let dir = mini_dir();
    let (obo, matrix) = match kind {
        OntologyKind::Hpo => ("hpo.obo", "hpo_embeddings.jsonl"),
        OntologyKind::Mondo => ("mondo.obo", "mondo_embeddings.jsonl"),
    };
    Ok(OntologyResource {
        kind,
        graph: OntologyGraph::from_path(dir.join(obo)).map_err(|e| e.to_string())?,
        matrix: load_matrix_file(dir.join(matrix)).map_err(|e| e.to_string())?,
    })
}

/// Exact hits, disambiguated hits and the always-malformed fallback on the
/// bundled mini ontologies.
pub fn mapping_routing() -> Outcome {
    let hpo = resource(OntologyKind::Hpo)?;
    let mondo = resource(OntologyKind::Mondo)?;
    let queries = QueryVectors::load_file(mini_dir().join("query_vectors.jsonl")).map_err(|e| e.to_string())?;
    let clock = Arc::new(ManualClock::new());
    let replay = Arc::new(Counting {
        inner: JournalTransport::replay(mini_dir().join("llm_journal")),
        calls: Default::default(),
    });
    let gateway = Gateway::new(GatewayConfig::mapping(), replay.clone(), clock.clone()).map_err(|e| e.to_string())?;

    for (term, res, want) in [
        ("Bradycardia", &hpo, "HP:0001662"),
        ("rash", &hpo, "HP:0000988"),
        ("HYPERTENSION", &mondo, "MONDO:0005044"),
    ] {
        let r = map_term(term, res, queries.get(term), Some(&gateway));
        if r.stage != MappingStage::Exact || r.target.as_str() != want {
            return Err(format!("{term}: {:?} {}, expected exact {want}", r.stage, r.target));
        }
    }
    let calls = replay.calls.load(std::sync::atomic::Ordering::SeqCst);
    if calls != 0 {
        return Err(format!("exact matches made {calls} gateway calls"));
    }

    for (term, want, attempts) in [
        ("kidney failure", "HP:0000083", 1),
        ("hemorrhagic tendencies", "HP:0001892", 2),
    ] {
        let r = map_term(term, &hpo, queries.get(term), Some(&gateway));
        if r.stage != MappingStage::Llm || r.target.as_str() != want || r.attempts != attempts {
            return Err(format!(
                "{term}: {:?} {} after {}, expected llm {want} after {attempts}",
                r.stage, r.target, r.attempts
            ));
        }
    }

    for (res, root, query) in [
        (&hpo, "HP:0000001", vec![1.0, 0.05, 0.0, 0.1]),
        (&mondo, "MONDO:0000001", vec![0.1, 0.1, 0.1, 1.0]),
    ] {
        let broken = Arc::new(FnTransport::new(|_: &_, _| Ok("no JSON here".to_string())));
        let clock = Arc::new(ManualClock::new());
        let gw = Gateway::new(GatewayConfig::mapping(), broken.clone(), clock.clone()).map_err(|e| e.to_string())?;
        let r = map_term("planted ambiguity", res, Some(&query), Some(&gw));
        if r.stage != MappingStage::Fallback || r.target.as_str() != root || r.attempts != 3 || broken.calls() != 3 {
            return Err(format!(
                "malformed gateway: {:?} {} after {} attempts / {} calls, expected fallback {root} after 3",
                r.stage,
                r.target,
                r.attempts,
                broken.calls()
            ));
        }
        if clock.sleeps().len() != 2 {
            return Err(format!("expected 2 retry pauses, saw {}", clock.sleeps().len()));
        }
    }
    Ok("exact: stage 1 with 0 calls; retrieval+LLM: stage 3; malformed: root fallback after 3 attempts".into())
}

fn random_literal(rng: &mut impl Rng) -> Literal {
    const PIECES: [&str; 12] = [
        "plain",
        "with \"quotes\"",
        "back\\slash",
        "line\nbreak",
        "tab\there",
        "émigré ✓",
        "",
        "a'b",
        "\r",
        "#hash",
        "ends with \"",
        "<angle> & amp",
    ];
    let lexical: String = (0..rng.gen_range(1..=3))
        .map(|_| *PIECES.choose(rng).unwrap())
        .collect();
    match rng.gen_range(0..5) {
        0 => Literal::typed(rng.gen_range(0..10_000u32).to_string(), xsd("integer")),
        1 => Literal::typed("2024-02-29", xsd("date")),
        2 => Literal {
            lexical,
            datatype: None,
            lang: Some(["en", "fr", "en-GB"].choose(rng).unwrap().to_string()),
        },
        3 => Literal::typed(lexical, Iri::new("http://example.org/dt#custom").unwrap()),
        _ => Literal::plain(lexical),
    }
}

fn random_iri(rng: &mut impl Rng) -> Iri {
    let n = rng.gen_range(0..40);
    let s = match rng.gen_range(0..7) {
        0 => format!("{}thing_{n}", sidekick_core::kg::SK),
        1 => format!("{}HP_{n:07}", sidekick_core::kg::OBO),
        2 => format!("{}{n}", sidekick_core::kg::RXNORM),
        3 => format!("http://example.org/path/{n}#frag"),
        4 => format!("http://example.org/odd-{n}.x/y~z"),
        5 => format!("{}label", sidekick_core::kg::RDFS),
        _ => format!("urn:x:{n}"),
    };
    Iri::new(s).unwrap()
}

pub fn random_triples(rng: &mut impl Rng) -> TripleSet {
    let mut out = TripleSet::new();
    for _ in 0..rng.gen_range(0..40) {
        let object: Term = if rng.gen_bool(0.5) {
            Term::Iri(random_iri(rng))
        } else {
            Term::Literal(random_literal(rng))
        };
        let predicate = if rng.gen_bool(0.2) {
            rdf("type")
        } else {
            random_iri(rng)
        };
        out.insert(Triple::new(random_iri(rng), predicate, object));
    }
    out
}

/// Random but well-formed graph input.
pub fn random_input(rng: &mut impl Rng) -> KgInput {
    let mut input = KgInput::default();
    let ingredients: Vec<IngredientNode> = (0..rng.gen_range(1..8))
        .map(|i| IngredientNode {
            rxcui: format!("{}", 100 + i * 37),
            label: format!("ingredient {i}"),
        })
        .collect();
    let mut collections = Vec::new();
    for _ in 0..rng.gen_range(1..5) {
        let k = rng.gen_range(1..=ingredients.len().min(3));
        let members: Vec<IngredientNode> = ingredients.choose_multiple(rng, k).cloned().collect();
        collections.push(input.add_collection(&members).unwrap());
    }
    for (i, c) in collections.iter().enumerate() {
        input.add_product(&format!("{}", 9000 + i), &format!("product {i}"), c.clone());
    }
    let docs: Vec<String> = (0..rng.gen_range(1..4)).map(|i| format!("doc-{i}")).collect();
    for d in &docs {
        input.add_document(d);
    }
    for _ in 0..rng.gen_range(1..15) {
        let kind = *Kind::ALL.choose(rng).unwrap();
        let drug = collections.choose(rng).unwrap().clone();
        let n = rng.gen_range(1..50);
        let target = match kind {
            Kind::SideEffect | Kind::PhenotypeIndication | Kind::PhenotypeContraindication => {
                obo_iri(&tid(&format!("HP:{n:07}")))
            }
            Kind::DiseaseIndication | Kind::DiseaseContraindication => obo_iri(&tid(&format!("MONDO:{n:07}"))),
            Kind::DrugIndication | Kind::DrugContraindication => collections.choose(rng).unwrap().clone(),
        };
        input
            .add_association(kind, &drug, &target, "target", docs.choose(rng).unwrap())
            .unwrap();
    }
    input
}

fn only_rule(report: &sidekick_core::kg::ValidationReport, node: &Iri, rule: ShapeRule) -> bool {
    !report.violations.is_empty() && report.violations.iter().all(|v| v.rule == rule && &v.node == node)
}

/// Turtle round trips, clean builds, and the four injected fault classes.
pub fn kg_roundtrip_and_shapes() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..ROUND_TRIPS {
        let triples = random_triples(&mut rng);
        let text = serialize_turtle(&triples);
        let back = parse_turtle(&text).map_err(|e| format!("case {case}: {e}\n{text}"))?;
        if back != triples {
            return Err(format!("case {case}: round trip changed the graph\n{text}"));
        }
    }
    let ns = Namespaces::default();
    let meta = DatasetMetadata::default();
    let mut faults = 0;
    for case in 0..GRAPHS {
        let input = random_input(&mut rng);
        let graph = build_graph(&input, &meta, &ns).map_err(|e| format!("graph {case}: {e}"))?;
        let report = validate_shapes(&graph);
        if !report.is_valid() {
            return Err(format!(
                "graph {case}: built graph has violations {:?}",
                report.violations
            ));
        }
        let reparsed = parse_turtle(&serialize_turtle(&graph)).map_err(|e| e.to_string())?;
        if reparsed != graph {
            return Err(format!("graph {case}: built graph does not round trip"));
        }

        let assoc = input.associations.values().next().expect("at least one association");
        let node = &assoc.iri;
        let without = |pred: &Iri| -> TripleSet {
            graph
                .iter()
                .filter(|t| !(&t.subject == node && &t.predicate == pred))
                .cloned()
                .collect()
        };

        let report = validate_shapes(&without(&sio(SIO_HAS_SOURCE)));
        if !only_rule(&report, node, ShapeRule::Provenance) {
            return Err(format!("graph {case}: missing provenance gave {:?}", report.violations));
        }

        let report = validate_shapes(&without(&sk("refersToDrug")));
        if !only_rule(&report, node, ShapeRule::Cardinality) {
            return Err(format!(
                "graph {case}: missing refersToDrug gave {:?}",
                report.violations
            ));
        }

        let wrong = match assoc.kind.target_kind() {
            sidekick_core::kg::TargetKind::Phenotype => obo_iri(&tid("MONDO:0000001")),
            _ => obo_iri(&tid("HP:0000001")),
        };
        let pred = assoc.kind.target_predicate();
        let mut swapped = without(&pred);
        swapped.insert(Triple::new(node.clone(), pred, wrong));
        let report = validate_shapes(&swapped);
        if !only_rule(&report, node, ShapeRule::TargetPattern) {
            return Err(format!(
                "graph {case}: wrong target namespace gave {:?}",
                report.violations
            ));
        }

        let empty = mint_collection_iri(&["424242"]).unwrap();
        let mut orphan = graph.clone();
        orphan.insert(Triple::new(empty.clone(), rdf("type"), sk("DrugCollection")));
        orphan.insert(Triple::new(empty.clone(), rdfs("label"), Literal::plain("nothing")));
        let report = validate_shapes(&orphan);
        if !only_rule(&report, &empty, ShapeRule::Structure) {
            return Err(format!(
                "graph {case}: memberless collection gave {:?}",
                report.violations
            ));
        }
        // Stripping every member of a real collection is the same fault.
        let (c, _) = input.collections.iter().next().unwrap();
        let stripped: TripleSet = graph
            .iter()
            .filter(|t| !(&t.subject == c && t.predicate == sio(SIO_HAS_MEMBER)))
            .cloned()
            .collect();
        let report = validate_shapes(&stripped);
        if !only_rule(&report, c, ShapeRule::Structure) {
            return Err(format!(
                "graph {case}: stripped collection gave {:?}",
                report.violations
            ));
        }
        faults += 5;
    }
    Ok(format!(
        "{ROUND_TRIPS} Turtle round trips; {GRAPHS} built graphs clean; {faults} injected faults caught with rules 2, 4, 3, 1"
    ))
}
