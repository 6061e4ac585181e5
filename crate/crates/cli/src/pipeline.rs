//! The pipeline stages. Each reads the artifacts of the stage before it from
//! the output directory and writes its own, so any stage can be rerun alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use sidekick_core::embeddings::{load_matrix_file, QueryVectors};
use sidekick_core::kg::{
    assemble, build_graph, compute_stats, emit_void, parse_turtle, serialize_turtle_with, term_id_from_iri,
    validate_shapes, AssemblyOptions, GraphStats, Iri, Kind, Prefixes, ProductInfo, Term, TripleSet, ValidationReport,
};
use sidekick_core::llm_gateway::{
    extract_entities, run_batched, Clock, Gateway, HttpTransport, JournalTransport, ManualClock, SystemClock, Transport,
};
use sidekick_core::mapper::{
    classify_terms, map_term, route_mapping, EntityRecognizer, HeuristicRecognizer, HttpRxNav, MappingRecord,
    MappingResources, MappingStage, OntologyKind, OntologyResource, RecordingRxNav, ReplayRxNav, Routed, RxNavClient,
    RxNavFixture, SubprocessRecognizer, TermSource,
};
use sidekick_core::ontology::{OntologyGraph, TermId};
use sidekick_core::query::{run_competency_suite, KgIndex, Ontologies, QuestionOutcome, QuestionSet};
use sidekick_core::simeval::{
    build_pairs, evaluate_with_scores, load_hierarchy_edges, matched_drugs, normalize_to_preferred,
    parse_annotations_tsv, parse_hierarchy_tsv, parse_meddra_annotations_tsv, parse_targets_tsv, AnnotationCorpus,
    EvalReport, Normalization, PairScore,
};
use sidekick_core::spl_corpus::{
    deduplicate, default_blacklist, filter_sections, flatten, parse_code_list, parse_rxnorm_mappings,
    parse_rxnorm_products, parse_spl_file, DedupReport, SplDocument,
};

use crate::config::PipelineConfig;

pub const CORPUS: &str = "corpus.jsonl";
pub const DEDUP_REPORT: &str = "dedup_report.json";
pub const REPRESENTATIVES: &str = "representatives.txt";
pub const EXTRACTIONS: &str = "extractions.jsonl";
pub const MAPPINGS: &str = "mappings.jsonl";
pub const PRODUCTS: &str = "products.jsonl";
pub const GRAPH: &str = "sidekick.ttl";
pub const VOID: &str = "void.ttl";
pub const STATS: &str = "stats.json";
pub const VALIDATION: &str = "validation.json";
pub const EVAL_REPORT: &str = "eval_report.json";
pub const PAIR_SCORES: &str = "pair_scores.csv";
pub const QUERY_SUMMARY: &str = "query_summary.csv";

/// A stage ran before the stage that produces its input.
#[derive(Debug, Error)]
#[error("{} is missing; run `sidekick {producer}` first", path.display())]
pub struct MissingArtifact {
    pub path: PathBuf,
    pub producer: &'static str,
}

fn require(path: &Path, producer: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(MissingArtifact {
            path: path.to_path_buf(),
            producer,
        }
        .into())
    }
}

/// External services the stages talk to.
pub struct Services {
    pub transport: Arc<dyn Transport>,
    pub clock: Arc<dyn Clock>,
    pub rxnav: Arc<dyn RxNavClient>,
    pub recognizer: Arc<dyn EntityRecognizer>,
    recorder: Option<Arc<RecordingRxNav<HttpRxNav>>>,
}

impl Services {
    /// Replay transports and a clock that never sleeps when `offline`;
    /// otherwise live clients whose traffic is journaled next to the
    /// replay fixtures.
    pub fn from_config(cfg: &PipelineConfig, offline: bool) -> Result<Self> {
        let recognizer: Arc<dyn EntityRecognizer> = match cfg.ner.command.split_first() {
            Some((program, args)) => Arc::new(SubprocessRecognizer {
                program: program.clone(),
                args: args.to_vec(),
            }),
            None => Arc::new(HeuristicRecognizer {
                stop_phrases: cfg.ner.stop_phrases.clone(),
            }),
        };
        let seed = if cfg.paths.rxnav_fixture.exists() {
            RxNavFixture::load(&cfg.paths.rxnav_fixture)?
        } else {
            RxNavFixture::default()
        };
        if offline {
            return Ok(Services {
                transport: Arc::new(JournalTransport::replay(&cfg.paths.llm_journal)),
                clock: Arc::new(ManualClock::new()),
                rxnav: Arc::new(ReplayRxNav::new(seed)),
                recognizer,
                recorder: None,
            });
        }
        let ext = cfg.extraction()?;
        let live = HttpTransport::new(
            ext.endpoint_url.clone(),
            ext.api_key_env.clone(),
            std::time::Duration::from_secs_f64(ext.timeout),
        );
        let recorder = Arc::new(RecordingRxNav::new(
            HttpRxNav::new(
                &cfg.rxnav.base_url,
                std::time::Duration::from_secs_f64(cfg.rxnav.timeout),
            ),
            seed,
        ));
        Ok(Services {
            transport: Arc::new(JournalTransport::recording(&cfg.paths.llm_journal, Arc::new(live))),
            clock: Arc::new(SystemClock),
            rxnav: recorder.clone(),
            recognizer,
            recorder: Some(recorder),
        })
    }

    /// Services assembled by the caller, e.g. scripted transports in tests.
    pub fn custom(
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
        rxnav: Arc<dyn RxNavClient>,
        recognizer: Arc<dyn EntityRecognizer>,
    ) -> Self {
        Services {
            transport,
            clock,
            rxnav,
            recognizer,
            recorder: None,
        }
    }
}

/// One line of the extractions file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub set_id: String,
    pub indications: Vec<String>,
    pub contraindications: Vec<String>,
    pub side_effects: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub matched_drugs: usize,
    pub sidekick: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_normalization: Option<Normalization>,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub services: Services,
    pub jobs: usize,
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut out, &item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_graph(path: &Path) -> Result<OntologyGraph> {
    OntologyGraph::from_path(path).with_context(|| format!("loading ontology {}", path.display()))
}

/// Maps over `items` on `jobs` threads, keeping input order.
fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    if jobs <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    pool.install(|| items.par_iter().map(f).collect())
}

impl Pipeline {
    pub fn new(config: PipelineConfig, services: Services, jobs: usize) -> Self {
        Pipeline {
            config,
            services,
            jobs: jobs.max(1),
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.output(name)
    }

    fn ensure_output_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.config.paths.output_dir)
            .with_context(|| format!("creating {}", self.config.paths.output_dir.display()))
    }

    /// Parses every `.xml` file in the SPL directory (file-name order),
    /// links products and drops blacklisted sections.
    pub fn ingest(&self) -> Result<Vec<SplDocument>> {
        self.ensure_output_dir()?;
        let cfg = &self.config;
        let blacklist = match &cfg.paths.loinc_blacklist {
            Some(p) => parse_code_list(&read_text(p)?),
            None => default_blacklist(),
        };
        let links = parse_rxnorm_mappings(&read_text(&cfg.paths.rxnorm_mappings)?)?;
        let mut files: Vec<PathBuf> = fs::read_dir(&cfg.paths.spl_dir)
            .with_context(|| format!("listing {}", cfg.paths.spl_dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("xml")))
            .collect();
        files.sort();

        let parsed = par_map(&files, self.jobs, |p| (p.clone(), parse_spl_file(p)));
        let mut seen = BTreeSet::new();
        let mut docs = Vec::new();
        for (path, result) in parsed {
            let mut doc = match result {
                Ok(doc) => doc,
                Err(e) => {
                    warn!("file={} stage=ingest outcome=error reason={e}", path.display());
                    continue;
                }
            };
            if !seen.insert(doc.set_id.clone()) {
                warn!(
                    "set_id={} stage=ingest outcome=duplicate file={}",
                    doc.set_id,
                    path.display()
                );
                continue;
            }
            doc.product_rxcuis = links.get(&doc.set_id).cloned().unwrap_or_default();
            let doc = filter_sections(&doc, &blacklist);
            info!(
                "set_id={} stage=ingest outcome=ok sections={} products={}",
                doc.set_id,
                doc.sections.len(),
                doc.product_rxcuis.len()
            );
            docs.push(doc);
        }
        write_jsonl(&self.out(CORPUS), &docs)?;
        Ok(docs)
    }

    fn corpus(&self) -> Result<Vec<SplDocument>> {
        let path = self.out(CORPUS);
        require(&path, "ingest")?;
        read_jsonl(&path)
    }

    fn representatives(&self) -> Result<Vec<String>> {
        let path = self.out(REPRESENTATIVES);
        require(&path, "dedup")?;
        Ok(read_text(&path)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect())
    }

    fn representative_docs(&self) -> Result<Vec<SplDocument>> {
        let reps = self.representatives()?;
        let mut by_id: BTreeMap<String, SplDocument> =
            self.corpus()?.into_iter().map(|d| (d.set_id.clone(), d)).collect();
        reps.iter()
            .map(|id| {
                by_id
                    .remove(id)
                    .ok_or_else(|| anyhow!("representative {id} is not in {CORPUS}"))
            })
            .collect()
    }

    pub fn dedup(&self) -> Result<DedupReport> {
        let docs = self.corpus()?;
        let report = deduplicate(&docs, self.config.dedup.threshold);
        for cluster in &report.clusters {
            let (rep, rest) = cluster.split_first().expect("non-empty cluster");
            info!("set_id={rep} stage=dedup outcome=representative");
            for other in rest {
                info!("set_id={other} stage=dedup outcome=merged into={rep}");
            }
        }
        write_json(&self.out(DEDUP_REPORT), &report)?;
        let mut list = report.representatives.join("\n");
        if !list.is_empty() {
            list.push('\n');
        }
        fs::write(self.out(REPRESENTATIVES), list)?;
        Ok(report)
    }

    pub fn extract(&self) -> Result<Vec<ExtractionRecord>> {
        let docs = self.representative_docs()?;
        let gateway = Gateway::new(
            self.config.extraction()?,
            self.services.transport.clone(),
            self.services.clock.clone(),
        )?;
        let cfg = gateway.config().clone();
        let records = run_batched(
            &docs,
            cfg.batch_size,
            cfg.inter_batch_sleep(),
            self.services.clock.as_ref(),
            self.jobs,
            |doc| match extract_entities(&gateway, &flatten(doc), &doc.set_id) {
                Ok(r) => ExtractionRecord {
                    set_id: r.set_id,
                    indications: r.indications,
                    contraindications: r.contraindications,
                    side_effects: r.side_effects,
                    error: None,
                },
                Err(e) => ExtractionRecord {
                    set_id: doc.set_id.clone(),
                    error: Some(e.to_string()),
                    ..Default::default()
                },
            },
        );
        for r in &records {
            match &r.error {
                None => info!(
                    "set_id={} stage=extract outcome=ok indications={} contraindications={} side_effects={}",
                    r.set_id,
                    r.indications.len(),
                    r.contraindications.len(),
                    r.side_effects.len()
                ),
                Some(e) => warn!("set_id={} stage=extract outcome=error reason={e}", r.set_id),
            }
        }
        write_jsonl(&self.out(EXTRACTIONS), &records)?;
        Ok(records)
    }

    fn resource(&self, kind: OntologyKind) -> Result<OntologyResource> {
        let p = &self.config.paths;
        let (obo, matrix) = match kind {
            OntologyKind::Hpo => (&p.hpo, &p.hpo_embeddings),
            OntologyKind::Mondo => (&p.mondo, &p.mondo_embeddings),
        };
        Ok(OntologyResource {
            kind,
            graph: load_graph(obo)?,
            matrix: load_matrix_file(matrix).with_context(|| format!("loading {}", matrix.display()))?,
        })
    }

    /// Maps every extracted term and resolves the representatives' products
    /// to their active ingredients.
    pub fn map(&self) -> Result<(Vec<MappingRecord>, Vec<ProductInfo>)> {
        let path = self.out(EXTRACTIONS);
        require(&path, "extract")?;
        let extractions: Vec<ExtractionRecord> = read_jsonl(&path)?;
        let docs = self.representative_docs()?;

        let hpo = self.resource(OntologyKind::Hpo)?;
        let mondo = self.resource(OntologyKind::Mondo)?;
        let queries = QueryVectors::load_file(&self.config.paths.query_vectors)
            .with_context(|| format!("loading {}", self.config.paths.query_vectors.display()))?;
        let s = &self.services;
        let classifier = Gateway::new(self.config.classification()?, s.transport.clone(), s.clock.clone())?;
        let mapper = Gateway::new(self.config.mapping()?, s.transport.clone(), s.clock.clone())?;
        let side_effects = Gateway::new(self.config.side_effect_mapping()?, s.transport.clone(), s.clock.clone())?;

        let usable: Vec<&ExtractionRecord> = extractions.iter().filter(|e| e.error.is_none()).collect();
        let per_doc = par_map(&usable, self.jobs, |ex| {
            let mut out = Vec::new();
            let terms: Vec<(&str, TermSource)> = ex
                .indications
                .iter()
                .map(|t| (t.as_str(), TermSource::Indication))
                .chain(
                    ex.contraindications
                        .iter()
                        .map(|t| (t.as_str(), TermSource::Contraindication)),
                )
                .collect();
            let surfaces: Vec<&str> = terms.iter().map(|(t, _)| *t).collect();
            let classification = classify_terms(&surfaces, Some(&classifier));
            for w in &classification.warnings {
                warn!("set_id={} stage=classify outcome=warning reason={w}", ex.set_id);
            }
            for ((term, source), category) in terms.iter().zip(classification.categories) {
                let resources = MappingResources {
                    hpo: &hpo,
                    mondo: &mondo,
                    rxnav: s.rxnav.as_ref(),
                    recognizer: Some(s.recognizer.as_ref()),
                    query: queries.get(term),
                    gateway: Some(&mapper),
                };
                out.push(MappingRecord {
                    set_id: ex.set_id.clone(),
                    source: *source,
                    category: Some(category),
                    mapping: route_mapping(term, category, &resources),
                });
            }
            for term in &ex.side_effects {
                let m = map_term(term, &hpo, queries.get(term), Some(&side_effects));
                out.push(MappingRecord {
                    set_id: ex.set_id.clone(),
                    source: TermSource::SideEffect,
                    category: None,
                    mapping: Routed::Ontology(m),
                });
            }
            let fallback = out
                .iter()
                .filter(|r| matches!(&r.mapping, Routed::Ontology(m) if m.stage == MappingStage::Fallback))
                .count();
            info!(
                "set_id={} stage=map outcome=ok terms={} fallback={fallback}",
                ex.set_id,
                out.len()
            );
            out
        });
        let records: Vec<MappingRecord> = per_doc.into_iter().flatten().collect();

        let names = parse_rxnorm_products(&read_text(&self.config.paths.rxnorm_mappings)?)?;
        let product_ids: BTreeSet<&String> = docs.iter().flat_map(|d| d.product_rxcuis.iter()).collect();
        let mut products = Vec::new();
        for rxcui in product_ids {
            let ingredients = match s.rxnav.related_ingredients(rxcui) {
                Ok(list) => list,
                Err(e) => {
                    warn!("rxcui={rxcui} stage=products outcome=error reason={e}");
                    Vec::new()
                }
            };
            products.push(ProductInfo {
                rxcui: rxcui.clone(),
                label: names.get(rxcui).cloned().unwrap_or_default(),
                ingredients,
            });
        }
        if let Some(rec) = &s.recorder {
            rec.fixture().save(&self.config.paths.rxnav_fixture)?;
        }
        write_jsonl(&self.out(MAPPINGS), &records)?;
        write_jsonl(&self.out(PRODUCTS), &products)?;
        Ok((records, products))
    }

    pub fn build_kg(&self) -> Result<GraphStats> {
        let docs = self.representative_docs()?;
        let (mpath, ppath) = (self.out(MAPPINGS), self.out(PRODUCTS));
        require(&mpath, "map")?;
        require(&ppath, "map")?;
        let records: Vec<MappingRecord> = read_jsonl(&mpath)?;
        let products: BTreeMap<String, ProductInfo> = read_jsonl::<ProductInfo>(&ppath)?
            .into_iter()
            .map(|p| (p.rxcui.clone(), p))
            .collect();
        let documents: Vec<(String, Vec<String>)> = docs
            .iter()
            .map(|d| (d.set_id.clone(), d.product_rxcuis.clone()))
            .collect();
        let options = AssemblyOptions {
            include_fallback: self.config.kg.include_fallback,
        };
        let (input, summary) = assemble(&documents, &products, &records, &options)?;
        info!(
            "stage=build-kg records={} used={} unrouted={} unresolved_drugs={} fallback_skipped={} without_drug={}",
            summary.records,
            summary.used,
            summary.unrouted,
            summary.unresolved_drugs,
            summary.fallback_skipped,
            summary.without_drug
        );
        for (set_id, _) in &documents {
            let outcome = if input.documents.contains_key(set_id) {
                "ok"
            } else {
                "no_product"
            };
            info!("set_id={set_id} stage=build-kg outcome={outcome}");
        }
        let meta = self.config.metadata();
        let ns = self.config.kg.namespaces();
        let triples = build_graph(&input, &meta, &ns)?;
        let ttl = serialize_turtle_with(&triples, &Prefixes::with_rxnorm(&ns.rxnorm));
        fs::write(self.out(GRAPH), ttl)?;
        let stats = compute_stats(&triples);
        fs::write(self.out(STATS), stats.to_json())?;
        fs::write(self.out(VOID), emit_void(&stats, &meta))?;
        Ok(stats)
    }

    fn load_kg(&self, path: &Path) -> Result<TripleSet> {
        require(path, "build-kg")?;
        parse_turtle(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
    }

    /// Checks the graph (the built one unless `input` is given) and writes
    /// the report.
    pub fn validate(&self, input: Option<&Path>) -> Result<ValidationReport> {
        let path = input.map(Path::to_path_buf).unwrap_or_else(|| self.out(GRAPH));
        let triples = self.load_kg(&path)?;
        let report = validate_shapes(&triples);
        self.ensure_output_dir()?;
        write_json(&self.out(VALIDATION), &report)?;
        for v in &report.violations {
            warn!(
                "stage=validate node={} rule={} message={}",
                v.node, v.rule as u8, v.message
            );
        }
        info!(
            "stage=validate associations={} collections={} violations={}",
            report.associations_checked,
            report.collections_checked,
            report.violations.len()
        );
        Ok(report)
    }

    fn graph_annotations(&self) -> Result<BTreeMap<String, BTreeSet<TermId>>> {
        let triples = self.load_kg(&self.out(GRAPH))?;
        let index = side_effect_rows(&triples);
        Ok(index)
    }

    pub fn eval(&self) -> Result<EvalOutput> {
        let e = &self.config.eval;
        let Some(targets_path) = &e.targets else {
            bail!("eval needs `targets` in the [eval] config section");
        };
        let targets = parse_targets_tsv(&read_text(targets_path)?)?;
        let raw = match &e.annotations {
            Some(p) => parse_annotations_tsv(&read_text(p)?)?,
            None => self.graph_annotations()?,
        };
        let hpo = load_graph(&self.config.paths.hpo)?;
        let known: BTreeMap<String, BTreeSet<TermId>> = raw
            .into_iter()
            .map(|(d, terms)| {
                (
                    d,
                    terms.into_iter().filter(|t| hpo.contains(t)).collect::<BTreeSet<_>>(),
                )
            })
            .filter(|(_, t)| !t.is_empty())
            .collect();
        let corpus = AnnotationCorpus::new(known)?;

        let baseline = match (&e.meddra_annotations, &e.meddra_hierarchy) {
            (Some(a), Some(h)) => {
                let graph = load_hierarchy_edges(&parse_hierarchy_tsv(&read_text(h)?)?)?;
                let raw = parse_meddra_annotations_tsv(&read_text(a)?)?;
                let (corpus, norm) = normalize_to_preferred(&raw, &graph)?;
                Some((graph, corpus, norm))
            }
            _ => None,
        };

        let mut matched: BTreeSet<String> = matched_drugs(&corpus, &targets).into_iter().collect();
        if let Some((_, b, _)) = &baseline {
            let other: BTreeSet<String> = matched_drugs(b, &targets).into_iter().collect();
            matched = matched.intersection(&other).cloned().collect();
        }
        let matched: Vec<String> = matched.into_iter().collect();
        let pairs = build_pairs(&targets, &matched);
        let restrict = |c: &AnnotationCorpus| -> Result<AnnotationCorpus> {
            Ok(AnnotationCorpus::new(
                matched
                    .iter()
                    .filter_map(|d| Some((d.clone(), c.get(d)?.clone())))
                    .collect(),
            )?)
        };
        let (report, scores) = evaluate_with_scores(&restrict(&corpus)?, &hpo, &pairs)?;
        let (baseline_report, baseline_scores, normalization) = match &baseline {
            Some((graph, b, norm)) => {
                let (r, s) = evaluate_with_scores(&restrict(b)?, graph, &pairs)?;
                (Some(r), Some(s), Some(norm.clone()))
            }
            None => (None, None, None),
        };
        write_pair_scores(&self.out(PAIR_SCORES), &scores, baseline_scores.as_deref())?;
        let output = EvalOutput {
            matched_drugs: matched.len(),
            sidekick: report,
            baseline: baseline_report,
            baseline_normalization: normalization,
        };
        write_json(&self.out(EVAL_REPORT), &output)?;
        info!(
            "stage=eval matched_drugs={} pairs={} auc={:.4}",
            output.matched_drugs,
            pairs.len(),
            output.sidekick.auc
        );
        Ok(output)
    }

    fn questions(&self) -> Result<QuestionSet> {
        let Some(path) = &self.config.paths.questions else {
            return Ok(QuestionSet::default());
        };
        let text = read_text(path)?;
        let set = if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        Ok(set)
    }

    pub fn query(&self, input: Option<&Path>) -> Result<Vec<QuestionOutcome>> {
        let path = input.map(Path::to_path_buf).unwrap_or_else(|| self.out(GRAPH));
        let triples = self.load_kg(&path)?;
        let hpo = load_graph(&self.config.paths.hpo)?;
        let mondo = load_graph(&self.config.paths.mondo)?;
        let graphs = [&hpo, &mondo];
        let index = KgIndex::new(&triples);
        let outcomes = run_competency_suite(&index, Ontologies::new(&graphs), &self.questions()?);
        self.ensure_output_dir()?;
        let mut summary = csv::Writer::from_path(self.out(QUERY_SUMMARY))?;
        summary.write_record(["id", "title", "unique_drugs", "error"])?;
        for o in &outcomes {
            summary.write_record([
                o.id.as_str(),
                &o.title,
                &o.unique_drugs.to_string(),
                o.error.as_deref().unwrap_or(""),
            ])?;
            let mut w = csv::Writer::from_path(self.out(&format!("query_{}.csv", o.id)))?;
            w.write_record(["drug_label", "drug", "kind", "target", "target_label"])?;
            for m in &o.result.matches {
                w.write_record([
                    m.drug_label.as_str(),
                    m.drug.as_str(),
                    m.kind.class_name(),
                    &m.target,
                    &m.target_label,
                ])?;
            }
            w.flush()?;
            match &o.error {
                None => info!("stage=query question={} unique_drugs={}", o.id, o.unique_drugs),
                Some(e) => warn!("stage=query question={} outcome=error reason={e}", o.id),
            }
        }
        summary.flush()?;
        Ok(outcomes)
    }

    /// Every stage in order. Evaluation runs only when targets are
    /// configured. A graph with shape violations stops the run.
    pub fn all(&self) -> Result<ValidationReport> {
        self.ingest()?;
        self.dedup()?;
        self.extract()?;
        self.map()?;
        self.build_kg()?;
        let report = self.validate(None)?;
        if !report.is_valid() {
            return Ok(report);
        }
        if self.config.eval.targets.is_some() {
            self.eval()?;
        } else {
            info!("stage=eval outcome=skipped reason=no targets configured");
        }
        self.query(None)?;
        Ok(report)
    }
}

/// Side-effect annotations per drug collection, keyed by the collection's
/// local name.
pub fn side_effect_rows(triples: &TripleSet) -> BTreeMap<String, BTreeSet<TermId>> {
    let type_p = sidekick_core::kg::rdf("type");
    let refers = sidekick_core::kg::sk("refersToDrug");
    let class = Kind::SideEffect.class_iri();
    let pred = Kind::SideEffect.target_predicate();
    let nodes: BTreeSet<&Iri> = triples
        .iter()
        .filter(|t| t.predicate == type_p && t.object == Term::Iri(class.clone()))
        .map(|t| &t.subject)
        .collect();
    let mut drug: BTreeMap<&Iri, &Iri> = BTreeMap::new();
    let mut target: BTreeMap<&Iri, Vec<TermId>> = BTreeMap::new();
    for t in triples.iter().filter(|t| nodes.contains(&t.subject)) {
        let Term::Iri(o) = &t.object else { continue };
        if t.predicate == refers {
            drug.insert(&t.subject, o);
        } else if t.predicate == pred {
            target.entry(&t.subject).or_default().extend(term_id_from_iri(o));
        }
    }
    let mut out: BTreeMap<String, BTreeSet<TermId>> = BTreeMap::new();
    for (node, d) in drug {
        let key = d.local_after(sidekick_core::kg::SK).unwrap_or(d.as_str()).to_string();
        out.entry(key)
            .or_default()
            .extend(target.remove(node).unwrap_or_default());
    }
    out.retain(|_, t| !t.is_empty());
    out
}

fn write_pair_scores(path: &Path, scores: &[PairScore], baseline: Option<&[PairScore]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if baseline.is_some() {
        w.write_record(["a", "b", "positive", "score", "baseline_score"])?;
    } else {
        w.write_record(["a", "b", "positive", "score"])?;
    }
    for (i, s) in scores.iter().enumerate() {
        let mut row = vec![s.a.clone(), s.b.clone(), s.positive.to_string(), s.score.to_string()];
        if let Some(b) = baseline {
            row.push(b[i].score.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
