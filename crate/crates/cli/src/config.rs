use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sidekick_core::kg::{DatasetMetadata, Namespaces, RXNORM};
use sidekick_core::llm_gateway::GatewayConfig;
use sidekick_core::mapper::{DEFAULT_STOP_PHRASES, RXNAV_BASE_URL};
use sidekick_core::spl_corpus::DEFAULT_THRESHOLD;

/// Input and output locations. Relative paths are resolved against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    pub spl_dir: PathBuf,
    pub output_dir: PathBuf,
    pub rxnorm_mappings: PathBuf,
    pub hpo: PathBuf,
    pub mondo: PathBuf,
    pub hpo_embeddings: PathBuf,
    pub mondo_embeddings: PathBuf,
    pub query_vectors: PathBuf,
    /// Request/response journal for the LLM (replayed with `--offline`).
    pub llm_journal: PathBuf,
    /// Recorded RxNav answers (replayed with `--offline`).
    pub rxnav_fixture: PathBuf,
    #[serde(default)]
    pub loinc_blacklist: Option<PathBuf>,
    #[serde(default)]
    pub questions: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupSettings {
    pub threshold: f64,
}

impl Default for DedupSettings {
    fn default() -> Self {
        DedupSettings {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Per-program overrides; any key left out keeps the program's preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    pub extraction: toml::Table,
    pub classification: toml::Table,
    pub mapping: toml::Table,
    pub side_effect_mapping: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RxNavSettings {
    pub base_url: String,
    /// Seconds.
    pub timeout: f64,
}

impl Default for RxNavSettings {
    fn default() -> Self {
        RxNavSettings {
            base_url: RXNAV_BASE_URL.to_string(),
            timeout: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NerSettings {
    pub stop_phrases: Vec<String>,
    /// External tagger: program followed by its arguments. Reads text on
    /// stdin, writes a JSON array of entity strings.
    pub command: Vec<String>,
}

impl Default for NerSettings {
    fn default() -> Self {
        NerSettings {
            stop_phrases: DEFAULT_STOP_PHRASES.iter().map(|s| s.to_string()).collect(),
            command: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KgSettings {
    pub rxnorm_namespace: String,
    pub include_fallback: bool,
    pub metadata: Option<DatasetMetadata>,
}

impl Default for KgSettings {
    fn default() -> Self {
        KgSettings {
            rxnorm_namespace: RXNORM.to_string(),
            include_fallback: true,
            metadata: None,
        }
    }
}

impl KgSettings {
    pub fn namespaces(&self) -> Namespaces {
        Namespaces {
            rxnorm: self.rxnorm_namespace.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    /// `drug<TAB>target` ground truth.
    pub targets: Option<PathBuf>,
    /// `drug<TAB>HP id`; when absent, side effects are read from the graph
    /// with drug collections as drug ids.
    pub annotations: Option<PathBuf>,
    /// Baseline `drug<TAB>MedDRA code` annotations.
    pub meddra_annotations: Option<PathBuf>,
    /// Baseline `child<TAB>parent<TAB>level` hierarchy.
    pub meddra_hierarchy: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub paths: Paths,
    #[serde(default)]
    pub dedup: DedupSettings,
    #[serde(default)]
    pub llm: LlmSettings,
    #[serde(default)]
    pub rxnav: RxNavSettings,
    #[serde(default)]
    pub ner: NerSettings,
    #[serde(default)]
    pub kg: KgSettings,
    #[serde(default)]
    pub eval: EvalSettings,
}

fn overlay(preset: GatewayConfig, overrides: &toml::Table, name: &str) -> Result<GatewayConfig> {
    let mut base = toml::Table::try_from(&preset).expect("gateway config serializes");
    for (k, v) in overrides {
        base.insert(k.clone(), v.clone());
    }
    let cfg: GatewayConfig = base.try_into().with_context(|| format!("[llm.{name}]"))?;
    cfg.validate().with_context(|| format!("[llm.{name}]"))?;
    Ok(cfg)
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let p = &mut self.paths;
        for path in [
            &mut p.spl_dir,
            &mut p.output_dir,
            &mut p.rxnorm_mappings,
            &mut p.hpo,
            &mut p.mondo,
            &mut p.hpo_embeddings,
            &mut p.mondo_embeddings,
            &mut p.query_vectors,
            &mut p.llm_journal,
            &mut p.rxnav_fixture,
        ] {
            fix(path);
        }
        for path in [&mut p.loinc_blacklist, &mut p.questions].into_iter().flatten() {
            fix(path);
        }
        let e = &mut self.eval;
        for path in [
            &mut e.targets,
            &mut e.annotations,
            &mut e.meddra_annotations,
            &mut e.meddra_hierarchy,
        ]
        .into_iter()
        .flatten()
        {
            fix(path);
        }
    }

    /// Input files must exist; the output directory is created on demand.
    pub fn validate(&self) -> Result<()> {
        let t = self.dedup.threshold;
        if !(t > 0.0 && t <= 1.0) {
            bail!("dedup threshold must be in (0, 1], got {t}");
        }
        let p = &self.paths;
        let required = [
            ("paths.spl_dir", &p.spl_dir),
            ("paths.rxnorm_mappings", &p.rxnorm_mappings),
            ("paths.hpo", &p.hpo),
            ("paths.mondo", &p.mondo),
            ("paths.hpo_embeddings", &p.hpo_embeddings),
            ("paths.mondo_embeddings", &p.mondo_embeddings),
            ("paths.query_vectors", &p.query_vectors),
        ];
        let optional = [
            ("paths.loinc_blacklist", p.loinc_blacklist.as_ref()),
            ("paths.questions", p.questions.as_ref()),
            ("eval.targets", self.eval.targets.as_ref()),
            ("eval.annotations", self.eval.annotations.as_ref()),
            ("eval.meddra_annotations", self.eval.meddra_annotations.as_ref()),
            ("eval.meddra_hierarchy", self.eval.meddra_hierarchy.as_ref()),
        ];
        for (key, path) in required
            .into_iter()
            .chain(optional.into_iter().filter_map(|(k, p)| Some((k, p?))))
        {
            if !path.exists() {
                bail!("{key}: {} does not exist", path.display());
            }
        }
        if self.eval.meddra_annotations.is_some() != self.eval.meddra_hierarchy.is_some() {
            bail!("eval.meddra_annotations and eval.meddra_hierarchy must be given together");
        }
        self.extraction()?;
        self.classification()?;
        self.mapping()?;
        self.side_effect_mapping()?;
        Ok(())
    }

    pub fn extraction(&self) -> Result<GatewayConfig> {
        overlay(GatewayConfig::extraction(), &self.llm.extraction, "extraction")
    }

    pub fn classification(&self) -> Result<GatewayConfig> {
        overlay(
            GatewayConfig::classification(),
            &self.llm.classification,
            "classification",
        )
    }

    pub fn mapping(&self) -> Result<GatewayConfig> {
        overlay(GatewayConfig::mapping(), &self.llm.mapping, "mapping")
    }

    pub fn side_effect_mapping(&self) -> Result<GatewayConfig> {
        overlay(
            GatewayConfig::side_effect_mapping(),
            &self.llm.side_effect_mapping,
            "side_effect_mapping",
        )
    }

    pub fn metadata(&self) -> DatasetMetadata {
        self.kg.metadata.clone().unwrap_or_else(|| DatasetMetadata {
            created: chrono::Local::now().format("%Y-%m-%d").to_string(),
            ..DatasetMetadata::default()
        })
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.paths.output_dir.join(name)
    }
}
