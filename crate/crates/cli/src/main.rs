use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use sidekick_cli::config::PipelineConfig;
use sidekick_cli::pipeline::{Pipeline, Services};

#[derive(Parser)]
#[command(name = "sidekick", version, about = "Build and query a drug-label knowledge graph")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, short, global = true, default_value = "sidekick.toml")]
    config: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, short, global = true)]
    jobs: Option<usize>,
    /// Replay recorded LLM and RxNav traffic instead of calling the services.
    #[arg(long, global = true)]
    offline: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the SPL directory into the corpus file.
    Ingest,
    /// Collapse duplicate labels and pick representatives.
    Dedup,
    /// Extract indications, contraindications and side effects.
    Extract,
    /// Map extracted terms to ontology ids and resolve products.
    Map,
    /// Assemble the RDF graph, its statistics and VoID description.
    BuildKg,
    /// Check the graph against the shape rules; exits 1 on violations.
    Validate {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Side-effect similarity evaluation against shared targets.
    Eval,
    /// Run the competency questions.
    Query {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Every stage in order.
    All,
}

fn run(cli: Cli) -> Result<ExitCode> {
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    let config = PipelineConfig::load(&cli.config)?;
    let services = Services::from_config(&config, cli.offline)?;
    let pipeline = Pipeline::new(config, services, jobs);
    match cli.command {
        Command::Ingest => {
            let docs = pipeline.ingest()?;
            println!("ingested {} documents", docs.len());
        }
        Command::Dedup => {
            let r = pipeline.dedup()?;
            println!(
                "{} representatives ({} exact, {} fuzzy merges)",
                r.representatives.len(),
                r.exact_merges,
                r.fuzzy_merges
            );
        }
        Command::Extract => {
            let records = pipeline.extract()?;
            let failed = records.iter().filter(|r| r.error.is_some()).count();
            println!("extracted {} documents, {failed} failed", records.len());
        }
        Command::Map => {
            let (records, products) = pipeline.map()?;
            println!("mapped {} terms, resolved {} products", records.len(), products.len());
        }
        Command::BuildKg => {
            let stats = pipeline.build_kg()?;
            println!("{}", stats.to_json());
        }
        Command::Validate { input } => {
            let report = pipeline.validate(input.as_deref())?;
            println!("{} violations", report.violations.len());
            if !report.is_valid() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Eval => {
            let out = pipeline.eval()?;
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Query { input } => {
            for o in pipeline.query(input.as_deref())? {
                match o.error {
                    None => println!("{}\t{}", o.id, o.unique_drugs),
                    Some(e) => println!("{}\terror: {e}", o.id),
                }
            }
        }
        Command::All => {
            let report = pipeline.all()?;
            if !report.is_valid() {
                eprintln!("{} shape violations; see validation.json", report.violations.len());
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
