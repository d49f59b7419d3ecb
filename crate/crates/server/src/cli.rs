//! `framepick` command line: bundle validation, pipeline stages and the
//! review server.

use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use framepick::ingest::cache::atomic_write;
use framepick::ingest::keywords::{HttpTransport, KeywordClient, PromptTemplates, ENDPOINT_ENV};
use framepick::ingest::DatasetBundle;
use framepick::pipeline::{Pipeline, Stage};
use framepick::EngineConfig;
use tracing::error;

use crate::embed::{self, EmbeddingClient};
use crate::library::{Fault, Library, LibraryOptions};

/// Name of the file `validate --extract-keywords` writes into `artifacts/`.
pub const EXTRACTED_KEYWORDS_FILE: &str = "extracted_keywords.json";

#[derive(Debug, Parser)]
#[command(name = "framepick", version, about = "Thumbnail candidate selection for long-form video")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a bundle's manifest, frame index and artifacts.
    Validate(ValidateArgs),
    /// Quality filtering, shots, subshots and keyframes.
    Downsample(StageArgs),
    /// Group redundant keyframes.
    Group(StageArgs),
    /// Letterbox removal and per-aspect crop search.
    Crop(StageArgs),
    /// Face records and identity clustering.
    Faces(StageArgs),
    /// Score every candidate crop.
    Score(StageArgs),
    /// Build proposals and publish the dataset.
    Propose(StageArgs),
    /// Serve datasets to the review front end.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct StageArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Engine settings (TOML); defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the run report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ask the keyword endpoint for search keywords and save them under
    /// `artifacts/` for the embedding step.
    #[arg(long)]
    pub extract_keywords: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// A bundle, or a directory of bundles. Repeatable.
    #[arg(long, required = true)]
    pub bundle: Vec<PathBuf>,
    /// Engine settings used with `--build`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run the pipeline for every bundle before serving.
    #[arg(long)]
    pub build: bool,
    #[arg(long, env = "FRAMEPICK_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Text-embedding service for keywords added without an embedding.
    #[arg(long, env = embed::ENDPOINT_ENV)]
    pub embedding_endpoint: Option<String>,
    /// Static front-end assets served for paths outside the API.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

type CliResult = Result<ExitCode, Box<dyn std::error::Error>>;

fn load_config(path: Option<&PathBuf>) -> Result<EngineConfig, framepick::Error> {
    match path {
        Some(p) => EngineConfig::load(p),
        None => Ok(EngineConfig::default()),
    }
}

pub fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Validate(a) => validate(a),
        Command::Downsample(a) => stage(a, Stage::Downsample),
        Command::Group(a) => stage(a, Stage::Group),
        Command::Crop(a) => stage(a, Stage::Crop),
        Command::Faces(a) => stage(a, Stage::FaceCluster),
        Command::Score(a) => stage(a, Stage::Score),
        Command::Propose(a) => stage(a, Stage::Propose),
        Command::Serve(a) => serve(a),
    }
}

fn validate(a: ValidateArgs) -> CliResult {
    let cfg = load_config(a.config.as_ref())?;
    let bundle = DatasetBundle::open(&a.bundle)?;
    let report = bundle.validate()?;
    for issue in &report.issues {
        println!("{:?}\t{:?}\t{}\t{}", issue.severity, issue.kind, issue.item, issue.message);
    }
    let usable = report.usable();
    println!("{}: {} issue(s), {}", a.bundle.display(), report.issues.len(), if usable { "usable" } else { "NOT usable" });

    if a.extract_keywords {
        let timeout = Duration::from_millis(cfg.ingest.keyword_timeout_ms);
        let transport = HttpTransport::from_env(timeout)
            .ok_or_else(|| format!("--extract-keywords needs {ENDPOINT_ENV} to be set"))?;
        let templates = match &cfg.ingest.prompt_template_dir {
            Some(dir) => PromptTemplates::load(dir.as_ref())?,
            None => PromptTemplates::default(),
        };
        let manifest = bundle.load_manifest()?;
        let metadata: Vec<String> = manifest.keywords.iter().map(|k| k.text.clone()).collect();
        let client = KeywordClient::new(transport, templates, &cfg.ingest);
        let keywords = client.extract_or_fallback(&manifest.summary, &manifest.title, &metadata)?;
        let path = bundle.artifact(EXTRACTED_KEYWORDS_FILE);
        atomic_write(&path, &serde_json::to_vec_pretty(&keywords)?)?;
        println!("keywords: {} (saved to {})", keywords.join(", "), path.display());
    }
    Ok(if usable { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn stage(a: StageArgs, last: Stage) -> CliResult {
    let cfg = load_config(a.config.as_ref())?;
    let pipeline = Pipeline::new(DatasetBundle::open(&a.bundle)?, cfg)?;
    let run = match pipeline.run_until(last) {
        Ok(run) => run,
        Err(failure) => {
            print_run(&failure.run, a.json)?;
            return Err(failure);
        }
    };
    print_run(&run, a.json)?;
    Ok(ExitCode::SUCCESS)
}

fn print_run(run: &framepick::pipeline::PipelineRun, json: bool) -> Result<(), serde_json::Error> {
    if json {
        println!("{}", serde_json::to_string_pretty(run)?);
    } else {
        print!("{run}");
    }
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult {
    if a.build {
        let cfg = load_config(a.config.as_ref())?;
        for path in &a.bundle {
            let pipeline = Pipeline::new(DatasetBundle::open(path)?, cfg.clone())?;
            print!("{}", pipeline.run()?);
        }
    }
    let options = LibraryOptions {
        embedder: a
            .embedding_endpoint
            .filter(|s| !s.trim().is_empty())
            .map(|url| EmbeddingClient::new(url, Duration::from_secs(10))),
        fault: Fault::from_env(),
    };
    let library = Arc::new(Library::open(&a.bundle, options)?);
    let addr = SocketAddr::new(a.host, a.port);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(crate::serve(library, addr, a.static_dir))?;
    Ok(ExitCode::SUCCESS)
}
