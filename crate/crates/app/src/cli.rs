//! Command-line front end. Exit codes: 0 success, 1 domain error, 2 usage error.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use isic_core::dataset::{coarsen_to_division, label_space, load_examples_file, stratified_split};
use isic_core::embedding::{CachedProvider, EmbeddingCache};
use isic_core::pipeline::{run_pipeline_with, PhaseOneSet, RunOptions, CACHE_ENV};
use isic_core::selection::select_model;
use isic_core::taxonomy::{parse_taxonomy, Level};
use isic_core::{evaluate_bundle, head, EmbeddingProvider, ModelBundle, PipelineConfig};

use crate::service::{self, ServiceState};

#[derive(Debug, Parser)]
#[command(
    name = "isic-engine",
    version,
    about = "Classify activity descriptions into ISIC codes"
)]
pub struct Cli {
    /// Pipeline config file (TOML or JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the config's split seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Taxonomy utilities.
    Taxonomy {
        #[command(subcommand)]
        action: TaxonomyCommand,
    },
    /// Load a dataset CSV and summarize its label space.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        /// Also check every label against this taxonomy.
        #[arg(long)]
        taxonomy: Option<PathBuf>,
    },
    /// Score the configured providers at division level and pick a winner.
    #[command(name = "phase1-eval")]
    Phase1Eval {
        #[arg(long, value_enum)]
        set: Option<EvalSet>,
    },
    /// Train a head with one provider (skipping provider comparison) and write a bundle.
    Train {
        /// Provider id from the config; defaults to the first one.
        #[arg(long)]
        provider: Option<String>,
    },
    /// Evaluate a bundle on a labeled dataset.
    Evaluate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Print the per-class table as well.
        #[arg(long)]
        full: bool,
    },
    /// Rank ISIC classes for one text.
    Classify {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Serve a bundle over HTTP.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
    /// Run the full pipeline from the config.
    Run,
}

#[derive(Debug, Subcommand)]
pub enum TaxonomyCommand {
    /// Parse and validate a taxonomy CSV.
    Validate {
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EvalSet {
    Corpus,
    Train,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Engine(#[from] isic_core::Error),
    #[error(transparent)]
    Pipeline(#[from] isic_core::PipelineError),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn other(e: impl std::fmt::Display) -> CliError {
    CliError::Other(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| other(format!("{}: {e}", path.display())))
}

impl Cli {
    fn pipeline_config(&self) -> Result<PipelineConfig, CliError> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::Usage("this subcommand needs --config <FILE>".into()))?;
        let mut config = PipelineConfig::from_path(path)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(output) = &self.output {
            config.output = output.clone();
        }
        Ok(config)
    }
}

/// Execute a parsed command, writing human output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Taxonomy {
            action: TaxonomyCommand::Validate { file },
        } => {
            let taxonomy = parse_taxonomy(&read(file)?)
                .map_err(|e| other(format!("0 nodes, 1 errors: {e}")))?;
            writeln!(out, "{} nodes, 0 errors", taxonomy.len()).map_err(other)?;
        }
        Command::Ingest { data, taxonomy } => {
            let dataset = load_examples_file(data).map_err(isic_core::Error::from)?;
            let classes = label_space(&dataset).map_err(isic_core::Error::from)?;
            let divisions = coarsen_to_division(&dataset)
                .and_then(|d| label_space(&d))
                .map(|s| s.len().to_string())
                .unwrap_or_else(|_| "n/a".into());
            if let Some(path) = taxonomy {
                let tax = parse_taxonomy(&read(path)?).map_err(isic_core::Error::from)?;
                if let Some(missing) = classes.labels.iter().find(|l| !tax.contains(l)) {
                    return Err(other(format!(
                        "label {missing} is not in {}",
                        path.display()
                    )));
                }
            }
            writeln!(
                out,
                "{} examples, {} labels, {} divisions",
                dataset.len(),
                classes.len(),
                divisions
            )
            .map_err(other)?;
        }
        Command::Phase1Eval { set } => {
            let mut config = cli.pipeline_config()?;
            if let Some(set) = set {
                config.phase1_eval_set = match set {
                    EvalSet::Corpus => PhaseOneSet::Corpus,
                    EvalSet::Train => PhaseOneSet::Train,
                };
            }
            config.validate()?;
            let report = phase_one(&config)?;
            std::fs::create_dir_all(&config.output).map_err(other)?;
            let json = serde_json::to_string_pretty(&report).map_err(other)? + "\n";
            std::fs::write(config.output.join("selection.json"), json).map_err(other)?;
            std::fs::write(config.output.join("selection.txt"), report.render_table())
                .map_err(other)?;
            write!(out, "{}", report.render_table()).map_err(other)?;
            writeln!(out, "winner: {}", report.winner).map_err(other)?;
        }
        Command::Train { provider } => {
            let config = cli.pipeline_config()?;
            let id = provider
                .clone()
                .or_else(|| config.providers.first().map(|p| p.id.clone()));
            let bundle = run_pipeline_with(&config, &RunOptions { fixed_provider: id })?;
            report_bundle(&bundle, &config.output, out)?;
        }
        Command::Run => {
            let config = cli.pipeline_config()?;
            let bundle = run_pipeline_with(&config, &RunOptions::default())?;
            write!(out, "{}", bundle.selection.render_table()).map_err(other)?;
            report_bundle(&bundle, &config.output, out)?;
        }
        Command::Evaluate { bundle, data, full } => {
            let bundle = ModelBundle::load(bundle)?;
            let provider = bundle.provider()?;
            let dataset = load_examples_file(data).map_err(isic_core::Error::from)?;
            let report = evaluate_bundle(&bundle, &provider, &dataset)?;
            let text = if *full {
                report.render()
            } else {
                report.render_headline()
            };
            write!(out, "{text}").map_err(other)?;
        }
        Command::Classify { bundle, text, top } => {
            if *top == 0 {
                return Err(CliError::Usage("--top must be at least 1".into()));
            }
            let bundle = ModelBundle::load(bundle)?;
            let provider = bundle.provider()?;
            let weights = bundle.head()?;
            let ranked =
                head::predict(&weights, &provider, text, *top).map_err(isic_core::Error::from)?;
            for (i, (code, p)) in ranked.iter().enumerate() {
                let description = bundle.taxonomy.describe(code).unwrap_or("");
                writeln!(out, "{}. {code}  {p:.4}  {description}", i + 1).map_err(other)?;
            }
        }
        Command::Serve { bundle, bind } => {
            let state = Arc::new(ServiceState::from_bundle(ModelBundle::load(bundle)?)?);
            let runtime = tokio::runtime::Runtime::new().map_err(other)?;
            writeln!(
                out,
                "serving bundle {} ({} labels) on http://{bind}",
                state.version,
                state.head.classes()
            )
            .map_err(other)?;
            runtime
                .block_on(service::serve(state, *bind))
                .map_err(other)?;
        }
    }
    Ok(())
}

fn report_bundle(
    bundle: &ModelBundle,
    dir: &Path,
    out: &mut dyn std::io::Write,
) -> Result<(), CliError> {
    writeln!(out, "winner: {}", bundle.selection.winner).map_err(other)?;
    write!(out, "{}", bundle.evaluation.render_headline()).map_err(other)?;
    writeln!(out, "bundle: {}", dir.display()).map_err(other)?;
    Ok(())
}

fn phase_one(config: &PipelineConfig) -> Result<isic_core::SelectionReport, CliError> {
    let taxonomy = parse_taxonomy(&read(&config.taxonomy)?).map_err(isic_core::Error::from)?;
    let dataset = load_examples_file(&config.dataset).map_err(isic_core::Error::from)?;
    let coarse = coarsen_to_division(&dataset).map_err(isic_core::Error::from)?;
    let eval_set = match config.phase1_eval_set {
        PhaseOneSet::Corpus => coarse,
        PhaseOneSet::Train => {
            let split = stratified_split(&dataset, config.test_fraction, config.seed)
                .map_err(isic_core::Error::from)?;
            coarse.select(&split.train_indices)
        }
    };
    debug_assert!(eval_set
        .examples
        .iter()
        .all(|e| e.label.level() == Level::Division));
    let cache = match std::env::var_os(CACHE_ENV) {
        Some(path) => EmbeddingCache::open(Path::new(&path)).map_err(isic_core::Error::from)?,
        None => EmbeddingCache::in_memory(),
    };
    let cache = Arc::new(cache);
    let providers = config
        .providers
        .iter()
        .map(|p| Ok(CachedProvider::new(p.connect()?, cache.clone())))
        .collect::<Result<Vec<_>, isic_core::Error>>()?;
    let refs: Vec<&dyn EmbeddingProvider> = providers
        .iter()
        .map(|p| p as &dyn EmbeddingProvider)
        .collect();
    Ok(select_model(&refs, &taxonomy, &eval_set).map_err(isic_core::Error::from)?)
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if let CliError::Usage(_) = e {
                let _ = writeln!(err, "run `isic-engine --help` for usage");
            }
            e.exit_code()
        }
    }
}
