//! Command-line pipeline, exports and HTTP server for modallens.

pub mod provider;
pub mod server;
pub mod views;

use std::collections::BTreeMap;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use modallens::attribution::{AttributeConfig, BackgroundSpec, Granularity, Method};
use modallens::interactions::{Interaction, Thresholds, DEFAULT_GRID_STEP};
use modallens::pipeline::{AnalyzeConfig, MineConfig, PipelineError, StageOutcome, Store};
use modallens::projection::{LanguageInput, ProjectConfig, TsneConfig};
use modallens::service::{AnalysisService, ServiceError};
use modallens::store::StoreError;
use modallens::synthetic;
use modallens::templates::{ImportanceRule, DEFAULT_MIN_SUPPORT};
use thiserror::Error;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_PROVIDER: i32 = 3;
pub const EXIT_INCOMPLETE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Provider(String),
    #[error("{0}")]
    Incomplete(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Provider(_) => EXIT_PROVIDER,
            CliError::Incomplete(_) => EXIT_INCOMPLETE,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Store(StoreError::MissingStage { stage, message }) => {
                CliError::Incomplete(format!("stage `{stage}` is not complete: {message}"))
            }
            PipelineError::Store(StoreError::Stale(m)) => {
                CliError::Incomplete(format!("stale artifacts: {m}"))
            }
            PipelineError::Attribution(
                e @ modallens::attribution::AttributionError::Provider { .. },
            ) => CliError::Provider(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::NotReady { .. } => CliError::Incomplete(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "modallens",
    version,
    about = "Explain multimodal sentiment models: attribute, label interactions, mine templates, project, serve"
)]
pub struct Cli {
    /// Store directory holding every stage's artifacts.
    #[arg(
        long,
        global = true,
        env = "MODALLENS_STORE",
        default_value = "modallens-store"
    )]
    pub store: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and snapshot a schema and instance file.
    Ingest(IngestArgs),
    /// Compute feature attributions for every instance.
    Attribute(AttributeArgs),
    /// Aggregate modality importance, search thresholds, label interactions.
    Analyze(AnalyzeArgs),
    /// Build influential-feature itemsets and mine templates.
    Mine(MineArgs),
    /// Project each modality with t-SNE and compute glyphs.
    Project(ProjectArgs),
    /// Serve the query API.
    Serve(ServeArgs),
    /// Write one view's response body to a file.
    Export(ExportArgs),
    /// Generate the planted-interaction corpus and run every stage.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub instances: PathBuf,
    /// Skip invalid instance lines instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Auto,
    Exact,
    Kernel,
    Linear,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GranularityArg {
    Feature,
    TimeStep,
    Cell,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    /// linear:<weights.json> | mlp-toy:<seed> | subprocess:<command> | http:<url>
    #[arg(long)]
    pub provider: String,
    #[arg(long, value_enum, default_value = "auto")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "feature")]
    pub granularity: GranularityArg,
    /// Coalition samples per instance for Kernel SHAP.
    #[arg(long, default_value_t = 512)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Instances averaged into the background.
    #[arg(long, default_value_t = 100, conflicts_with = "zero_background")]
    pub background_size: usize,
    /// Use an all-zero background.
    #[arg(long)]
    pub zero_background: bool,
    /// Skip the per-word pass.
    #[arg(long)]
    pub no_word_level: bool,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, default_value_t = DEFAULT_GRID_STEP)]
    pub grid_step: f64,
    /// Fixed `sig,dom,confl` thresholds; skips the search.
    #[arg(long)]
    pub thresholds: Option<String>,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[arg(long, default_value_t = DEFAULT_MIN_SUPPORT)]
    pub min_support: f64,
    /// Per-modality |φ| percentile a unit must reach to be influential.
    #[arg(long, default_value_t = 90.0)]
    pub percentile: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LanguageInputArg {
    Auto,
    Embedding,
    InfluentialWords,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "auto")]
    pub language_input: LanguageInputArg,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// summary | group | templates | projection | instance | metrics | meta
    #[arg(long)]
    pub view: String,
    /// View parameter as KEY=VALUE, named as in the HTTP query string.
    #[arg(long = "param", short = 'p', value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = synthetic::DEFAULT_INSTANCES)]
    pub instances: usize,
    /// Serve the finished store.
    #[arg(long)]
    pub serve: bool,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

fn report(o: &StageOutcome) {
    let state = match (o.skipped, o.complete) {
        (true, _) => "up to date",
        (false, true) => "done",
        (false, false) => "incomplete",
    };
    println!(
        "{}: {state} ({})",
        o.stage.as_str(),
        modallens::fingerprint::short(&o.output_fingerprint)
    );
}

fn parse_thresholds(s: &str) -> Result<Thresholds, CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| {
            CliError::Usage(format!(
                "--thresholds `{s}` must be three numbers `sig,dom,confl`"
            ))
        })?;
    if v.len() != 3 {
        return Err(CliError::Usage(format!(
            "--thresholds `{s}` must be three numbers `sig,dom,confl`"
        )));
    }
    Thresholds::new(v[0], v[1], v[2]).map_err(|e| CliError::Validation(e.to_string()))
}

impl AttributeArgs {
    fn config(&self, description: String) -> AttributeConfig {
        AttributeConfig {
            provider: description,
            granularity: match self.granularity {
                GranularityArg::Feature => Granularity::Feature,
                GranularityArg::TimeStep => Granularity::TimeStep,
                GranularityArg::Cell => Granularity::Cell,
            },
            method: match self.method {
                MethodArg::Auto => Method::Auto,
                MethodArg::Exact => Method::Exact,
                MethodArg::Kernel => Method::Kernel,
                MethodArg::Linear => Method::Linear,
            },
            n_samples: self.samples,
            seed: self.seed,
            background: if self.zero_background {
                BackgroundSpec::Zeros
            } else {
                BackgroundSpec::Mean {
                    size: self.background_size,
                }
            },
            word_level: !self.no_word_level,
        }
    }
}

impl ProjectArgs {
    pub fn config(&self) -> ProjectConfig {
        ProjectConfig {
            tsne: TsneConfig {
                perplexity: self.perplexity,
                iterations: self.iters,
                seed: self.seed,
                exaggeration_iters: TsneConfig::default().exaggeration_iters.min(self.iters / 4),
                ..TsneConfig::default()
            },
            language_input: match self.language_input {
                LanguageInputArg::Auto => LanguageInput::Auto,
                LanguageInputArg::Embedding => LanguageInput::Embedding,
                LanguageInputArg::InfluentialWords => LanguageInput::InfluentialWords,
            },
            ..ProjectConfig::default()
        }
    }
}

pub fn ingest(store: &Store, args: &IngestArgs) -> Result<(), CliError> {
    let (outcome, rep) = store.ingest(&args.schema, &args.instances, args.lenient)?;
    report(&outcome);
    println!(
        "  {} instances, {} skipped lines",
        rep.instances,
        rep.failures.len()
    );
    for f in &rep.failures {
        println!("  line {}: {}", f.line, f.message);
    }
    Ok(())
}

pub fn attribute(store: &Store, args: &AttributeArgs) -> Result<(), CliError> {
    let schema = store.load_schema()?;
    let ingest = store.load_ingest_report()?;
    let resolved = provider::resolve(&args.provider, &schema, &ingest.schema_fingerprint)?;
    let (outcome, failed) = store.attribute(
        resolved.provider.as_ref(),
        &args.config(resolved.description),
        args.jobs,
    )?;
    report(&outcome);
    if let Some(first) = failed.first() {
        return Err(CliError::Provider(format!(
            "{} of {} instances failed; partial results kept; first: `{}`: {}",
            failed.len(),
            ingest.instances,
            first.instance_id,
            first.error
        )));
    }
    Ok(())
}

pub fn analyze(store: &Store, args: &AnalyzeArgs) -> Result<(), CliError> {
    let thresholds = args
        .thresholds
        .as_deref()
        .map(parse_thresholds)
        .transpose()?;
    let outcome = store.analyze(&AnalyzeConfig {
        grid_step: args.grid_step,
        thresholds,
    })?;
    report(&outcome);
    let a = store.load_analysis()?;
    let t = a.thresholds.thresholds();
    println!(
        "  thresholds sig={} dom={} confl={} ({})",
        t.th_sig, t.th_dom, t.th_confl, a.thresholds.source
    );
    for g in &a.groups {
        println!("  {}: {} instances", g.label, g.members.len());
    }
    Ok(())
}

pub fn mine(store: &Store, args: &MineArgs) -> Result<(), CliError> {
    let outcome = store.mine(&MineConfig {
        min_support: args.min_support,
        rule: ImportanceRule {
            percentile: args.percentile,
        },
    })?;
    report(&outcome);
    println!("  {} templates", store.load_templates()?.len());
    Ok(())
}

pub fn project(store: &Store, args: &ProjectArgs) -> Result<(), CliError> {
    report(&store.project(&args.config())?);
    Ok(())
}

/// Opens the service, reporting a not-yet-complete store without failing.
pub fn open_service(store: &Store) -> Arc<AnalysisService> {
    let service = AnalysisService::open(Store::open(store.root()));
    if let Err(e) = service.reload() {
        eprintln!("warning: {e}; data endpoints answer 409 until the pipeline completes");
    }
    Arc::new(service)
}

pub fn serve(store: &Store, args: &ServeArgs) -> Result<(), CliError> {
    let service = open_service(store);
    server::serve_blocking(service, SocketAddr::new(args.host, args.port))
        .map_err(|e| CliError::Usage(format!("server: {e}")))
}

pub fn parse_params(raw: &[String]) -> Result<BTreeMap<String, String>, CliError> {
    raw.iter()
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| CliError::Usage(format!("--param `{p}` is not KEY=VALUE")))
        })
        .collect()
}

pub fn export(store: &Store, args: &ExportArgs) -> Result<(), CliError> {
    let params = parse_params(&args.params)?;
    let req = views::ViewRequest::from_params(&args.view, &params)?;
    let service = AnalysisService::open(Store::open(store.root()));
    let body = views::respond(&service, &req)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Validation(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(&args.out, body)
        .map_err(|e| CliError::Validation(format!("{}: {e}", args.out.display())))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

/// Writes the planted corpus inputs under `dir`: schema, instances, the
/// linear model and the planted labels.
pub fn write_demo_inputs(dir: &Path, corpus: &synthetic::PlantedCorpus) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Validation(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut instances = Vec::new();
    modallens::data::write_instances(&mut instances, &corpus.dataset)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let truth: BTreeMap<&str, Interaction> = corpus
        .dataset
        .ids()
        .zip(corpus.truth.iter().copied())
        .collect();
    std::fs::write(dir.join("schema.json"), corpus.schema.to_json_string()).map_err(io)?;
    std::fs::write(dir.join("instances.jsonl"), instances).map_err(io)?;
    std::fs::write(
        dir.join("model.json"),
        modallens::service::render(&corpus.model),
    )
    .map_err(io)?;
    std::fs::write(dir.join("truth.json"), modallens::service::render(&truth)).map_err(io)?;
    Ok(())
}

/// Runs the demo pipeline; returns the store fingerprint and the fraction
/// of instances whose label matches the planted interaction.
pub fn run_demo(store: &Store, args: &DemoArgs) -> Result<(String, f64), CliError> {
    let corpus = synthetic::planted_corpus(args.seed, args.instances);
    let inputs = store.root().join("inputs");
    write_demo_inputs(&inputs, &corpus)?;
    ingest(
        store,
        &IngestArgs {
            schema: inputs.join("schema.json"),
            instances: inputs.join("instances.jsonl"),
            lenient: false,
        },
    )?;
    attribute(
        store,
        &AttributeArgs {
            provider: format!("linear:{}", inputs.join("model.json").display()),
            method: MethodArg::Auto,
            granularity: GranularityArg::Feature,
            samples: 512,
            seed: args.seed,
            background_size: 0,
            zero_background: true,
            no_word_level: false,
            jobs: args.jobs,
        },
    )?;
    analyze(
        store,
        &AnalyzeArgs {
            grid_step: DEFAULT_GRID_STEP,
            thresholds: None,
        },
    )?;
    mine(
        store,
        &MineArgs {
            min_support: DEFAULT_MIN_SUPPORT,
            percentile: 90.0,
        },
    )?;
    project(
        store,
        &ProjectArgs {
            perplexity: 30.0,
            iters: 1000,
            seed: args.seed,
            language_input: LanguageInputArg::Auto,
        },
    )?;
    let analysis = store.load_analysis()?;
    let hits = analysis
        .labels
        .iter()
        .zip(&corpus.truth)
        .filter(|(l, t)| l.label == **t)
        .count();
    let accuracy = hits as f64 / corpus.truth.len().max(1) as f64;
    let fp = store
        .fingerprint()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    println!(
        "planted recovery: {hits}/{} ({:.1}%)",
        corpus.truth.len(),
        100.0 * accuracy
    );
    println!("store fingerprint: {fp}");
    Ok((fp, accuracy))
}

pub fn demo(store: &Store, args: &DemoArgs) -> Result<(), CliError> {
    run_demo(store, args)?;
    if args.serve {
        serve(
            store,
            &ServeArgs {
                port: args.port,
                host: IpAddr::from([127, 0, 0, 1]),
            },
        )?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let store = Store::open(&cli.store);
    match &cli.command {
        Command::Ingest(a) => ingest(&store, a),
        Command::Attribute(a) => attribute(&store, a),
        Command::Analyze(a) => analyze(&store, a),
        Command::Mine(a) => mine(&store, a),
        Command::Project(a) => project(&store, a),
        Command::Serve(a) => serve(&store, a),
        Command::Export(a) => export(&store, a),
        Command::Demo(a) => demo(&store, a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let missing = PipelineError::missing(modallens::pipeline::Stage::Attribute, "no record");
        let e = CliError::from(missing);
        assert_eq!(e.exit_code(), EXIT_INCOMPLETE);
        assert!(e.to_string().contains("`attribute`"));
        assert_eq!(
            CliError::from(ServiceError::NotFound("x".into())).exit_code(),
            EXIT_VALIDATION
        );
        assert_eq!(CliError::Usage(String::new()).exit_code(), EXIT_USAGE);
        assert_eq!(CliError::Provider(String::new()).exit_code(), EXIT_PROVIDER);
    }

    #[test]
    fn thresholds_flag() {
        let t = parse_thresholds("0.05, 0.6,0.2").unwrap();
        assert_eq!(t, Thresholds::new(0.05, 0.6, 0.2).unwrap());
        assert!(matches!(
            parse_thresholds("0.1,0.2"),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            parse_thresholds("0,0.5,0.5"),
            Err(CliError::Validation(_))
        ));
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from([
            "modallens",
            "--store",
            "s",
            "attribute",
            "--provider",
            "mlp-toy:1",
            "--jobs",
            "4",
        ])
        .unwrap();
        match cli.command {
            Command::Attribute(a) => assert_eq!(a.jobs, 4),
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from([
            "modallens",
            "attribute",
            "--zero-background",
            "--background-size",
            "3",
            "--provider",
            "x:y"
        ])
        .is_err());
    }
}
