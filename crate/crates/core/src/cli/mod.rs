//! `ganalyzer` command-line interface.

mod svg;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::entanglement::{balance_report, co_occurrence, entanglement_degree};
use crate::error::{Error, Result};
use crate::latent_io::{
    export_csv, import_csv, read_store, write_atomic, write_store, LatentStore, LatentVector, Manifest,
};
use crate::planner::{execute_plan, load_plan};
use crate::remote::{MockOptions, MockServer, RemoteScorer, ServiceEndpoint};
use crate::scoring::{label_store, make_synthetic_world, select_class, AttributeClass, LabelTable, Scorer, SyntheticWorld};
use crate::stats::{compute_class_stats, read_bundle, write_bundle};
use crate::transform::{EditMode, EditSpec, StatsRegistry, TransformOutput};

pub const ENDPOINT_ENV: &str = "GANALYZER_ENDPOINT";

#[derive(Debug, Parser)]
#[command(name = "ganalyzer", version, about = "Latent-space attribute statistics, editing and dataset rebalancing")]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a CSV or binary store into a validated binary store (or CSV when OUT ends in .csv)
    Ingest(IngestArgs),
    /// Score every vector of a store and write hard labels as JSON Lines
    Label(LabelArgs),
    /// Fit mean and eigen-statistics for one class
    Stats(StatsArgs),
    /// Apply an edit spec to a store or a single vector
    Transform(TransformArgs),
    /// Write co-occurrence, histogram and sparsity reports as JSON and SVG
    Report(ReportArgs),
    /// Execute a dataset plan
    Plan(PlanArgs),
    /// Run the mock generator/classifier service until interrupted
    ServeMock(ServeMockArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Input file: CSV (by .csv extension) or binary store
    #[arg(long)]
    pub input: PathBuf,
    /// Vector dimension, required for CSV input
    #[arg(long)]
    pub dimension: Option<usize>,
    /// Latent space tag recorded in the manifest (e.g. Z or W)
    #[arg(long)]
    pub space: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerKind {
    Synthetic,
    Remote,
}

#[derive(Debug, Args)]
pub struct RemoteFlags {
    /// Service base URL; the GANALYZER_ENDPOINT environment variable takes precedence
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 2)]
    pub retries: u32,
    /// Request timeout in seconds
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, value_enum, default_value_t = ScorerKind::Synthetic)]
    pub scorer: ScorerKind,
    /// Synthetic world file; when absent a world is drawn from --seed
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[command(flatten)]
    pub remote: RemoteFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub class: AttributeClass,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long, conflicts_with = "vector", required_unless_present = "vector")]
    pub store: Option<PathBuf>,
    /// Single comma-separated vector; the result is printed as JSON
    #[arg(long, allow_hyphen_values = true)]
    pub vector: Option<String>,
    /// Edit spec JSON file
    #[arg(long)]
    pub spec: PathBuf,
    /// Stats bundle; repeat for every class the spec uses
    #[arg(long, required = true)]
    pub stats: Vec<PathBuf>,
    #[arg(long, required_unless_present = "vector")]
    pub out: Option<PathBuf>,
    /// Identity-preserving output of psi mode
    #[arg(long)]
    pub out_id: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub labels: PathBuf,
    /// Labels after a transform; adds the entanglement degree
    #[arg(long)]
    pub after: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long, required = true)]
    pub stats: Vec<PathBuf>,
    /// Overrides the plan's seed
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-record provenance as JSON Lines
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeMockArgs {
    #[arg(long, default_value = "127.0.0.1:0")]
    pub addr: String,
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 512)]
    pub dimension: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Answer the first N requests with HTTP 500
    #[arg(long, default_value_t = 0)]
    pub fail_first: usize,
}

/// Parses `args`, runs the command, and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be ≥ 1");
            return 1;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.class().exit_code()
        }
    }
}

pub fn main() -> i32 {
    run_from(std::env::args_os())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Label(a) => cmd_label(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Transform(a) => cmd_transform(a),
        Command::Report(a) => cmd_report(a),
        Command::Plan(a) => cmd_plan(a),
        Command::ServeMock(a) => cmd_serve_mock(a),
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let mut store = if is_csv(&a.input) {
        let d = a
            .dimension
            .ok_or_else(|| Error::Usage("--dimension is required for CSV input".into()))?;
        import_csv(&a.input, d)?
    } else {
        let store = read_store(&a.input)?;
        if let Some(d) = a.dimension {
            if d != store.dimension() {
                return Err(Error::DimensionMismatch { expected: d, got: store.dimension() });
            }
        }
        store
    };
    if a.space.is_some() {
        store.manifest.space = a.space;
    }
    log::info!("ingested {} vectors of dimension {}", store.len(), store.dimension());
    if is_csv(&a.out) {
        export_csv(&store, &a.out)
    } else {
        write_store(&a.out, &store)
    }
}

fn load_world(path: Option<&Path>, seed: u64, dimension: usize, temperature: f64) -> Result<SyntheticWorld> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(serde_json::from_str(&text)?)
        }
        None => make_synthetic_world(seed, dimension, temperature),
    }
}

fn endpoint_from(flags: &RemoteFlags) -> Result<ServiceEndpoint> {
    let url = std::env::var(ENDPOINT_ENV)
        .ok()
        .filter(|s| !s.is_empty())
        .or_else(|| flags.endpoint.clone())
        .ok_or_else(|| Error::Usage(format!("remote scoring needs --endpoint or {ENDPOINT_ENV}")))?;
    let endpoint = ServiceEndpoint {
        timeout_secs: flags.timeout,
        max_batch: flags.batch,
        retries: flags.retries,
        max_in_flight: flags.max_in_flight,
        ..ServiceEndpoint::new(url)
    };
    endpoint.validate()?;
    Ok(endpoint)
}

fn cmd_label(a: LabelArgs) -> Result<()> {
    let store = read_store(&a.store)?;
    let scorer: Box<dyn Scorer> = match a.scorer {
        ScorerKind::Synthetic => Box::new(load_world(a.world.as_deref(), a.seed, store.dimension(), a.temperature)?),
        ScorerKind::Remote => Box::new(RemoteScorer::new(endpoint_from(&a.remote)?, store.dimension())?),
    };
    let outcome = label_store(&store, scorer.as_ref())?;
    outcome.table.write(&a.out)?;
    log::info!("labeled {} of {} vectors", outcome.table.len(), store.len());
    if let Some((id, err)) = outcome.failures.first() {
        for (id, err) in &outcome.failures {
            log::warn!("id {id}: {err}");
        }
        return Err(Error::Remote(format!(
            "{} of {} vectors could not be scored (first: id {id}: {err})",
            outcome.failures.len(),
            store.len()
        )));
    }
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let store = read_store(&a.store)?;
    let table = LabelTable::read(&a.labels)?;
    let ids = select_class(&table, a.class);
    let stats = compute_class_stats(&store, &ids, a.class)?;
    log::info!(
        "{}: k = {}, rank = {}, top eigenvalue = {:?}",
        a.class,
        stats.sample_count(),
        stats.rank(),
        stats.eigenvalues().first()
    );
    write_bundle(&a.out, &stats)
}

fn load_registry(paths: &[PathBuf]) -> Result<StatsRegistry> {
    let mut reg = StatsRegistry::new();
    for p in paths {
        reg.insert(read_bundle(p)?)?;
    }
    Ok(reg)
}

fn parse_vector(text: &str) -> Result<LatentVector> {
    let values = text
        .split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("cannot parse {f:?} as a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    LatentVector::new(values)
}

fn cmd_transform(a: TransformArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.spec).map_err(|e| Error::io(&a.spec, e))?;
    let spec = EditSpec::from_json(&text)?;
    let is_psi = spec.mode == EditMode::Psi;
    if a.out_id.is_some() && !is_psi {
        return Err(Error::Usage("--out-id only applies to psi mode".into()));
    }
    let registry = load_registry(&a.stats)?;
    for class in spec.classes() {
        registry.get(class)?;
    }

    if let Some(v) = &a.vector {
        let z = parse_vector(v)?;
        let out = spec.apply(&z, &registry)?;
        let value = match &out {
            TransformOutput::Single(v) => json!(v.as_slice()),
            TransformOutput::Pair { feature, identity } => {
                json!({ "feature": feature.as_slice(), "identity": identity.as_slice() })
            }
        };
        println!("{value}");
        if let Some(path) = &a.out {
            let (first, second) = match out {
                TransformOutput::Single(v) => (v, None),
                TransformOutput::Pair { feature, identity } => (feature, Some(identity)),
            };
            let single = |v: LatentVector| LatentStore::from_vectors(z.dim(), [v], Manifest::default());
            write_store(path, &single(first)?)?;
            if let (Some(path), Some(v)) = (&a.out_id, second) {
                write_store(path, &single(v)?)?;
            }
        }
        return Ok(());
    }

    let store_path = a.store.as_ref().expect("clap requires --store without --vector");
    let out = a.out.as_ref().expect("clap requires --out without --vector");
    if is_psi && a.out_id.is_none() {
        return Err(Error::Usage("psi mode writes two stores; pass --out-id".into()));
    }
    let store = read_store(store_path)?;
    let (primary, secondary) = spec.apply_to_store(&store, &registry)?;
    write_store(out, &primary)?;
    if let (Some(path), Some(s)) = (&a.out_id, secondary) {
        write_store(path, &s)?;
    }
    log::info!("transformed {} vectors", store.len());
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let before = LabelTable::read(&a.labels)?;
    let report = balance_report(&before)?;
    let mut value = serde_json::to_value(&report)?;
    let mut degree = None;
    if let Some(after_path) = &a.after {
        let after = LabelTable::read(after_path)?;
        let d = entanglement_degree(&co_occurrence(&before)?, &co_occurrence(&after)?);
        value["after"] = serde_json::to_value(balance_report(&after)?)?;
        value["entanglement_degree"] = serde_json::to_value(d.matrix)?;
        degree = Some(d);
    }
    let mut bytes = serde_json::to_vec_pretty(&value)?;
    bytes.push(b'\n');
    write_atomic(&a.out, &bytes)?;
    if let Some(svg_path) = &a.svg {
        write_atomic(svg_path, svg::render(&report, degree.as_ref()).as_bytes())?;
    }
    Ok(())
}

fn cmd_plan(a: PlanArgs) -> Result<()> {
    let mut plan = load_plan(&a.plan)?;
    if let Some(seed) = a.seed {
        plan.seed = seed;
    }
    let registry = load_registry(&a.stats)?;
    let out = execute_plan(&plan, &registry)?;
    write_store(&a.out, &out.store)?;
    out.write_manifest(&a.manifest)?;
    log::info!("plan produced {} vectors over {} entries", out.store.len(), plan.entries.len());
    Ok(())
}

fn cmd_serve_mock(a: ServeMockArgs) -> Result<()> {
    let world = load_world(a.world.as_deref(), a.seed, a.dimension, a.temperature)?;
    let options = MockOptions {
        fail_first: a.fail_first,
        ..MockOptions::default()
    };
    let server = MockServer::start(world, options, &a.addr)?;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "listening on {}", server.url()).map_err(|e| Error::io("stdout", e))?;
    stdout.flush().map_err(|e| Error::io("stdout", e))?;
    drop(stdout);
    server.wait();
    Ok(())
}
