use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use mwrmab::adjusted::adjusted_index_table;
use mwrmab::decoupled::decoupled_index_table;
use mwrmab::report::{self, ExperimentPlan, RowOutcome};
use mwrmab::{
    load_instance, Algorithm, DomainKind, DomainOverrides, DomainSpec, DpOptions, Error,
    IndexOptions, Instance,
};

const FIXTURES_ENV: &str = "MWRMAB_FIXTURES";
const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_SIZE: u8 = 3;

#[derive(Parser)]
#[command(name = "mwrmab", version, about = "Multi-worker restless bandit planning")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark instance as JSON.
    Generate(GenerateArgs),
    /// Compute an index table for an instance file.
    Index(IndexArgs),
    /// Simulate algorithms and append result rows to a CSV.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Domain {
    ConstantCosts,
    OrderedWorkers,
    Specialist,
}

impl From<Domain> for DomainKind {
    fn from(d: Domain) -> Self {
        match d {
            Domain::ConstantCosts => DomainKind::ConstantCosts,
            Domain::OrderedWorkers => DomainKind::OrderedWorkers,
            Domain::Specialist => DomainKind::Specialist,
        }
    }
}

#[derive(Args, Clone, Default)]
struct DomainFlags {
    #[arg(long, value_enum)]
    domain: Option<Domain>,
    /// Number of arms N.
    #[arg(long)]
    arms: Option<usize>,
    /// Number of workers M (default depends on the domain).
    #[arg(long)]
    workers: Option<usize>,
    /// Per-worker budget B.
    #[arg(long)]
    budget: Option<f64>,
    /// Fairness threshold on the per-round cost gap.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    discount: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Specialist noise half-width (0 for the noise-free arms).
    #[arg(long)]
    noise: Option<f64>,
    /// Constant costs: give every worker the same dynamics.
    #[arg(long)]
    homogeneous: bool,
}

impl DomainFlags {
    fn apply(&self, spec: &mut DomainSpec) {
        if let Some(d) = self.domain {
            let kind = DomainKind::from(d);
            if kind != spec.kind {
                spec.kind = kind;
                spec.num_workers = kind.default_workers();
            }
        }
        if let Some(n) = self.arms {
            spec.num_arms = n;
        }
        if let Some(m) = self.workers {
            spec.num_workers = m;
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        let o = &mut spec.overrides;
        o.budget = self.budget.or(o.budget);
        o.fairness_eps = self.epsilon.or(o.fairness_eps);
        o.discount = self.discount.or(o.discount);
        o.noise = self.noise.or(o.noise);
        if self.homogeneous {
            o.homogeneous = Some(true);
        }
    }

    fn spec(&self) -> Result<DomainSpec, Failure> {
        let domain = self
            .domain
            .ok_or_else(|| Failure::usage("--domain is required unless --config is given"))?;
        let mut spec = DomainSpec::new(domain.into(), 10, 42);
        self.apply(&mut spec);
        Ok(spec)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    domain: DomainFlags,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Store the instance as a named fixture and record it in the manifest.
    #[arg(long, value_name = "NAME")]
    fixture: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Decoupled,
    Adjusted,
}

#[derive(Args)]
struct IndexArgs {
    /// Instance JSON file.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "decoupled")]
    kind: Kind,
    #[arg(long, default_value_t = IndexOptions::DEFAULT_TOL)]
    index_tol: f64,
    #[arg(long, default_value_t = DpOptions::DEFAULT_TOL)]
    dp_tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config: one experiment plan or an array of them. Flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    domain: DomainFlags,
    /// Comma-separated, e.g. CWI_BA,HAWKINS.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<Algorithm>>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    index_tol: Option<f64>,
    #[arg(long)]
    dp_tol: Option<f64>,
    /// Keep one instance for all epochs instead of drawing one per epoch.
    #[arg(long)]
    fixed_instance: bool,
    /// CSV file to append to (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write reports with per-step records as JSON to this file.
    #[arg(long, value_name = "PATH")]
    detail: Option<PathBuf>,
    /// Print a markdown summary table.
    #[arg(long)]
    markdown: bool,
    /// Write NA instead of wall times so reruns give identical files.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_size() { EXIT_SIZE } else { EXIT_VALIDATION },
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Index(args) => cmd_index(args),
        Command::Run(args) => cmd_run(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn emit(text: &str, out: Option<&Path>) -> io::Result<()> {
    match out {
        Some(path) => fs::write(path, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    }
}

fn fixtures_dir() -> PathBuf {
    std::env::var_os(FIXTURES_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/v1"))
}

/// Git-style content hash (`blob <len>\0<bytes>`) with SHA-256.
fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    format!("{:x}", h.finalize())
}

#[derive(Serialize, serde::Deserialize, Default)]
struct FixtureManifest {
    tool_version: String,
    fixtures: BTreeMap<String, FixtureEntry>,
}

#[derive(Serialize, serde::Deserialize)]
struct FixtureEntry {
    file: String,
    hash: String,
    spec: DomainSpec,
}

fn cmd_generate(args: GenerateArgs) -> Result<u8, Failure> {
    let spec = args.domain.spec()?;
    let inst = spec.generate()?;
    let violations = inst.validate();
    if !violations.is_empty() {
        return Err(Error::Invalid(violations).into());
    }
    let json = inst.to_json();
    if let Some(name) = &args.fixture {
        let dir = fixtures_dir();
        fs::create_dir_all(&dir)?;
        let file = format!("{name}.json");
        fs::write(dir.join(&file), &json)?;
        let manifest_path = dir.join("manifest.json");
        let mut manifest: FixtureManifest = match fs::read_to_string(&manifest_path) {
            Ok(text) => serde_json::from_str(&text).map_err(Error::from)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => FixtureManifest::default(),
            Err(e) => return Err(e.into()),
        };
        manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
        manifest.fixtures.insert(
            name.clone(),
            FixtureEntry {
                file,
                hash: blob_hash(json.as_bytes()),
                spec,
            },
        );
        let mut text = serde_json::to_string_pretty(&manifest).map_err(Error::from)?;
        text.push('\n');
        fs::write(manifest_path, text)?;
    }
    if args.fixture.is_none() || args.out.is_some() {
        emit(&json, args.out.as_deref())?;
    }
    Ok(0)
}

fn read_instance(path: &Path) -> Result<Instance, Failure> {
    let file = File::open(path).map_err(|e| Failure {
        code: EXIT_VALIDATION,
        message: format!("{}: {e}", path.display()),
    })?;
    Ok(load_instance(io::BufReader::new(file))?)
}

fn cmd_index(args: IndexArgs) -> Result<u8, Failure> {
    if !(args.index_tol > 0.0 && args.dp_tol > 0.0) {
        return Err(Failure::usage("tolerances must be positive"));
    }
    let inst = read_instance(&args.instance)?;
    let opts = IndexOptions::new(inst.discount)
        .with_tol(args.index_tol)
        .with_dp(DpOptions::new(inst.discount).with_tol(args.dp_tol));
    let decoupled = decoupled_index_table(&inst, &opts);
    let table = match args.kind {
        Kind::Decoupled => decoupled,
        Kind::Adjusted => adjusted_index_table(&inst, &decoupled, &opts)?,
    };
    emit(&table.to_json(), args.out.as_deref())?;
    Ok(0)
}

fn build_plans(args: &RunArgs) -> Result<Vec<ExperimentPlan>, Failure> {
    let mut plans = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure {
                code: EXIT_VALIDATION,
                message: format!("{}: {e}", path.display()),
            })?;
            let mut plans = report::parse_plans(&text)?;
            for plan in &mut plans {
                args.domain.apply(&mut plan.domain);
            }
            plans
        }
        None => vec![ExperimentPlan::new(args.domain.spec()?, vec![Algorithm::CwiBa])],
    };
    for plan in &mut plans {
        if let Some(a) = &args.algorithms {
            plan.algorithms = a.clone();
        }
        if let Some(s) = args.domain.seed {
            plan.seed = Some(s);
        }
        plan.horizon = args.horizon.unwrap_or(plan.horizon);
        plan.epochs = args.epochs.unwrap_or(plan.epochs);
        plan.options.index_tol = args.index_tol.unwrap_or(plan.options.index_tol);
        plan.options.dp_tol = args.dp_tol.unwrap_or(plan.options.dp_tol);
        if args.fixed_instance {
            plan.domain.overrides = DomainOverrides {
                regenerate_per_epoch: Some(false),
                ..plan.domain.overrides.clone()
            };
        }
    }
    Ok(plans)
}

fn cmd_run(args: RunArgs) -> Result<u8, Failure> {
    let plans = build_plans(&args)?;
    let rows = report::run_plans(&plans);
    let timing = !args.no_timing;

    match &args.out {
        Some(path) => {
            let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
            let file = OpenOptions::new().create(true).append(true).open(path)?;
            report::write_csv(&rows, file, fresh, timing)?;
            write_run_manifest(path, &plans)?;
        }
        None => report::write_csv(&rows, io::stdout().lock(), true, timing)?,
    }
    if let Some(path) = &args.detail {
        fs::write(path, detail_json(&rows))?;
    }
    if args.markdown {
        print!("{}", report::markdown_summary(&rows));
    }

    let mut code = 0;
    for row in &rows {
        if let Err(e) = &row.result {
            eprintln!("error: {} on {}: {e}", row.config.algorithm, row.config.domain.kind);
            let c = if e.is_size() { EXIT_SIZE } else { EXIT_VALIDATION };
            code = code.max(c);
        }
    }
    Ok(code)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool_version: &'static str,
    plans: &'a [ExperimentPlan],
    /// Content hash of every fixture file, keyed by file name.
    fixtures: BTreeMap<String, String>,
}

/// Records what produced a results file in `<out>.manifest.json`.
fn write_run_manifest(out: &Path, plans: &[ExperimentPlan]) -> Result<(), Failure> {
    let mut fixtures = BTreeMap::new();
    if let Ok(entries) = fs::read_dir(fixtures_dir()) {
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_file() {
                let name = entry.file_name().to_string_lossy().into_owned();
                fixtures.insert(name, blob_hash(&fs::read(&path)?));
            }
        }
    }
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        plans,
        fixtures,
    };
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).map_err(Error::from)?;
    text.push('\n');
    fs::write(PathBuf::from(name), text)?;
    Ok(())
}

fn detail_json(rows: &[RowOutcome]) -> String {
    let items: Vec<serde_json::Value> = rows
        .iter()
        .map(|row| match &row.result {
            Ok(r) => serde_json::to_value(r).expect("reports always serialize"),
            Err(e) => serde_json::json!({ "config": row.config, "error": e.to_string() }),
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&items).expect("values always serialize");
    text.push('\n');
    text
}
