//! `agr`: dataset generation and validation, single-query retrieval,
//! cross-validated sweeps and solution-graph inspection.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data validation
//! error, 3 runtime failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use agr_core::adapt::AcceptanceModel;
use agr_core::dataset::{load_csv, save_csv, CaseBase};
use agr_core::eval::{cross_validate, means_csv, pr_csv, results_csv, SweepConfig};
use agr_core::infer::{InferParams, InferenceEngine};
use agr_core::mrf::build_mrf;
use agr_core::retrieval::{agr_retrieve, knn_retrieve, AdaptationContext, CondSpec, RankedCase};
use agr_core::schema::FeatureKind;
use agr_core::synthetic::generate_synthetic;
use agr_core::{FeatureValue, Query};

#[derive(Parser)]
#[command(name = "agr", version, about = "Adaptation-guided case retrieval")]
struct Cli {
    /// Worker threads for parallel sections (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or validate case-base CSV files.
    Dataset {
        #[command(subcommand)]
        cmd: DatasetCmd,
    },
    /// Rank library cases for one query.
    Retrieve(RetrieveArgs),
    /// Run a cross-validated (alpha, k) sweep over a case base.
    Eval(EvalArgs),
    /// Inspect the solution-similarity graph.
    Mrf {
        #[command(subcommand)]
        cmd: MrfCmd,
    },
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Write a seeded synthetic case base.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a case-base file against the schema.
    Validate { path: PathBuf },
}

#[derive(Args)]
struct RetrieveArgs {
    /// Case-base CSV.
    #[arg(long)]
    base: PathBuf,
    /// Copy the query's problem features from this stored case.
    #[arg(long)]
    from_case: Option<u32>,
    /// Set a query feature, e.g. --set Duration=7 --set Destination=Rimini.
    /// Use `?` to blank a feature copied via --from-case.
    #[arg(long = "set", value_name = "FEATURE=VALUE")]
    sets: Vec<String>,
    #[arg(short, long, default_value_t = 5)]
    k: usize,
    /// Solution-similarity threshold for MRF edges.
    #[arg(long, default_value_t = 0.9)]
    st: f64,
    /// Posterior mass needed to assert an off-list case adaptable.
    #[arg(long, default_value_t = 0.9)]
    pt: f64,
    /// mean-field | loopy-bp | exact
    #[arg(long, default_value = "mean-field")]
    engine: String,
    /// Defaults to the library's mean price.
    #[arg(long)]
    budget: Option<f64>,
    /// always | bernoulli:<p>
    #[arg(long, default_value = "always")]
    acceptance: String,
    /// Seed for the acceptance draw; the query id keys it too.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    query_id: u32,
    /// Plain structural kNN, skipping adaptation and inference.
    #[arg(long)]
    knn_only: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Case-base CSV.
    #[arg(long)]
    base: PathBuf,
    /// Sweep config (TOML); omitted fields take protocol defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for results.csv, means.csv and PR curves.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    /// Comma-separated scale factors, overriding the config.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Comma-separated retrieval sizes, overriding the config.
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    #[arg(long)]
    st: Option<f64>,
    #[arg(long)]
    pt: Option<f64>,
    #[arg(long)]
    engine: Option<String>,
    #[arg(long)]
    acceptance_p: Option<f64>,
}

#[derive(Subcommand)]
enum MrfCmd {
    /// Print the edge list with similarities.
    Dump {
        #[arg(long)]
        base: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        st: f64,
        /// Number of adaptation levels carried by each node.
        #[arg(long, default_value_t = 2)]
        states: usize,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure classified by exit code.
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Runtime(anyhow::Error),
}

type CmdResult<T> = Result<T, Failure>;

trait Classify<T> {
    fn usage(self) -> CmdResult<T>;
    fn data(self) -> CmdResult<T>;
    fn runtime(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
    fn data(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Data(e.into()))
    }
    fn runtime(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => report(e, 1),
        Err(Failure::Data(e)) => report(e, 2),
        Err(Failure::Runtime(e)) => report(e, 3),
    }
}

fn report(e: anyhow::Error, code: u8) -> ExitCode {
    // Join the cause chain, skipping causes already embedded in their
    // wrapper's message (thiserror's #[from] sources).
    let mut parts: Vec<String> = e.chain().map(ToString::to_string).collect();
    parts.dedup_by(|a, b| b.ends_with(a.as_str()));
    eprintln!("error: {}", parts.join(": "));
    ExitCode::from(code)
}

fn run(cli: Cli) -> CmdResult<()> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .context("rayon pool")
            .runtime()?;
    }
    match cli.command {
        Command::Dataset { cmd } => match cmd {
            DatasetCmd::Gen { n, seed, out } => cmd_dataset_gen(n, seed, &out),
            DatasetCmd::Validate { path } => cmd_dataset_validate(&path),
        },
        Command::Retrieve(args) => cmd_retrieve(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Mrf { cmd } => match cmd {
            MrfCmd::Dump { base, st, states, out } => cmd_mrf_dump(&base, st, states, out.as_deref()),
        },
    }
}

fn cmd_dataset_gen(n: usize, seed: u64, out: &Path) -> CmdResult<()> {
    let cb = generate_synthetic(n, seed).usage()?;
    save_csv(out, &cb).runtime()?;
    println!("wrote {} cases to {}", cb.len(), out.display());
    Ok(())
}

fn cmd_dataset_validate(path: &Path) -> CmdResult<()> {
    let cb = load_csv(path)
        .with_context(|| format!("loading {}", path.display()))
        .data()?;
    let stats = cb.compute_stats().data()?;
    println!(
        "{}: {} cases ok (mean price {:.2}, mean pairwise similarity {:.4})",
        path.display(),
        cb.len(),
        stats.mean_price,
        stats.mean_structural_similarity
    );
    Ok(())
}

fn parse_acceptance(spec: &str, seed: u64) -> anyhow::Result<AcceptanceModel> {
    if spec == "always" {
        return Ok(AcceptanceModel::Always);
    }
    if let Some(p) = spec.strip_prefix("bernoulli:") {
        let p: f64 = p.parse().context("acceptance probability")?;
        let model = AcceptanceModel::Bernoulli { p, seed };
        model.validate()?;
        return Ok(model);
    }
    Err(anyhow!("unknown acceptance model {spec:?}; use always or bernoulli:<p>"))
}

/// Builds a query from --from-case and --set pairs; only problem features
/// may be set, and `?` blanks a feature.
fn build_query(cb: &CaseBase, args: &RetrieveArgs, budget: f64) -> anyhow::Result<Query> {
    let schema = &cb.schema;
    let mut q = match args.from_case {
        Some(id) => {
            let case = cb
                .cases
                .iter()
                .find(|c| c.id == id)
                .ok_or_else(|| anyhow!("no case with id {id}"))?;
            Query::from_case(case, schema, budget)
        }
        None => Query {
            id: args.query_id,
            values: vec![FeatureValue::Missing; schema.len()],
            budget,
        },
    };
    q.id = args.query_id;
    q.budget = budget;
    let settable: Vec<usize> = schema.problem_indices().collect();
    for pair in &args.sets {
        let (name, raw) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("--set wants FEATURE=VALUE, got {pair:?}"))?;
        let idx = schema
            .index_of(name)
            .ok_or_else(|| anyhow!("unknown feature {name:?}"))?;
        if !settable.contains(&idx) {
            return Err(anyhow!("{name} is a solution feature and cannot be queried"));
        }
        q.values[idx] = if raw.is_empty() || raw == "?" {
            FeatureValue::Missing
        } else {
            match schema.features[idx].kind {
                FeatureKind::Categorical => FeatureValue::Label(raw.to_string()),
                _ => FeatureValue::Num(
                    raw.parse::<f64>()
                        .with_context(|| format!("numeric value for {name}"))?,
                ),
            }
        };
    }
    q.validate(schema)?;
    Ok(q)
}

fn print_ranked(query_id: u32, cases: &[RankedCase]) {
    println!("query_id,rank,case_id,similarity,source,asserted_level");
    for (rank, rc) in cases.iter().enumerate() {
        let level = rc.asserted_level.map_or(String::new(), |l| l.to_string());
        println!(
            "{},{},{},{:.6},{},{}",
            query_id,
            rank + 1,
            rc.case_id,
            rc.similarity,
            rc.source,
            level
        );
    }
}

fn cmd_retrieve(args: &RetrieveArgs) -> CmdResult<()> {
    if !(0.0..1.0).contains(&args.pt) || args.pt <= 0.0 {
        return Err(anyhow!("pt = {} outside (0, 1)", args.pt)).usage();
    }
    if args.st <= 0.0 || args.st > 1.0 {
        return Err(anyhow!("st = {} outside (0, 1]", args.st)).usage();
    }
    let engine = InferenceEngine::from_str(&args.engine).usage()?;
    let accept = parse_acceptance(&args.acceptance, args.seed).usage()?;
    let cb = load_csv(&args.base)
        .with_context(|| format!("loading {}", args.base.display()))
        .data()?;
    let stats = cb.compute_stats().data()?;
    let budget = args.budget.unwrap_or(stats.mean_price);
    let q = build_query(&cb, args, budget).usage()?;

    if args.knn_only {
        let ranked = knn_retrieve(&cb.schema, &stats, &q, &cb.cases, args.k).usage()?;
        print_ranked(q.id, &ranked);
        return Ok(());
    }
    let mrf = build_mrf(&cb.schema, &stats, &cb.cases, args.st, 2).runtime()?;
    let spec = CondSpec::ThresholdCollapse { a: 1, pt: args.pt };
    let ctx = AdaptationContext {
        budget,
        accept: &accept,
    };
    let out = agr_retrieve(
        &cb.schema,
        &stats,
        &cb.fields,
        &q,
        &cb.cases,
        &mrf,
        args.k,
        &spec,
        engine,
        &InferParams::default(),
        &ctx,
    )
    .usage()?;
    print_ranked(q.id, &out.cases);
    println!("# adaptable_knn = {}", out.adaptable_knn);
    println!("# converged = {}", out.converged);
    Ok(())
}

fn effective_config(args: &EvalArgs) -> CmdResult<SweepConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .runtime()?;
            toml::from_str(&text).context("sweep config").usage()?
        }
        None => SweepConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(folds) = args.folds {
        cfg.folds = folds;
    }
    if let Some(alphas) = &args.alphas {
        cfg.alphas = alphas.clone();
    }
    if let Some(ks) = &args.ks {
        cfg.ks = ks.clone();
    }
    if let Some(st) = args.st {
        cfg.st = st;
    }
    if let Some(pt) = args.pt {
        cfg.pt = pt;
    }
    if let Some(engine) = &args.engine {
        cfg.engine = InferenceEngine::from_str(engine).usage()?;
    }
    if let Some(p) = args.acceptance_p {
        cfg.acceptance_p = p;
    }
    cfg.validate().usage()?;
    Ok(cfg)
}

fn cmd_eval(args: &EvalArgs) -> CmdResult<()> {
    let cfg = effective_config(args)?;
    let cb = load_csv(&args.base)
        .with_context(|| format!("loading {}", args.base.display()))
        .data()?;
    let config_text = toml::to_string_pretty(&cfg).context("serializing config").runtime()?;
    let hash = hex(&Sha256::digest(config_text.as_bytes()));
    let res = cross_validate(&cb, &cfg).data()?;

    fs::create_dir_all(&args.out).context("output directory").runtime()?;
    let header = format!("# config sha256: {hash}\n# seed: {}\n", cfg.seed);
    let mut written = vec!["config.toml".to_string()];
    fs::write(args.out.join("config.toml"), &config_text).runtime()?;
    for (name, body) in [
        ("results.csv", results_csv(&res)),
        ("means.csv", means_csv(&res)),
    ] {
        fs::write(args.out.join(name), format!("{header}{body}")).runtime()?;
        written.push(name.to_string());
    }
    for curve in &res.curves {
        let name = format!("pr_{}_a{:.2}.csv", curve.strategy, curve.alpha);
        fs::write(args.out.join(&name), format!("{header}{}", pr_csv(curve))).runtime()?;
        written.push(name);
    }
    println!("config sha256: {hash}");
    println!("seed: {}", cfg.seed);
    println!("unconverged queries: {}", res.unconverged_queries);
    println!("wrote {} files to {}", written.len(), args.out.display());
    Ok(())
}

fn cmd_mrf_dump(base: &Path, st: f64, states: usize, out: Option<&Path>) -> CmdResult<()> {
    if st <= 0.0 || st > 1.0 {
        return Err(anyhow!("st = {st} outside (0, 1]")).usage();
    }
    let cb = load_csv(base)
        .with_context(|| format!("loading {}", base.display()))
        .data()?;
    let stats = cb.compute_stats().data()?;
    let mrf = build_mrf(&cb.schema, &stats, &cb.cases, st, states).usage()?;
    let dump = mrf.dump();
    match out {
        Some(path) => fs::write(path, dump).runtime()?,
        None => print!("{dump}"),
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        write!(s, "{b:02x}").unwrap();
    }
    s
}
