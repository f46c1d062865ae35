//! `ggmtest` command-line driver: `test`, `generate` and `simulate`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde::Serialize;

use ggmtest_core::graph::DEFAULT_N;
use ggmtest_core::inference::{cross_fit_inference, InferenceConfig, NuisanceSolver, DEFAULT_ALPHA, DEFAULT_BOOTSTRAP};
use ggmtest_core::lasso::{PenaltyConfig, SolverOptions, DEFAULT_C_LAMBDA, DEFAULT_M_ITERATIONS};
use ggmtest_core::sim::{self, SimConfig, SimResult};
use ggmtest_core::{Dataset, Design, Edge, EdgeSet, RegionSpec, Tail, TestConfig, TestReport};

pub const SCHEMA_VERSION: u32 = 1;

/// Process exit codes.
pub mod exit {
    pub const ACCEPT: i32 = 0;
    pub const INPUT_ERROR: i32 = 1;
    pub const NUMERICAL_FAILURE: i32 = 2;
    pub const REJECT: i32 = 3;
}

#[derive(Debug, Parser)]
#[command(name = "ggmtest", version, about = "Simultaneous tests for absent edges in Gaussian graphical models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test H0: none of the listed edges is present.
    Test(TestArgs),
    /// Write a synthetic design: data CSV plus model JSON.
    Generate(GenerateArgs),
    /// Monte Carlo acceptance rates under the null.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Lasso,
    PostLasso,
    SqrtLasso,
    Ols,
}

impl From<SolverArg> for NuisanceSolver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Lasso => NuisanceSolver::Lasso,
            SolverArg::PostLasso => NuisanceSolver::PostLasso,
            SolverArg::SqrtLasso => NuisanceSolver::SqrtLasso,
            SolverArg::Ols => NuisanceSolver::Ols,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegionArg {
    /// Rectangle: sup |t| above the 1-alpha quantile (region I).
    #[value(alias = "rectangle")]
    Rect,
    /// Sup statistic outside the equal-tailed quantiles (region II).
    #[value(alias = "sphere")]
    TwoSided,
    /// S-sparse sums of neighbouring statistics.
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TailArg {
    Upper,
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    Random,
    Cluster,
    Approx,
    #[value(alias = "identity")]
    Independent,
}

impl From<DesignArg> for Design {
    fn from(d: DesignArg) -> Self {
        match d {
            DesignArg::Random => Design::Random,
            DesignArg::Cluster => Design::Cluster,
            DesignArg::Approx => Design::Approx,
            DesignArg::Independent => Design::Independent,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PenaltyArgs {
    /// Penalty multiplier c_lambda (> 1).
    #[arg(long, default_value_t = DEFAULT_C_LAMBDA)]
    pub c_lambda: f64,
    /// Union-bound probability gamma; default 0.1 / ln n.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Rounds of penalty-loading refinement.
    #[arg(long, default_value_t = DEFAULT_M_ITERATIONS)]
    pub m_iterations: usize,
}

impl PenaltyArgs {
    fn config(&self) -> PenaltyConfig {
        PenaltyConfig {
            c_lambda: self.c_lambda,
            gamma: self.gamma,
            m_iterations: self.m_iterations,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RegionArgs {
    /// Confidence region.
    #[arg(long, value_enum, default_value = "rect")]
    pub region: RegionArg,
    /// Neighbourhood size S of the sparse region.
    #[arg(long = "S", default_value_t = 1)]
    pub s: usize,
    /// Exponent of the sparse region (1 or 2).
    #[arg(long, default_value_t = 1)]
    pub exp: u32,
    /// Rejection tail of the sparse region.
    #[arg(long, value_enum, default_value = "upper")]
    pub tail: TailArg,
}

fn region_spec(region: RegionArg, s: usize, exp: u32, tail: TailArg, alpha: f64) -> RegionSpec {
    match region {
        RegionArg::Rect => RegionSpec::rectangle(alpha),
        RegionArg::TwoSided => RegionSpec::two_sided(alpha),
        RegionArg::Sparse => {
            let tail = match tail {
                TailArg::Upper => Tail::Upper,
                TailArg::Equal => Tail::EqualTailed,
            };
            RegionSpec::s_sparse(s, exp, tail, alpha)
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    /// Data CSV with a header row of column names.
    #[arg(long)]
    pub data: PathBuf,
    /// Edges as `a:b` pairs separated by commas or whitespace. Each side is a
    /// column name, a 1-based index, or `p` for the last column.
    #[arg(long, required_unless_present = "edges_file", conflicts_with = "edges_file")]
    pub edges: Option<String>,
    /// File holding the edge list in the same format.
    #[arg(long)]
    pub edges_file: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "lasso")]
    pub solver: SolverArg,
    #[command(flatten)]
    pub region: RegionArgs,
    /// Cross-fitting folds; 1 disables cross-fitting.
    #[arg(long, default_value_t = 1)]
    pub folds: usize,
    /// Bootstrap draws.
    #[arg(long = "B", default_value_t = DEFAULT_BOOTSTRAP)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the columns as given instead of centering them.
    #[arg(long)]
    pub no_center: bool,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    /// Report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub design: DesignArg,
    #[arg(long)]
    pub p: usize,
    #[arg(long, default_value_t = DEFAULT_N)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output prefix: writes PREFIX.csv and PREFIX.model.json.
    #[arg(long, default_value = "ggm")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Reproduce a reference table layout (1 to 6) over all twelve designs.
    #[arg(long)]
    pub table: Option<u8>,
    /// Full-scale replications and bootstrap draws (l = 1000, B = 500).
    #[arg(long)]
    pub full: bool,
    #[arg(long, value_enum)]
    pub design: Option<DesignArg>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_N)]
    pub n: usize,
    /// Replications; overrides the desk or full default.
    #[arg(long)]
    pub l: Option<usize>,
    /// Bootstrap draws; overrides the desk or full default.
    #[arg(long = "B")]
    pub bootstrap: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Nuisance solvers, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "lasso")]
    pub solver: Vec<SolverArg>,
    /// Regions, comma separated; sparse regions use --S and --exp.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "rect")]
    pub region: Vec<RegionArg>,
    #[arg(long = "S", default_value_t = 1)]
    pub s: usize,
    #[arg(long, default_value_t = 1)]
    pub exp: u32,
    /// Tails used for sparse regions, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "upper")]
    pub tail: Vec<TailArg>,
    /// Fold counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub folds: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    /// Output prefix: writes PREFIX.csv and PREFIX.json. CSV goes to
    /// standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Error raised for bad input, as opposed to numerical failure.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(InputError(msg.into()))
}

/// Exit code for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<ggmtest_core::Error>() {
        Some(e) if e.is_numerical() => exit::NUMERICAL_FAILURE,
        _ => exit::INPUT_ERROR,
    }
}

/// Reads a numeric CSV with a header row.
pub fn read_data(path: &Path) -> anyhow::Result<Dataset> {
    let file = fs::File::open(path).with_context(|| format!("cannot open data file {}", path.display()))?;
    read_data_from(file, &path.display().to_string())
}

pub fn read_data_from<R: io::Read>(reader: R, source: &str) -> anyhow::Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| input_error(format!("{source}: cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(input_error(format!("{source}: missing header row")));
    }
    let p = names.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|pos| pos.line()).unwrap_or(0);
            input_error(format!("{source}: line {line}: {}", csv_error_text(&e)))
        })?;
        let line = record.position().map(|pos| pos.line()).unwrap_or(0);
        if record.len() != p {
            return Err(input_error(format!("{source}: line {line}: expected {p} fields, found {}", record.len())));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| input_error(format!("{source}: line {line}: column '{}': cannot parse '{field}' as a number", names[c])))?;
            if !v.is_finite() {
                return Err(input_error(format!("{source}: line {line}: column '{}': non-finite value '{field}'", names[c])));
            }
            values.push(v);
        }
        rows += 1;
    }
    let data = Array2::from_shape_vec((rows, p), values).expect("row-major buffer of rows x p");
    Dataset::new(names, data).map_err(|e| input_error(format!("{source}: {e}")))
}

fn csv_error_text(e: &csv::Error) -> String {
    match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => format!("expected {expected_len} fields, found {len}"),
        _ => e.to_string(),
    }
}

fn resolve_node(token: &str, names: &[String]) -> anyhow::Result<usize> {
    if let Some(i) = names.iter().position(|n| n == token) {
        return Ok(i);
    }
    if token == "p" {
        return Ok(names.len() - 1);
    }
    match token.parse::<usize>() {
        Ok(i) if (1..=names.len()).contains(&i) => Ok(i - 1),
        Ok(i) => Err(input_error(format!("edge node '{i}' is out of range 1..={}", names.len()))),
        Err(_) => Err(input_error(format!("unknown column '{token}' in edge list"))),
    }
}

/// Parses `a:b` tokens separated by commas or whitespace.
pub fn parse_edges(spec: &str, names: &[String]) -> anyhow::Result<EdgeSet> {
    let mut edges = Vec::new();
    for token in spec.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
        let (a, b) = token.split_once(':').ok_or_else(|| input_error(format!("edge '{token}' is not of the form a:b")))?;
        let (a, b) = (resolve_node(a.trim(), names)?, resolve_node(b.trim(), names)?);
        edges.push(Edge::new(a, b).map_err(|e| input_error(format!("edge '{token}': {e}")))?);
    }
    EdgeSet::new(edges, names.len()).map_err(|e| input_error(e.to_string()))
}

#[derive(Debug, Serialize)]
struct ReportFile<'a> {
    schema: u32,
    data: String,
    centered: bool,
    reject: bool,
    #[serde(flatten)]
    report: &'a TestReport,
}

fn write_output(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Runs `test` and returns the exit code (accept or reject).
pub fn cmd_test(args: &TestArgs) -> anyhow::Result<i32> {
    let raw = read_data(&args.data)?;
    let spec = match (&args.edges, &args.edges_file) {
        (Some(s), _) => s.clone(),
        (None, Some(path)) => fs::read_to_string(path).with_context(|| format!("cannot read edge file {}", path.display()))?,
        (None, None) => bail!(input_error("no edges given")),
    };
    let edges = parse_edges(&spec, raw.names())?;
    let data = if args.no_center { raw } else { raw.centered() };
    let cfg = TestConfig {
        inference: InferenceConfig {
            solver: args.solver.into(),
            penalty: args.penalty.config(),
            solver_options: SolverOptions::default(),
        },
        bootstrap_b: args.bootstrap,
        seed: args.seed,
    };
    let r = &args.region;
    let region = region_spec(r.region, r.s, r.exp, r.tail, args.alpha);
    let report = cross_fit_inference(&data, &edges, args.folds, &cfg, &[region])?;
    let reject = report.primary_reject().unwrap_or(false);
    let doc = ReportFile {
        schema: SCHEMA_VERSION,
        data: args.data.display().to_string(),
        centered: !args.no_center,
        reject,
        report: &report,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    write_output(args.out.as_deref(), &text)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if reject { exit::REJECT } else { exit::ACCEPT })
}

#[derive(Debug, Serialize)]
struct ModelFile {
    schema: u32,
    design: Design,
    p: usize,
    n: usize,
    seed: u64,
    params: ggmtest_core::graph::GeneratorParams,
    /// One-based pairs `[j, k]` with `j > k`.
    true_edges: Vec<[usize; 2]>,
    /// Candidate edges that satisfy the null for this design.
    null_edges: Vec<[usize; 2]>,
    phi: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
}

fn rows_of(m: ndarray::ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn cmd_generate(args: &GenerateArgs) -> anyhow::Result<i32> {
    let design: Design = args.design.into();
    let cfg = SimConfig {
        n: args.n,
        seed: args.seed,
        ..SimConfig::new(design, args.p)
    };
    let null = sim::null_edge_set(design, args.p)?;
    let (model, data) = sim::replication_data(&cfg, 0)?;

    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(data.names())?;
    for row in data.matrix().rows() {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    let csv_bytes = wtr.into_inner().map_err(|e| anyhow!("cannot serialize data: {e}"))?;
    let model_file = ModelFile {
        schema: SCHEMA_VERSION,
        design,
        p: args.p,
        n: args.n,
        seed: args.seed,
        params: model.params.clone(),
        true_edges: model.true_edges.iter().map(|e| e.one_based()).collect(),
        null_edges: null.edges().iter().map(|e| e.one_based()).collect(),
        phi: rows_of(model.phi.view()),
        sigma: rows_of(model.sigma.view()),
    };
    let mut json = serde_json::to_string_pretty(&model_file)?;
    json.push('\n');

    let csv_path = with_suffix(&args.out, "csv");
    let json_path = with_suffix(&args.out, "model.json");
    fs::write(&csv_path, csv_bytes).with_context(|| format!("cannot write {}", csv_path.display()))?;
    fs::write(&json_path, json).with_context(|| format!("cannot write {}", json_path.display()))?;
    eprintln!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(exit::ACCEPT)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn simulate_configs(args: &SimulateArgs) -> anyhow::Result<Vec<SimConfig>> {
    let mut configs = match (args.table, args.design, args.p) {
        (Some(t), design, p) => {
            let all = sim::table_configs(t, args.full, args.seed)?;
            all.into_iter()
                .filter(|c| design.is_none_or(|d| c.design == Design::from(d)) && p.is_none_or(|p| c.p == p))
                .collect()
        }
        (None, Some(design), Some(p)) => {
            let mut regions = Vec::new();
            for &r in &args.region {
                if r == RegionArg::Sparse {
                    for &t in &args.tail {
                        regions.push(region_spec(r, args.s, args.exp, t, args.alpha));
                    }
                } else {
                    regions.push(region_spec(r, args.s, args.exp, TailArg::Upper, args.alpha));
                }
            }
            vec![SimConfig {
                replications: if args.full { sim::FULL_REPLICATIONS } else { sim::DESK_REPLICATIONS },
                bootstrap_b: if args.full { sim::FULL_BOOTSTRAP } else { sim::DESK_BOOTSTRAP },
                solvers: args.solver.iter().map(|&s| s.into()).collect(),
                regions,
                folds: args.folds.clone(),
                seed: args.seed,
                ..SimConfig::new(design.into(), p)
            }]
        }
        _ => Vec::new(),
    };
    if configs.is_empty() {
        bail!(input_error("empty simulation grid: give --table N, or both --design and --p"));
    }
    for c in &mut configs {
        c.n = args.n;
        c.penalty = args.penalty.config();
        if let Some(l) = args.l {
            c.replications = l;
        }
        if let Some(b) = args.bootstrap {
            c.bootstrap_b = b;
        }
        if args.table.is_some() && args.solver != [SolverArg::Lasso] {
            c.solvers = args.solver.iter().map(|&s| s.into()).collect();
        }
    }
    Ok(configs)
}

#[derive(Debug, Serialize)]
struct SimSummary<'a> {
    schema: u32,
    results: &'a [SimResult],
}

pub fn cmd_simulate(args: &SimulateArgs) -> anyhow::Result<i32> {
    let configs = simulate_configs(args)?;
    let mut results = Vec::with_capacity(configs.len());
    for cfg in &configs {
        let r = sim::acceptance_table(cfg)?;
        eprintln!("{} p={}: {} cells, {:.1}s", cfg.design, cfg.p, r.cells.len(), r.wall_seconds);
        results.push(r);
    }
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for r in &results {
        for row in r.rows() {
            wtr.serialize(row)?;
        }
    }
    let csv_bytes = wtr.into_inner().map_err(|e| anyhow!("cannot serialize results: {e}"))?;
    match &args.out {
        Some(prefix) => {
            let csv_path = with_suffix(prefix, "csv");
            let json_path = with_suffix(prefix, "json");
            fs::write(&csv_path, &csv_bytes).with_context(|| format!("cannot write {}", csv_path.display()))?;
            let mut json = serde_json::to_string_pretty(&SimSummary {
                schema: SCHEMA_VERSION,
                results: &results,
            })?;
            json.push('\n');
            fs::write(&json_path, json).with_context(|| format!("cannot write {}", json_path.display()))?;
        }
        None => io::stdout().lock().write_all(&csv_bytes)?,
    }
    Ok(exit::ACCEPT)
}

pub fn run(cli: &Cli) -> anyhow::Result<i32> {
    match &cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}
