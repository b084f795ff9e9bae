use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mrpt::eval::{run_benchmark_with, BenchOptions, GroundTruth, GroundTruthCache};
use mrpt::io::{self, VectorFormat};
use mrpt::sparse::default_sparsity;
use mrpt::{Dataset, IndexParams, MrptIndex, Searcher, SparsityMode};

mod grid;

/// Approximate k-NN search with multiple random projection trees.
#[derive(Parser)]
#[command(name = "mrpt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index over a dataset and write it to disk.
    Build(BuildArgs),
    /// Compute exact k-NN for a query set by brute force.
    GroundTruth(GroundTruthArgs),
    /// Answer queries with a saved index.
    Query(QueryArgs),
    /// Sweep a parameter grid and write recall/latency records as CSV.
    Bench(BenchArgs),
    /// Write standard-normal sample vectors.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct DataArg {
    /// Dataset file (.fvecs, .bvecs or .csv).
    #[arg(long)]
    data: PathBuf,
    /// Override the format implied by the file extension.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trees: usize,
    #[arg(long)]
    depth: usize,
    /// Non-zero probability of projection coordinates [default: 1/sqrt(d)].
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use exactly ceil(a*d) non-zeros per projection vector.
    #[arg(long)]
    fixed_nnz: bool,
}

#[derive(Args)]
struct GroundTruthArgs {
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    votes: usize,
    /// Neighbor CSV (`query,rank,index,distance`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    k: usize,
    /// Grid file or inline ranges, e.g. `T=5,10;depth=4..6;votes=1..3`.
    #[arg(long)]
    grid: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Timing repeats per grid point; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Directory for cached ground truth.
    #[arg(long)]
    gt_cache: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Problems with how the tool was invoked rather than with the data.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(UsageError(format!("no such file: {}", path.display())).into());
    }
    Ok(())
}

fn format_for(path: &Path, explicit: Option<&str>) -> Result<VectorFormat> {
    match explicit {
        Some(name) => name.parse().map_err(|_| UsageError(format!("unknown format {name:?}")).into()),
        None => VectorFormat::from_path(path).ok_or_else(|| {
            UsageError(format!(
                "cannot infer format of {}; pass --format fvecs|bvecs|csv",
                path.display()
            ))
            .into()
        }),
    }
}

fn load(path: &Path, explicit: Option<&str>) -> Result<Dataset> {
    require_file(path)?;
    let format = format_for(path, explicit)?;
    io::load_vectors(path, format).with_context(|| format!("loading {}", path.display()))
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("MRPT_THREADS") {
        let threads: usize = value
            .parse()
            .map_err(|_| UsageError(format!("MRPT_THREADS={value:?} is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring thread pool")?;
    }
    Ok(())
}

fn build(args: BuildArgs) -> Result<()> {
    let data = load(&args.data.data, args.data.format.as_deref())?;
    let mut params = IndexParams::new(
        args.trees,
        args.depth,
        args.sparsity.unwrap_or_else(|| default_sparsity(data.dim())),
        args.seed,
    );
    if args.fixed_nnz {
        params = params.mode(SparsityMode::FixedCount);
    }
    let start = Instant::now();
    let index = MrptIndex::build(&data, params)?;
    io::save_index(&index, &args.out)?;
    eprintln!(
        "built {} trees of depth {} over {} x {} in {:.3}s ({} bytes)",
        index.num_trees(),
        index.depth(),
        data.len(),
        data.dim(),
        start.elapsed().as_secs_f64(),
        index.memory_bytes()
    );
    Ok(())
}

fn ground_truth(args: GroundTruthArgs) -> Result<()> {
    let data = load(&args.data.data, args.data.format.as_deref())?;
    let queries = load(&args.queries, args.data.format.as_deref())?;
    let gt = GroundTruth::compute(&data, &queries, args.k)?;
    io::write_ground_truth(&args.out, &gt)?;
    Ok(())
}

fn query(args: QueryArgs) -> Result<()> {
    require_file(&args.index)?;
    let data = load(&args.data.data, args.data.format.as_deref())?;
    let queries = load(&args.queries, args.data.format.as_deref())?;
    let index = io::load_index(&args.index, &data)?;
    let mut searcher = Searcher::new(&index, &data)?;
    let mut lists = Vec::with_capacity(queries.len());
    let mut short = 0;
    for q in queries.rows() {
        let outcome = searcher.search(q, args.k, args.votes)?;
        if outcome.deficit > 0 {
            short += 1;
        }
        lists.push(outcome.neighbors);
    }
    if short > 0 {
        eprintln!("warning: {short} queries returned fewer than {} neighbors", args.k);
    }
    io::write_neighbors_csv(&args.out, &lists)?;
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let grid = grid::parse_grid(&args.grid).map_err(|e| UsageError(format!("{e:#}")))?;
    let data = load(&args.data.data, args.data.format.as_deref())?;
    let queries = load(&args.queries, args.data.format.as_deref())?;
    let gt = match &args.gt_cache {
        Some(dir) => GroundTruthCache::new(dir).get_or_compute(&data, &queries, args.k)?,
        None => GroundTruth::compute(&data, &queries, args.k)?,
    };
    let opts = BenchOptions {
        seed: args.seed,
        repeats: args.repeats,
    };
    let outcomes = run_benchmark_with(&data, &queries, &gt, &grid, &opts)?;
    let mut records = Vec::new();
    for (point, outcome) in outcomes {
        match outcome {
            Ok(record) => records.push(record),
            Err(e) => eprintln!(
                "grid point T={} depth={} votes={} failed: {e}",
                point.trees, point.depth, point.votes
            ),
        }
    }
    io::write_results_csv(&args.out, &records)?;
    if records.is_empty() {
        bail!("every grid point failed");
    }
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let format = format_for(&args.out, None)?;
    let data = Dataset::gaussian(args.n, args.d, args.seed)?;
    io::save_vectors(&args.out, &data, format)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Build(a) => build(a),
        Command::GroundTruth(a) => ground_truth(a),
        Command::Query(a) => query(a),
        Command::Bench(a) => bench(a),
        Command::Generate(a) => generate(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
