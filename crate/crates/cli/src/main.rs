use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cssc_cli::campaign::{instance_name, instance_seed, run_campaign, save_matrix, CampaignSpec, GeneratorSpec};
use cssc_cli::methods::{reduce, Method, ReduceOptions, Reduction};
use cssc_cli::store::{read_json, stem, write_atomic, write_json};
use cssc_cli::toy::run_toy;
use cssc_core::baselines::Metric;
use cssc_core::cssc::{build_matrix, MatrixSidecar, OpportunityCostMatrix, PartitionStrategy};
use cssc_core::evaluation::{implementation_error, solve_original, EvaluationReport, OriginalOptimum};
use cssc_core::model::SolveMode;
use cssc_core::problems::{DemandLaw, FlpSpec, Instance, NdpSpec, ToyProblem};
use cssc_solver::SolverLimits;

#[derive(Parser)]
#[command(name = "cssc", version, about = "Scenario reduction for two-stage stochastic programs")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, env = "CSSC_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Wall-clock limit per solve, in seconds.
    #[arg(long, global = true, default_value_t = 300.0)]
    time_limit: f64,
    /// Output root.
    #[arg(long, global = true, env = "CSSC_OUT", default_value = "cssc-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write seeded instance files `{family}-{seed}-{index}.json`.
    Generate {
        #[command(subcommand)]
        family: Family,
        /// Number of instances.
        #[arg(long, default_value_t = 1, global = true)]
        count: usize,
        /// Overwrite existing files.
        #[arg(long, global = true)]
        force: bool,
    },
    /// Reduce the scenario set of an instance.
    Reduce(ReduceArgs),
    /// Implementation error of a reduction.
    Evaluate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        reduction: PathBuf,
    },
    /// Generate, reduce and evaluate over an instance × method × K grid.
    Benchmark(BenchmarkArgs),
    /// The four-scenario example end to end.
    Toy {
        #[arg(short = 'K', long = "k", default_value_t = 2)]
        k: usize,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand, Clone)]
enum Family {
    Ndp(NdpArgs),
    Flp(FlpArgs),
    Toy,
}

#[derive(Args, Clone)]
struct NdpArgs {
    #[arg(long)]
    commodities: usize,
    #[arg(long)]
    arcs: usize,
    #[arg(long)]
    scenarios: usize,
    /// Defaults to the smallest vertex count that fits the arcs.
    #[arg(long)]
    vertices: Option<usize>,
    #[arg(long, value_enum, default_value_t = Demand::Uniform)]
    demand: Demand,
}

#[derive(Args, Clone)]
struct FlpArgs {
    #[arg(long)]
    facilities: usize,
    #[arg(long)]
    customers: usize,
    #[arg(long)]
    scenarios: usize,
    /// Facility budget (defaults to a third of the facilities).
    #[arg(long)]
    budget: Option<usize>,
    /// Per-facility capacity (defaults to 0.8 |C| / budget, rounded up).
    #[arg(long)]
    capacity: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Demand {
    Uniform,
    Lognormal,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Relaxed,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Auto,
    Exact,
    LocalSearch,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    L2,
    L1,
    Hamming,
}

#[derive(Args)]
struct ReduceArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(short = 'K', long = "k")]
    k: usize,
    /// One-scenario solve mode for CSSC (defaults per problem family).
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum, default_value_t = Strategy::Auto)]
    strategy: Strategy,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// Distance used by k-medoids.
    #[arg(long, value_enum, default_value_t = MetricArg::L2)]
    metric: MetricArg,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Campaign spec as JSON; the flags below are ignored when given.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    instances: usize,
    /// Comma-separated K grid.
    #[arg(long, value_delimiter = ',', default_value = "2,3")]
    k: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "cssc,mc")]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 1_000_000)]
    max_nodes: usize,
    #[command(subcommand)]
    family: Option<Family>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the worker pool")?;
    }
    let limits = SolverLimits::default().with_time_limit(Duration::from_secs_f64(cli.time_limit));
    match &cli.command {
        Command::Generate { family, count, force } => generate(&cli, family, *count, *force),
        Command::Reduce(args) => cmd_reduce(&cli, args, &limits),
        Command::Evaluate { instance, reduction } => evaluate(&cli, instance, reduction, &limits),
        Command::Benchmark(args) => benchmark(&cli, args),
        Command::Toy { k, json } => {
            let summary = run_toy(*k, cli.seed, &limits)?;
            if *json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                print!("{summary}");
            }
            Ok(())
        }
    }
}

fn generator(family: &Family) -> Option<GeneratorSpec> {
    match family {
        Family::Ndp(a) => {
            let law = match a.demand {
                Demand::Uniform => DemandLaw::Uniform,
                Demand::Lognormal => DemandLaw::Lognormal,
            };
            let mut spec = NdpSpec::new(a.commodities, a.arcs, a.scenarios, law, 0);
            if let Some(v) = a.vertices {
                spec = spec.with_vertices(v);
            }
            Some(GeneratorSpec::Ndp(spec))
        }
        Family::Flp(a) => {
            let mut spec = FlpSpec::new(a.facilities, a.customers, a.scenarios, 0);
            if let Some(b) = a.budget {
                spec.budget = b;
            }
            spec.capacity = a.capacity;
            Some(GeneratorSpec::Flp(spec))
        }
        Family::Toy => None,
    }
}

fn generate(cli: &Cli, family: &Family, count: usize, force: bool) -> Result<()> {
    let dir = cli.out.join("instances");
    for index in 0..count {
        let (name, instance) = match generator(family) {
            Some(g) => {
                let name = instance_name(g.family(), cli.seed, index);
                (name, g.generate(instance_seed(cli.seed, g.family(), index))?)
            }
            None => (instance_name("toy", cli.seed, index), Instance::Toy(ToyProblem::new())),
        };
        let path = dir.join(format!("{name}.json"));
        if path.exists() && !force {
            eprintln!("warning: {} exists, skipped (use --force to overwrite)", path.display());
            continue;
        }
        write_atomic(&path, instance.to_json().as_bytes())?;
        println!("{}", path.display());
    }
    Ok(())
}

fn load_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Instance::from_json(&text)?)
}

fn matrix_for(
    cli: &Cli,
    name: &str,
    instance: &Instance,
    mode: SolveMode,
    limits: &SolverLimits,
) -> Result<OpportunityCostMatrix> {
    let label = match mode {
        SolveMode::Exact => "exact",
        SolveMode::Relaxed => "relaxed",
    };
    let csv = cli.out.join("matrices").join(format!("{name}-{label}.csv"));
    let side = cli.out.join("matrices").join(format!("{name}-{label}.json"));
    if csv.exists() && side.exists() {
        let values = OpportunityCostMatrix::parse_csv(&std::fs::read_to_string(&csv)?)?;
        let sidecar: MatrixSidecar = read_json(&side)?;
        if let Ok(m) = OpportunityCostMatrix::from_parts(values, sidecar) {
            if m.len() == instance.scenarios().len() {
                return Ok(m);
            }
        }
    }
    let m = build_matrix(instance.problem(), mode, limits)?;
    save_matrix(&csv, &side, &m)?;
    eprintln!("matrix written to {}", csv.display());
    Ok(m)
}

fn cmd_reduce(cli: &Cli, args: &ReduceArgs, limits: &SolverLimits) -> Result<()> {
    let instance = load_instance(&args.instance)?;
    let name = stem(&args.instance);
    let mut opts = ReduceOptions::new(args.k, cli.seed);
    opts.limits = limits.clone();
    opts.restarts = args.restarts;
    opts.mode = args.mode.map(|m| match m {
        Mode::Exact => SolveMode::Exact,
        Mode::Relaxed => SolveMode::Relaxed,
    });
    opts.metric = match args.metric {
        MetricArg::L2 => Metric::L2,
        MetricArg::L1 => Metric::L1,
        MetricArg::Hamming => Metric::Hamming,
    };
    opts.partition.strategy = match args.strategy {
        Strategy::Auto => PartitionStrategy::Auto,
        Strategy::Exact => PartitionStrategy::Exact,
        Strategy::LocalSearch => PartitionStrategy::LocalSearch,
    };
    args.method.check_domain(instance.scenarios().domain())?;
    let matrix = if args.method == Method::Cssc {
        let mode = opts.mode.unwrap_or_else(|| instance.problem().default_mode());
        Some(matrix_for(cli, &name, &instance, mode, limits)?)
    } else {
        None
    };
    let reduction = reduce(&instance, args.method, &opts, matrix.as_ref())?;
    let path = cli.out.join("reductions").join(format!("{name}-{}-K{}.json", args.method.name(), args.k));
    write_json(&path, &reduction)?;
    if let Some(p) = &reduction.partition {
        let clusters: Vec<String> = p
            .clusters
            .iter()
            .map(|c| format!("{{{}}}", c.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        println!("partition {} objective {}", clusters.join(" "), p.objective);
    }
    for (s, p) in reduction.reduced.scenarios.iter().zip(&reduction.reduced.probabilities) {
        let origin = s.origin.map(|i| format!("scenario {}", i + 1)).unwrap_or_else(|| "synthetic".into());
        println!("  p={p} {origin}");
    }
    println!("{}", path.display());
    Ok(())
}

fn evaluate(cli: &Cli, instance_path: &Path, reduction_path: &Path, limits: &SolverLimits) -> Result<()> {
    let instance = load_instance(instance_path)?;
    let name = stem(instance_path);
    let reduction: Reduction = read_json(reduction_path)?;
    let cache = cli.out.join("optima").join(format!("{name}.json"));
    let original: OriginalOptimum = match read_json(&cache) {
        Ok(o) => o,
        Err(_) => {
            let o = solve_original(instance.problem(), limits)?;
            write_json(&cache, &o)?;
            o
        }
    };
    let mut report = implementation_error(instance.problem(), &original, &reduction.reduced, limits)?;
    report.instance = name.clone();
    report.timings.reduce_seconds = reduction.seconds;
    let base = cli.out.join("reports").join(format!("{name}-{}-K{}", report.method, report.k));
    write_json(&base.with_extension("json"), &report)?;
    let csv = format!("{}\n{}\n", EvaluationReport::CSV_HEADER, report.csv_row());
    write_atomic(&base.with_extension("csv"), csv.as_bytes())?;
    match (report.relative_error_pct, report.absolute_error) {
        (Some(rel), Some(abs)) => println!("implementation error {abs} ({rel:.4}%)"),
        (None, Some(abs)) => println!("implementation error {abs}"),
        _ => println!(
            "original solve ended with status {}; gap against its bound {:.4}%",
            report.original_status, report.gap_pct
        ),
    }
    println!("x~* true cost {} (reduced objective {})", report.true_cost, report.approx_objective);
    println!("{}", base.with_extension("json").display());
    Ok(())
}

fn benchmark(cli: &Cli, args: &BenchmarkArgs) -> Result<()> {
    let spec: CampaignSpec = match (&args.spec, &args.family) {
        (Some(path), _) => read_json(path)?,
        (None, Some(family)) => {
            let Some(generator) = generator(family) else { bail!("benchmarks need a generated family (ndp or flp)") };
            CampaignSpec {
                generator,
                instances: args.instances,
                k_grid: args.k.clone(),
                methods: args.methods.clone(),
                master_seed: cli.seed,
                time_limit: Some(cli.time_limit),
                max_nodes: args.max_nodes,
            }
        }
        (None, None) => bail!("give --spec or a family subcommand"),
    };
    let outcome = run_campaign(&spec, &cli.out)?;
    let failed = outcome.records.iter().filter(|r| r.report.is_none()).count();
    println!(
        "{} cells ({} computed, {} reused, {} failed); outputs in {}",
        outcome.records.len(),
        outcome.computed,
        outcome.records.len() - outcome.computed,
        failed,
        cli.out.display()
    );
    Ok(())
}
