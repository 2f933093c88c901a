use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use taskgraph::bench::{
    default_sweep, emit_report, run_execution_benchmark, run_planning_benchmark, BenchOptions, PlannerChoice,
    ReportFormat, TaskSuite,
};
use taskgraph::bt::{parse_xml, serialize, validate, TaskGraph};
use taskgraph::config::Config;
use taskgraph::executor::{replay, run_scene, RunLimits, RunOutcome, Trace};
use taskgraph::planner::{
    generate_task_graph, BackendError, PlanError, PlannerBackend, ReplayBackend, TemplateBackend,
    DEFAULT_MAX_REPAIR_ROUNDS,
};
use taskgraph::registry::BehaviorLibrary;
use taskgraph::sim::{library_from_manifest, Scene, SimConfig, WorldState};

const EXIT_TASK: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_TRANSPORT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "taskgraph",
    version,
    about = "Plan, validate, run and benchmark behavior-tree task graphs"
)]
struct Cli {
    /// `key = value` configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a task graph for an instruction.
    Plan(PlanArgs),
    /// Check a task graph against a behavior library.
    Validate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        library: PathBuf,
    },
    /// Execute a task graph in a scene.
    Run(RunArgs),
    /// Re-run a recorded trace and check it reproduces.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        library: PathBuf,
        /// Seed to replay with; defaults to the recorded one.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Planning or execution benchmark over a task suite.
    Bench {
        #[command(subcommand)]
        which: BenchCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Http,
    Replay,
    Template,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "template")]
    backend: BackendKind,
    /// Directory of numbered response files for the replay backend.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long)]
    max_repair: Option<usize>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    instruction: String,
    #[arg(long)]
    library: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    /// Write the graph here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    library: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Fault probabilities, e.g. `--faults p_grasp_slip=0.2`.
    #[arg(long, num_args = 1..)]
    faults: Vec<String>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    max_ticks: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long)]
    library: PathBuf,
    #[arg(short = 'n', long)]
    trials: Option<usize>,
    /// Seed of trial 0; trial i uses BASE + i.
    #[arg(long)]
    seeds: Option<u64>,
    /// Report file; `.csv` gets CSV, anything else the text table.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    /// Slip {0.1,0.2,0.3} x VQA error {0,0.05} x detection miss {0,0.1}.
    Default,
    /// Each suite entry's own fault profile.
    Suite,
}

#[derive(Subcommand)]
enum BenchCommand {
    Plan {
        #[command(flatten)]
        common: BenchArgs,
        #[command(flatten)]
        backend: BackendArgs,
    },
    Exec {
        #[command(flatten)]
        common: BenchArgs,
        #[arg(long, value_enum, default_value = "default")]
        grid: Grid,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }

    fn task(message: impl ToString) -> Self {
        Failure {
            code: EXIT_TASK,
            message: message.to_string(),
        }
    }
}

impl From<PlanError> for Failure {
    fn from(e: PlanError) -> Self {
        let code = match &e {
            PlanError::Backend(BackendError::Transport(_)) => EXIT_TRANSPORT,
            PlanError::Backend(BackendError::NoTemplate(_)) => EXIT_TASK,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_library(path: &Path) -> Result<BehaviorLibrary<WorldState>, Failure> {
    library_from_manifest(&read(path)?, &SimConfig::default())
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_scene(path: &Path) -> Result<Scene, Failure> {
    Scene::parse(&read(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_graph(path: &Path) -> Result<TaskGraph, Failure> {
    parse_xml(&read(path)?).map_err(|e| Failure::task(format!("{}: {e}", path.display())))
}

fn make_backend(args: &BackendArgs, config: &Config) -> Result<Box<dyn PlannerBackend>, Failure> {
    Ok(match args.backend {
        BackendKind::Template => Box::new(TemplateBackend::new()),
        BackendKind::Replay => {
            let dir = args
                .fixtures
                .as_ref()
                .ok_or_else(|| Failure::usage("--fixtures DIR is required for the replay backend"))?;
            Box::new(ReplayBackend::from_dir(dir).map_err(Failure::usage)?)
        }
        BackendKind::Http => Box::new(config.http_backend().map_err(Failure::usage)?),
    })
}

fn max_repair(args: &BackendArgs, config: &Config) -> Result<usize, Failure> {
    match args.max_repair {
        Some(n) => Ok(n),
        None => Ok(config
            .parsed("planner.max_repair_rounds")
            .map_err(Failure::usage)?
            .unwrap_or(DEFAULT_MAX_REPAIR_ROUNDS)),
    }
}

fn cmd_plan(args: PlanArgs, config: &Config) -> CliResult {
    let library = load_library(&args.library)?;
    let backend = make_backend(&args.backend, config)?;
    let outcome = generate_task_graph(
        &args.instruction,
        &library,
        backend.as_ref(),
        max_repair(&args.backend, config)?,
    )?;
    eprintln!(
        "backend={} repair_rounds_used={} latency={:.3}s",
        backend.kind(),
        outcome.repair_rounds_used,
        outcome.total_latency().as_secs_f64()
    );
    let Some(graph) = outcome.graph else {
        return Err(Failure::task(format!("no valid task graph:\n{}", outcome.validation)));
    };
    for w in outcome.validation.warnings() {
        warn!("{w}");
    }
    let xml = serialize(&graph).map_err(Failure::task)?;
    match args.out {
        Some(path) => write(&path, &xml),
        None => {
            print!("{xml}");
            Ok(())
        }
    }
}

fn cmd_validate(graph: &Path, library: &Path) -> CliResult {
    let library = load_library(library)?;
    let graph = load_graph(graph)?;
    let report = validate(&graph, &library);
    print!("{report}");
    if report.ok {
        println!("ok");
        Ok(())
    } else {
        Err(Failure::task("graph is not valid"))
    }
}

fn cmd_run(args: RunArgs, config: &Config) -> CliResult {
    let library = load_library(&args.library)?;
    let scene = load_scene(&args.scene)?;
    let graph = load_graph(&args.graph)?;
    let mut config = config.clone();
    if let Some(seed) = args.seed {
        config.set("seed", seed.to_string()).map_err(Failure::usage)?;
    }
    for kv in &args.faults {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("--faults expects KEY=VALUE, got {kv:?}")))?;
        if !k.starts_with("p_") {
            return Err(Failure::usage(format!("unknown fault key {k}")));
        }
        config.set(k, v).map_err(Failure::usage)?;
    }
    let faults = config.faults().map_err(Failure::usage)?;
    let mut limits = RunLimits::default();
    if let Some(t) = args
        .max_ticks
        .or(config.parsed("run.max_ticks").map_err(Failure::usage)?)
    {
        limits.max_ticks = t;
    }
    let rec = run_scene(&graph, &library, &scene, &SimConfig::default(), faults, limits).map_err(Failure::task)?;
    if let Some(path) = &args.trace {
        write(path, &rec.trace.to_text())?;
    } else {
        print!("{}", rec.trace.to_text());
    }
    println!("outcome={} ticks={}", rec.result.outcome, rec.result.ticks_used);
    if rec.result.outcome == RunOutcome::Done {
        Ok(())
    } else {
        Err(Failure::task(format!("run ended {}", rec.result.outcome)))
    }
}

fn cmd_replay(trace: &Path, graph: &Path, scene: &Path, library: &Path, seed: Option<u64>) -> CliResult {
    let recorded = Trace::parse(&read(trace)?).map_err(Failure::usage)?;
    let library = load_library(library)?;
    let scene = load_scene(scene)?;
    let graph = load_graph(graph)?;
    let seed = seed.unwrap_or(recorded.header.faults.seed);
    let limits = RunLimits::default();
    let rerun =
        replay(&recorded, &graph, &library, &scene, &SimConfig::default(), seed, limits).map_err(Failure::task)?;
    println!(
        "reproduced {} events, outcome={}",
        rerun.trace.events.len(),
        rerun.result.outcome
    );
    Ok(())
}

fn bench_options(common: &BenchArgs, config: &Config) -> Result<BenchOptions, Failure> {
    let mut options = BenchOptions::default();
    if let Some(n) = common.trials.or(config.parsed("bench.trials").map_err(Failure::usage)?) {
        options.trials = n;
    }
    if options.trials == 0 {
        return Err(Failure::usage("trial count must be at least 1"));
    }
    if let Some(s) = common
        .seeds
        .or(config.parsed("bench.seed_base").map_err(Failure::usage)?)
    {
        options.seed_base = s;
    }
    if let Some(t) = config.parsed("run.max_ticks").map_err(Failure::usage)? {
        options.limits.max_ticks = t;
    }
    Ok(options)
}

fn cmd_bench(which: BenchCommand, config: &Config) -> CliResult {
    let (common, table) = match which {
        BenchCommand::Plan { common, backend } => {
            let library = load_library(&common.library)?;
            let suite = TaskSuite::load(&common.suite).map_err(Failure::usage)?;
            let mut options = bench_options(&common, config)?;
            options.max_repair_rounds = max_repair(&backend, config)?;
            let backend = make_backend(&backend, config)?;
            let table = run_planning_benchmark(&suite, &library, backend.as_ref(), &options);
            (common, table)
        }
        BenchCommand::Exec { common, grid } => {
            let library = load_library(&common.library)?;
            let suite = TaskSuite::load(&common.suite).map_err(Failure::usage)?;
            let options = bench_options(&common, config)?;
            let sweep = match grid {
                Grid::Default => default_sweep(),
                Grid::Suite => Vec::new(),
            };
            let table = run_execution_benchmark(&suite, &library, &PlannerChoice::default(), &sweep, &options);
            (common, table)
        }
    };
    print!("{table}");
    if table.rows.is_empty() {
        return Err(Failure::task("no task produced results"));
    }
    if let Some(path) = &common.report {
        emit_report(&table, ReportFormat::for_path(path), path).map_err(Failure::usage)?;
        info!("report written to {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(path) => match Config::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_USAGE);
            }
        },
        None => Config::default(),
    };
    let result = match cli.command {
        Command::Plan(args) => cmd_plan(args, &config),
        Command::Validate { graph, library } => cmd_validate(&graph, &library),
        Command::Run(args) => cmd_run(args, &config),
        Command::Replay {
            trace,
            graph,
            scene,
            library,
            seed,
        } => cmd_replay(&trace, &graph, &scene, &library, seed),
        Command::Bench { which } => cmd_bench(which, &config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
