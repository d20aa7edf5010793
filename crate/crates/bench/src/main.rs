//! `routeq` command-line interface.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use routeq_bench::corpus::CorpusConfig;
use routeq_bench::io::atomic_write;
use routeq_bench::prepare::{prepare, PrepareSpec};
use routeq_bench::report::{build_report, Report, ReportOptions};
use routeq_bench::runner::{run_spec, Method, RunOutcome, RunSpec, ABLATION_ROWS};

use routeq_core::agent::TrainConfig;
use routeq_core::instance;
use routeq_core::milp::{self, CostModel};

#[derive(Parser)]
#[command(
    name = "routeq",
    version,
    about = "Vehicle routing with time windows and path breaks: dataset prep, \
             advisor-guided DQN training, exact oracle, and benchmark reports"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate augmented instances and a manifest.
    Prepare(PrepareArgs),
    /// Train one method over instances and seeds.
    Train(TrainArgs),
    /// Aggregate run directories into tables and CSV files.
    Report(ReportArgs),
    /// Run the six-configuration ablation matrix.
    Ablate(AblateArgs),
    /// Solve a small instance exactly.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Output directory for instance files and the manifest.
    #[arg(long)]
    out: PathBuf,
    /// Generate this many synthetic desk-scale instances.
    #[arg(long)]
    synthetic: Option<usize>,
    #[arg(long, default_value_t = 5)]
    customers_min: usize,
    #[arg(long, default_value_t = 8)]
    customers_max: usize,
    /// TSPLIB-style .vrp files to parse and augment.
    #[arg(long = "vrp")]
    vrp: Vec<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.42)]
    window_tightness: f64,
    #[arg(long, default_value_t = 0.12)]
    break_fraction: f64,
    /// Overwrite existing instance files.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Clone)]
struct TrainArgs {
    /// Augmented instance files (canonical format).
    #[arg(long = "instance", required = true)]
    instances: Vec<PathBuf>,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated seeds; three parallel experiments by default.
    #[arg(long, default_value = "1,2,3")]
    seeds: String,
    /// TOML file mirroring the training configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Parallel runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Greedy evaluation rollouts per run.
    #[arg(long, default_value_t = 5)]
    eval_episodes: usize,
    /// Remote model name for llm-dqn-remote.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    no_double: bool,
    #[arg(long)]
    no_dueling: bool,
    #[arg(long)]
    no_per: bool,
    #[arg(long)]
    no_llm_memory: bool,
    #[arg(long)]
    no_llm_per_boost: bool,
    #[arg(long)]
    no_reward_shaping: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory produced by `train` or `ablate`.
    #[arg(long)]
    runs: PathBuf,
    /// Where to write results.csv and curves.csv (defaults to the run dir).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = milp::DEFAULT_ORACLE_LIMIT)]
    oracle_limit: usize,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long = "instance", required = true)]
    instances: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "1,2,3")]
    seeds: String,
    /// Comma-separated methods to ablate.
    #[arg(long, default_value = "dqn,llm-dqn-mock")]
    methods: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value_t = 5)]
    eval_episodes: usize,
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = milp::DEFAULT_ORACLE_LIMIT)]
    limit: usize,
    /// Minimize pure distance instead of the generalized cost.
    #[arg(long)]
    distance_only: bool,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().with_context(|| format!("bad seed '{s}'")))
        .collect::<Result<_>>()?;
    if seeds.is_empty() {
        bail!("at least one seed is required");
    }
    Ok(seeds)
}

fn load_train_config(path: Option<&PathBuf>) -> Result<TrainConfig> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn apply_train_flags(cfg: &mut TrainConfig, args: &TrainArgs) {
    if let Some(episodes) = args.episodes {
        cfg.episodes = episodes;
    }
    if args.no_double {
        cfg.switches.double = false;
    }
    if args.no_dueling {
        cfg.switches.dueling = false;
    }
    if args.no_per {
        cfg.switches.per = false;
    }
    if args.no_llm_memory {
        cfg.switches.llm_memory = false;
    }
    if args.no_llm_per_boost {
        cfg.switches.llm_per_boost = false;
    }
    if args.no_reward_shaping {
        cfg.switches.reward_shaping = false;
    }
}

fn print_outcomes(outcomes: &[RunOutcome]) -> bool {
    let mut all_ok = true;
    for o in outcomes {
        if o.ok {
            println!("ok    {}", o.run_id);
        } else {
            all_ok = false;
            eprintln!("FAIL  {}: {}", o.run_id, o.error.as_deref().unwrap_or("unknown error"));
        }
    }
    all_ok
}

fn cmd_prepare(args: PrepareArgs) -> Result<()> {
    let synthetic = args.synthetic.map(|count| CorpusConfig {
        count,
        customers_min: args.customers_min,
        customers_max: args.customers_max,
        seed: args.seed,
        window_tightness: args.window_tightness,
        break_fraction: args.break_fraction,
    });
    let written = prepare(&PrepareSpec {
        out_dir: args.out.clone(),
        synthetic,
        vrp_files: args.vrp,
        window_tightness: args.window_tightness,
        break_fraction: args.break_fraction,
        seed: args.seed,
        force: args.force,
    })?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    println!("wrote {}", args.out.join("manifest.json").display());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<bool> {
    let mut cfg = load_train_config(args.config.as_ref())?;
    apply_train_flags(&mut cfg, &args);
    let mut spec = RunSpec::new(args.instances.clone(), args.method, args.out.clone());
    spec.seeds = parse_seeds(&args.seeds)?;
    spec.train = cfg;
    spec.jobs = args.jobs;
    spec.eval_episodes = args.eval_episodes;
    spec.model = args.model.clone();
    let outcomes = run_spec(&spec)?;
    Ok(print_outcomes(&outcomes))
}

fn write_report_files(report: &Report, dir: &PathBuf) -> Result<()> {
    atomic_write(&dir.join("results.csv"), &report.to_csv()?)?;
    atomic_write(&dir.join("curves.csv"), &report.curves_csv()?)?;
    println!("wrote {}", dir.join("results.csv").display());
    println!("wrote {}", dir.join("curves.csv").display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let report = build_report(&args.runs, &ReportOptions { oracle_limit: args.oracle_limit })?;
    print!("{}", report.render_text());
    write_report_files(&report, &args.out.unwrap_or(args.runs))?;
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<bool> {
    let methods: Vec<Method> = args
        .methods
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "dqn" => Ok(Method::Dqn),
            "llm-dqn-mock" => Ok(Method::LlmDqnMock),
            "llm-dqn-remote" => Ok(Method::LlmDqnRemote),
            other => Err(anyhow!("unknown method '{other}'")),
        })
        .collect::<Result<_>>()?;

    let mut cfg = load_train_config(args.config.as_ref())?;
    if let Some(episodes) = args.episodes {
        cfg.episodes = episodes;
    }
    let seeds = parse_seeds(&args.seeds)?;

    let mut all_ok = true;
    for &method in &methods {
        for row in ABLATION_ROWS {
            if !row.applies_to(method) {
                println!("skip  {method} {} (not applicable)", row.tag());
                continue;
            }
            let mut spec = RunSpec::new(args.instances.clone(), method, args.out.clone());
            spec.ablation = row;
            spec.seeds = seeds.clone();
            spec.train = cfg.clone();
            spec.jobs = args.jobs;
            spec.eval_episodes = args.eval_episodes;
            spec.model = args.model.clone();
            let outcomes = run_spec(&spec)?;
            all_ok &= print_outcomes(&outcomes);
        }
    }

    let report = build_report(&args.out, &ReportOptions::default())?;
    println!();
    print!("{}", render_ablation_matrix(&report, &methods));
    write_report_files(&report, &args.out)?;
    Ok(all_ok)
}

/// Six rows per method; the LLM rows of the plain baseline are dashed.
fn render_ablation_matrix(report: &Report, methods: &[Method]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<16} {:<18} {:>9} {:>8}\n", "method", "config", "gap%", "sat%"));
    for &method in methods {
        for row in ABLATION_ROWS {
            let name = method.to_string();
            let tag = row.tag();
            if !row.applies_to(method) {
                out.push_str(&format!("{name:<16} {tag:<18} {:>9} {:>8}\n", "—", "—"));
                continue;
            }
            match report.aggregates.iter().find(|a| a.method == name && a.config == tag) {
                Some(a) => out.push_str(&format!(
                    "{name:<16} {tag:<18} {:>9} {:>8.1}\n",
                    a.mean_gap.map(|g| format!("{g:.2}")).unwrap_or_else(|| "—".into()),
                    100.0 * a.satisfaction
                )),
                None => out.push_str(&format!("{name:<16} {tag:<18} {:>9} {:>8}\n", "?", "?")),
            }
        }
    }
    out
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.instance)
        .with_context(|| format!("reading {}", args.instance.display()))?;
    let inst = instance::deserialize(&text)?;
    let model = if args.distance_only { CostModel::distance_only() } else { CostModel::default() };
    let sol = milp::exact_solve(&inst, args.limit, &model)?;
    println!("instance:         {inst}");
    println!("optimal plan:     {:?}", sol.plan.routes);
    println!("distance:         {}", sol.distance);
    println!("generalized cost: {}", sol.generalized_cost);
    println!("routes:           {}", sol.route_count);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<bool> = match cli.cmd {
        Cmd::Prepare(args) => cmd_prepare(args).map(|_| true),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Report(args) => cmd_report(args).map(|_| true),
        Cmd::Ablate(args) => cmd_ablate(args),
        Cmd::Oracle(args) => cmd_oracle(args).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
