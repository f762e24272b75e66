use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lowimpact::penalty::measure_names;
use lowimpact::planner::SearchConfig;
use lowimpact::report::{self, MuChoice, RunOptions};
use lowimpact::scenario::builtin::with_mutual_observation;
use lowimpact::scenario::{builtin_names, parse_mu_grid, Scenario};
use lowimpact::Result;

/// Penalized planning with impact measures over small stochastic worlds.
#[derive(Debug, Parser)]
#[command(name = "lowimpact", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize the planner agent at one mu (or a grid) and write CSV.
    Run(RunArgs),
    /// Like `run`, defaulting to the scenario's mu grid.
    Sweep(RunArgs),
    /// Evaluate one policy under several measures.
    Compare(CompareArgs),
    /// Conditional optima of every agent and their joint outcome.
    Joint(JointArgs),
    /// List built-in scenarios and measure names.
    List,
    /// Print a scenario as TOML.
    Export {
        #[arg(long)]
        scenario: String,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Built-in name or path to a TOML scenario file.
    #[arg(long)]
    scenario: String,
    /// Monte Carlo samples of the detectability measure.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Search {
    /// Largest policy space searched exhaustively.
    #[arg(long)]
    budget: Option<u64>,
    /// Hill-climbing restarts.
    #[arg(long)]
    restarts: Option<usize>,
    /// Mutations per restart.
    #[arg(long)]
    mutations: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    search: Search,
    #[arg(long)]
    measure: Option<String>,
    /// none, output[:<channel>] or announce:<event>.
    #[arg(long)]
    condition: Option<String>,
    #[arg(long, conflicts_with = "mu_grid")]
    mu: Option<f64>,
    /// lo:hi:steps, log-spaced.
    #[arg(long)]
    mu_grid: Option<String>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated or repeated; every measure if absent.
    #[arg(long, value_delimiter = ',')]
    measure: Vec<String>,
    /// A named policy of the scenario.
    #[arg(long, default_value = "null")]
    policy: String,
    #[arg(long)]
    condition: Option<String>,
}

#[derive(Debug, Args)]
struct JointArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    search: Search,
    #[arg(long)]
    measure: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    /// Let every agent see the others' activation flags.
    #[arg(long)]
    mutual_observation: bool,
}

fn load(common: &Common) -> Result<Scenario> {
    let mut s = Scenario::load(&common.scenario)?;
    if let Some(n) = common.samples {
        s = s.with_samples(n)?;
    }
    if let Some(seed) = common.seed {
        s = s.with_seed(seed);
    }
    Ok(s)
}

fn search_config(s: &Scenario, args: &Search) -> SearchConfig {
    let base = s.planner().search;
    SearchConfig {
        budget: args.budget.map_or(base.budget, u128::from),
        restarts: args.restarts.unwrap_or(base.restarts),
        mutations: args.mutations.unwrap_or(base.mutations),
        ..base
    }
}

fn emit(out: &Option<PathBuf>, csv: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, csv)?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}

fn run(args: RunArgs, sweep: bool) -> Result<()> {
    let s = load(&args.common)?;
    let mu = match (args.mu, &args.mu_grid) {
        (Some(mu), _) => MuChoice::Explicit(vec![mu]),
        (None, Some(g)) => MuChoice::Explicit(parse_mu_grid(g)?),
        (None, None) if sweep => MuChoice::Grid,
        (None, None) => MuChoice::Default,
    };
    let opts = RunOptions {
        measure: args.measure,
        condition: args.condition,
        mu,
        search: Some(search_config(&s, &args.search)),
    };
    let r = report::run(&s, &opts)?;
    for line in r.warnings.iter().chain(&r.notes) {
        eprintln!("{line}");
    }
    emit(&args.common.out, &r.csv())
}

fn compare(args: CompareArgs) -> Result<()> {
    let s = load(&args.common)?;
    let r = report::compare(&s, &args.measure, &args.policy, args.condition.as_deref())?;
    for line in &r.warnings {
        eprintln!("{line}");
    }
    emit(&args.common.out, &r.csv())
}

fn joint(args: JointArgs) -> Result<()> {
    let mut s = load(&args.common)?;
    if args.mutual_observation {
        s = Scenario::from_file(with_mutual_observation(s.file().clone()), None)?;
        if let Some(n) = args.common.samples {
            s = s.with_samples(n)?;
        }
        if let Some(seed) = args.common.seed {
            s = s.with_seed(seed);
        }
    }
    let search = search_config(&s, &args.search);
    let r = report::joint(&s, args.measure.as_deref(), args.mu, Some(search))?;
    eprintln!("p_success={}", report::number(r.p_success));
    emit(&args.common.out, &r.csv())
}

fn list() -> Result<()> {
    let mut out = String::from("scenarios:\n");
    for name in builtin_names() {
        let s = Scenario::load(name)?;
        out.push_str(&format!("  {name}  {}\n", s.description()));
    }
    out.push_str("measures:\n");
    for m in measure_names() {
        out.push_str(&format!("  {m}\n"));
    }
    std::io::stdout().write_all(out.as_bytes())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a, false),
        Command::Sweep(a) => run(a, true),
        Command::Compare(a) => compare(a),
        Command::Joint(a) => joint(a),
        Command::List => list(),
        Command::Export { scenario } => Scenario::load(&scenario)
            .and_then(|s| s.to_toml())
            .and_then(|t| Ok(std::io::stdout().write_all(t.as_bytes())?)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.class() as u8)
        }
    }
}
