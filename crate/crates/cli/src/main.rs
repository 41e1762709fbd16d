use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mfpt_mdp::bench::{emit_heatmap, run_plan, summary_table, ExperimentPlan};
use mfpt_mdp::gridworld::{build_grid_mdp, build_random_mdp, grid_mdp_to_json, load_mdp, GridSpec};
use mfpt_mdp::mdp::greedy_policy;
use mfpt_mdp::solvers::{policy_landscape, PartitionHeuristic, SolverKind};
use mfpt_mdp::{solve, Policy, SolveResult, SolverConfig};

/// Value-iteration solvers with reachability (mean first passage time) and
/// prioritized-sweeping orderings.
#[derive(Parser)]
#[command(name = "mfpt-mdp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an MDP JSON file from a grid file or a random generator.
    Gen(GenArgs),
    /// Solve an MDP and write the result JSON.
    Solve(SolveArgs),
    /// Export the reachability landscape of a policy as CSV and PGM.
    Landscape(LandscapeArgs),
    /// Run an experiment plan.
    Bench(BenchArgs),
    /// Print the convergence trace of a result file.
    Trace(TraceArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Grid text file (`W H` header, then rows of `.#GS`).
    #[arg(long, conflicts_with = "random", required_unless_present = "random")]
    grid: Option<PathBuf>,
    /// Random sparse MDP: states, actions, successors per action.
    #[arg(long, num_args = 3, value_names = ["N", "A", "K"])]
    random: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Heuristic {
    H1,
    H2,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    mdp: PathBuf,
    /// One of: vi, vi-ps, d-vi-ps, mfpt-vi, d-mfpt-vi, d2-mfpt-vi, partial.
    #[arg(long, value_parser = parse_solver)]
    solver: SolverKind,
    /// Discount factor.
    #[arg(long, default_value_t = 0.95)]
    gamma: f64,
    /// Convergence threshold on the largest value change of a sweep.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Landscape recomputation period, in iterations.
    #[arg(long, default_value_t = 3)]
    period: usize,
    /// Partition count for the partial solver.
    #[arg(long, default_value_t = 1)]
    partitions: usize,
    /// Partition heuristic for the partial solver.
    #[arg(long, value_enum)]
    heuristic: Option<Heuristic>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LandscapeArgs {
    #[arg(long)]
    mdp: PathBuf,
    /// Policy file: a solve result or a JSON array of actions.
    #[arg(long, conflicts_with = "greedy", required_unless_present = "greedy")]
    policy: Option<PathBuf>,
    /// Use the greedy policy of the solved MDP (value iteration, defaults).
    #[arg(long)]
    greedy: bool,
    /// Output prefix; writes PREFIX.csv and PREFIX.pgm.
    #[arg(long)]
    out: PathBuf,
    /// Passage times at or above this are drawn black.
    #[arg(long, default_value_t = 100.0)]
    cap: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Output directory; overrides the plan's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run cells concurrently (timings become unreliable).
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    result: PathBuf,
}

fn parse_solver(s: &str) -> Result<SolverKind, String> {
    s.parse::<SolverKind>().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Landscape(a) => landscape(a),
        Command::Bench(a) => bench(a),
        Command::Trace(a) => trace(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn gen(a: GenArgs) -> anyhow::Result<()> {
    let json = if let Some(grid) = &a.grid {
        let spec = GridSpec::load(grid)?;
        let (mdp, map) = build_grid_mdp(&spec)?;
        grid_mdp_to_json(&mdp, &map)
    } else {
        let r = a.random.as_deref().unwrap_or_default();
        let &[n, actions, k] = r else {
            bail!("--random takes exactly three values: N A K");
        };
        build_random_mdp(n, actions, k, a.seed)?.to_json()
    };
    write(&a.out, &json)
}

fn solve_cmd(a: SolveArgs) -> anyhow::Result<()> {
    let (mdp, _) = load_mdp(&a.mdp)?;
    let cfg = SolverConfig {
        gamma: a.gamma,
        epsilon: a.epsilon,
        mfpt_period: a.period,
        partitions: a.partitions,
        partition_heuristic: match a.heuristic {
            None => PartitionHeuristic::None,
            Some(Heuristic::H1) => PartitionHeuristic::H1,
            Some(Heuristic::H2) => PartitionHeuristic::H2,
        },
        ..SolverConfig::default()
    };
    let result = solve(&mdp, a.solver, &cfg)?;
    println!("solver: {}", result.solver);
    println!("iterations: {}", result.iterations);
    println!("runtime_ms: {:.3}", result.ms_total);
    println!("converged: {}", result.converged);
    if let Some(out) = &a.out {
        write(out, &result.to_json())?;
    }
    Ok(())
}

fn read_policy(path: &Path) -> anyhow::Result<Policy> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(result) = SolveResult::from_json(&text) {
        return Ok(result.policy);
    }
    serde_json::from_str::<Policy>(&text)
        .with_context(|| format!("{}: neither a solve result nor an action array", path.display()))
}

fn landscape(a: LandscapeArgs) -> anyhow::Result<()> {
    let (mdp, map) = load_mdp(&a.mdp)?;
    let cfg = SolverConfig::default();
    let policy = match &a.policy {
        Some(path) => read_policy(path)?,
        None => {
            let result = solve(&mdp, SolverKind::Vi, &cfg)?;
            greedy_policy(&mdp, &result.values, cfg.gamma)
        }
    };
    if policy.len() != mdp.n_states() {
        bail!(
            "policy has {} entries but the MDP has {} states",
            policy.len(),
            mdp.n_states()
        );
    }
    let landscape = policy_landscape(&mdp, &policy, cfg.goal_landscape)?;
    let prefix = a.out.as_os_str().to_string_lossy().into_owned();
    write(Path::new(&format!("{prefix}.csv")), &landscape.to_csv(map.as_ref()))?;
    emit_heatmap(&landscape, map.as_ref(), a.cap, format!("{prefix}.pgm"))?;
    println!(
        "states: {}  unreachable: {}  max finite mu: {}",
        landscape.len(),
        landscape.n_unreachable(),
        landscape.max_finite().map_or("-".to_string(), |m| format!("{m:.3}"))
    );
    Ok(())
}

fn bench(a: BenchArgs) -> anyhow::Result<()> {
    let mut plan = ExperimentPlan::load(&a.plan)?;
    if a.parallel {
        plan.parallel = true;
    }
    let out = a
        .out
        .or_else(|| plan.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("bench-out"));
    let report = run_plan(&plan, Some(&out))?;
    print!("{}", summary_table(&report));
    println!("report: {}", out.join("report.json").display());
    Ok(())
}

fn trace(a: TraceArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&a.result)
        .with_context(|| format!("reading {}", a.result.display()))?;
    let result = SolveResult::from_json(&text)?;
    print!("{}", result.trace_csv());
    print!("{}", ascii_curve(&result));
    Ok(())
}

/// Log-scale bar per iteration, as `#` comment lines after the CSV.
fn ascii_curve(result: &SolveResult) -> String {
    const WIDTH: f64 = 60.0;
    let logs: Vec<f64> = result
        .trace
        .iter()
        .map(|r| r.delta_s.max(1e-12).log10())
        .collect();
    let Some(hi) = logs.iter().copied().reduce(f64::max) else {
        return String::new();
    };
    let lo = logs.iter().copied().fold(hi, f64::min).min(hi - 1.0);
    let mut out = format!("# delta_s, log scale from 1e{lo:.1} to 1e{hi:.1}\n");
    for (r, l) in result.trace.iter().zip(&logs) {
        let bar = ((l - lo) / (hi - lo) * WIDTH).round() as usize;
        out.push_str(&format!("# {:>5} {:<60} {:.3e}\n", r.iteration, "*".repeat(bar.max(1)), r.delta_s));
    }
    out
}
