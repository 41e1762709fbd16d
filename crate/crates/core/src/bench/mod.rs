//! Experiment harness: expands a plan into (instance, solver, repetition)
//! cells, runs them, and writes a JSON report plus per-cell traces and
//! landscape heatmaps.

mod heatmap;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{build_grid_mdp, build_random_mdp, Cell, GridMap, GridSpec, RandomGrid};
use crate::mdp::{greedy_policy, Mdp};
use crate::solvers::{
    policy_landscape, solve, PartitionHeuristic, SolveResult, SolverConfig, SolverKind,
};

pub use heatmap::{emit_heatmap, heatmap_pgm, pixel_value};

/// Environment variable capping the number of bench worker threads.
pub const THREADS_ENV: &str = "MFPT_MDP_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InstanceSpec {
    /// A grid text file; relative paths resolve against the plan file.
    GridFile { path: PathBuf },
    /// One random square grid per state-ladder rung.
    RandomGrid {
        obstacle_density: f64,
        #[serde(default)]
        goal: Option<Cell>,
    },
    /// One random sparse MDP per state-ladder rung.
    RandomMdp { n_actions: usize, successors: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub instances: Vec<InstanceSpec>,
    pub solvers: Vec<SolverKind>,
    /// Approximate state counts for generated instances.
    #[serde(default = "default_ladder")]
    pub state_sizes: Vec<usize>,
    /// Partition counts tried for the `partial` solver.
    #[serde(default = "default_partitions")]
    pub partitions: Vec<usize>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub config: SolverConfig,
    /// Run cells concurrently. Timings then interfere with each other.
    #[serde(default)]
    pub parallel: bool,
    #[serde(default = "default_true")]
    pub heatmaps: bool,
}

fn default_ladder() -> Vec<usize> {
    vec![900, 1600, 2500, 3600, 4900]
}

fn default_partitions() -> Vec<usize> {
    vec![1]
}

fn default_repetitions() -> usize {
    3
}

fn default_true() -> bool {
    true
}

impl ExperimentPlan {
    pub fn new(instances: Vec<InstanceSpec>, solvers: Vec<SolverKind>) -> Self {
        Self {
            instances,
            solvers,
            state_sizes: default_ladder(),
            partitions: default_partitions(),
            repetitions: default_repetitions(),
            seed: 0,
            output_dir: None,
            config: SolverConfig::default(),
            parallel: false,
            heatmaps: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.repetitions == 0 {
            return fail("repetitions must be at least 1");
        }
        if self.instances.is_empty() || self.solvers.is_empty() {
            return fail("plan needs at least one instance and one solver");
        }
        if self.state_sizes.is_empty() || self.state_sizes.contains(&0) {
            return fail("state_sizes must be a non-empty list of positive sizes");
        }
        if self.partitions.is_empty() || self.partitions.contains(&0) {
            return fail("partitions must be a non-empty list of positive counts");
        }
        if self.solvers.contains(&SolverKind::Partial)
            && self.config.partition_heuristic == PartitionHeuristic::None
        {
            return fail("the partial solver needs config.partition_heuristic h1 or h2");
        }
        self.config.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a plan and resolves relative grid paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut plan = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for inst in &mut plan.instances {
            if let InstanceSpec::GridFile { path: p } = inst {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(plan)
    }
}

/// A generated or loaded problem, shared read-only by all its cells.
pub struct Instance {
    pub name: String,
    pub mdp: Mdp,
    pub map: Option<GridMap>,
}

/// Builds every instance of the plan, deterministically from `plan.seed`.
pub fn build_instances(plan: &ExperimentPlan) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (i, spec) in plan.instances.iter().enumerate() {
        let seed = plan.seed.wrapping_add(i as u64);
        match spec {
            InstanceSpec::GridFile { path } => {
                let grid = GridSpec::load(path)?;
                let (mdp, map) = build_grid_mdp(&grid)?;
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| format!("grid{i}"));
                out.push(Instance {
                    name: stem,
                    mdp,
                    map: Some(map),
                });
            }
            InstanceSpec::RandomGrid {
                obstacle_density,
                goal,
            } => {
                for &size in &plan.state_sizes {
                    let side = ((size as f64).sqrt().round() as usize).max(1);
                    let grid = RandomGrid {
                        width: side,
                        height: side,
                        obstacle_density: *obstacle_density,
                        goal: *goal,
                        seed,
                    }
                    .generate()?;
                    let (mdp, map) = build_grid_mdp(&grid)?;
                    out.push(Instance {
                        name: format!("rgrid{i}-{size}"),
                        mdp,
                        map: Some(map),
                    });
                }
            }
            InstanceSpec::RandomMdp {
                n_actions,
                successors,
            } => {
                for &size in &plan.state_sizes {
                    out.push(Instance {
                        name: format!("rmdp{i}-{size}"),
                        mdp: build_random_mdp(size, *n_actions, *successors, seed)?,
                        map: None,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Fractions of accounted solve time per component; they sum to 1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentShares {
    pub bellman: f64,
    pub sort: f64,
    pub mfpt: f64,
    /// Bookkeeping outside the three timed phases.
    pub other: f64,
}

pub fn component_breakdown(result: &SolveResult) -> ComponentShares {
    let (mut bellman, mut sort, mut mfpt, mut other) = (0.0, 0.0, 0.0, 0.0);
    for r in &result.trace {
        bellman += r.ms_bellman;
        sort += r.ms_sort;
        mfpt += r.ms_mfpt;
        other += (r.ms_total - r.ms_bellman - r.ms_sort - r.ms_mfpt).max(0.0);
    }
    let total = bellman + sort + mfpt + other;
    if total <= 0.0 {
        return ComponentShares {
            bellman: 1.0,
            ..Default::default()
        };
    }
    ComponentShares {
        bellman: bellman / total,
        sort: sort / total,
        mfpt: mfpt / total,
        other: other / total,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellOutcome {
    Ok {
        iterations: usize,
        converged: bool,
        runtime_ms: f64,
        breakdown: ComponentShares,
        delta_trace: Vec<f64>,
    },
    Failed {
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub instance: String,
    pub n_states: usize,
    /// Solver name, with `-h1-p3` style suffixes for partial runs.
    pub solver: String,
    pub kind: SolverKind,
    pub partitions: usize,
    pub repetition: usize,
    #[serde(flatten)]
    pub outcome: CellOutcome,
}

impl CellReport {
    pub fn iterations(&self) -> Option<usize> {
        match self.outcome {
            CellOutcome::Ok { iterations, .. } => Some(iterations),
            CellOutcome::Failed { .. } => None,
        }
    }

    pub fn runtime_ms(&self) -> Option<f64> {
        match self.outcome {
            CellOutcome::Ok { runtime_ms, .. } => Some(runtime_ms),
            CellOutcome::Failed { .. } => None,
        }
    }
}

/// Median and range over the repetitions of one (instance, solver) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub instance: String,
    pub n_states: usize,
    pub solver: String,
    pub completed: usize,
    pub failed: usize,
    pub median_ms: Option<f64>,
    pub min_ms: Option<f64>,
    pub max_ms: Option<f64>,
    pub median_iterations: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub plan: ExperimentPlan,
    pub cells: Vec<CellReport>,
    pub aggregates: Vec<Aggregate>,
}

impl Report {
    pub fn aggregate(&self, instance: &str, solver: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.instance == instance && a.solver == solver)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

struct CellPlan {
    instance: usize,
    kind: SolverKind,
    label: String,
    config: SolverConfig,
    repetition: usize,
}

fn expand_cells(plan: &ExperimentPlan, instances: &[Instance]) -> Vec<CellPlan> {
    let mut cells = Vec::new();
    for (i, _) in instances.iter().enumerate() {
        for &kind in &plan.solvers {
            let variants: Vec<(String, SolverConfig)> = if kind == SolverKind::Partial {
                let h = match plan.config.partition_heuristic {
                    PartitionHeuristic::H2 => "h2",
                    _ => "h1",
                };
                plan.partitions
                    .iter()
                    .map(|&p| {
                        let cfg = SolverConfig {
                            partitions: p,
                            ..plan.config.clone()
                        };
                        (format!("partial-{h}-p{p}"), cfg)
                    })
                    .collect()
            } else {
                vec![(kind.name().to_string(), plan.config.clone())]
            };
            for (label, config) in variants {
                for repetition in 0..plan.repetitions {
                    cells.push(CellPlan {
                        instance: i,
                        kind,
                        label: label.clone(),
                        config: config.clone(),
                        repetition,
                    });
                }
            }
        }
    }
    cells
}

fn worker_count(plan: &ExperimentPlan, cells: usize) -> usize {
    if !plan.parallel {
        return 1;
    }
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(available);
    cap.min(cells).max(1)
}

/// Runs every cell of `plan`. Cell failures are recorded, not propagated;
/// only an invalid plan or instance errors out. When `out_dir` is given,
/// writes `report.json`, `{instance}_{solver}_{rep}.csv` traces and, for
/// grid instances under landscape-based solvers, PGM/CSV landscapes of the
/// initial and final greedy policies.
pub fn run_plan(plan: &ExperimentPlan, out_dir: Option<&Path>) -> Result<Report> {
    plan.validate()?;
    let instances = build_instances(plan)?;
    let cells = expand_cells(plan, &instances);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let slots: Vec<Mutex<Option<CellReport>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let io_error: Mutex<Option<Error>> = Mutex::new(None);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(cell) = cells.get(i) else { break };
        let inst = &instances[cell.instance];
        let (report, result) = run_cell(cell, inst);
        if let (Some(dir), Some(result)) = (out_dir, &result) {
            if let Err(e) = write_cell_files(dir, plan, cell, inst, result) {
                io_error.lock().expect("poisoned").get_or_insert(e);
            }
        }
        *slots[i].lock().expect("poisoned") = Some(report);
    };
    let workers = worker_count(plan, cells.len());
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(work);
            }
        });
    }
    if let Some(e) = io_error.into_inner().expect("poisoned") {
        return Err(e);
    }

    let cells: Vec<CellReport> = slots
        .into_iter()
        .map(|m| m.into_inner().expect("poisoned").expect("every cell ran"))
        .collect();
    let report = Report {
        plan: plan.clone(),
        aggregates: aggregate(&cells),
        cells,
    };
    if let Some(dir) = out_dir {
        let path = dir.join("report.json");
        std::fs::write(&path, report.to_json()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}

fn run_cell(cell: &CellPlan, inst: &Instance) -> (CellReport, Option<SolveResult>) {
    let mut report = CellReport {
        instance: inst.name.clone(),
        n_states: inst.mdp.n_states(),
        solver: cell.label.clone(),
        kind: cell.kind,
        partitions: cell.config.partitions,
        repetition: cell.repetition,
        outcome: CellOutcome::Failed {
            reason: String::new(),
        },
    };
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        solve(&inst.mdp, cell.kind, &cell.config)
    }));
    match outcome {
        Ok(Ok(result)) => {
            report.outcome = if result.converged {
                CellOutcome::Ok {
                    iterations: result.iterations,
                    converged: true,
                    runtime_ms: result.ms_total,
                    breakdown: component_breakdown(&result),
                    delta_trace: result.trace.iter().map(|r| r.delta_s).collect(),
                }
            } else {
                CellOutcome::Failed {
                    reason: format!(
                        "no convergence within {} iterations",
                        cell.config.max_iterations
                    ),
                }
            };
            (report, Some(result))
        }
        Ok(Err(e)) => {
            report.outcome = CellOutcome::Failed {
                reason: e.to_string(),
            };
            (report, None)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "solver panicked".into());
            report.outcome = CellOutcome::Failed { reason: msg };
            (report, None)
        }
    }
}

fn write_cell_files(
    dir: &Path,
    plan: &ExperimentPlan,
    cell: &CellPlan,
    inst: &Instance,
    result: &SolveResult,
) -> Result<()> {
    let stem = format!("{}_{}_{}", inst.name, cell.label, cell.repetition);
    let path = dir.join(format!("{stem}.csv"));
    std::fs::write(&path, result.trace_csv()).map_err(|e| Error::io(&path, e))?;

    let Some(map) = inst.map.as_ref() else {
        return Ok(());
    };
    if !(plan.heatmaps && cell.kind.uses_mfpt() && cell.repetition == 0) {
        return Ok(());
    }
    let initial = greedy_policy(&inst.mdp, &vec![0.0; inst.mdp.n_states()], cell.config.gamma);
    for (tag, policy) in [("initial", &initial), ("final", &result.policy)] {
        let landscape = policy_landscape(&inst.mdp, policy, cell.config.goal_landscape)?;
        let base = dir.join(format!("{stem}_{tag}"));
        emit_heatmap(&landscape, Some(map), cell.config.clip_cap, base.with_extension("pgm"))?;
        let csv = base.with_extension("csv");
        std::fs::write(&csv, landscape.to_csv(Some(map))).map_err(|e| Error::io(&csv, e))?;
    }
    Ok(())
}

fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

fn aggregate(cells: &[CellReport]) -> Vec<Aggregate> {
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for c in cells {
        let key = (c.instance.as_str(), c.solver.as_str());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(instance, solver)| {
            let group: Vec<&CellReport> = cells
                .iter()
                .filter(|c| c.instance == instance && c.solver == solver)
                .collect();
            let mut times: Vec<f64> = group.iter().filter_map(|c| c.runtime_ms()).collect();
            times.sort_by(f64::total_cmp);
            let mut iters: Vec<f64> =
                group.iter().filter_map(|c| c.iterations()).map(|i| i as f64).collect();
            iters.sort_by(f64::total_cmp);
            Aggregate {
                instance: instance.to_string(),
                n_states: group[0].n_states,
                solver: solver.to_string(),
                completed: times.len(),
                failed: group.len() - times.len(),
                median_ms: median(&times),
                min_ms: times.first().copied(),
                max_ms: times.last().copied(),
                median_iterations: median(&iters),
            }
        })
        .collect()
}

/// Plain-text table of the aggregates.
pub fn summary_table(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>7} {:<18} {:>6} {:>10} {:>10}",
        "instance", "states", "solver", "iters", "median_ms", "spread_ms"
    );
    for a in &report.aggregates {
        let fmt = |x: Option<f64>, prec: usize| {
            x.map_or_else(|| "-".to_string(), |v| format!("{v:.prec$}"))
        };
        let spread = a.min_ms.zip(a.max_ms).map(|(lo, hi)| hi - lo);
        let _ = writeln!(
            out,
            "{:<16} {:>7} {:<18} {:>6} {:>10} {:>10}",
            a.instance,
            a.n_states,
            a.solver,
            fmt(a.median_iterations, 0),
            fmt(a.median_ms, 2),
            fmt(spread, 2),
        );
    }
    out
}
