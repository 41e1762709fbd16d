//! Value-iteration solvers sharing one Gauss-Seidel sweep engine.
//!
//! Every solver runs outer iterations of the form "reorder, sweep, measure
//! `Δ_S`". They differ only in how the sweep order is chosen:
//!
//! | solver       | priority score (swept in descending order)                |
//! |--------------|-----------------------------------------------------------|
//! | `vi`         | none, natural state order                                 |
//! | `vi-ps`      | `π_t(s) = max(δ_t(s), max_a,s' T_a(s, s') δ_t(s'))`        |
//! | `d-vi-ps`    | `π_t - π_{t-1}`                                           |
//! | `mfpt-vi`    | `-μ` (reachability: nearest-to-goal first)                |
//! | `d-mfpt-vi`  | `μ_new - μ_old` between the last two landscapes           |
//! | `d2-mfpt-vi` | difference of the last two landscape deltas               |
//! | `partial`    | `d-mfpt-vi` scores, sweeping a growing set of partitions  |
//!
//! `δ_t` is the per-state value change of sweep `t`; `π_t` lifts it to the
//! predecessors whose backups it will move, as in queue-based prioritized
//! sweeping, and is accumulated during the sweep itself.
//!
//! Reorders are stable sorts of the previous order, so ties keep their
//! earlier relative position. Solvers lacking the history their score needs
//! fall back to the next lower-order score. Landscapes are recomputed every
//! `mfpt_period` iterations and the order stays frozen in between.

mod partition;
mod queue;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{
    greedy_policy, induced_chain, sweep_in_place, sweep_prioritized, validate, Mdp, Policy,
    ValueFunction,
};
use crate::mfpt::{extended_sub, mfpt_landscape_timed, Landscape};

pub use partition::{
    partition_h1, partition_h2, partition_h2_ordered, PartitionHeuristic, Partitioning,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Vi,
    ViPs,
    DViPs,
    MfptVi,
    DMfptVi,
    D2MfptVi,
    /// D-MFPT-VI with partial-space sweeping (heuristic from the config).
    Partial,
}

impl SolverKind {
    pub const ALL: [SolverKind; 7] = [
        SolverKind::Vi,
        SolverKind::ViPs,
        SolverKind::DViPs,
        SolverKind::MfptVi,
        SolverKind::DMfptVi,
        SolverKind::D2MfptVi,
        SolverKind::Partial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Vi => "vi",
            SolverKind::ViPs => "vi-ps",
            SolverKind::DViPs => "d-vi-ps",
            SolverKind::MfptVi => "mfpt-vi",
            SolverKind::DMfptVi => "d-mfpt-vi",
            SolverKind::D2MfptVi => "d2-mfpt-vi",
            SolverKind::Partial => "partial",
        }
    }

    pub fn uses_mfpt(self) -> bool {
        matches!(
            self,
            SolverKind::MfptVi | SolverKind::DMfptVi | SolverKind::D2MfptVi | SolverKind::Partial
        )
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown solver {s:?}; valid: {}",
                    SolverKind::ALL.map(SolverKind::name).join(", ")
                ))
            })
    }
}

/// Prioritized sweeping flavour.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsMode {
    /// Full sweeps ordered by the previous iteration's value changes.
    #[default]
    Sweep,
    /// Predecessor-driven priority queue with an insertion threshold.
    Queue,
}

/// How differential scores are ranked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaOrdering {
    /// Descending signed difference; the largest decreases go last.
    #[default]
    Signed,
    /// Descending absolute difference.
    Magnitude,
}

/// Which landscape drives reachability ordering when an MDP has several
/// goals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoalLandscape {
    /// First passage to any goal.
    #[default]
    Union,
    /// One landscape per goal, max-normalized and min-combined.
    PerGoal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub gamma: f64,
    pub epsilon: f64,
    /// Recompute the landscape every this many iterations.
    pub mfpt_period: usize,
    pub clip_cap: f64,
    pub partitions: usize,
    pub partition_heuristic: PartitionHeuristic,
    /// Partitions activated per landscape recomputation.
    pub growth_schedule: usize,
    /// Queue-mode insertion threshold; `None` means `epsilon / 10`.
    pub ps_threshold: Option<f64>,
    pub max_iterations: usize,
    pub seed: u64,
    pub ps_mode: PsMode,
    pub delta_ordering: DeltaOrdering,
    pub goal_landscape: GoalLandscape,
    pub record_landscapes: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            epsilon: 0.1,
            mfpt_period: 3,
            clip_cap: 100.0,
            partitions: 1,
            partition_heuristic: PartitionHeuristic::None,
            growth_schedule: 1,
            ps_threshold: None,
            max_iterations: 10_000,
            seed: 0,
            ps_mode: PsMode::Sweep,
            delta_ordering: DeltaOrdering::Signed,
            goal_landscape: GoalLandscape::Union,
            record_landscapes: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.epsilon > 0.0) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.mfpt_period == 0 || self.partitions == 0 || self.growth_schedule == 0 {
            return fail("mfpt_period, partitions and growth_schedule must be positive".into());
        }
        if !(self.clip_cap > 0.0) {
            return fail(format!("clip_cap must be positive, got {}", self.clip_cap));
        }
        if self.ps_threshold.is_some_and(|t| !(t >= 0.0)) {
            return fail("ps_threshold must be non-negative".into());
        }
        if self.max_iterations == 0 {
            return fail("max_iterations must be positive".into());
        }
        Ok(())
    }

    pub fn ps_threshold(&self) -> f64 {
        self.ps_threshold.unwrap_or(self.epsilon / 10.0)
    }
}

/// Timing and progress of one outer iteration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Largest value change over the swept states.
    pub delta_s: f64,
    pub states_swept: usize,
    pub full_sweep: bool,
    pub ms_bellman: f64,
    pub ms_sort: f64,
    /// Landscape recomputation, including the linear solve.
    pub ms_mfpt: f64,
    pub ms_linear_solve: f64,
    pub ms_total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSnapshot {
    pub iteration: usize,
    pub landscape: Landscape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub solver: SolverKind,
    pub config: SolverConfig,
    pub iterations: usize,
    pub converged: bool,
    pub ms_total: f64,
    pub trace: Vec<IterationRecord>,
    pub policy: Policy,
    pub values: ValueFunction,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub landscapes: Vec<LandscapeSnapshot>,
}

impl SolveResult {
    pub fn final_delta(&self) -> Option<f64> {
        self.trace.last().map(|r| r.delta_s)
    }

    /// `iteration,delta_s,ms_bellman,ms_sort,ms_mfpt` rows.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,delta_s,ms_bellman,ms_sort,ms_mfpt\n");
        for r in &self.trace {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iteration, r.delta_s, r.ms_bellman, r.ms_sort, r.ms_mfpt
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Stable descending reorder of `order` by `scores`.
fn reorder_desc(order: &mut [usize], scores: &[f64], keyed: &mut Vec<(u64, usize)>) {
    keyed.clear();
    keyed.extend(order.iter().map(|&s| (descending_key(scores[s]), s)));
    keyed.sort_by_key(|e| e.0);
    for (slot, e) in order.iter_mut().zip(keyed.iter()) {
        *slot = e.1;
    }
}

/// Order-reversing integer encoding: larger `x` gives a smaller key.
/// NaN never occurs here since scores are finite or infinite differences.
fn descending_key(x: f64) -> u64 {
    let bits = x.to_bits();
    let ascending = if bits >> 63 == 1 { !bits } else { bits | 1 << 63 };
    !ascending
}

fn differential_key(x: f64, mode: DeltaOrdering) -> f64 {
    match mode {
        DeltaOrdering::Signed => x,
        DeltaOrdering::Magnitude => x.abs(),
    }
}

/// Solves `mdp` with the given solver variant.
pub fn solve(mdp: &Mdp, kind: SolverKind, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let report = validate(mdp);
    if !report.is_valid() {
        return Err(Error::InvalidMdp(report.violations));
    }
    if kind == SolverKind::ViPs && cfg.ps_mode == PsMode::Queue {
        return Ok(queue::solve_queue(mdp, cfg));
    }
    Ok(Engine::new(mdp, kind, cfg).run())
}

pub fn solve_vi(mdp: &Mdp, cfg: &SolverConfig) -> Result<SolveResult> {
    solve(mdp, SolverKind::Vi, cfg)
}

pub fn solve_vi_ps(mdp: &Mdp, cfg: &SolverConfig) -> Result<SolveResult> {
    solve(mdp, SolverKind::ViPs, cfg)
}

pub fn solve_d_vi_ps(mdp: &Mdp, cfg: &SolverConfig) -> Result<SolveResult> {
    solve(mdp, SolverKind::DViPs, cfg)
}

pub fn solve_mfpt_vi(mdp: &Mdp, cfg: &SolverConfig) -> Result<SolveResult> {
    solve(mdp, SolverKind::MfptVi, cfg)
}

pub fn solve_d_mfpt_vi(mdp: &Mdp, cfg: &SolverConfig) -> Result<SolveResult> {
    solve(mdp, SolverKind::DMfptVi, cfg)
}

pub fn solve_d2_mfpt_vi(mdp: &Mdp, cfg: &SolverConfig) -> Result<SolveResult> {
    solve(mdp, SolverKind::D2MfptVi, cfg)
}

/// Partial-space D-MFPT-VI; `cfg.partition_heuristic` must be H1 or H2.
pub fn solve_partial(mdp: &Mdp, cfg: &SolverConfig) -> Result<SolveResult> {
    if cfg.partition_heuristic == PartitionHeuristic::None {
        return Err(Error::Config(
            "partial sweeping needs partition_heuristic h1 or h2".into(),
        ));
    }
    solve(mdp, SolverKind::Partial, cfg)
}

/// Landscape computed for the greedy policy of `values`.
pub fn policy_landscape(
    mdp: &Mdp,
    policy: &Policy,
    goal_landscape: GoalLandscape,
) -> Result<Landscape> {
    compute_landscape(mdp, policy, goal_landscape).map(|(l, _)| l)
}

fn compute_landscape(
    mdp: &Mdp,
    policy: &Policy,
    goal_landscape: GoalLandscape,
) -> Result<(Landscape, Duration)> {
    let chain = induced_chain(mdp, policy)?;
    match goal_landscape {
        GoalLandscape::PerGoal if mdp.goals().len() > 1 => {
            let start = Instant::now();
            let sets: Vec<Vec<usize>> = mdp.goals().iter().map(|&g| vec![g]).collect();
            let l = crate::mfpt::multi_goal_landscape(&chain, &sets)?;
            Ok((l, start.elapsed()))
        }
        _ => {
            let (l, stats) = mfpt_landscape_timed(&chain, mdp.goals())?;
            Ok((l, stats.linear_solve))
        }
    }
}

struct Engine<'a> {
    mdp: &'a Mdp,
    kind: SolverKind,
    cfg: &'a SolverConfig,
    values: Vec<f64>,
    deltas: Vec<f64>,
    policy: Vec<usize>,
    order: Vec<usize>,
    /// Sweep priorities of the last two iterations, newest first.
    delta_history: VecDeque<Vec<f64>>,
    preds: Vec<Vec<(usize, usize, f64)>>,
    priority: Vec<f64>,
    landscape: Option<Landscape>,
    /// `μ_new - μ_old` of the two newest landscapes.
    landscape_delta: Option<Vec<f64>>,
    /// Difference of the two newest landscape deltas.
    landscape_second: Option<Vec<f64>>,
    partitioning: Option<Partitioning>,
    /// Partitions granted so far; capped by the non-empty count at sweep time.
    granted_partitions: usize,
    scores: Vec<f64>,
    scratch: Vec<(u64, usize)>,
}

impl<'a> Engine<'a> {
    fn new(mdp: &'a Mdp, kind: SolverKind, cfg: &'a SolverConfig) -> Self {
        let n = mdp.n_states();
        Self {
            mdp,
            kind,
            cfg,
            values: vec![0.0; n],
            deltas: vec![0.0; n],
            policy: vec![0; n],
            order: (0..n).collect(),
            delta_history: VecDeque::with_capacity(3),
            preds: if matches!(kind, SolverKind::ViPs | SolverKind::DViPs) {
                mdp.predecessors()
            } else {
                Vec::new()
            },
            priority: Vec::new(),
            landscape: None,
            landscape_delta: None,
            landscape_second: None,
            partitioning: None,
            granted_partitions: 0,
            scores: vec![0.0; n],
            scratch: Vec::new(),
        }
    }

    fn run(mut self) -> SolveResult {
        let started = Instant::now();
        let n = self.mdp.n_states();
        let mut trace = Vec::new();
        let mut snapshots = Vec::new();
        let mut converged = false;
        let mut force_full = false;
        let mut sweep_list: Vec<usize> = Vec::with_capacity(n);

        for t in 0..self.cfg.max_iterations {
            let iter_start = Instant::now();
            let mut rec = IterationRecord {
                iteration: t,
                ..Default::default()
            };

            if self.kind.uses_mfpt() {
                if t % self.cfg.mfpt_period == 0 {
                    let mfpt_start = Instant::now();
                    let greedy = greedy_policy(self.mdp, &self.values, self.cfg.gamma);
                    let (landscape, linear) =
                        compute_landscape(self.mdp, &greedy, self.cfg.goal_landscape)
                            .expect("validated MDP yields a valid induced chain");
                    if self.cfg.record_landscapes {
                        snapshots.push(LandscapeSnapshot {
                            iteration: t,
                            landscape: landscape.clone(),
                        });
                    }
                    self.push_landscape(landscape);
                    rec.ms_mfpt = ms(mfpt_start.elapsed());
                    rec.ms_linear_solve = ms(linear);

                    let sort_start = Instant::now();
                    self.reorder_by_reachability();
                    if self.kind == SolverKind::Partial {
                        self.repartition();
                    }
                    rec.ms_sort = ms(sort_start.elapsed());
                }
            } else if self.kind != SolverKind::Vi && !self.delta_history.is_empty() {
                let sort_start = Instant::now();
                self.reorder_by_value_change();
                rec.ms_sort = ms(sort_start.elapsed());
            }

            let bellman_start = Instant::now();
            let partial = self.kind == SolverKind::Partial && !force_full;
            let swept: &[usize] = if partial {
                sweep_list.clear();
                let parts = self.partitioning.as_ref().expect("partitioned at t = 0");
                sweep_list.extend(
                    parts
                        .parts
                        .iter()
                        .filter(|p| !p.is_empty())
                        .take(self.granted_partitions)
                        .flatten(),
                );
                if sweep_list.len() < n {
                    self.deltas.iter_mut().for_each(|d| *d = 0.0);
                }
                &sweep_list
            } else {
                &self.order
            };
            let prioritized = matches!(self.kind, SolverKind::ViPs | SolverKind::DViPs);
            let delta = if prioritized {
                self.priority.clear();
                self.priority.resize(n, 0.0);
                sweep_prioritized(
                    self.mdp,
                    &mut self.values,
                    self.cfg.gamma,
                    swept,
                    &mut self.deltas,
                    &mut self.policy,
                    &self.preds,
                    &mut self.priority,
                )
            } else {
                sweep_in_place(
                    self.mdp,
                    &mut self.values,
                    self.cfg.gamma,
                    swept,
                    &mut self.deltas,
                    &mut self.policy,
                )
            };
            rec.states_swept = swept.len();
            rec.full_sweep = swept.len() == n;
            rec.ms_bellman = ms(bellman_start.elapsed());
            rec.delta_s = delta;

            if prioritized {
                let mut slot = if self.delta_history.len() == 2 {
                    self.delta_history.pop_back().expect("len 2")
                } else {
                    vec![0.0; n]
                };
                slot.copy_from_slice(&self.priority);
                self.delta_history.push_front(slot);
            }

            rec.ms_total = ms(iter_start.elapsed());
            let full = rec.full_sweep;
            trace.push(rec);
            if delta <= self.cfg.epsilon {
                if full {
                    converged = true;
                    break;
                }
                // verify on the full space before declaring convergence
                force_full = true;
            } else {
                force_full = false;
            }
        }

        let policy = greedy_policy(self.mdp, &self.values, self.cfg.gamma);
        SolveResult {
            solver: self.kind,
            config: self.cfg.clone(),
            iterations: trace.len(),
            converged,
            ms_total: ms(started.elapsed()),
            trace,
            policy,
            values: ValueFunction(self.values),
            landscapes: snapshots,
        }
    }

    fn push_landscape(&mut self, landscape: Landscape) {
        if let Some(prev) = &self.landscape {
            let delta: Vec<f64> = landscape
                .mu
                .iter()
                .zip(&prev.mu)
                .map(|(&new, &old)| extended_sub(new, old))
                .collect();
            self.landscape_second = self.landscape_delta.as_ref().map(|old| {
                delta
                    .iter()
                    .zip(old)
                    .map(|(&new, &old)| extended_sub(new, old))
                    .collect()
            });
            self.landscape_delta = Some(delta);
        }
        self.landscape = Some(landscape);
    }

    /// Sorts by `-μ`, then refines by each available higher-order key, so a
    /// differential key only reorders states it actually separates.
    fn reorder_by_reachability(&mut self) {
        let mode = self.cfg.delta_ordering;
        let depth = match self.kind {
            SolverKind::MfptVi => 0,
            SolverKind::DMfptVi | SolverKind::Partial => 1,
            _ => 2,
        };
        let mu = &self.landscape.as_ref().expect("landscape pushed").mu;
        for (s, &m) in self.scores.iter_mut().zip(mu) {
            *s = -m;
        }
        reorder_desc(&mut self.order, &self.scores, &mut self.scratch);
        let keys = [&self.landscape_delta, &self.landscape_second];
        for key in keys.into_iter().take(depth).flatten() {
            for (s, &x) in self.scores.iter_mut().zip(key) {
                *s = differential_key(x, mode);
            }
            reorder_desc(&mut self.order, &self.scores, &mut self.scratch);
        }
    }

    fn reorder_by_value_change(&mut self) {
        self.scores.copy_from_slice(&self.delta_history[0]);
        reorder_desc(&mut self.order, &self.scores, &mut self.scratch);
        if self.kind == SolverKind::DViPs && self.delta_history.len() == 2 {
            let mode = self.cfg.delta_ordering;
            let (newest, older) = (&self.delta_history[0], &self.delta_history[1]);
            for ((s, &a), &b) in self.scores.iter_mut().zip(newest).zip(older) {
                *s = differential_key(a - b, mode);
            }
            reorder_desc(&mut self.order, &self.scores, &mut self.scratch);
        }
    }

    fn repartition(&mut self) {
        let p = self.cfg.partitions;
        let parts = match self.cfg.partition_heuristic {
            PartitionHeuristic::H2 => partition_h2_ordered(&self.order, &self.scores, p),
            _ => partition_h1(&self.order, p),
        };
        self.granted_partitions = if self.partitioning.is_none() {
            1
        } else {
            self.granted_partitions + self.cfg.growth_schedule
        };
        self.partitioning = Some(parts);
    }
}
