//! Reachability landscapes: mean first passage times (MFPT) from every state
//! of a Markov chain to a goal set.
//!
//! For goal set `G` and transient states `T`, the MFPT vector solves
//! `(P_TT - I) mu = -1` with `mu = 0` on `G`. States that reach a
//! non-absorbing trap with positive probability have an infinite MFPT and
//! carry the `f64::INFINITY` sentinel; they are removed from the linear
//! system before solving.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::GridMap;
use crate::linalg::{lu_factor, lu_solve, DenseMatrix, DEFAULT_PIVOT_TOL};
use crate::mdp::MarkovChain;

/// Unreachable marker stored in [`Landscape::mu`].
pub const UNREACHABLE: f64 = f64::INFINITY;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    /// Per-state MFPT; [`UNREACHABLE`] (serialized as `null`) when the goal
    /// set is not reached almost surely.
    #[serde(with = "sentinel_vec")]
    pub mu: Vec<f64>,
    pub goals: Vec<usize>,
}

impl Landscape {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn max_finite(&self) -> Option<f64> {
        self.mu
            .iter()
            .copied()
            .filter(|m| m.is_finite())
            .reduce(f64::max)
    }

    pub fn n_unreachable(&self) -> usize {
        self.mu.iter().filter(|m| !m.is_finite()).count()
    }

    /// `state,row,col,mu` lines; `row`/`col` are blank without a grid map and
    /// unreachable states print `inf`.
    pub fn to_csv(&self, map: Option<&GridMap>) -> String {
        let mut out = String::from("state,row,col,mu\n");
        for (s, &m) in self.mu.iter().enumerate() {
            let (r, c) = match map {
                Some(map) => {
                    let cell = map.cell(s);
                    (cell.row.to_string(), cell.col.to_string())
                }
                None => (String::new(), String::new()),
            };
            if m.is_finite() {
                let _ = writeln!(out, "{s},{r},{c},{m}");
            } else {
                let _ = writeln!(out, "{s},{r},{c},inf");
            }
        }
        out
    }
}

/// Componentwise `new - old` between two landscapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeDelta {
    #[serde(with = "sentinel_vec")]
    pub delta: Vec<f64>,
}

/// `a - b` over the extended reals with `inf - inf = 0`.
#[inline]
pub fn extended_sub(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        a - b
    }
}

fn check_goals(n: usize, goals: &[usize]) -> Result<()> {
    if goals.is_empty() {
        return Err(Error::Config("goal set is empty".into()));
    }
    if let Some(&g) = goals.iter().find(|&&g| g >= n) {
        return Err(Error::StateOutOfRange {
            index: g,
            n_states: n,
        });
    }
    Ok(())
}

/// Marks states from which the goal set is reached with probability one.
///
/// A state fails iff it can reach (along positive-probability edges) some
/// state that cannot reach the goal set.
fn almost_sure_reach(chain: &MarkovChain, is_goal: &[bool]) -> Vec<bool> {
    let n = chain.n_states();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        if is_goal[i] {
            continue;
        }
        for &(k, p) in chain.row(i) {
            if p > 0.0 && k != i {
                preds[k].push(i);
            }
        }
    }
    let backward = |seeds: &mut dyn Iterator<Item = usize>, mark: &mut Vec<bool>| {
        let mut queue: VecDeque<usize> = VecDeque::new();
        for s in seeds {
            if !mark[s] {
                mark[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(s) = queue.pop_front() {
            for &p in &preds[s] {
                if !mark[p] {
                    mark[p] = true;
                    queue.push_back(p);
                }
            }
        }
    };
    let mut can_reach = vec![false; n];
    backward(&mut (0..n).filter(|&s| is_goal[s]), &mut can_reach);
    let mut doomed = vec![false; n];
    backward(&mut (0..n).filter(|&s| !can_reach[s]), &mut doomed);
    doomed.iter().map(|d| !d).collect()
}

/// Outcome of a landscape solve, with the work split used by instrumentation.
pub(crate) struct SolveStats {
    pub linear_solve: std::time::Duration,
}

/// Mean first passage times to the goal set.
pub fn mfpt_landscape(chain: &MarkovChain, goals: &[usize]) -> Result<Landscape> {
    mfpt_landscape_timed(chain, goals).map(|(l, _)| l)
}

pub(crate) fn mfpt_landscape_timed(
    chain: &MarkovChain,
    goals: &[usize],
) -> Result<(Landscape, SolveStats)> {
    let n = chain.n_states();
    check_goals(n, goals)?;
    let mut goals = goals.to_vec();
    goals.sort_unstable();
    goals.dedup();
    let mut is_goal = vec![false; n];
    for &g in &goals {
        is_goal[g] = true;
    }

    let mut mu = vec![UNREACHABLE; n];
    for &g in &goals {
        mu[g] = 0.0;
    }
    let sure = almost_sure_reach(chain, &is_goal);
    let transient: Vec<usize> = (0..n).filter(|&s| !is_goal[s] && sure[s]).collect();
    let mut stats = SolveStats {
        linear_solve: std::time::Duration::ZERO,
    };
    if transient.is_empty() {
        return Ok((Landscape { mu, goals }, stats));
    }

    let mut index = vec![usize::MAX; n];
    for (i, &s) in transient.iter().enumerate() {
        index[s] = i;
    }
    let m = transient.len();
    let mut a = DenseMatrix::zeros(m, m);
    for (i, &s) in transient.iter().enumerate() {
        a[(i, i)] -= 1.0;
        for &(k, p) in chain.row(s) {
            // goal columns drop out (mu = 0); doomed successors cannot occur here
            if index[k] != usize::MAX {
                a[(i, index[k])] += p;
            }
        }
    }
    let started = std::time::Instant::now();
    let factor = lu_factor(a, DEFAULT_PIVOT_TOL)?;
    let solution = lu_solve(&factor, &vec![-1.0; m]);
    stats.linear_solve = started.elapsed();
    match solution {
        Ok(x) => {
            for (i, &s) in transient.iter().enumerate() {
                // numerically broken entries fall back to the sentinel
                if x[i].is_finite() && x[i] >= 0.0 {
                    mu[s] = x[i];
                }
            }
        }
        // near-trapping loops whose escape probability vanishes numerically
        Err(Error::SingularSystem) => {}
        Err(e) => return Err(e),
    }
    Ok((Landscape { mu, goals }, stats))
}

/// The full `n x n` system `(p - I) mu = -1` with column `goal` dropped,
/// solved without removing the goal row. Transient entries agree with
/// [`mfpt_landscape`]; the goal entry is the mean recurrence time of the
/// goal (1 for an absorbing goal) rather than zero. Requires every state to
/// reach the goal almost surely.
pub fn mfpt_full_system(chain: &MarkovChain, goal: usize) -> Result<Vec<f64>> {
    let n = chain.n_states();
    check_goals(n, &[goal])?;
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] -= 1.0;
        for &(k, p) in chain.row(i) {
            if k != goal {
                a[(i, k)] += p;
            }
        }
    }
    let f = lu_factor(a, DEFAULT_PIVOT_TOL)?;
    lu_solve(&f, &vec![-1.0; n])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassageEstimate {
    /// Mean first passage time over completed trials (`inf` if none).
    pub mean: f64,
    pub std_error: f64,
    pub completed: u64,
    /// Trials that hit `max_steps` without reaching a goal.
    pub censored: u64,
}

/// Monte-Carlo first-passage simulation from `start` to the goal set.
pub fn simulate_mfpt(
    chain: &MarkovChain,
    goals: &[usize],
    start: usize,
    trials: u64,
    max_steps: u64,
    seed: u64,
) -> Result<PassageEstimate> {
    let n = chain.n_states();
    check_goals(n, goals)?;
    if start >= n {
        return Err(Error::StateOutOfRange {
            index: start,
            n_states: n,
        });
    }
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let mut is_goal = vec![false; n];
    for &g in goals {
        is_goal[g] = true;
    }
    let cumulative: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let mut acc = 0.0;
            chain
                .row(i)
                .iter()
                .filter(|(_, p)| *p > 0.0)
                .map(|&(k, p)| {
                    acc += p;
                    (k, acc)
                })
                .collect()
        })
        .collect();

    let mut rng = SmallRng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    let (mut completed, mut censored) = (0u64, 0u64);
    for _ in 0..trials {
        let mut s = start;
        let mut steps = 0u64;
        while !is_goal[s] && steps < max_steps {
            let row = &cumulative[s];
            let u: f64 = rng.random::<f64>() * row.last().map_or(1.0, |x| x.1);
            s = row
                .iter()
                .find(|&&(_, c)| u < c)
                .or(row.last())
                .map_or(s, |&(k, _)| k);
            steps += 1;
        }
        if is_goal[s] {
            completed += 1;
            let t = steps as f64;
            sum += t;
            sum_sq += t * t;
        } else {
            censored += 1;
        }
    }
    if completed == 0 {
        return Ok(PassageEstimate {
            mean: UNREACHABLE,
            std_error: 0.0,
            completed,
            censored,
        });
    }
    let c = completed as f64;
    let mean = sum / c;
    let var = if completed > 1 {
        ((sum_sq - c * mean * mean) / (c - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(PassageEstimate {
        mean,
        std_error: (var / c).sqrt(),
        completed,
        censored,
    })
}

/// One landscape per goal set, each divided by its largest finite value,
/// combined by per-state minimum. A single goal set returns its raw
/// landscape.
pub fn multi_goal_landscape(chain: &MarkovChain, goal_sets: &[Vec<usize>]) -> Result<Landscape> {
    match goal_sets {
        [] => Err(Error::Config("at least one goal set is required".into())),
        [only] => mfpt_landscape(chain, only),
        sets => {
            let mut combined = vec![UNREACHABLE; chain.n_states()];
            let mut goals = Vec::new();
            for set in sets {
                let mut l = mfpt_landscape(chain, set)?;
                if let Some(scale) = l.max_finite().filter(|&m| m > 0.0) {
                    for m in &mut l.mu {
                        *m /= scale;
                    }
                }
                for (c, m) in combined.iter_mut().zip(&l.mu) {
                    *c = c.min(*m);
                }
                goals.extend(l.goals);
            }
            goals.sort_unstable();
            goals.dedup();
            Ok(Landscape {
                mu: combined,
                goals,
            })
        }
    }
}

/// `min(mu, cap)` per state; unreachable states map to `cap`.
pub fn clip_landscape(landscape: &Landscape, cap: f64) -> Result<Landscape> {
    if !(cap > 0.0) {
        return Err(Error::Config(format!("clip cap must be positive, got {cap}")));
    }
    Ok(Landscape {
        mu: landscape.mu.iter().map(|m| m.min(cap)).collect(),
        goals: landscape.goals.clone(),
    })
}

/// `new - old`, with `inf - inf = 0`. A state that became reachable gets
/// `-inf`; one that became unreachable gets `+inf`.
pub fn landscape_delta(old: &Landscape, new: &Landscape) -> Result<LandscapeDelta> {
    if old.mu.len() != new.mu.len() {
        return Err(Error::LengthMismatch {
            expected: old.mu.len(),
            actual: new.mu.len(),
        });
    }
    if old.goals != new.goals {
        return Err(Error::GoalMismatch);
    }
    Ok(LandscapeDelta {
        delta: new
            .mu
            .iter()
            .zip(&old.mu)
            .map(|(&n, &o)| extended_sub(n, o))
            .collect(),
    })
}

mod sentinel_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| {
                if x.is_finite() {
                    Some(*x)
                } else {
                    None
                }
            })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    /// `null` decodes as `+inf`.
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(raw.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}
