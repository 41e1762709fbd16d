//! MDP data model, Bellman backups and the Markov chain induced by a policy.
//!
//! Transitions are stored sparsely: each `(state, action)` pair owns a
//! contiguous slice of [`Successor`] entries carrying the successor index,
//! its probability and the reward `R_a(s, s')` collected on that transition.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for row sums of probability distributions.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Successor {
    pub state: usize,
    pub prob: f64,
    pub reward: f64,
}

impl Successor {
    pub fn new(state: usize, prob: f64, reward: f64) -> Self {
        Self {
            state,
            prob,
            reward,
        }
    }
}

/// A finite absorbing MDP. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    // row (s, a) lives at successors[offsets[s * n_actions + a]..offsets[s * n_actions + a + 1]]
    offsets: Vec<usize>,
    successors: Vec<Successor>,
    goals: Vec<usize>,
    is_goal: Vec<bool>,
}

impl Mdp {
    /// Builds an MDP from one successor list per `(state, action)`, laid out
    /// state-major (`rows[s * n_actions + a]`).
    ///
    /// Only structural problems (counts, out-of-range indices) are rejected
    /// here; probabilistic invariants are reported by [`validate`].
    pub fn from_rows(
        n_states: usize,
        n_actions: usize,
        rows: Vec<Vec<Successor>>,
        goals: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Structure(
                "n_states and n_actions must be positive".into(),
            ));
        }
        if rows.len() != n_states * n_actions {
            return Err(Error::Structure(format!(
                "expected {} transition rows, got {}",
                n_states * n_actions,
                rows.len()
            )));
        }
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut successors = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        offsets.push(0);
        for row in rows {
            for succ in &row {
                if succ.state >= n_states {
                    return Err(Error::StateOutOfRange {
                        index: succ.state,
                        n_states,
                    });
                }
            }
            successors.extend(row);
            offsets.push(successors.len());
        }
        let mut goals: Vec<usize> = goals.into_iter().collect();
        goals.sort_unstable();
        goals.dedup();
        let mut is_goal = vec![false; n_states];
        for &g in &goals {
            if g >= n_states {
                return Err(Error::StateOutOfRange { index: g, n_states });
            }
            is_goal[g] = true;
        }
        Ok(Self {
            n_states,
            n_actions,
            offsets,
            successors,
            goals,
            is_goal,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn row(&self, state: usize, action: usize) -> &[Successor] {
        let idx = state * self.n_actions + action;
        &self.successors[self.offsets[idx]..self.offsets[idx + 1]]
    }

    /// Sorted, deduplicated goal states.
    pub fn goals(&self) -> &[usize] {
        &self.goals
    }

    #[inline]
    pub fn is_goal(&self, state: usize) -> bool {
        self.is_goal[state]
    }

    /// Number of stored `(s, a, s')` entries.
    pub fn n_entries(&self) -> usize {
        self.successors.len()
    }

    /// For each state `s'`, the `(s, a, T_a(s, s'))` triples with positive
    /// probability that lead into it.
    pub fn predecessors(&self) -> Vec<Vec<(usize, usize, f64)>> {
        let mut preds = vec![Vec::new(); self.n_states];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for succ in self.row(s, a) {
                    if succ.prob > 0.0 {
                        preds[succ.state].push((s, a, succ.prob));
                    }
                }
            }
        }
        preds
    }

    pub fn to_file_format(&self) -> MdpFile {
        let mut transitions = Vec::with_capacity(self.n_states * self.n_actions);
        let mut rewards = Vec::new();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.row(s, a);
                transitions.push(TransitionEntry {
                    s,
                    a,
                    to: row
                        .iter()
                        .map(|x| TargetEntry {
                            s2: x.state,
                            p: x.prob,
                        })
                        .collect(),
                });
                rewards.extend(row.iter().filter(|x| x.reward != 0.0).map(|x| RewardEntry {
                    s,
                    a,
                    s2: x.state,
                    r: x.reward,
                }));
            }
        }
        MdpFile {
            n_states: self.n_states,
            n_actions: self.n_actions,
            goals: self.goals.clone(),
            transitions,
            rewards,
            grid: None,
        }
    }

    /// Parses the JSON file format and validates the result.
    pub fn from_file_format(file: MdpFile) -> Result<Self> {
        let MdpFile {
            n_states,
            n_actions,
            goals,
            transitions,
            rewards,
            ..
        } = file;
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Structure(
                "n_states and n_actions must be positive".into(),
            ));
        }
        let mut rows: Vec<Option<Vec<Successor>>> = vec![None; n_states * n_actions];
        for t in transitions {
            if t.s >= n_states || t.a >= n_actions {
                return Err(Error::Structure(format!(
                    "transition entry (s={}, a={}) out of range",
                    t.s, t.a
                )));
            }
            let slot = &mut rows[t.s * n_actions + t.a];
            if slot.is_some() {
                return Err(Error::Structure(format!(
                    "transition entry (s={}, a={}) given twice",
                    t.s, t.a
                )));
            }
            *slot = Some(
                t.to.into_iter()
                    .map(|x| Successor::new(x.s2, x.p, 0.0))
                    .collect(),
            );
        }
        let mut rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                r.ok_or_else(|| {
                    Error::Structure(format!(
                        "missing transition entry for (s={}, a={})",
                        i / n_actions,
                        i % n_actions
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for r in rewards {
            if r.s >= n_states || r.a >= n_actions {
                return Err(Error::Structure(format!(
                    "reward entry (s={}, a={}, s2={}) out of range",
                    r.s, r.a, r.s2
                )));
            }
            let row = &mut rows[r.s * n_actions + r.a];
            match row.iter_mut().find(|x| x.state == r.s2) {
                Some(succ) => succ.reward = r.r,
                None => {
                    return Err(Error::Structure(format!(
                        "reward given for impossible transition (s={}, a={}, s2={})",
                        r.s, r.a, r.s2
                    )))
                }
            }
        }
        let mdp = Mdp::from_rows(n_states, n_actions, rows, goals)?;
        let report = validate(&mdp);
        if !report.is_valid() {
            return Err(Error::InvalidMdp(report.violations));
        }
        Ok(mdp)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file_format()).expect("MDP serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file_format(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// On-disk JSON layout of an MDP. Reward triples that are absent are zero.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MdpFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub goals: Vec<usize>,
    pub transitions: Vec<TransitionEntry>,
    #[serde(default)]
    pub rewards: Vec<RewardEntry>,
    /// Cell geometry when the MDP came from a gridworld.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<crate::gridworld::GridLayout>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitionEntry {
    pub s: usize,
    pub a: usize,
    pub to: Vec<TargetEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TargetEntry {
    pub s2: usize,
    pub p: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RewardEntry {
    pub s: usize,
    pub a: usize,
    pub s2: usize,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy(pub Vec<usize>);

impl Policy {
    pub fn action(&self, state: usize) -> usize {
        self.0[state]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueFunction(pub Vec<f64>);

impl ValueFunction {
    pub fn zeros(n_states: usize) -> Self {
        Self(vec![0.0; n_states])
    }
}

impl std::ops::Deref for ValueFunction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A single broken invariant of an [`Mdp`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NoGoals,
    RowSum {
        state: usize,
        action: usize,
        sum: f64,
    },
    ProbabilityOutOfRange {
        state: usize,
        action: usize,
        successor: usize,
        prob: f64,
    },
    NonFiniteReward {
        state: usize,
        action: usize,
        successor: usize,
    },
    DuplicateSuccessor {
        state: usize,
        action: usize,
        successor: usize,
    },
    GoalNotAbsorbing {
        goal: usize,
        action: usize,
        successor: usize,
        prob: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::NoGoals => write!(f, "goal set is empty"),
            Violation::RowSum { state, action, sum } => {
                write!(f, "row sum {sum} at (s{state},a{action})")
            }
            Violation::ProbabilityOutOfRange {
                state,
                action,
                successor,
                prob,
            } => write!(
                f,
                "probability {prob} outside [0,1] at (s{state},a{action})->s{successor}"
            ),
            Violation::NonFiniteReward {
                state,
                action,
                successor,
            } => write!(f, "non-finite reward at (s{state},a{action})->s{successor}"),
            Violation::DuplicateSuccessor {
                state,
                action,
                successor,
            } => write!(f, "duplicate successor s{successor} at (s{state},a{action})"),
            Violation::GoalNotAbsorbing {
                goal,
                action,
                successor,
                prob,
            } => write!(
                f,
                "goal not absorbing: s{goal} under a{action} moves to s{successor} with probability {prob}"
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every probabilistic invariant and reports all violations found.
pub fn validate(mdp: &Mdp) -> ValidationReport {
    let mut violations = Vec::new();
    if mdp.goals.is_empty() {
        violations.push(Violation::NoGoals);
    }
    let mut seen = BTreeMap::new();
    for state in 0..mdp.n_states {
        for action in 0..mdp.n_actions {
            let row = mdp.row(state, action);
            seen.clear();
            let mut sum = 0.0;
            for succ in row {
                sum += succ.prob;
                if !(0.0..=1.0).contains(&succ.prob) {
                    violations.push(Violation::ProbabilityOutOfRange {
                        state,
                        action,
                        successor: succ.state,
                        prob: succ.prob,
                    });
                }
                if !succ.reward.is_finite() {
                    violations.push(Violation::NonFiniteReward {
                        state,
                        action,
                        successor: succ.state,
                    });
                }
                if seen.insert(succ.state, ()).is_some() {
                    violations.push(Violation::DuplicateSuccessor {
                        state,
                        action,
                        successor: succ.state,
                    });
                }
                if mdp.is_goal(state) && succ.state != state && succ.prob > 0.0 {
                    violations.push(Violation::GoalNotAbsorbing {
                        goal: state,
                        action,
                        successor: succ.state,
                        prob: succ.prob,
                    });
                }
            }
            if !sum.is_finite() || (sum - 1.0).abs() > ROW_SUM_TOL {
                violations.push(Violation::RowSum { state, action, sum });
            }
        }
    }
    ValidationReport { violations }
}

/// Expected one-step return of taking `action` in `state`.
#[inline]
pub fn q_value(mdp: &Mdp, values: &[f64], state: usize, action: usize, gamma: f64) -> f64 {
    mdp.row(state, action)
        .iter()
        .map(|x| x.prob * (x.reward + gamma * values[x.state]))
        .sum()
}

/// One Bellman backup of `state`; ties go to the lowest action index.
#[inline]
pub fn bellman_backup(mdp: &Mdp, values: &[f64], state: usize, gamma: f64) -> (f64, usize) {
    let mut best = q_value(mdp, values, state, 0, gamma);
    let mut best_action = 0;
    for action in 1..mdp.n_actions {
        let q = q_value(mdp, values, state, action, gamma);
        if q > best {
            best = q;
            best_action = action;
        }
    }
    (best, best_action)
}

/// In-place Gauss-Seidel sweep over `order` without argument checks.
/// Writes `|V'(s) - V(s)|` into `deltas` and the backup's argmax into
/// `policy` for every swept state; returns the largest delta.
pub(crate) fn sweep_in_place(
    mdp: &Mdp,
    values: &mut [f64],
    gamma: f64,
    order: &[usize],
    deltas: &mut [f64],
    policy: &mut [usize],
) -> f64 {
    let mut max_delta = 0.0f64;
    for &s in order {
        let (v, a) = bellman_backup(mdp, values, s, gamma);
        let d = (v - values[s]).abs();
        values[s] = v;
        deltas[s] = d;
        policy[s] = a;
        max_delta = max_delta.max(d);
    }
    max_delta
}

/// As [`sweep_in_place`], also raising `priority[s]` to `δ(s)` and each
/// predecessor's priority to `δ(s) · T_a(s', s)` as backups happen.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sweep_prioritized(
    mdp: &Mdp,
    values: &mut [f64],
    gamma: f64,
    order: &[usize],
    deltas: &mut [f64],
    policy: &mut [usize],
    preds: &[Vec<(usize, usize, f64)>],
    priority: &mut [f64],
) -> f64 {
    let mut max_delta = 0.0f64;
    for &s in order {
        let (v, a) = bellman_backup(mdp, values, s, gamma);
        let d = (v - values[s]).abs();
        values[s] = v;
        deltas[s] = d;
        policy[s] = a;
        max_delta = max_delta.max(d);
        if d > 0.0 {
            priority[s] = priority[s].max(d);
            for &(pred, _, p) in &preds[s] {
                priority[pred] = priority[pred].max(d * p);
            }
        }
    }
    max_delta
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub values: ValueFunction,
    pub deltas: Vec<f64>,
    pub policy: Policy,
}

/// Sequential sweep over `order` (a subset of states, each at most once).
/// States outside `order` keep their values and report a zero delta.
pub fn full_sweep(
    mdp: &Mdp,
    values: &ValueFunction,
    gamma: f64,
    order: &[usize],
) -> Result<SweepOutcome> {
    check_len(mdp.n_states, values.len())?;
    let mut seen = vec![false; mdp.n_states];
    for &s in order {
        if s >= mdp.n_states {
            return Err(Error::StateOutOfRange {
                index: s,
                n_states: mdp.n_states,
            });
        }
        if std::mem::replace(&mut seen[s], true) {
            return Err(Error::DuplicateState(s));
        }
    }
    let mut next = values.0.clone();
    let mut deltas = vec![0.0; mdp.n_states];
    let mut scratch = vec![0; mdp.n_states];
    sweep_in_place(mdp, &mut next, gamma, order, &mut deltas, &mut scratch);
    let next = ValueFunction(next);
    let policy = greedy_policy(mdp, &next, gamma);
    Ok(SweepOutcome {
        values: next,
        deltas,
        policy,
    })
}

/// `max_s |V(s) - V'(s)|`.
pub fn convergence_delta(v: &[f64], v_next: &[f64]) -> Result<f64> {
    check_len(v.len(), v_next.len())?;
    Ok(v.iter()
        .zip(v_next)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

pub fn greedy_policy(mdp: &Mdp, values: &[f64], gamma: f64) -> Policy {
    Policy(
        (0..mdp.n_states)
            .map(|s| bellman_backup(mdp, values, s, gamma).1)
            .collect(),
    )
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { expected, actual });
    }
    Ok(())
}

/// Row-stochastic sparse transition matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovChain {
    offsets: Vec<usize>,
    entries: Vec<(usize, f64)>,
}

impl MarkovChain {
    /// Builds a chain from sparse rows, rejecting rows that are not
    /// probability distributions.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut entries = Vec::new();
        offsets.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            let mut sum = 0.0;
            for &(k, p) in &row {
                if k >= n {
                    return Err(Error::StateOutOfRange {
                        index: k,
                        n_states: n,
                    });
                }
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Structure(format!(
                        "chain probability {p} outside [0,1] in row {i}"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Structure(format!("chain row {i} sums to {sum}")));
            }
            entries.extend(row);
            offsets.push(entries.len());
        }
        Ok(Self { offsets, entries })
    }

    pub fn from_dense(matrix: &[Vec<f64>]) -> Result<Self> {
        Self::from_rows(
            matrix
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .filter(|(_, &p)| p != 0.0)
                        .map(|(k, &p)| (k, p))
                        .collect()
                })
                .collect(),
        )
    }

    pub fn n_states(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn row(&self, state: usize) -> &[(usize, f64)] {
        &self.entries[self.offsets[state]..self.offsets[state + 1]]
    }

    /// Probability `p_ik` (zero when not stored).
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.row(from)
            .iter()
            .filter(|(k, _)| *k == to)
            .map(|(_, p)| p)
            .sum()
    }
}

/// The chain obtained by fixing `policy` on `mdp`: row `i` is `T_{π(i)}(i, ·)`.
pub fn induced_chain(mdp: &Mdp, policy: &Policy) -> Result<MarkovChain> {
    check_len(mdp.n_states, policy.len())?;
    let mut offsets = Vec::with_capacity(mdp.n_states + 1);
    let mut entries = Vec::with_capacity(mdp.n_entries() / mdp.n_actions + 1);
    offsets.push(0);
    for (s, &a) in policy.0.iter().enumerate() {
        if a >= mdp.n_actions {
            return Err(Error::Config(format!(
                "policy action {a} out of range at state {s}"
            )));
        }
        entries.extend(
            mdp.row(s, a)
                .iter()
                .filter(|x| x.prob > 0.0)
                .map(|x| (x.state, x.prob)),
        );
        offsets.push(entries.len());
    }
    Ok(MarkovChain { offsets, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// s0 -> s1 -> g (= s2), reward 1 on entering g.
    pub(crate) fn chain3() -> Mdp {
        Mdp::from_rows(
            3,
            1,
            vec![
                vec![Successor::new(1, 1.0, 0.0)],
                vec![Successor::new(2, 1.0, 1.0)],
                vec![Successor::new(2, 1.0, 0.0)],
            ],
            [2],
        )
        .unwrap()
    }

    #[test]
    fn valid_two_state_chain_has_empty_report() {
        let mdp = Mdp::from_rows(
            2,
            1,
            vec![
                vec![Successor::new(1, 1.0, 0.0)],
                vec![Successor::new(1, 1.0, 0.0)],
            ],
            [1],
        )
        .unwrap();
        assert!(validate(&mdp).is_valid());
    }

    #[test]
    fn short_row_reports_row_sum() {
        let mdp = Mdp::from_rows(
            3,
            1,
            vec![
                vec![Successor::new(1, 0.5, 0.0), Successor::new(2, 0.4, 0.0)],
                vec![Successor::new(2, 1.0, 0.0)],
                vec![Successor::new(2, 1.0, 0.0)],
            ],
            [2],
        )
        .unwrap();
        let report = validate(&mdp);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].to_string(), "row sum 0.9 at (s0,a0)");
    }

    #[test]
    fn leaky_goal_is_reported() {
        let mdp = Mdp::from_rows(
            2,
            1,
            vec![
                vec![Successor::new(1, 1.0, 0.0)],
                vec![Successor::new(1, 0.7, 0.0), Successor::new(0, 0.3, 0.0)],
            ],
            [1],
        )
        .unwrap();
        let report = validate(&mdp);
        assert!(matches!(
            report.violations.as_slice(),
            [Violation::GoalNotAbsorbing { goal: 1, successor: 0, .. }]
        ));
        assert!(report.violations[0].to_string().starts_with("goal not absorbing"));
    }

    #[test]
    fn duplicates_ranges_and_rewards_are_reported() {
        let mdp = Mdp::from_rows(
            2,
            1,
            vec![
                vec![
                    Successor::new(1, 0.5, f64::NAN),
                    Successor::new(1, 0.5, 0.0),
                ],
                vec![Successor::new(1, 1.5, 0.0)],
            ],
            [1],
        )
        .unwrap();
        let v = validate(&mdp).violations;
        assert!(v.iter().any(|x| matches!(x, Violation::DuplicateSuccessor { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::NonFiniteReward { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::ProbabilityOutOfRange { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::RowSum { state: 1, .. })));
    }

    #[test]
    fn structural_errors_rejected_at_construction() {
        assert!(Mdp::from_rows(1, 1, vec![vec![Successor::new(3, 1.0, 0.0)]], [0]).is_err());
        assert!(Mdp::from_rows(1, 1, vec![], [0]).is_err());
        assert!(Mdp::from_rows(1, 1, vec![vec![Successor::new(0, 1.0, 0.0)]], [4]).is_err());
    }

    #[test]
    fn backup_zero_fixed_point() {
        let mdp = Mdp::from_rows(
            2,
            2,
            vec![
                vec![Successor::new(1, 1.0, 0.0)],
                vec![Successor::new(0, 1.0, 0.0)],
                vec![Successor::new(1, 1.0, 0.0)],
                vec![Successor::new(1, 1.0, 0.0)],
            ],
            [1],
        )
        .unwrap();
        assert_eq!(bellman_backup(&mdp, &[0.0, 0.0], 0, 0.9), (0.0, 0));
    }

    #[test]
    fn backup_single_deterministic_term() {
        let mdp = Mdp::from_rows(
            2,
            1,
            vec![
                vec![Successor::new(1, 1.0, 10.0)],
                vec![Successor::new(1, 1.0, 0.0)],
            ],
            [1],
        )
        .unwrap();
        assert_eq!(bellman_backup(&mdp, &[0.0, 0.0], 0, 0.9), (10.0, 0));
    }

    fn gamble_mdp() -> Mdp {
        // a0: reward 1 for sure; a1: reward 4 or 0 with equal odds
        Mdp::from_rows(
            3,
            2,
            vec![
                vec![Successor::new(1, 1.0, 1.0)],
                vec![Successor::new(1, 0.5, 4.0), Successor::new(2, 0.5, 0.0)],
                vec![Successor::new(1, 1.0, 0.0)],
                vec![Successor::new(1, 1.0, 0.0)],
                vec![Successor::new(2, 1.0, 0.0)],
                vec![Successor::new(2, 1.0, 0.0)],
            ],
            [1, 2],
        )
        .unwrap()
    }

    #[test]
    fn backup_picks_better_gamble() {
        let mdp = gamble_mdp();
        assert!(validate(&mdp).is_valid());
        // oracle: E[a0] = 1, E[a1] = 0.5 * 4 + 0.5 * 0 = 2
        let q0 = 1.0 * 1.0;
        let q1 = 0.5 * 4.0 + 0.5 * 0.0;
        assert!(q1 > q0);
        assert_eq!(bellman_backup(&mdp, &[0.0; 3], 0, 1.0), (q1, 1));
    }

    #[test]
    fn greedy_policy_mirrors_backups() {
        let mdp = gamble_mdp();
        assert_eq!(greedy_policy(&mdp, &[0.0; 3], 1.0).0, vec![1, 0, 0]);
        let det = chain3();
        assert_eq!(greedy_policy(&det, &[0.0; 3], 0.5).0, vec![0, 0, 0]);
    }

    #[test]
    fn sweep_identity_and_empty_order() {
        let mdp = Mdp::from_rows(
            2,
            1,
            vec![
                vec![Successor::new(0, 1.0, 0.0)],
                vec![Successor::new(1, 1.0, 0.0)],
            ],
            [1],
        )
        .unwrap();
        let v = ValueFunction(vec![0.0, 0.0]);
        let out = full_sweep(&mdp, &v, 0.9, &[0, 1]).unwrap();
        assert_eq!(out.values, v);
        assert_eq!(out.deltas, vec![0.0, 0.0]);
        let v = ValueFunction(vec![3.0, 0.0]);
        let out = full_sweep(&mdp, &v, 0.9, &[]).unwrap();
        assert_eq!(out.values, v);
    }

    #[test]
    fn sweep_sees_earlier_updates() {
        let mdp = chain3();
        let v0 = ValueFunction::zeros(3);
        let out = full_sweep(&mdp, &v0, 0.5, &[1, 0]).unwrap();
        // hand evaluation: V(s1) = 1 + 0.5 * 0 = 1, then V(s0) = 0 + 0.5 * 1
        assert_eq!(out.values.0, vec![0.5, 1.0, 0.0]);
        assert_eq!(out.deltas, vec![0.5, 1.0, 0.0]);
    }

    #[test]
    fn sweep_rejects_duplicates() {
        let mdp = chain3();
        let err = full_sweep(&mdp, &ValueFunction::zeros(3), 0.5, &[0, 1, 0]).unwrap_err();
        assert!(matches!(err, Error::DuplicateState(0)));
    }

    #[test]
    fn convergence_delta_cases() {
        assert_eq!(convergence_delta(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(convergence_delta(&[0.0, 0.0], &[0.3, -0.7]).unwrap(), 0.7);
        assert!(convergence_delta(&[0.0], &[0.0, 1.0]).is_err());

        // natural-order sweeps of the chain: (0,0,0) -> (0,1,0) -> (0.5,1,0)
        let mdp = chain3();
        let first = full_sweep(&mdp, &ValueFunction::zeros(3), 0.5, &[0, 1, 2]).unwrap();
        assert_eq!(first.values.0, vec![0.0, 1.0, 0.0]);
        let second = full_sweep(&mdp, &first.values, 0.5, &[0, 1, 2]).unwrap();
        assert_eq!(second.values.0, vec![0.5, 1.0, 0.0]);
        assert_eq!(
            convergence_delta(&ValueFunction::zeros(3), &first.values).unwrap(),
            1.0
        );
    }

    #[test]
    fn synchronous_deltas_do_not_increase() {
        // Jacobi sweeps on the 3-state chain
        let mdp = chain3();
        let mut v = vec![0.0; 3];
        let mut history = Vec::new();
        for _ in 0..6 {
            let next: Vec<f64> = (0..3).map(|s| bellman_backup(&mdp, &v, s, 0.5).0).collect();
            history.push(convergence_delta(&v, &next).unwrap());
            v = next;
        }
        for w in history[1..].windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert_eq!(*history.last().unwrap(), 0.0);
    }

    #[test]
    fn induced_chain_rows() {
        let mdp = chain3();
        let chain = induced_chain(&mdp, &Policy(vec![0; 3])).unwrap();
        assert_eq!(chain.row(0), &[(1, 1.0)]);
        assert_eq!(chain.row(2), &[(2, 1.0)]);

        let mdp = gamble_mdp();
        let chain = induced_chain(&mdp, &Policy(vec![1, 1, 1])).unwrap();
        assert_eq!(chain.row(0), &[(1, 0.5), (2, 0.5)]);
        assert_eq!(chain.prob(1, 1), 1.0);
        assert!(induced_chain(&mdp, &Policy(vec![2, 0, 0])).is_err());
    }

    #[test]
    fn json_round_trip_and_bad_rows() {
        let mdp = gamble_mdp();
        let text = mdp.to_json();
        assert_eq!(Mdp::from_json(&text).unwrap(), mdp);

        let bad = r#"{"n_states":2,"n_actions":1,"goals":[1],
            "transitions":[{"s":0,"a":0,"to":[{"s2":1,"p":0.5},{"s2":0,"p":0.4}]},
                           {"s":1,"a":0,"to":[{"s2":1,"p":1.0}]}]}"#;
        assert!(matches!(Mdp::from_json(bad), Err(Error::InvalidMdp(_))));
        let missing = r#"{"n_states":2,"n_actions":1,"goals":[1],
            "transitions":[{"s":1,"a":0,"to":[{"s2":1,"p":1.0}]}]}"#;
        assert!(matches!(Mdp::from_json(missing), Err(Error::Structure(_))));
    }
}
