//! Queue-driven prioritized sweeping: pop the most urgent state, back it up,
//! and push its predecessors with priority `max_a δ · T_a(s', s)` when that
//! reaches the insertion threshold.
//!
//! Trace iterations are batches of up to `|S|` backups. When the queue
//! drains, a full natural-order sweep verifies `Δ_S ≤ ε` and, if it fails,
//! reseeds the queue from its value changes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::{ms, IterationRecord, SolveResult, SolverConfig, SolverKind};
use crate::mdp::{bellman_backup, greedy_policy, sweep_in_place, Mdp, ValueFunction};

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    priority: f64,
    state: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.state.cmp(&self.state))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Queue {
    heap: BinaryHeap<Entry>,
    priority: Vec<f64>,
}

impl Queue {
    fn new(n: usize) -> Self {
        Self {
            heap: BinaryHeap::new(),
            priority: vec![0.0; n],
        }
    }

    fn raise(&mut self, state: usize, priority: f64) {
        if priority > self.priority[state] {
            self.priority[state] = priority;
            self.heap.push(Entry { priority, state });
        }
    }

    fn pop(&mut self) -> Option<usize> {
        while let Some(e) = self.heap.pop() {
            // skip entries superseded by a later raise
            if e.priority == self.priority[e.state] && e.priority > 0.0 {
                self.priority[e.state] = 0.0;
                return Some(e.state);
            }
        }
        None
    }
}

pub(super) fn solve_queue(mdp: &Mdp, cfg: &SolverConfig) -> SolveResult {
    let started = Instant::now();
    let n = mdp.n_states();
    let threshold = cfg.ps_threshold();
    let preds = mdp.predecessors();
    let natural: Vec<usize> = (0..n).collect();
    let mut values = vec![0.0; n];
    let mut deltas = vec![0.0; n];
    let mut policy = vec![0; n];
    let mut queue = Queue::new(n);
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut converged = false;

    let push_predecessors = |queue: &mut Queue, s: usize, delta: f64| {
        // max over actions of delta * T_a(s', s), per predecessor s'
        let mut best: Vec<(usize, f64)> = Vec::new();
        for &(pred, _, p) in &preds[s] {
            let cand = delta * p;
            match best.iter_mut().find(|(q, _)| *q == pred) {
                Some((_, b)) => *b = b.max(cand),
                None => best.push((pred, cand)),
            }
        }
        for (pred, cand) in best {
            if cand >= threshold && cand > 0.0 {
                queue.raise(pred, cand);
            }
        }
    };

    let mut verify_next = true;
    while trace.len() < cfg.max_iterations {
        let iter_start = Instant::now();
        let mut rec = IterationRecord {
            iteration: trace.len(),
            ..Default::default()
        };
        if verify_next {
            let delta = sweep_in_place(mdp, &mut values, cfg.gamma, &natural, &mut deltas, &mut policy);
            rec.delta_s = delta;
            rec.states_swept = n;
            rec.full_sweep = true;
            rec.ms_bellman = ms(iter_start.elapsed());
            rec.ms_total = rec.ms_bellman;
            trace.push(rec);
            if delta <= cfg.epsilon {
                converged = true;
                break;
            }
            for s in 0..n {
                if deltas[s] > 0.0 {
                    if deltas[s] >= threshold {
                        queue.raise(s, deltas[s]);
                    }
                    push_predecessors(&mut queue, s, deltas[s]);
                }
            }
            verify_next = false;
            continue;
        }

        let mut bellman = std::time::Duration::ZERO;
        let mut popped = 0;
        let mut max_delta = 0.0f64;
        while popped < n {
            let Some(s) = queue.pop() else {
                verify_next = true;
                break;
            };
            let b_start = Instant::now();
            let (v, a) = bellman_backup(mdp, &values, s, cfg.gamma);
            bellman += b_start.elapsed();
            let delta = (v - values[s]).abs();
            values[s] = v;
            policy[s] = a;
            max_delta = max_delta.max(delta);
            popped += 1;
            if delta > 0.0 {
                push_predecessors(&mut queue, s, delta);
            }
        }
        if popped == 0 {
            continue;
        }
        let total = iter_start.elapsed();
        rec.delta_s = max_delta;
        rec.states_swept = popped;
        rec.ms_bellman = ms(bellman);
        rec.ms_sort = ms(total.saturating_sub(bellman));
        rec.ms_total = ms(total);
        trace.push(rec);
    }

    let policy = greedy_policy(mdp, &values, cfg.gamma);
    SolveResult {
        solver: SolverKind::ViPs,
        config: cfg.clone(),
        iterations: trace.len(),
        converged,
        ms_total: ms(started.elapsed()),
        trace,
        policy,
        values: ValueFunction(values),
        landscapes: Vec::new(),
    }
}
