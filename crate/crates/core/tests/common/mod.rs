#![allow(dead_code)]

use std::path::PathBuf;

use mfpt_mdp::gridworld::{build_grid_mdp, build_random_mdp, GridMap, GridSpec, RandomGrid};
use mfpt_mdp::{MarkovChain, Mdp, Successor};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const CORPUS_SIZE: usize = 25;

/// Smallest best-vs-runner-up Q gap required of every corpus state.
pub const MIN_ACTION_GAP: f64 = 1e-4;

pub struct Instance {
    pub name: String,
    pub mdp: Mdp,
    pub reference: Reference,
}

pub struct Reference {
    pub values: Vec<f64>,
    pub policy: Vec<usize>,
    pub min_gap: f64,
}

pub fn demo_grid_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../demo/grid50.txt")
}

pub fn demo_grid() -> (Mdp, GridMap) {
    let spec = GridSpec::load(demo_grid_path()).expect("demo grid present");
    build_grid_mdp(&spec).expect("demo grid builds")
}

/// Q value from raw rows, independent of the library's backup code.
pub fn q(mdp: &Mdp, v: &[f64], s: usize, a: usize, gamma: f64) -> f64 {
    mdp.row(s, a)
        .iter()
        .map(|x| x.prob * (x.reward + gamma * v[x.state]))
        .sum()
}

/// Synchronous value iteration: at most 10,000 sweeps, stopping early once
/// a sweep changes nothing beyond round-off.
pub fn reference_vi(mdp: &Mdp, gamma: f64) -> Reference {
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    for _ in 0..10_000 {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                (0..mdp.n_actions())
                    .map(|a| q(mdp, &v, s, a, gamma))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let change = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if change < 1e-13 {
            break;
        }
    }
    let mut policy = vec![0; n];
    let mut min_gap = f64::INFINITY;
    for s in 0..n {
        if mdp.is_goal(s) {
            continue;
        }
        let mut qs: Vec<(f64, usize)> =
            (0..mdp.n_actions()).map(|a| (q(mdp, &v, s, a, gamma), a)).collect();
        qs.sort_by(|x, y| y.0.total_cmp(&x.0));
        policy[s] = qs[0].1;
        if qs.len() > 1 {
            min_gap = min_gap.min(qs[0].0 - qs[1].0);
        }
    }
    Reference {
        values: v,
        policy,
        min_gap,
    }
}

/// Adds one small random offset per non-goal `(state, action)` to every
/// successor reward, which breaks action ties.
pub fn perturb_rewards(mdp: &Mdp, seed: u64) -> Mdp {
    let mut rng = StdRng::seed_from_u64(seed);
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    let mut rows = Vec::with_capacity(n * na);
    for s in 0..n {
        for a in 0..na {
            let bump = if mdp.is_goal(s) { 0.0 } else { rng.random_range(-0.01..0.01) };
            rows.push(
                mdp.row(s, a)
                    .iter()
                    .map(|x| Successor::new(x.state, x.prob, x.reward + bump))
                    .collect(),
            );
        }
    }
    Mdp::from_rows(n, na, rows, mdp.goals().iter().copied()).unwrap()
}

fn base_instance(i: usize) -> (String, Mdp) {
    if i < 13 {
        let side = 5 + i;
        let grid = RandomGrid {
            width: side,
            height: side - i % 2,
            obstacle_density: 0.08 + 0.02 * (i % 5) as f64,
            goal: None,
            seed: 100 + i as u64,
        };
        let (mdp, _) = build_grid_mdp(&grid.generate().unwrap()).unwrap();
        (format!("grid{i}-{side}"), mdp)
    } else {
        let n = 20 + 30 * (i - 13);
        let mdp = build_random_mdp(n, 2 + i % 3, 2 + i % 4, 200 + i as u64).unwrap();
        (format!("rand{i}-{n}"), mdp)
    }
}

/// Fixed corpus of 25 MDPs of at most 400 states, each with a unique
/// optimal action per state (gap at least [`MIN_ACTION_GAP`]).
pub fn corpus(gamma: f64) -> Vec<Instance> {
    (0..CORPUS_SIZE)
        .map(|i| {
            let (name, base) = base_instance(i);
            assert!(base.n_states() <= 400, "{name} too large");
            for attempt in 0..20 {
                let mdp = perturb_rewards(&base, 1000 * i as u64 + attempt);
                let reference = reference_vi(&mdp, gamma);
                if reference.min_gap >= MIN_ACTION_GAP {
                    return Instance {
                        name,
                        mdp,
                        reference,
                    };
                }
            }
            panic!("{name}: no tie-free perturbation found");
        })
        .collect()
}

/// Absorbing chain with goal state 0. Every other state `i` moves to the
/// goal, to `i - 1`, and to a few random states.
pub fn random_chain(n: usize, seed: u64) -> MarkovChain {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut rows = vec![vec![(0, 1.0)]];
    for i in 1..n {
        let mut w = vec![0.0; n];
        w[0] += rng.random_range(0.05..0.3);
        w[i - 1] += rng.random_range(0.2..1.0);
        for _ in 0..rng.random_range(1..=3) {
            w[rng.random_range(0..n)] += rng.random_range(0.1..1.0);
        }
        let total: f64 = w.iter().sum();
        rows.push(
            w.iter()
                .enumerate()
                .filter(|(_, &x)| x > 0.0)
                .map(|(j, &x)| (j, x / total))
                .collect(),
        );
    }
    MarkovChain::from_rows(rows).unwrap()
}

pub struct McStats {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// First-visit Monte-Carlo estimate of hitting times to state 0.
/// Trajectories start round-robin over the non-goal states; every state a
/// trajectory visits contributes the remaining time from its first visit,
/// which by the strong Markov property is an independent draw per trial.
pub fn monte_carlo_hitting(chain: &MarkovChain, trials: u64, seed: u64) -> McStats {
    let n = chain.n_states();
    let cdf: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let mut acc = 0.0;
            chain.row(i).iter().map(|&(j, p)| {
                acc += p;
                (j, acc)
            }).collect()
        })
        .collect();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut sum = vec![0.0f64; n];
    let mut sum_sq = vec![0.0f64; n];
    let mut count = vec![0u64; n];
    let mut first = vec![u64::MAX; n];
    let mut visited = Vec::with_capacity(64);
    for t in 0..trials {
        let mut s = 1 + (t as usize) % (n - 1);
        let mut step = 0u64;
        while s != 0 {
            if first[s] == u64::MAX {
                first[s] = step;
                visited.push(s);
            }
            let u: f64 = rng.random::<f64>() * cdf[s].last().unwrap().1;
            s = cdf[s].iter().find(|&&(_, c)| u < c).unwrap_or(cdf[s].last().unwrap()).0;
            step += 1;
        }
        for &v in &visited {
            let remaining = (step - first[v]) as f64;
            sum[v] += remaining;
            sum_sq[v] += remaining * remaining;
            count[v] += 1;
            first[v] = u64::MAX;
        }
        visited.clear();
    }
    let mut mean = vec![0.0; n];
    let mut std_error = vec![0.0; n];
    for s in 1..n {
        let c = count[s] as f64;
        mean[s] = sum[s] / c;
        let var = (sum_sq[s] - c * mean[s] * mean[s]) / (c - 1.0);
        std_error[s] = (var.max(0.0) / c).sqrt();
    }
    McStats { mean, std_error }
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}
