//! Value iteration for absorbing MDPs with reachability-based (mean first
//! passage time) and backup-differential sweep prioritization.
//!
//! - [`mdp`]: model, Bellman backups, induced Markov chains
//! - [`gridworld`]: benchmark instance generators
//! - [`linalg`]: dense LU with partial pivoting
//! - [`mfpt`]: reachability landscapes and a Monte-Carlo oracle
//! - [`solvers`]: the seven VI variants and partial-space sweeping
//! - [`bench`]: experiment plans, reports, heatmaps

pub mod bench;
pub mod error;
pub mod gridworld;
pub mod linalg;
pub mod mdp;
pub mod mfpt;
pub mod solvers;

pub use error::{Error, Result};
pub use mdp::{Mdp, MarkovChain, Policy, Successor, ValueFunction};
pub use solvers::{solve, SolveResult, SolverConfig, SolverKind};
