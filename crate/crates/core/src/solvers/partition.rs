//! Splitting a prioritized state list into sub-lists for partial-space
//! sweeping.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionHeuristic {
    #[default]
    None,
    /// Equal-length sub-lists.
    H1,
    /// Equal impact-range sub-lists.
    H2,
}

/// Sub-lists in sweep order: `parts[0]` holds the highest-impact states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partitioning {
    pub parts: Vec<Vec<usize>>,
    pub heuristic: PartitionHeuristic,
    /// H1: cumulative sub-list end positions. H2: score thresholds
    /// `e_min + i * r / p` for `i = 0..=p`.
    pub boundaries: Vec<f64>,
}

impl Partitioning {
    pub fn sizes(&self) -> Vec<usize> {
        self.parts.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}

/// Contiguous chunks of `ceil(|S| / p)` states; `p` is clamped to `1..=|S|`.
pub fn partition_h1(prioritized: &[usize], p: usize) -> Partitioning {
    let n = prioritized.len();
    let p = p.clamp(1, n.max(1));
    let chunk = n.div_ceil(p).max(1);
    let parts: Vec<Vec<usize>> = if n == 0 {
        vec![Vec::new()]
    } else {
        prioritized.chunks(chunk).map(<[usize]>::to_vec).collect()
    };
    let mut end = 0;
    let boundaries = parts
        .iter()
        .map(|part| {
            end += part.len();
            end as f64
        })
        .collect();
    Partitioning {
        parts,
        heuristic: PartitionHeuristic::H1,
        boundaries,
    }
}

/// Buckets states by score into `p` bands of width `r / p` where
/// `r = e_max - e_min`. Band `i` (1-based, lowest scores first) holds scores
/// in `[e_min + (i-1) r/p, e_min + i r/p)`, the top band being closed. Output
/// lists the highest band first.
///
/// `e_min`/`e_max` range over finite scores; `+inf` joins the top band and
/// `-inf` the bottom one. With `r = 0` everything lands in the first output
/// partition.
pub fn partition_h2(scores: &[f64], p: usize) -> Partitioning {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    partition_h2_ordered(&order, scores, p)
}

/// As [`partition_h2`], keeping the relative order of `order` inside each
/// partition.
pub fn partition_h2_ordered(order: &[usize], scores: &[f64], p: usize) -> Partitioning {
    let p = p.max(1);
    let finite = || order.iter().map(|&s| scores[s]).filter(|x| x.is_finite());
    let e_min = finite().reduce(f64::min).unwrap_or(0.0);
    let e_max = finite().reduce(f64::max).unwrap_or(0.0);
    let range = e_max - e_min;
    let width = range / p as f64;
    let boundaries: Vec<f64> = (0..=p).map(|i| e_min + i as f64 * width).collect();

    let mut parts = vec![Vec::new(); p];
    for &s in order {
        let x = scores[s];
        let band = if range <= 0.0 || x == f64::INFINITY {
            p
        } else if x == f64::NEG_INFINITY {
            1
        } else {
            let mut i = (((x - e_min) / width).floor() as isize + 1).clamp(1, p as isize) as usize;
            while i > 1 && x < boundaries[i - 1] {
                i -= 1;
            }
            while i < p && x >= boundaries[i] {
                i += 1;
            }
            i
        };
        parts[p - band].push(s);
    }
    Partitioning {
        parts,
        heuristic: PartitionHeuristic::H2,
        boundaries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h1_sizes() {
        let states: Vec<usize> = (0..10).collect();
        assert_eq!(partition_h1(&states, 2).sizes(), vec![5, 5]);
        assert_eq!(partition_h1(&states, 1).sizes(), vec![10]);
        assert_eq!(partition_h1(&states, 3).sizes(), vec![4, 4, 2]);
        assert_eq!(partition_h1(&states, 50).sizes(), vec![1; 10]);
        assert_eq!(partition_h1(&states, 3).parts[2], vec![8, 9]);
        assert_eq!(partition_h1(&[], 3).sizes(), vec![0]);
    }

    #[test]
    fn h2_midpoint_rule() {
        let scores: Vec<f64> = (0..10).map(f64::from).collect();
        let part = partition_h2(&scores, 2);
        assert_eq!(part.parts, vec![vec![9, 8, 7, 6, 5], vec![4, 3, 2, 1, 0]]);
        assert_eq!(part.boundaries, vec![0.0, 4.5, 9.0]);
    }

    #[test]
    fn h2_boundary_goes_to_upper_band() {
        // boundaries 0, 1, 2; score 1 sits exactly on the edge
        let part = partition_h2(&[0.0, 1.0, 2.0], 2);
        assert_eq!(part.parts, vec![vec![2, 1], vec![0]]);
    }

    #[test]
    fn h2_equal_scores() {
        let part = partition_h2(&[3.0; 6], 4);
        assert_eq!(part.sizes(), vec![6, 0, 0, 0]);
    }

    #[test]
    fn h2_infinite_scores() {
        let scores = [f64::NEG_INFINITY, 0.0, 5.0, 10.0, f64::INFINITY];
        let part = partition_h2(&scores, 2);
        assert_eq!(part.parts, vec![vec![4, 3, 2], vec![1, 0]]);
    }

    #[test]
    fn h2_keeps_given_order_within_bands() {
        let scores = [1.0, 9.0, 2.0, 8.0];
        let part = partition_h2_ordered(&[0, 2, 1, 3], &scores, 2);
        assert_eq!(part.parts, vec![vec![1, 3], vec![0, 2]]);
    }
}
