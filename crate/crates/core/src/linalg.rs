//! Dense LU factorization with partial pivoting.
//!
//! The elimination tracks, per row, the first and last structurally nonzero
//! column. Rows only become pivot candidates once the elimination front
//! reaches their first nonzero, and row updates stop at the pivot row's last
//! nonzero. On dense input this is ordinary `O(n^3)` Gaussian elimination;
//! on banded systems (gridworld MFPT matrices with row-major numbering) the
//! work drops to roughly `O(n * bandwidth^2)`.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

pub const DEFAULT_PIVOT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::LengthMismatch {
                    expected: n_cols,
                    actual: row.len(),
                });
            }
            if let Some(j) = row.iter().position(|x| !x.is_finite()) {
                return Err(Error::Structure(format!("non-finite entry at ({i}, {j})")));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: n_rows,
            cols: n_cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `PA = LU`. Rows of the input are never moved in memory; `perm[k]` names
/// the input row that became pivot row `k`.
#[derive(Clone, Debug)]
pub struct LuFactorization {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    first_nz: Vec<usize>,
    last_nz: Vec<usize>,
    row_swaps: usize,
    singular: bool,
}

impl LuFactorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// `perm[k]` = index of the input row used as the `k`-th pivot row.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn row_swaps(&self) -> usize {
        self.row_swaps
    }

    #[inline]
    fn at(&self, k: usize, j: usize) -> f64 {
        self.lu[self.perm[k] * self.n + j]
    }

    /// Diagonal of `U`.
    pub fn pivots(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.at(k, k)).collect()
    }

    /// Unit lower-triangular factor.
    pub fn lower(&self) -> DenseMatrix {
        let mut l = DenseMatrix::identity(self.n);
        for k in 0..self.n {
            for j in 0..k {
                l[(k, j)] = self.at(k, j);
            }
        }
        l
    }

    pub fn upper(&self) -> DenseMatrix {
        let mut u = DenseMatrix::zeros(self.n, self.n);
        for k in 0..self.n {
            for j in k..self.n {
                u[(k, j)] = self.at(k, j);
            }
        }
        u
    }
}

/// Factors a square matrix. A pivot with magnitude below `pivot_tol` marks
/// the factorization singular; elimination still completes so the
/// permutation stays well formed.
pub fn lu_factor(a: DenseMatrix, pivot_tol: f64) -> Result<LuFactorization> {
    if a.rows != a.cols {
        return Err(Error::NonSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let n = a.rows;
    let mut lu = a.data;

    let mut first_nz = vec![n; n];
    let mut last_nz = vec![0; n];
    let mut by_first: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for r in 0..n {
        let row = &lu[r * n..(r + 1) * n];
        if let Some(f) = row.iter().position(|&x| x != 0.0) {
            first_nz[r] = f;
            last_nz[r] = row.iter().rposition(|&x| x != 0.0).unwrap_or(f);
        }
        by_first[first_nz[r]].push(r);
    }
    // zero rows never become regular candidates
    let mut zero_rows = std::mem::take(&mut by_first[n]);
    zero_rows.reverse();

    let mut order: Vec<usize> = (0..n).collect();
    let mut position: Vec<usize> = (0..n).collect();
    let mut candidates: Vec<usize> = Vec::new();
    let mut row_swaps = 0;
    let mut singular = false;

    for k in 0..n {
        candidates.append(&mut by_first[k]);

        let mut best: Option<(usize, f64)> = None;
        for (idx, &r) in candidates.iter().enumerate() {
            let mag = lu[r * n + k].abs();
            if best.is_none_or(|(_, m)| mag > m) {
                best = Some((idx, mag));
            }
        }
        let pivot_row = match best {
            Some((idx, mag)) => {
                if mag < pivot_tol {
                    singular = true;
                }
                candidates.swap_remove(idx)
            }
            None => {
                // structurally zero column: borrow any unpivoted row
                singular = true;
                match by_first[k + 1..].iter_mut().find(|b| !b.is_empty()) {
                    Some(bucket) => bucket.pop().unwrap(),
                    None => zero_rows.pop().expect("an unpivoted row must remain"),
                }
            }
        };

        let at = position[pivot_row];
        if at != k {
            let displaced = order[k];
            order.swap(k, at);
            position[displaced] = at;
            position[pivot_row] = k;
            row_swaps += 1;
        }

        let pivot = lu[pivot_row * n + k];
        if pivot == 0.0 {
            continue;
        }
        let end = last_nz[pivot_row].max(k);
        let pivot_base = pivot_row * n;
        for &r in &candidates {
            let m = lu[r * n + k];
            if m == 0.0 {
                continue;
            }
            let m = m / pivot;
            lu[r * n + k] = m;
            for j in (k + 1)..=end {
                let upd = lu[pivot_base + j];
                lu[r * n + j] -= m * upd;
            }
            last_nz[r] = last_nz[r].max(end);
        }
    }

    Ok(LuFactorization {
        n,
        lu,
        perm: order,
        first_nz,
        last_nz,
        row_swaps,
        singular,
    })
}

/// Solves `Ax = b` with a factorization of `A`.
pub fn lu_solve(f: &LuFactorization, b: &[f64]) -> Result<Vec<f64>> {
    if f.singular {
        return Err(Error::SingularSystem);
    }
    if b.len() != f.n {
        return Err(Error::LengthMismatch {
            expected: f.n,
            actual: b.len(),
        });
    }
    let n = f.n;
    let mut y = vec![0.0; n];
    for k in 0..n {
        let r = f.perm[k];
        let row = &f.lu[r * n..(r + 1) * n];
        let start = f.first_nz[r].min(k);
        let mut acc = b[r];
        for j in start..k {
            acc -= row[j] * y[j];
        }
        y[k] = acc;
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let r = f.perm[k];
        let row = &f.lu[r * n..(r + 1) * n];
        let end = f.last_nz[r].max(k);
        let mut acc = y[k];
        for j in (k + 1)..=end {
            acc -= row[j] * x[j];
        }
        x[k] = acc / row[k];
    }
    Ok(x)
}

pub fn residual_inf(a: &DenseMatrix, x: &[f64], b: &[f64]) -> f64 {
    a.mul_vec(x)
        .iter()
        .zip(b)
        .map(|(ax, b)| (ax - b).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    use super::*;

    fn permuted(a: &DenseMatrix, perm: &[usize]) -> DenseMatrix {
        let rows: Vec<Vec<f64>> = perm.iter().map(|&r| a.row(r).to_vec()).collect();
        DenseMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn identity_factors_trivially() {
        let f = lu_factor(DenseMatrix::identity(4), DEFAULT_PIVOT_TOL).unwrap();
        assert_eq!(f.row_swaps(), 0);
        assert_eq!(f.permutation(), &[0, 1, 2, 3]);
        assert_eq!(f.lower(), DenseMatrix::identity(4));
        assert_eq!(f.upper(), DenseMatrix::identity(4));
        assert!(!f.is_singular());
    }

    #[test]
    fn exchange_matrix_needs_one_swap() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let f = lu_factor(a, DEFAULT_PIVOT_TOL).unwrap();
        assert_eq!(f.row_swaps(), 1);
        assert_eq!(f.pivots(), vec![1.0, 1.0]);
        assert_eq!(f.permutation(), &[1, 0]);
    }

    #[test]
    fn reconstructs_random_matrix() {
        let mut rng = StdRng::seed_from_u64(7);
        let n = 50;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| rng.random_range(-1.0..1.0) + if i == j { 5.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let a = DenseMatrix::from_rows(&rows).unwrap();
        let f = lu_factor(a.clone(), DEFAULT_PIVOT_TOL).unwrap();
        let lu = f.lower().matmul(&f.upper());
        let pa = permuted(&a, f.permutation());
        let err = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (lu[(i, j)] - pa[(i, j)]).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "reconstruction error {err}");
    }

    #[test]
    fn reconstructs_pivot_heavy_matrix() {
        // small leading entries force swaps on most steps
        let mut rng = StdRng::seed_from_u64(11);
        let n = 30;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let a = DenseMatrix::from_rows(&rows).unwrap();
        let f = lu_factor(a.clone(), DEFAULT_PIVOT_TOL).unwrap();
        assert!(f.row_swaps() > 0);
        let lu = f.lower().matmul(&f.upper());
        let pa = permuted(&a, f.permutation());
        for i in 0..n {
            for j in 0..n {
                assert!((lu[(i, j)] - pa[(i, j)]).abs() < 1e-10);
            }
        }
        let l = f.lower();
        for i in 0..n {
            for j in 0..i {
                assert!(l[(i, j)].abs() <= 1.0 + 1e-12, "partial pivoting bounds |L| by 1");
            }
        }
    }

    #[test]
    fn solves_diagonal_systems() {
        let f = lu_factor(DenseMatrix::identity(3), DEFAULT_PIVOT_TOL).unwrap();
        assert_eq!(lu_solve(&f, &[3.0, -1.0, 2.5]).unwrap(), vec![3.0, -1.0, 2.5]);
        let a = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let f = lu_factor(a, DEFAULT_PIVOT_TOL).unwrap();
        assert_eq!(lu_solve(&f, &[4.0, 6.0]).unwrap(), vec![2.0, 3.0]);
    }

    #[test]
    fn singular_inputs_are_flagged() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let f = lu_factor(a, DEFAULT_PIVOT_TOL).unwrap();
        assert!(f.is_singular());
        assert!(matches!(lu_solve(&f, &[1.0, 1.0]), Err(Error::SingularSystem)));

        let z = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let f = lu_factor(z, DEFAULT_PIVOT_TOL).unwrap();
        assert!(f.is_singular());
        let mut perm = f.permutation().to_vec();
        perm.sort_unstable();
        assert_eq!(perm, vec![0, 1]);

        let f = lu_factor(DenseMatrix::zeros(3, 3), DEFAULT_PIVOT_TOL).unwrap();
        assert!(f.is_singular());
    }

    #[test]
    fn non_square_rejected() {
        assert!(matches!(
            lu_factor(DenseMatrix::zeros(2, 3), DEFAULT_PIVOT_TOL),
            Err(Error::NonSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn banded_system_matches_dense_reference() {
        // tridiagonal with a wide far-off entry exercising the profile bounds
        let n = 40;
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = 4.0;
            if i > 0 {
                a[(i, i - 1)] = -1.0;
            }
            if i + 1 < n {
                a[(i, i + 1)] = -1.5;
            }
        }
        a[(n - 1, 0)] = 0.7;
        a[(2, n - 1)] = -0.3;
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let f = lu_factor(a.clone(), DEFAULT_PIVOT_TOL).unwrap();
        let x = lu_solve(&f, &b).unwrap();
        assert!(residual_inf(&a, &x, &b) < 1e-12);
    }
}
