//! Banded storage, banded LU with and without partial pivoting, and dense
//! oracles (solve, symmetric eigenvalues, condition numbers).
//!
//! Periodic coupling produces corner entries. Rather than storing corner
//! blocks, callers reorder the unknowns with [`interleave_order`], which maps
//! a cyclic band of half-width k to an ordinary band of half-width at most 2k + 1.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SbpError};

/// Square matrix with `kl` sub-diagonals and `ku` super-diagonals.
///
/// Row-major band storage: entry (i, j) lives at `data[i * (kl + ku + 1) + j + kl - i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    /// Builds a matrix from (row, col, value) triplets; duplicates are summed
    /// and the bandwidths are the smallest that hold every triplet.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut kl = 0;
        let mut ku = 0;
        for &(i, j, _) in triplets {
            if i >= n || j >= n {
                return Err(SbpError::SizeMismatch {
                    expected: n,
                    got: i.max(j) + 1,
                });
            }
            kl = kl.max(i.saturating_sub(j));
            ku = ku.max(j.saturating_sub(i));
        }
        let mut m = Self::zeros(n, kl, ku);
        for &(i, j, v) in triplets {
            *m.entry_mut(i, j) += v;
        }
        Ok(m)
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(SbpError::SizeMismatch {
                expected: n,
                got: a.ncols(),
            });
        }
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if a[(i, j)] != 0.0 {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(n, &t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    /// Entry (i, j), zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[i * (self.kl + self.ku + 1) + j + self.kl - i]
        } else {
            0.0
        }
    }

    /// Mutable entry (i, j); panics outside the band.
    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let w = self.kl + self.ku + 1;
        &mut self.data[i * w + j + self.kl - i]
    }

    fn col_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    /// Number of stored nonzero entries.
    pub fn nnz(&self) -> usize {
        (0..self.n)
            .map(|i| self.col_range(i).filter(|&j| self.get(i, j) != 0.0).count())
            .sum()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.col_range(i).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in self.col_range(i) {
                a[(i, j)] = self.get(i, j);
            }
        }
        a
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    /// Matrix 1-norm (largest absolute column sum).
    pub fn norm1(&self) -> f64 {
        let mut col = vec![0.0f64; self.n];
        for i in 0..self.n {
            for j in self.col_range(i) {
                col[j] += self.get(i, j).abs();
            }
        }
        col.into_iter().fold(0.0, f64::max)
    }

    /// Applies a symmetric reordering: entry (i, j) moves to (pos[i], pos[j]).
    pub fn permuted(&self, pos: &[usize]) -> Result<Self> {
        let mut t = Vec::with_capacity(self.data.len());
        for i in 0..self.n {
            for j in self.col_range(i) {
                let v = self.get(i, j);
                if v != 0.0 {
                    t.push((pos[i], pos[j], v));
                }
            }
        }
        Self::from_triplets(self.n, &t)
    }
}

/// Ordering 0, n-1, 1, n-2, ... of a cyclic index set, returned as the
/// position of each original index. Cyclic neighbours end up close together.
pub fn interleave_order(n: usize) -> Vec<usize> {
    let mut pos = vec![0; n];
    for i in 0..n {
        pos[i] = if 2 * i < n { 2 * i } else { 2 * (n - 1 - i) + 1 };
    }
    pos
}

/// Banded LU factorization stored as successive elimination steps.
///
/// With pivoting the factors satisfy P A = L U where row swaps are recorded
/// per step; multipliers of step k are stored in column k below the diagonal.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    /// Upper bandwidth of U (ku + kl with pivoting, ku without).
    ku_u: usize,
    /// Row-major storage, entry (i, j) at `i * w + j + kl - i`, w = 2 kl + ku + 1.
    lu: Vec<f64>,
    w: usize,
    piv: Vec<usize>,
    pivoted: bool,
    max_abs_a: f64,
}

/// Factors a banded matrix. Without pivoting an exact zero pivot is reported as singular.
pub fn lu_factor(m: &BandedMatrix, pivot: bool) -> Result<BandedLu> {
    let (n, kl, ku) = (m.n, m.kl, m.ku);
    let ku_u = if pivot { kl + ku } else { ku };
    let w = kl + ku_u + 1;
    let mut lu = vec![0.0; n * w];
    let idx = |i: usize, j: usize| i * w + j + kl - i;
    for i in 0..n {
        for j in m.col_range(i) {
            lu[idx(i, j)] = m.get(i, j);
        }
    }
    let mut piv: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let last_row = (k + kl).min(n - 1);
        let last_col = (k + ku_u).min(n - 1);
        if pivot {
            let mut p = k;
            let mut best = lu[idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = lu[idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    lu.swap(idx(k, j), idx(p, j));
                }
            }
        }
        let d = lu[idx(k, k)];
        if d == 0.0 {
            return Err(SbpError::Singular(k));
        }
        for i in k + 1..=last_row {
            let l = lu[idx(i, k)] / d;
            lu[idx(i, k)] = l;
            if l != 0.0 {
                for j in k + 1..=last_col {
                    lu[idx(i, j)] -= l * lu[idx(k, j)];
                }
            }
        }
    }
    Ok(BandedLu {
        n,
        kl,
        ku_u,
        lu,
        w,
        piv,
        pivoted: pivot,
        max_abs_a: m.max_abs(),
    })
}

impl BandedLu {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.lu[i * self.w + j + self.kl - i]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_pivoted(&self) -> bool {
        self.pivoted
    }

    /// Solves A x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<()> {
        let n = self.n;
        if b.len() != n {
            return Err(SbpError::SizeMismatch {
                expected: n,
                got: b.len(),
            });
        }
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    b[i] -= self.at(i, k) * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + self.ku_u).min(n - 1) {
                s -= self.at(k, j) * b[j];
            }
            b[k] = s / self.at(k, k);
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    /// Dense U factor.
    pub fn upper(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut u = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..=(i + self.ku_u).min(n - 1) {
                u[(i, j)] = self.at(i, j);
            }
        }
        u
    }

    /// Rebuilds A from the stored factors by undoing the elimination steps.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut a = self.upper();
        for k in (0..n).rev() {
            for i in k + 1..=(k + self.kl).min(n - 1) {
                let l = self.at(i, k);
                if l != 0.0 {
                    for j in 0..n {
                        a[(i, j)] += l * a[(k, j)];
                    }
                }
            }
            let p = self.piv[k];
            if p != k {
                a.swap_rows(k, p);
            }
        }
        a
    }

    /// Growth factor max |U| / max |A|.
    pub fn growth_factor(&self) -> f64 {
        let n = self.n;
        let mut m = 0.0f64;
        for i in 0..n {
            for j in i..=(i + self.ku_u).min(n - 1) {
                m = m.max(self.at(i, j).abs());
            }
        }
        m / self.max_abs_a
    }

    /// Exact 1-norm of the inverse, from n solves.
    pub fn inverse_norm1(&self) -> Result<f64> {
        let n = self.n;
        let mut best = 0.0f64;
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.fill(0.0);
            e[j] = 1.0;
            self.solve_in_place(&mut e)?;
            best = best.max(e.iter().map(|x| x.abs()).sum());
        }
        Ok(best)
    }
}

/// Condition number in the 1-norm computed from a pivoted banded factorization.
/// Returns +infinity for a singular matrix.
pub fn condition_1norm(m: &BandedMatrix) -> Result<f64> {
    match lu_factor(m, true) {
        Ok(lu) => Ok(m.norm1() * lu.inverse_norm1()?),
        Err(SbpError::Singular(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Condition number in the 2-norm from the singular values of the dense matrix.
/// Returns +infinity for a singular matrix.
pub fn condition_2norm(a: &DMatrix<f64>) -> f64 {
    let s = a.clone().singular_values();
    let max = s.max();
    let min = s.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(|x, y| x.total_cmp(y));
    e
}

/// Dense LU solve used as an oracle.
pub fn dense_solve(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    a.clone()
        .lu()
        .solve(&DVector::from_column_slice(b))
        .map(|x| x.iter().copied().collect())
        .ok_or(SbpError::Singular(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_band(n: usize, kl: usize, ku: usize, dominant: bool, seed: u64) -> BandedMatrix {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut m = BandedMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                *m.entry_mut(i, j) = rng.random_range(-1.0..1.0);
            }
            if dominant {
                *m.entry_mut(i, i) += (kl + ku + 2) as f64;
            }
        }
        m
    }

    #[test]
    fn identity_factors_trivially() {
        let t: Vec<_> = (0..5).map(|i| (i, i, 1.0)).collect();
        let m = BandedMatrix::from_triplets(5, &t).unwrap();
        for pivot in [false, true] {
            let lu = lu_factor(&m, pivot).unwrap();
            assert_eq!(lu.upper(), DMatrix::identity(5, 5));
            assert_eq!(lu.solve(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        }
        assert_eq!(condition_2norm(&m.to_dense()), 1.0);
        assert_eq!(condition_1norm(&m).unwrap(), 1.0);
    }

    #[test]
    fn diagonal_condition() {
        let m = BandedMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, 10.0)]).unwrap();
        assert!((condition_2norm(&m.to_dense()) - 10.0).abs() < 1e-12);
        assert!((condition_1norm(&m).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn singular_is_reported() {
        let m = BandedMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(lu_factor(&m, false), Err(SbpError::Singular(1))));
        assert_eq!(condition_2norm(&DMatrix::zeros(2, 2)), f64::INFINITY);
        assert_eq!(condition_1norm(&m).unwrap(), f64::INFINITY);
    }

    #[test]
    fn dominant_band_matches_dense_oracle() {
        let m = random_band(60, 3, 2, true, 1);
        let b: Vec<f64> = (0..60).map(|i| (i as f64).sin()).collect();
        let oracle = dense_solve(&m.to_dense(), &b).unwrap();
        for pivot in [false, true] {
            let x = lu_factor(&m, pivot).unwrap().solve(&b).unwrap();
            let err = x.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "pivot={pivot} err={err}");
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let m = random_band(40, 2, 3, false, 7);
        let mut m = m;
        *m.entry_mut(0, 0) = 0.0;
        let lu = lu_factor(&m, true).unwrap();
        let b: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let x = lu.solve(&b).unwrap();
        let r = m.matvec(&x);
        let err = r.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9 * (1.0 + b.iter().fold(0.0f64, |a, &v| a.max(v.abs()))));
    }

    #[test]
    fn reconstruction() {
        for pivot in [false, true] {
            let m = random_band(30, 2, 4, !pivot, 3);
            let lu = lu_factor(&m, pivot).unwrap();
            let d = (lu.reconstruct() - m.to_dense()).amax();
            assert!(d <= 1e-13 * m.max_abs() * 10.0, "pivot={pivot} diff={d}");
        }
    }

    #[test]
    fn interleave_makes_cyclic_band_narrow() {
        let n = 20;
        let mut t = Vec::new();
        for i in 0..n {
            for d in -3i64..=3 {
                let j = (i as i64 + d).rem_euclid(n as i64) as usize;
                t.push((i, j, 4.0 + d as f64));
            }
        }
        let m = BandedMatrix::from_triplets(n, &t).unwrap();
        assert_eq!(m.bandwidths(), (n - 1, n - 1));
        let p = m.permuted(&interleave_order(n)).unwrap();
        let (kl, ku) = p.bandwidths();
        assert!(kl <= 7 && ku <= 7, "{kl} {ku}");
        assert_eq!(p.nnz(), 7 * n);
    }

    #[test]
    fn eigenvalues_sorted() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = symmetric_eigenvalues(&a);
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
    }
}
