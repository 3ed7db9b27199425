//! Sparse storage, banded LU and small dense helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Determinant and row-major inverse of a `d x d` matrix, `d <= 3`.
///
/// The inverse is returned even when the determinant vanishes (entries are
/// then non-finite); callers check the determinant sign first.
pub fn small_inverse<S: Scalar>(a: &[S], d: usize) -> (S, Vec<S>) {
    match d {
        1 => (a[0], vec![S::cst(1.0) / a[0]]),
        2 => {
            let det = a[0] * a[3] - a[1] * a[2];
            let inv = vec![a[3] / det, -a[1] / det, -a[2] / det, a[0] / det];
            (det, inv)
        }
        3 => {
            let c00 = a[4] * a[8] - a[5] * a[7];
            let c01 = a[5] * a[6] - a[3] * a[8];
            let c02 = a[3] * a[7] - a[4] * a[6];
            let det = a[0] * c00 + a[1] * c01 + a[2] * c02;
            let inv = vec![
                c00 / det,
                (a[2] * a[7] - a[1] * a[8]) / det,
                (a[1] * a[5] - a[2] * a[4]) / det,
                c01 / det,
                (a[0] * a[8] - a[2] * a[6]) / det,
                (a[2] * a[3] - a[0] * a[5]) / det,
                c02 / det,
                (a[1] * a[6] - a[0] * a[7]) / det,
                (a[0] * a[4] - a[1] * a[3]) / det,
            ];
            (det, inv)
        }
        _ => panic!("small_inverse supports d <= 3, got {d}"),
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed
    /// in the order they appear, so the result is deterministic.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut data: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.data.len());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out.push((r, self.indices[k], self.data[k]));
            }
        }
        out
    }

    /// `a * A + b * B`.
    pub fn lin_comb(a: f64, ma: &CsrMatrix, b: f64, mb: &CsrMatrix) -> CsrMatrix {
        assert_eq!((ma.nrows, ma.ncols), (mb.nrows, mb.ncols));
        let mut t: Vec<_> = ma
            .triplets()
            .into_iter()
            .map(|(r, c, v)| (r, c, a * v))
            .collect();
        t.extend(mb.triplets().into_iter().map(|(r, c, v)| (r, c, b * v)));
        CsrMatrix::from_triplets(ma.nrows, ma.ncols, t)
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            map[c] = k;
        }
        let t = self
            .triplets()
            .into_iter()
            .filter(|&(_, c, _)| map[c] != usize::MAX)
            .map(|(r, c, v)| (r, map[c], v))
            .collect();
        CsrMatrix::from_triplets(self.nrows, cols.len(), t)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| {
                (self.indptr[r]..self.indptr[r + 1])
                    .map(|k| self.data[k] * x[self.indices[k]])
                    .sum()
            })
            .collect()
    }

    pub fn tmatvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += self.data[k] * x[r];
            }
        }
        y
    }

    /// Sparse times dense.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.ncols);
        let mut out = DMatrix::zeros(self.nrows, b.ncols());
        for j in 0..b.ncols() {
            let col = b.column(j);
            for r in 0..self.nrows {
                let mut s = 0.0;
                for k in self.indptr[r]..self.indptr[r + 1] {
                    s += self.data[k] * col[self.indices[k]];
                }
                out[(r, j)] = s;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            out[(r, c)] += v;
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t = self
            .triplets()
            .into_iter()
            .map(|(r, c, v)| (c, r, v))
            .collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, t)
    }

    /// Lower and upper bandwidths of the stored pattern.
    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for (r, c, _) in self.triplets() {
            if r > c {
                kl = kl.max(r - c);
            } else {
                ku = ku.max(c - r);
            }
        }
        (kl, ku)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Banded LU factorization with partial pivoting (LAPACK `gbtf2` layout:
/// column-major band with `kl` extra rows for fill-in).
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + (self.kl + self.ku + i - j)
    }

    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        assert_eq!(a.nrows, a.ncols);
        let n = a.nrows;
        let (kl, ku) = a.bandwidths();
        let ldab = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
            ipiv: vec![0; n],
        };
        for (r, c, v) in a.triplets() {
            let k = lu.idx(r, c);
            lu.ab[k] += v;
        }
        let kv = kl + ku;
        let mut ju = 0usize;
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = 0.0;
            for r in 0..=km {
                let v = lu.ab[lu.idx(j + r, j)].abs();
                if v > best {
                    best = v;
                    jp = r;
                }
            }
            lu.ipiv[j] = j + jp;
            if best <= 1e-14 * scale {
                return Err(Error::SingularMatrix {
                    row: j,
                    pivot: best,
                });
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let (i1, i2) = (lu.idx(j, c), lu.idx(j + jp, c));
                    lu.ab.swap(i1, i2);
                }
            }
            let piv = lu.ab[lu.idx(j, j)];
            for r in 1..=km {
                let k = lu.idx(j + r, j);
                lu.ab[k] /= piv;
            }
            for c in (j + 1)..=ju {
                let ujc = lu.ab[lu.idx(j, c)];
                if ujc == 0.0 {
                    continue;
                }
                for r in 1..=km {
                    let l = lu.ab[lu.idx(j + r, j)];
                    let k = lu.idx(j + r, c);
                    lu.ab[k] -= l * ujc;
                }
            }
            debug_assert!(ju <= j + kv || n == 0);
        }
        Ok(lu)
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let kv = self.kl + self.ku;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let km = self.kl.min(n - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                for r in 1..=km {
                    b[j + r] -= self.ab[self.idx(j + r, j)] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[self.idx(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                for i in j.saturating_sub(kv)..j {
                    b[i] -= self.ab[self.idx(i, j)] * bj;
                }
            }
        }
    }

    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let kv = self.kl + self.ku;
        for j in 0..n {
            let mut s = b[j];
            for i in j.saturating_sub(kv)..j {
                s -= self.ab[self.idx(i, j)] * b[i];
            }
            b[j] = s / self.ab[self.idx(j, j)];
        }
        for j in (0..n.saturating_sub(1)).rev() {
            let km = self.kl.min(n - 1 - j);
            let mut s = b[j];
            for r in 1..=km {
                s -= self.ab[self.idx(j + r, j)] * b[j + r];
            }
            b[j] = s;
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
        }
    }
}

type DenseLu = nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>;

/// Square solver that picks a banded LU for narrow-band matrices and a dense
/// LU otherwise (periodic couplings widen the band to the full matrix).
#[derive(Clone, Debug)]
pub enum SquareSolver {
    Banded(BandedLu),
    /// Factorizations of the matrix and of its transpose.
    Dense(Box<(DenseLu, DenseLu)>),
}

impl SquareSolver {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows;
        let (kl, ku) = a.bandwidths();
        if 2 * kl + ku + 1 < n / 4 {
            return Ok(Self::Banded(BandedLu::factor(a)?));
        }
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let dense = a.to_dense();
        let lu_t = dense.transpose().lu();
        let lu = dense.lu();
        let u = lu.u();
        for i in 0..n {
            if u[(i, i)].abs() <= 1e-14 * scale {
                return Err(Error::SingularMatrix {
                    row: i,
                    pivot: u[(i, i)].abs(),
                });
            }
        }
        Ok(Self::Dense(Box::new((lu, lu_t))))
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Self::Banded(lu) => {
                let mut x = b.to_vec();
                lu.solve_in_place(&mut x);
                x
            }
            Self::Dense(f) => {
                let x =
                    f.0.solve(&DVector::from_column_slice(b))
                        .expect("factor checked pivots");
                x.as_slice().to_vec()
            }
        }
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Self::Banded(lu) => {
                let mut x = b.to_vec();
                lu.solve_transpose_in_place(&mut x);
                x
            }
            Self::Dense(f) => {
                let x =
                    f.1.solve(&DVector::from_column_slice(b))
                        .expect("factor checked pivots");
                x.as_slice().to_vec()
            }
        }
    }

    /// Solves for every column of `b`.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        for j in 0..b.ncols() {
            let col: Vec<f64> = b.column(j).iter().copied().collect();
            let x = self.solve(&col);
            out.column_mut(j).copy_from_slice(&x);
        }
        out
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn banded_random(n: usize, kl: usize, ku: usize, seed: u64) -> CsrMatrix {
        let mut s = seed;
        let mut next = || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut t = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                t.push((i, j, next()));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(1, 0, 1.0), (0, 1, 2.0), (1, 0, 3.0)]);
        assert_eq!(
            m.to_dense(),
            DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 4.0, 0.0])
        );
        assert_eq!(m.data.len(), 2);
    }

    #[test]
    fn small_inverse_3x3() {
        let a = [2.0, 1.0, 0.0, 0.5, 3.0, 1.0, 0.0, -1.0, 4.0];
        let (det, inv) = small_inverse(&a, 3);
        let dm = DMatrix::from_row_slice(3, 3, &a);
        assert!((det - dm.determinant()).abs() < 1e-13);
        let prod = dm * DMatrix::from_row_slice(3, 3, &inv);
        assert!((prod - DMatrix::identity(3, 3)).norm() < 1e-13);
    }

    proptest! {
        #[test]
        fn banded_lu_matches_dense(n in 3usize..40, kl in 0usize..4, ku in 0usize..4, seed in any::<u64>()) {
            let a = banded_random(n, kl, ku, seed);
            let dense = a.to_dense();
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            if let Ok(lu) = BandedLu::factor(&a) {
                let mut x = b.clone();
                lu.solve_in_place(&mut x);
                let r = &dense * DVector::from_column_slice(&x) - DVector::from_column_slice(&b);
                let cond_guard = dense.clone().svd(false, false).singular_values.min();
                prop_assume!(cond_guard > 1e-6);
                prop_assert!(r.norm() < 1e-8 * (1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max)));
                let mut y = b.clone();
                lu.solve_transpose_in_place(&mut y);
                let rt = dense.transpose() * DVector::from_column_slice(&y) - DVector::from_column_slice(&b);
                prop_assert!(rt.norm() < 1e-8 * (1.0 + y.iter().map(|v| v.abs()).fold(0.0, f64::max)));
            }
        }
    }

    #[test]
    fn singular_band_is_reported() {
        let a = CsrMatrix::from_triplets(3, 3, vec![(0, 0, 1.0), (1, 0, 1.0), (2, 2, 1.0)]);
        assert!(matches!(
            BandedLu::factor(&a),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn sparse_products_agree_with_dense() {
        let a = banded_random(7, 2, 1, 3).select_columns(&[0, 2, 5]);
        let x = [1.0, -2.0, 0.5];
        let y: Vec<f64> = (0..7).map(|i| i as f64).collect();
        let d = a.to_dense();
        let ax = &d * DVector::from_column_slice(&x);
        let aty = d.transpose() * DVector::from_column_slice(&y);
        for i in 0..7 {
            assert!((a.matvec(&x)[i] - ax[i]).abs() < 1e-14);
        }
        for i in 0..3 {
            assert!((a.tmatvec(&y)[i] - aty[i]).abs() < 1e-13);
        }
        let b = DMatrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64);
        assert!((a.mul_dense(&b) - &d * &b).norm() < 1e-13);
    }
}
