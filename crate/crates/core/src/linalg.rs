//! Small dense matrices: exact determinants and ranks by fraction-free
//! (Bareiss) elimination, floating ranks with a relative pivot threshold.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::scalar::Scalar;
use crate::Rational;

/// Where a matrix came from; carried along for reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Direct,
    Factorized,
    Submatrix,
    Other,
}

#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
    pub provenance: Provenance,
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} ({:?})", self.rows, self.cols, self.provenance)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", &self.data[r * self.cols..(r + 1) * self.cols])?;
        }
        Ok(())
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

impl<T: Clone> Matrix<T> {
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let data = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self { rows, cols, data, provenance: Provenance::Other }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self { rows: r, cols: c, data: rows.into_iter().flatten().collect(), provenance: Provenance::Other }
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = p;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].clone()).with_provenance(self.provenance)
    }

    /// Rows and columns selected by the given index lists.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |r, c| self[(rows[r], cols[c])].clone())
            .with_provenance(Provenance::Submatrix)
    }

    pub fn map<U: Clone>(&self, f: impl Fn(&T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
            provenance: self.provenance,
        }
    }

    pub fn entries(&self) -> &[T] {
        &self.data
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| T::zero())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { T::one() } else { T::zero() })
    }

    /// The standard symplectic matrix `J = [[0, I_n], [−I_n, 0]]` of order `2n`.
    pub fn symplectic(n: usize) -> Self {
        Self::from_fn(2 * n, 2 * n, |r, c| {
            if c == r + n && r < n {
                T::one()
            } else if r == c + n && c < n {
                -T::one()
            } else {
                T::zero()
            }
        })
    }

    /// `u vᵀ`.
    pub fn outer(u: &[T], v: &[T]) -> Self {
        Self::from_fn(u.len(), v.len(), |r, c| u[r].clone() * v[c].clone())
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        Self::from_fn(self.rows, rhs.cols, |r, c| {
            (0..self.cols).fold(T::zero(), |acc, k| acc + self[(r, k)].clone() * rhs[(k, c)].clone())
        })
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| (0..self.cols).fold(T::zero(), |acc, k| acc + self[(r, k)].clone() * v[k].clone()))
            .collect()
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self::from_fn(self.rows, self.cols, |r, c| self[(r, c)].clone() + rhs[(r, c)].clone())
    }

    pub fn scale(&self, s: &T) -> Self {
        self.map(|v| v.clone() * s.clone())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.to_f64_lossy().abs()).fold(0.0, f64::max)
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        self.map(Scalar::to_f64_lossy)
    }
}

/// Rank by Gaussian elimination with partial pivoting; pivots below
/// `eps · max|entry|` count as zero.
pub fn rank_tolerant(m: &Matrix<f64>, eps: f64) -> usize {
    let mut a = m.clone();
    let thresh = eps * m.max_abs();
    let (rows, cols) = (a.rows, a.cols);
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let (piv, val) =
            (rank..rows)
                .map(|r| (r, a[(r, c)].abs()))
                .fold((rank, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if val <= thresh {
            continue;
        }
        for k in 0..cols {
            a.data.swap(rank * cols + k, piv * cols + k);
        }
        for r in rank + 1..rows {
            let f = a[(r, c)] / a[(rank, c)];
            for k in c..cols {
                let v = a[(rank, k)];
                a[(r, k)] -= f * v;
            }
        }
        rank += 1;
    }
    rank
}

/// Default relative threshold for [`rank_tolerant`].
pub const DEFAULT_RANK_EPS: f64 = 1e-9;

/// Clear denominators row by row. Returns the integer matrix and the
/// product of the row multipliers.
fn integerize(m: &Matrix<Rational>) -> (Matrix<BigInt>, BigInt) {
    let mut out = Vec::with_capacity(m.rows);
    let mut scale = BigInt::one();
    for r in 0..m.rows {
        let row = &m.data[r * m.cols..(r + 1) * m.cols];
        let l = row.iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
        out.push(row.iter().map(|v| v.numer() * (&l / v.denom())).collect::<Vec<_>>());
        scale *= l;
    }
    (Matrix::from_rows(out), scale)
}

/// Fraction-free elimination; returns (rank, determinant if square).
fn bareiss(mut a: Matrix<BigInt>) -> (usize, Option<BigInt>) {
    let (rows, cols) = (a.rows, a.cols);
    let mut prev = BigInt::one();
    let mut sign = BigInt::one();
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let Some(piv) = (rank..rows).find(|&r| !a[(r, c)].is_zero()) else { continue };
        if piv != rank {
            for k in 0..cols {
                a.data.swap(rank * cols + k, piv * cols + k);
            }
            sign = -sign;
        }
        for r in rank + 1..rows {
            for k in c + 1..cols {
                let v = &a[(rank, c)] * &a[(r, k)] - &a[(r, c)] * &a[(rank, k)];
                a[(r, k)] = v / &prev;
            }
            a[(r, c)] = BigInt::zero();
        }
        prev = a[(rank, c)].clone();
        rank += 1;
    }
    let det = if rows == cols {
        Some(if rank == rows { sign * a[(rows - 1, cols - 1)].clone() } else { BigInt::zero() })
    } else {
        None
    };
    (rank, det)
}

/// Exact rank of a rational matrix.
pub fn rank_exact(m: &Matrix<Rational>) -> usize {
    bareiss(integerize(m).0).0
}

/// Exact determinant of a square rational matrix.
pub fn det_exact(m: &Matrix<Rational>) -> Rational {
    assert!(m.is_square(), "determinant of a non-square matrix");
    if m.rows == 0 {
        return Rational::one();
    }
    let (a, scale) = integerize(m);
    let det = bareiss(a).1.expect("square");
    Rational::new(det, scale)
}

/// Determinant by partial-pivot elimination in `f64`.
pub fn det_f64(m: &Matrix<f64>) -> f64 {
    assert!(m.is_square());
    let mut a = m.clone();
    let n = a.rows;
    let mut det = 1.0;
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[(i, c)].abs().total_cmp(&a[(j, c)].abs())).unwrap();
        if a[(piv, c)] == 0.0 {
            return 0.0;
        }
        if piv != c {
            for k in 0..n {
                a.data.swap(c * n + k, piv * n + k);
            }
            det = -det;
        }
        det *= a[(c, c)];
        for r in c + 1..n {
            let f = a[(r, c)] / a[(c, c)];
            for k in c..n {
                let v = a[(c, k)];
                a[(r, k)] -= f * v;
            }
        }
    }
    det
}

/// Exact inverse of a square rational matrix, `None` if singular.
pub fn inverse_exact(m: &Matrix<Rational>) -> Option<Matrix<Rational>> {
    assert!(m.is_square());
    let n = m.rows;
    let mut a = m.clone();
    let mut inv = Matrix::<Rational>::identity(n);
    for c in 0..n {
        let piv = (c..n).find(|&r| !a[(r, c)].is_zero())?;
        for k in 0..n {
            a.data.swap(c * n + k, piv * n + k);
            inv.data.swap(c * n + k, piv * n + k);
        }
        let p = a[(c, c)].clone();
        for k in 0..n {
            a[(c, k)] = &a[(c, k)] / &p;
            inv[(c, k)] = &inv[(c, k)] / &p;
        }
        for r in 0..n {
            if r == c || a[(r, c)].is_zero() {
                continue;
            }
            let f = a[(r, c)].clone();
            for k in 0..n {
                let (av, iv) = (a[(c, k)].clone(), inv[(c, k)].clone());
                a[(r, k)] -= &f * av;
                inv[(r, k)] -= &f * iv;
            }
        }
    }
    Some(inv)
}

/// Sign of an exact rational: -1, 0 or 1.
pub fn sign(v: &Rational) -> i32 {
    if v.is_zero() {
        0
    } else if v.is_positive() {
        1
    } else {
        -1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, ratio};

    fn rat(rows: &[&[i64]]) -> Matrix<Rational> {
        Matrix::from_rows(rows.iter().map(|r| r.iter().map(|&v| int(v)).collect()).collect())
    }

    #[test]
    fn identity_and_zero_ranks() {
        assert_eq!(rank_exact(&Matrix::<Rational>::identity(4)), 4);
        assert_eq!(rank_exact(&Matrix::<Rational>::zeros(4, 4)), 0);
        assert_eq!(rank_tolerant(&Matrix::<f64>::identity(4), DEFAULT_RANK_EPS), 4);
        assert_eq!(rank_tolerant(&Matrix::<f64>::zeros(3, 5), DEFAULT_RANK_EPS), 0);
    }

    #[test]
    fn determinant_by_cofactor_expansion() {
        // oracle: explicit 3x3 cofactor formula
        let m = rat(&[&[2, -1, 3], &[0, 4, 5], &[7, 1, -2]]);
        let e = |r: usize, c: usize| m[(r, c)].clone();
        let cof = e(0, 0) * (e(1, 1) * e(2, 2) - e(1, 2) * e(2, 1)) - e(0, 1) * (e(1, 0) * e(2, 2) - e(1, 2) * e(2, 0))
            + e(0, 2) * (e(1, 0) * e(2, 1) - e(1, 1) * e(2, 0));
        assert_eq!(det_exact(&m), cof);
        assert!((det_f64(&m.to_f64()) - cof.to_f64_lossy()).abs() < 1e-9);
    }

    #[test]
    fn rational_entries_and_singular_matrices() {
        let m = Matrix::from_rows(vec![vec![ratio(1, 2), ratio(1, 3)], vec![ratio(1, 4), ratio(1, 6)]]);
        assert_eq!(det_exact(&m), int(0));
        assert_eq!(rank_exact(&m), 1);
        assert!(inverse_exact(&m).is_none());
        let n = Matrix::from_rows(vec![vec![ratio(1, 2), int(3)], vec![int(-1), ratio(2, 3)]]);
        assert_eq!(det_exact(&n), ratio(1, 3) + int(3));
        let inv = inverse_exact(&n).unwrap();
        assert_eq!(inv.mul(&n), Matrix::identity(2));
    }

    #[test]
    fn symplectic_squares_to_minus_identity() {
        for n in 1..4 {
            let j = Matrix::<Rational>::symplectic(n);
            assert_eq!(j.mul(&j), Matrix::identity(2 * n).scale(&int(-1)));
            assert_eq!(j.transpose(), j.scale(&int(-1)));
        }
    }

    #[test]
    fn rectangular_rank() {
        let m = rat(&[&[1, 2, 3, 4], &[2, 4, 6, 8], &[0, 1, 0, 1]]);
        assert_eq!(rank_exact(&m), 2);
        assert_eq!(rank_tolerant(&m.to_f64(), DEFAULT_RANK_EPS), 2);
    }
}
