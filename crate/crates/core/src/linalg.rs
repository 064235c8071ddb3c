//! Small dense linear algebra: column-pivoted Householder least squares
//! and symmetric eigenvalues via cyclic Jacobi rotations.
//!
//! The ANOVA fits are tiny (hundreds of rows, tens of columns), so a
//! self-contained rank-revealing solver keeps the crate generic over the
//! scalar type without pulling in a full linear-algebra stack.

use thiserror::Error;

use crate::scalar::{from_usize, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: matrix is {rows}x{cols}, rhs has {rhs} entries")]
    DimensionMismatch { rows: usize, cols: usize, rhs: usize },
    #[error("matrix is rank deficient: rank {rank} < {cols} columns")]
    RankDeficient { rank: usize, cols: usize },
}

/// Dense row-major matrix.
#[derive(Debug, Clone)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            assert_eq!(r.len(), ncols, "ragged rows");
            data.extend(r);
        }
        Matrix { rows: nrows, cols: ncols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }
}

/// Least-squares fit outcome: residual sum of squares and numerical rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstsqFit<T> {
    pub residual_ss: T,
    pub rank: usize,
}

/// Solves `min ||A x - y||^2` by Householder QR with column pivoting and
/// returns the residual sum of squares.
///
/// Rank is detected from the pivoted diagonal of R; callers that require a
/// full-rank design must check `fit.rank == a.cols()`.
pub fn lstsq_residual_ss<T: Scalar>(a: &Matrix<T>, y: &[T]) -> Result<LstsqFit<T>, LinalgError> {
    let m = a.rows();
    let n = a.cols();
    if y.len() != m {
        return Err(LinalgError::DimensionMismatch { rows: m, cols: n, rhs: y.len() });
    }
    if m == 0 {
        return Ok(LstsqFit { residual_ss: T::zero(), rank: 0 });
    }
    let mut r = a.clone();
    let mut b = y.to_vec();

    // Remaining squared column norms, updated as rows are eliminated.
    let mut col_norm2: Vec<T> = (0..n)
        .map(|c| (0..m).map(|row| r.get(row, c) * r.get(row, c)).sum())
        .collect();
    let mut perm: Vec<usize> = (0..n).collect();

    let kmax = n.min(m);
    let mut rank = 0usize;
    let mut first_diag = T::zero();
    for k in 0..kmax {
        // Pivot: bring the column with the largest remaining norm to k.
        let (pivot, _) = (k..n).fold((k, col_norm2[k]), |(bi, bv), c| {
            if col_norm2[c] > bv { (c, col_norm2[c]) } else { (bi, bv) }
        });
        if pivot != k {
            for row in 0..m {
                let tmp = r.get(row, k);
                r.set(row, k, r.get(row, pivot));
                r.set(row, pivot, tmp);
            }
            col_norm2.swap(k, pivot);
            perm.swap(k, pivot);
        }

        // Householder reflector for column k below row k.
        let norm = (k..m).map(|row| r.get(row, k) * r.get(row, k)).sum::<T>().sqrt();
        if k == 0 {
            first_diag = norm;
        }
        let tol = from_usize::<T>(m.max(n)) * T::epsilon() * first_diag;
        if norm <= tol {
            break;
        }
        rank += 1;

        let alpha = if r.get(k, k) >= T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..m).map(|row| r.get(row, k)).collect();
        v[0] -= alpha;
        let v_norm2: T = v.iter().map(|&x| x * x).sum();
        if v_norm2 > T::zero() {
            let two = from_usize::<T>(2);
            for c in k..n {
                let dot: T = v
                    .iter()
                    .enumerate()
                    .map(|(i, &vi)| vi * r.get(k + i, c))
                    .sum();
                let scale = two * dot / v_norm2;
                for (i, &vi) in v.iter().enumerate() {
                    let cur = r.get(k + i, c);
                    r.set(k + i, c, cur - scale * vi);
                }
            }
            let dot: T = v.iter().enumerate().map(|(i, &vi)| vi * b[k + i]).sum();
            let scale = two * dot / v_norm2;
            for (i, &vi) in v.iter().enumerate() {
                b[k + i] = b[k + i] - scale * vi;
            }
        }
        r.set(k, k, alpha);

        for c in (k + 1)..n {
            let rkc = r.get(k, c);
            col_norm2[c] = col_norm2[c] - rkc * rkc;
            if col_norm2[c] < T::zero() {
                col_norm2[c] = T::zero();
            }
        }
        col_norm2[k] = T::zero();
    }

    let residual_ss = b[rank..].iter().map(|&x| x * x).sum();
    Ok(LstsqFit { residual_ss, rank })
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, returned
/// in ascending order.
pub fn symmetric_eigenvalues<T: Scalar>(a: &Matrix<T>) -> Vec<T> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "matrix must be square");
    let mut m = a.clone();
    let eps = T::epsilon();
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += m.get(p, q) * m.get(p, q);
            }
        }
        let norm: T = (0..n)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .map(|(r, c)| m.get(r, c) * m.get(r, c))
            .sum();
        if off <= eps * eps * norm {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == T::zero() {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let two = from_usize::<T>(2);
                let theta = (aqq - app) / (two * apq);
                let t = {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (T::one() + theta * theta).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    let mut eig: Vec<T> = (0..n).map(|i| m.get(i, i)).collect();
    eig.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    eig
}
