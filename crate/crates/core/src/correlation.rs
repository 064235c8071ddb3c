//! Pearson-correlation analyses: metric against metric across all rows,
//! centre against centre per response, and factor against factor over
//! sensitivity vectors.
//!
//! Matrices are computed complete-case: rows with failed design points
//! are dropped table-wide before any vector is formed, which keeps the
//! vectors aligned and the matrices positive semidefinite. Pairs with a
//! constant input have no defined coefficient and are flagged, never
//! reported as 0 or 1.

use serde::Serialize;
use thiserror::Error;

use crate::anova::SensitivitySweep;
use crate::design::ResultTable;
use crate::gamma::ResponseMetric;
use crate::linalg::{symmetric_eigenvalues, Matrix};
use crate::scalar::{from_f64, from_usize, Scalar};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CorrError {
    #[error("vectors have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("input vector is constant")]
    ConstantInput,
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("centres were evaluated at different design points")]
    MisalignedDesigns,
}

/// Sample Pearson correlation coefficient, clamped to [-1, 1] against
/// floating-point rounding.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T, CorrError> {
    if x.len() != y.len() {
        return Err(CorrError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(CorrError::TooFewSamples(x.len()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(CorrError::NonFinite);
    }
    let n = from_usize::<T>(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    let mut syy = T::zero();
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(CorrError::ConstantInput);
    }
    let r = sxy / (sxx * syy).sqrt();
    let excess = r.abs() - T::one();
    debug_assert!(
        excess <= from_f64::<T>(1e-12),
        "|r| exceeds 1 beyond rounding: {r}"
    );
    Ok(if r > T::one() {
        T::one()
    } else if r < -T::one() {
        -T::one()
    } else {
        r
    })
}

/// A labelled symmetric matrix of Pearson coefficients. Entries are `None`
/// where the coefficient is undefined (constant input).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix<T: Scalar> {
    pub labels: Vec<String>,
    /// `r[i][j]`, symmetric with a unit diagonal.
    pub r: Vec<Vec<Option<T>>>,
    /// Common sample count behind every pair (complete-case computation).
    pub n_samples: usize,
}

impl<T: Scalar> CorrelationMatrix<T> {
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        self.r[i][j]
    }

    /// True when no entry is undefined.
    pub fn is_complete(&self) -> bool {
        self.r.iter().all(|row| row.iter().all(|v| v.is_some()))
    }

    /// Smallest eigenvalue of the coefficient matrix; `None` when any
    /// entry is undefined. Complete-case matrices are positive
    /// semidefinite up to rounding.
    pub fn min_eigenvalue(&self) -> Option<T> {
        if !self.is_complete() {
            return None;
        }
        let n = self.size();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, self.r[i][j].unwrap());
            }
        }
        symmetric_eigenvalues(&m).first().copied()
    }
}

/// Builds a correlation matrix from labelled equal-length vectors.
/// Constant vectors flag their pairs as undefined; the diagonal is exactly
/// one wherever the vector is non-constant.
fn matrix_from_vectors<T: Scalar>(
    labels: Vec<String>,
    vectors: &[Vec<T>],
) -> Result<CorrelationMatrix<T>, CorrError> {
    let n = vectors.first().map_or(0, Vec::len);
    if n < 3 {
        return Err(CorrError::TooFewSamples(n));
    }
    let k = vectors.len();
    let mut r: Vec<Vec<Option<T>>> = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let cell = match pearson(&vectors[i], &vectors[j]) {
                Ok(v) => Some(if i == j { T::one() } else { v }),
                Err(CorrError::ConstantInput) => None,
                Err(e) => return Err(e),
            };
            r[i][j] = cell;
            r[j][i] = cell;
        }
    }
    Ok(CorrelationMatrix { labels, r, n_samples: n })
}

/// Metric-against-metric correlation over every complete-case row of the
/// table, pooled across centres and design points. 12x12, fixed metric
/// order.
pub fn metric_correlation<T: Scalar>(
    table: &ResultTable<T>,
) -> Result<CorrelationMatrix<T>, CorrError> {
    let points = table.complete_case_points();
    let n_points = table.design().points().len();
    let mut vectors: Vec<Vec<T>> = vec![Vec::new(); 12];
    for c in 0..table.centre_ids().len() {
        for &p in &points {
            let row = &table.rows()[c * n_points + p];
            let result = row.outcome.ok().expect("complete-case row");
            for (k, metric) in ResponseMetric::ALL.iter().enumerate() {
                vectors[k].push(metric.extract(result));
            }
        }
    }
    let labels = ResponseMetric::ALL.iter().map(|m| m.label().to_string()).collect();
    matrix_from_vectors(labels, &vectors)
}

/// Centre-against-centre correlation of one response metric, with each
/// centre represented by its vector of values over the complete-case
/// design points (aligned by design point).
pub fn center_correlation<T: Scalar>(
    table: &ResultTable<T>,
    metric: ResponseMetric,
) -> Result<CorrelationMatrix<T>, CorrError> {
    let n_points = table.design().points().len();
    let n_centres = table.centre_ids().len();
    // All centres must have been evaluated at the identical point list.
    for c in 0..n_centres {
        for p in 0..n_points {
            let row = &table.rows()[c * n_points + p];
            if row.point != table.design().points()[p] {
                return Err(CorrError::MisalignedDesigns);
            }
        }
    }
    let points = table.complete_case_points();
    let vectors: Vec<Vec<T>> = (0..n_centres)
        .map(|c| {
            points
                .iter()
                .map(|&p| {
                    let row = &table.rows()[c * n_points + p];
                    metric.extract(row.outcome.ok().expect("complete-case row"))
                })
                .collect()
        })
        .collect();
    matrix_from_vectors(table.centre_ids().to_vec(), &vectors)
}

/// Factor-against-factor correlation of relative sensitivities for one
/// metric: each component F01..F10 becomes a vector of its sensitivity
/// across the centres where the sweep produced a defined vector.
pub fn factor_correlation<T: Scalar>(
    sweep: &SensitivitySweep<T>,
    metric: ResponseMetric,
) -> Result<CorrelationMatrix<T>, CorrError> {
    let m = sweep
        .metrics
        .iter()
        .position(|&x| x == metric)
        .ok_or(CorrError::TooFewSamples(0))?;
    let defined: Vec<&crate::anova::SensitivityVector<T>> = sweep
        .entries
        .iter()
        .filter_map(|per_metric| per_metric[m].as_ref().ok())
        .collect();
    if defined.len() < 3 {
        return Err(CorrError::TooFewSamples(defined.len()));
    }
    let labels = defined[0].labels();
    let n_components = labels.len();
    let vectors: Vec<Vec<T>> = (0..n_components)
        .map(|k| defined.iter().map(|v| v.components()[k]).collect())
        .collect();
    matrix_from_vectors(labels, &vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_correlation_is_one() {
        let x = [1.0, 4.0, 2.0, 8.0];
        assert_eq!(pearson(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn exact_negative_linearity() {
        let x = [1.0, 2.0, 3.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 7.0).collect();
        assert_eq!(pearson(&x, &y).unwrap(), -1.0);
    }

    #[test]
    fn known_three_point_value() {
        // cov = 3, var_x = 2, var_y = 42/9: r = 9/sqrt(84).
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - 9.0 / 84.0f64.sqrt()).abs() < 1e-15);
        assert!((r - 0.98198).abs() < 1e-5);
    }

    #[test]
    fn error_cases() {
        assert_eq!(
            pearson(&[1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            CorrError::LengthMismatch(2, 3)
        );
        assert_eq!(
            pearson(&[1.0, 2.0], &[1.0, 2.0]).unwrap_err(),
            CorrError::TooFewSamples(2)
        );
        assert_eq!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            CorrError::ConstantInput
        );
        assert_eq!(
            pearson(&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            CorrError::NonFinite
        );
    }

    #[test]
    fn affine_invariance() {
        let x = [0.3, 1.7, -2.0, 0.9, 4.4];
        let y = [1.0, 0.2, 0.5, 2.5, -1.0];
        let r = pearson(&x, &y).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| 3.0 * v - 11.0).collect();
        assert!((pearson(&xs, &y).unwrap() - r).abs() < 1e-12);
        let xn: Vec<f64> = x.iter().map(|v| -0.5 * v + 2.0).collect();
        assert!((pearson(&xn, &y).unwrap() + r).abs() < 1e-12);
    }

    #[test]
    fn matrix_flags_constant_column() {
        let vectors = vec![
            vec![1.0, 2.0, 3.0, 4.0],
            vec![5.0, 5.0, 5.0, 5.0],
            vec![2.0, 1.0, 4.0, 3.0],
        ];
        let labels = vec!["a".into(), "b".into(), "c".into()];
        let m = matrix_from_vectors(labels, &vectors).unwrap();
        assert_eq!(m.get(0, 0), Some(1.0));
        assert_eq!(m.get(0, 1), None);
        assert_eq!(m.get(1, 1), None);
        assert!(m.get(0, 2).is_some());
        assert!(!m.is_complete());
        assert_eq!(m.min_eigenvalue(), None);
    }

    #[test]
    fn duplicated_vector_gives_unit_pair() {
        let base = vec![1.0, 5.0, 2.0, 8.0, 3.0];
        let vectors = vec![base.clone(), base.clone(), vec![0.1, 0.5, 0.9, 0.2, 0.4]];
        let labels = vec!["a".into(), "dup".into(), "c".into()];
        let m = matrix_from_vectors(labels, &vectors).unwrap();
        assert_eq!(m.get(0, 1), Some(1.0));
    }

    #[test]
    fn matrix_is_symmetric_with_unit_diagonal_and_psd() {
        // Deterministic pseudo-random vectors.
        let mut state = 99u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let vectors: Vec<Vec<f64>> = (0..6).map(|_| (0..40).map(|_| next()).collect()).collect();
        let labels = (0..6).map(|k| format!("v{k}")).collect();
        let m = matrix_from_vectors(labels, &vectors).unwrap();
        for i in 0..6 {
            assert_eq!(m.get(i, i), Some(1.0));
            for j in 0..6 {
                let a = m.get(i, j).unwrap();
                let b = m.get(j, i).unwrap();
                assert!((a - b).abs() < 1e-12);
                assert!(a.abs() <= 1.0);
            }
        }
        let min_eig = m.min_eigenvalue().unwrap();
        assert!(min_eig >= -1e-9, "min eigenvalue {min_eig}");
    }
}
