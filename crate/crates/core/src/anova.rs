//! Type III sums of squares for a main-effects model over the audit
//! factors, pooled interactions, and relative sensitivities.
//!
//! With one observation per cell of a complete factorial, the residual of
//! the main-effects fit is exactly the pooled variance of all factor
//! interactions; it is reported as the tenth component F10. Each term's
//! sum of squares is the increase in residual sum of squares when that
//! term is dropped from the full main-effects model (partial sum of
//! squares), computed on sum-to-zero level encodings so the hypothesis is
//! order-independent.

use serde::Serialize;
use thiserror::Error;

use crate::design::{Factor, FactorId, ResultTable};
use crate::gamma::ResponseMetric;
use crate::linalg::{lstsq_residual_ss, Matrix};
use crate::scalar::{from_f64, from_usize, Scalar};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnovaError {
    #[error("design slice is not a balanced complete factorial: {0}")]
    UnbalancedDesign(String),
    #[error("model matrix is rank deficient")]
    SingularFit,
    #[error("response contains a non-finite value at row {0}")]
    NonFiniteResponse(usize),
    #[error("response has zero total variance")]
    ZeroVariance,
}

/// Per-term sum of squares and degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnovaTerm<T: Scalar> {
    pub factor: FactorId,
    pub ss: T,
    pub df: usize,
}

/// Type III decomposition of one response over the design factors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaTable<T: Scalar> {
    pub terms: Vec<AnovaTerm<T>>,
    /// Residual of the main-effects fit: the pooled interactions.
    pub residual_ss: T,
    pub residual_df: usize,
    pub total_ss: T,
    pub total_df: usize,
}

/// Relative sensitivities: each factor's share of the total response
/// variance, plus the pooled higher-order interactions (F10).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityVector<T: Scalar> {
    pub factors: Vec<FactorId>,
    /// Aligned with `factors`.
    pub sensitivities: Vec<T>,
    /// Pooled interactions share (the F10 component).
    pub interactions: T,
}

impl<T: Scalar> SensitivityVector<T> {
    /// All components in report order: factors first, then F10.
    pub fn components(&self) -> Vec<T> {
        let mut out = self.sensitivities.clone();
        out.push(self.interactions);
        out
    }

    /// Labels matching [`SensitivityVector::components`].
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = self.factors.iter().map(|f| f.label().to_string()).collect();
        out.push("F10".to_string());
        out
    }
}

/// Verifies that `points` form a balanced complete factorial over
/// `factors`: the full Cartesian product, each combination exactly once.
fn check_balanced(factors: &[Factor], points: &[Vec<usize>]) -> Result<(), AnovaError> {
    if factors.is_empty() {
        return Err(AnovaError::UnbalancedDesign("no factors".into()));
    }
    let expected: usize = factors.iter().map(|f| f.levels.len()).product();
    if points.len() != expected {
        return Err(AnovaError::UnbalancedDesign(format!(
            "{} rows, complete design needs {expected}",
            points.len()
        )));
    }
    for p in points {
        if p.len() != factors.len() {
            return Err(AnovaError::UnbalancedDesign(format!(
                "point has {} entries for {} factors",
                p.len(),
                factors.len()
            )));
        }
        for (f, &level) in factors.iter().zip(p) {
            if level >= f.levels.len() {
                return Err(AnovaError::UnbalancedDesign(format!(
                    "level index {level} out of range for {}",
                    f.id
                )));
            }
        }
    }
    let mut sorted: Vec<&Vec<usize>> = points.iter().collect();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(AnovaError::UnbalancedDesign("duplicated design point".into()));
    }
    Ok(())
}

/// Sum-to-zero encoding: a factor with L levels contributes L-1 columns;
/// level j < L-1 puts +1 in column j, the last level puts -1 everywhere.
fn encode_level<T: Scalar>(level: usize, n_levels: usize, row: &mut Vec<T>) {
    for j in 0..n_levels - 1 {
        let v = if level == j {
            T::one()
        } else if level == n_levels - 1 {
            -T::one()
        } else {
            T::zero()
        };
        row.push(v);
    }
}

/// Builds the model matrix with an intercept and the encodings of the
/// factors selected by `include`.
fn model_matrix<T: Scalar>(
    factors: &[Factor],
    points: &[Vec<usize>],
    include: &[bool],
) -> Matrix<T> {
    let rows = points
        .iter()
        .map(|p| {
            let mut row = vec![T::one()];
            for (f, factor) in factors.iter().enumerate() {
                if include[f] {
                    encode_level(p[f], factor.levels.len(), &mut row);
                }
            }
            row
        })
        .collect();
    Matrix::from_rows(rows)
}

fn fit_sse<T: Scalar>(
    factors: &[Factor],
    points: &[Vec<usize>],
    include: &[bool],
    y: &[T],
) -> Result<T, AnovaError> {
    let x = model_matrix(factors, points, include);
    let fit = lstsq_residual_ss(&x, y).map_err(|_| AnovaError::SingularFit)?;
    if fit.rank < x.cols() {
        return Err(AnovaError::SingularFit);
    }
    Ok(fit.residual_ss)
}

/// Type III (partial) sums of squares for a main-effects model: the SS of
/// each term is `SSE(model without the term) - SSE(full model)`, with the
/// full-model residual pooling every interaction.
pub fn type3_ss<T: Scalar>(
    factors: &[Factor],
    points: &[Vec<usize>],
    responses: &[T],
) -> Result<AnovaTable<T>, AnovaError> {
    check_balanced(factors, points)?;
    if responses.len() != points.len() {
        return Err(AnovaError::UnbalancedDesign(format!(
            "{} responses for {} rows",
            responses.len(),
            points.len()
        )));
    }
    if let Some(bad) = responses.iter().position(|v| !v.is_finite()) {
        return Err(AnovaError::NonFiniteResponse(bad));
    }

    let n = responses.len();
    let mean = responses.iter().copied().sum::<T>() / from_usize::<T>(n);
    let total_ss = responses
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<T>();

    let all = vec![true; factors.len()];
    let sse_full = fit_sse(factors, points, &all, responses)?;

    let floor = -from_f64::<T>(1e-9) * total_ss;
    let mut terms = Vec::with_capacity(factors.len());
    for f in 0..factors.len() {
        let mut include = all.clone();
        include[f] = false;
        let sse_reduced = fit_sse(factors, points, &include, responses)?;
        let mut ss = sse_reduced - sse_full;
        if ss < T::zero() {
            debug_assert!(ss >= floor, "negative SS beyond the numerical floor");
            ss = T::zero();
        }
        terms.push(AnovaTerm {
            factor: factors[f].id,
            ss,
            df: factors[f].levels.len() - 1,
        });
    }
    let model_df: usize = terms.iter().map(|t| t.df).sum();
    Ok(AnovaTable {
        terms,
        residual_ss: sse_full,
        residual_df: n - 1 - model_df,
        total_ss,
        total_df: n - 1,
    })
}

/// Converts an ANOVA table to relative sensitivities: `SS_term /
/// SS_total` per factor and `SS_residual / SS_total` for the pooled
/// interactions.
pub fn relative_sensitivities<T: Scalar>(
    anova: &AnovaTable<T>,
) -> Result<SensitivityVector<T>, AnovaError> {
    if !(anova.total_ss > T::zero()) {
        return Err(AnovaError::ZeroVariance);
    }
    let sensitivities = anova
        .terms
        .iter()
        .map(|t| t.ss / anova.total_ss)
        .collect();
    Ok(SensitivityVector {
        factors: anova.terms.iter().map(|t| t.factor).collect(),
        sensitivities,
        interactions: anova.residual_ss / anova.total_ss,
    })
}

/// Sensitivity vectors for every (centre, metric) pair of a result table.
#[derive(Debug, Clone)]
pub struct SensitivitySweep<T: Scalar> {
    pub centres: Vec<String>,
    pub metrics: Vec<ResponseMetric>,
    /// `entries[centre][metric]`, aligned with `centres` and `metrics`.
    pub entries: Vec<Vec<Result<SensitivityVector<T>, AnovaError>>>,
}

impl<T: Scalar> SensitivitySweep<T> {
    pub fn entry(
        &self,
        centre: usize,
        metric: usize,
    ) -> &Result<SensitivityVector<T>, AnovaError> {
        &self.entries[centre][metric]
    }
}

/// Runs `type3_ss` + `relative_sensitivities` per (centre, metric).
///
/// A centre with a failed row cannot form a complete balanced slice and
/// is flagged with `UnbalancedDesign` for every metric; a constant
/// response is flagged `ZeroVariance`. Flagged entries never poison the
/// rest of the sweep.
pub fn sensitivity_sweep<T: Scalar>(
    table: &ResultTable<T>,
    metrics: &[ResponseMetric],
) -> SensitivitySweep<T> {
    let factors = table.design().factors();
    let points = table.design().points();
    let mut entries = Vec::with_capacity(table.centre_ids().len());
    for centre in table.centre_ids() {
        let rows: Vec<_> = table.centre_rows(centre).collect();
        let mut per_metric = Vec::with_capacity(metrics.len());
        let complete = rows.len() == points.len()
            && rows.iter().zip(points).all(|(r, p)| &r.point == p);
        for metric in metrics {
            if !complete {
                per_metric.push(Err(AnovaError::UnbalancedDesign(format!(
                    "centre {centre} has failed or missing rows"
                ))));
                continue;
            }
            let responses: Option<Vec<T>> = rows
                .iter()
                .map(|r| r.outcome.ok().map(|a| metric.extract(a)))
                .collect();
            let entry = match responses {
                Some(y) => type3_ss(factors, points, &y).and_then(|t| relative_sensitivities(&t)),
                None => Err(AnovaError::UnbalancedDesign(format!(
                    "centre {centre} has failed rows"
                ))),
            };
            per_metric.push(entry);
        }
        entries.push(per_metric);
    }
    SensitivitySweep {
        centres: table.centre_ids().to_vec(),
        metrics: metrics.to_vec(),
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{full_factorial, LevelValue};

    fn factor(id: FactorId, n: usize) -> Factor {
        let levels = (0..n).map(|k| LevelValue::Number(k as f64)).collect();
        Factor::new(id, levels).unwrap()
    }

    fn design_2x2() -> (Vec<Factor>, Vec<Vec<usize>>) {
        let factors = vec![factor(FactorId::F03, 2), factor(FactorId::F04, 2)];
        let design = full_factorial(factors.clone()).unwrap();
        (factors, design.points().to_vec())
    }

    #[test]
    fn constant_response_has_zero_ss() {
        let (factors, points) = design_2x2();
        let y = vec![3.5; 4];
        let t = type3_ss(&factors, &points, &y).unwrap();
        assert_eq!(t.total_ss, 0.0);
        for term in &t.terms {
            assert_eq!(term.ss, 0.0);
        }
        assert_eq!(relative_sensitivities(&t).unwrap_err(), AnovaError::ZeroVariance);
    }

    #[test]
    fn hand_computed_two_by_two() {
        // Responses (a1,b1)=0, (a1,b2)=0, (a2,b1)=1, (a2,b2)=1:
        // grand mean 0.5, four deviations of 0.25 -> total 1.0, all from A.
        let (factors, points) = design_2x2();
        let y: Vec<f64> = points.iter().map(|p| p[0] as f64).collect();
        let t = type3_ss(&factors, &points, &y).unwrap();
        assert!((t.total_ss - 1.0).abs() < 1e-12);
        assert!((t.terms[0].ss - 1.0).abs() < 1e-12);
        assert!(t.terms[1].ss.abs() < 1e-12);
        assert!(t.residual_ss.abs() < 1e-12);
        assert_eq!(t.total_df, 3);
        assert_eq!(t.residual_df, 1);

        let s = relative_sensitivities(&t).unwrap();
        assert!((s.sensitivities[0] - 1.0).abs() < 1e-12);
        assert!(s.sensitivities[1].abs() < 1e-12);
        assert!(s.interactions.abs() < 1e-12);
    }

    #[test]
    fn components_sum_to_one() {
        let (factors, points) = design_2x2();
        let y = vec![0.3, 1.9, -0.5, 2.4];
        let t = type3_ss(&factors, &points, &y).unwrap();
        let s = relative_sensitivities(&t).unwrap();
        let sum: f64 = s.components().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "sum = {sum}");
    }

    #[test]
    fn unbalanced_slice_rejected() {
        let (factors, mut points) = design_2x2();
        points.pop();
        let y = vec![0.0, 1.0, 2.0];
        assert!(matches!(
            type3_ss(&factors, &points, &y),
            Err(AnovaError::UnbalancedDesign(_))
        ));
        // Duplicate point.
        let (factors, mut points) = design_2x2();
        points[3] = points[0].clone();
        let y = vec![0.0, 1.0, 2.0, 3.0];
        assert!(matches!(
            type3_ss(&factors, &points, &y),
            Err(AnovaError::UnbalancedDesign(_))
        ));
    }

    #[test]
    fn non_finite_response_rejected() {
        let (factors, points) = design_2x2();
        let y = vec![0.0, f64::NAN, 1.0, 2.0];
        assert_eq!(
            type3_ss(&factors, &points, &y).unwrap_err(),
            AnovaError::NonFiniteResponse(1)
        );
    }

    #[test]
    fn three_level_factor_dfs() {
        let factors = vec![factor(FactorId::F03, 3), factor(FactorId::F04, 2)];
        let design = full_factorial(factors.clone()).unwrap();
        let points = design.points().to_vec();
        let y: Vec<f64> = points.iter().map(|p| (p[0] * 2 + p[1]) as f64).collect();
        let t = type3_ss(&factors, &points, &y).unwrap();
        assert_eq!(t.terms[0].df, 2);
        assert_eq!(t.terms[1].df, 1);
        assert_eq!(t.total_df, 5);
        assert_eq!(t.residual_df, 2);
        let sum = t.terms.iter().map(|x| x.ss).sum::<f64>() + t.residual_ss;
        assert!((sum - t.total_ss).abs() < 1e-9 * t.total_ss.max(1.0));
    }
}
