//! Balanced full-factorial design over the audit factors F01..F09 and its
//! evaluation against simulated or ingested audit centres.
//!
//! Factor roles: F01/F02 set the evaluated-side and reference-side ROI
//! shape, F03 scales the evaluated dose, F04/F05 translate the evaluated
//! grid, F06/F07 translate the reference grid, F08/F09 scale the
//! reference-side and evaluated-side ROI size. The metric mask is the
//! intersection of the two realized ROIs, so both sides influence the
//! compared region.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gamma::{audit_outputs, AuditResult, GammaOptions};
use crate::grid::{realize_roi, DoseGrid, GridError, Mask, Perturbation, RoiShape, RoiSpec};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum DesignError {
    #[error("design needs at least one factor")]
    EmptyFactor,
    #[error("factor {id}: {reason}")]
    InvalidFactor { id: FactorId, reason: String },
    #[error("design point has {got} entries, expected {expected}")]
    PointLength { got: usize, expected: usize },
    #[error("level index {index} out of range for factor {id} with {levels} levels")]
    LevelIndex { id: FactorId, index: usize, levels: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// The nine audit factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FactorId {
    F01,
    F02,
    F03,
    F04,
    F05,
    F06,
    F07,
    F08,
    F09,
}

impl FactorId {
    pub const ALL: [FactorId; 9] = [
        FactorId::F01,
        FactorId::F02,
        FactorId::F03,
        FactorId::F04,
        FactorId::F05,
        FactorId::F06,
        FactorId::F07,
        FactorId::F08,
        FactorId::F09,
    ];

    /// Human-readable factor role.
    pub fn name(&self) -> &'static str {
        match self {
            FactorId::F01 => "calibrated shape",
            FactorId::F02 => "reference shape",
            FactorId::F03 => "calibrated offset dosage",
            FactorId::F04 => "calibrated offset on x axis",
            FactorId::F05 => "calibrated offset on y axis",
            FactorId::F06 => "reference offset on x axis",
            FactorId::F07 => "reference offset on y axis",
            FactorId::F08 => "reference size",
            FactorId::F09 => "calibrated size",
        }
    }

    pub fn kind(&self) -> LevelKind {
        match self {
            FactorId::F01 | FactorId::F02 => LevelKind::Shape,
            FactorId::F03 => LevelKind::DosePercent,
            FactorId::F04 | FactorId::F05 | FactorId::F06 | FactorId::F07 => LevelKind::OffsetMm,
            FactorId::F08 | FactorId::F09 => LevelKind::SizeScale,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FactorId::F01 => "F01",
            FactorId::F02 => "F02",
            FactorId::F03 => "F03",
            FactorId::F04 => "F04",
            FactorId::F05 => "F05",
            FactorId::F06 => "F06",
            FactorId::F07 => "F07",
            FactorId::F08 => "F08",
            FactorId::F09 => "F09",
        }
    }
}

impl std::fmt::Display for FactorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for FactorId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FactorId::ALL
            .iter()
            .find(|id| id.label() == s)
            .copied()
            .ok_or_else(|| format!("unknown factor id {s:?}, expected F01..F09"))
    }
}

/// What a factor's level values mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelKind {
    Shape,
    DosePercent,
    OffsetMm,
    SizeScale,
}

/// A single factor level: an ROI shape or a numeric setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelValue {
    Shape(RoiShape),
    Number(f64),
}

impl LevelValue {
    fn matches(&self, kind: LevelKind) -> bool {
        matches!(
            (self, kind),
            (LevelValue::Shape(_), LevelKind::Shape)
                | (
                    LevelValue::Number(_),
                    LevelKind::DosePercent | LevelKind::OffsetMm | LevelKind::SizeScale
                )
        )
    }

    fn as_number(&self) -> f64 {
        match self {
            LevelValue::Number(v) => *v,
            LevelValue::Shape(_) => panic!("shape level used as number"),
        }
    }

    fn as_shape(&self) -> RoiShape {
        match self {
            LevelValue::Shape(s) => *s,
            LevelValue::Number(_) => panic!("numeric level used as shape"),
        }
    }
}

impl std::fmt::Display for LevelValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LevelValue::Shape(s) => write!(f, "{s}"),
            LevelValue::Number(v) => write!(f, "{v}"),
        }
    }
}

/// An audit factor with its ordered levels. Level 0 is the baseline used
/// by the identity design point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub id: FactorId,
    pub levels: Vec<LevelValue>,
}

impl Factor {
    pub fn new(id: FactorId, levels: Vec<LevelValue>) -> Result<Self, DesignError> {
        if levels.len() < 2 {
            return Err(DesignError::InvalidFactor {
                id,
                reason: format!("needs at least 2 levels, got {}", levels.len()),
            });
        }
        for (k, level) in levels.iter().enumerate() {
            if !level.matches(id.kind()) {
                return Err(DesignError::InvalidFactor {
                    id,
                    reason: format!("level {k} ({level}) has the wrong kind for this factor"),
                });
            }
            if let LevelValue::Number(v) = level {
                if !v.is_finite() {
                    return Err(DesignError::InvalidFactor {
                        id,
                        reason: format!("level {k} must be finite"),
                    });
                }
            }
            if levels[..k].contains(level) {
                return Err(DesignError::InvalidFactor {
                    id,
                    reason: format!("duplicate level value {level}"),
                });
            }
        }
        Ok(Factor { id, levels })
    }
}

/// The default two-level design: shapes {rectangle, ellipse}, dose offset
/// {0, +2}%, spatial offsets {0, +1} mm, ROI sizes {baseline, 0.8x}.
pub fn default_factors() -> Vec<Factor> {
    FactorId::ALL
        .iter()
        .map(|&id| {
            let levels = match id.kind() {
                LevelKind::Shape => vec![
                    LevelValue::Shape(RoiShape::Rectangle),
                    LevelValue::Shape(RoiShape::Ellipse),
                ],
                LevelKind::DosePercent => {
                    vec![LevelValue::Number(0.0), LevelValue::Number(2.0)]
                }
                LevelKind::OffsetMm => vec![LevelValue::Number(0.0), LevelValue::Number(1.0)],
                LevelKind::SizeScale => vec![LevelValue::Number(1.0), LevelValue::Number(0.8)],
            };
            Factor::new(id, levels).expect("default factors are valid")
        })
        .collect()
}

/// A balanced complete factorial design: every combination of factor
/// levels exactly once, enumerated lexicographically with the last factor
/// fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorialDesign {
    factors: Vec<Factor>,
    points: Vec<Vec<usize>>,
}

impl FactorialDesign {
    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn points(&self) -> &[Vec<usize>] {
        &self.points
    }

    pub fn level(&self, factor_pos: usize, level_index: usize) -> &LevelValue {
        &self.factors[factor_pos].levels[level_index]
    }

    /// Checks the balance invariant: each level of each factor appears
    /// exactly `|points| / levels` times.
    pub fn is_balanced(&self) -> bool {
        for (f, factor) in self.factors.iter().enumerate() {
            let expect = self.points.len() / factor.levels.len();
            for level in 0..factor.levels.len() {
                let count = self.points.iter().filter(|p| p[f] == level).count();
                if count != expect {
                    return false;
                }
            }
        }
        true
    }
}

/// Enumerates the full Cartesian product of factor levels.
pub fn full_factorial(factors: Vec<Factor>) -> Result<FactorialDesign, DesignError> {
    if factors.is_empty() {
        return Err(DesignError::EmptyFactor);
    }
    let counts: Vec<usize> = factors.iter().map(|f| f.levels.len()).collect();
    let total: usize = counts.iter().product();
    let mut points = Vec::with_capacity(total);
    for mut t in 0..total {
        let mut point = vec![0usize; counts.len()];
        for (slot, &count) in point.iter_mut().zip(&counts).rev() {
            *slot = t % count;
            t /= count;
        }
        points.push(point);
    }
    Ok(FactorialDesign { factors, points })
}

/// One audited centre: its reference and evaluated dose planes plus the
/// baseline region of interest.
#[derive(Debug, Clone)]
pub struct CentreDataset<T: Scalar> {
    pub id: String,
    pub reference: DoseGrid<T>,
    pub evaluated: DoseGrid<T>,
    pub roi: RoiSpec,
}

/// Grids and mask produced by applying one design point to a centre.
pub struct RealizedPoint<T: Scalar> {
    pub reference: DoseGrid<T>,
    pub evaluated: DoseGrid<T>,
    pub mask: Mask,
}

/// Applies a design point. Factor actions run in the fixed order ROI ->
/// dose -> shift; ROIs are realized on the unperturbed evaluated geometry
/// and intersected into the metric mask.
pub fn apply_design_point<T: Scalar>(
    centre: &CentreDataset<T>,
    point: &[usize],
    design: &FactorialDesign,
) -> Result<RealizedPoint<T>, DesignError> {
    let factors = design.factors();
    if point.len() != factors.len() {
        return Err(DesignError::PointLength { got: point.len(), expected: factors.len() });
    }
    let mut eval_roi = centre.roi;
    let mut ref_roi = centre.roi;
    let mut eval_pert = Perturbation::IDENTITY;
    let mut ref_pert = Perturbation::IDENTITY;
    for (pos, factor) in factors.iter().enumerate() {
        let index = point[pos];
        let level = factor.levels.get(index).ok_or(DesignError::LevelIndex {
            id: factor.id,
            index,
            levels: factor.levels.len(),
        })?;
        match factor.id {
            FactorId::F01 => eval_roi = eval_roi.with_shape(level.as_shape()),
            FactorId::F02 => ref_roi = ref_roi.with_shape(level.as_shape()),
            FactorId::F03 => eval_pert.dose_offset_pct = level.as_number(),
            FactorId::F04 => eval_pert.shift_x_mm = level.as_number(),
            FactorId::F05 => eval_pert.shift_y_mm = level.as_number(),
            FactorId::F06 => ref_pert.shift_x_mm = level.as_number(),
            FactorId::F07 => ref_pert.shift_y_mm = level.as_number(),
            FactorId::F08 => ref_roi = ref_roi.scaled(level.as_number()),
            FactorId::F09 => eval_roi = eval_roi.scaled(level.as_number()),
        }
    }
    let eval_mask = realize_roi(&centre.evaluated, &eval_roi)?;
    let ref_mask = realize_roi(&centre.evaluated, &ref_roi)?;
    let mask = eval_mask.intersect(&ref_mask);
    let evaluated = centre.evaluated.apply_perturbation(&eval_pert)?;
    let reference = centre.reference.apply_perturbation(&ref_pert)?;
    Ok(RealizedPoint { reference, evaluated, mask })
}

/// Outcome of one design-point evaluation; failures are recorded, never
/// dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RowOutcome<T: Scalar> {
    Ok(AuditResult<T>),
    Err(String),
}

impl<T: Scalar> RowOutcome<T> {
    pub fn ok(&self) -> Option<&AuditResult<T>> {
        match self {
            RowOutcome::Ok(r) => Some(r),
            RowOutcome::Err(_) => None,
        }
    }
}

/// One table row: centre, design-point level indices, outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow<T: Scalar> {
    pub centre: String,
    pub point: Vec<usize>,
    pub outcome: RowOutcome<T>,
}

/// Evaluation of every (centre, design point) pair: centre-major,
/// design-point lexicographic. One row per pair, 12 response columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable<T: Scalar> {
    design: FactorialDesign,
    centre_ids: Vec<String>,
    rows: Vec<TableRow<T>>,
}

impl<T: Scalar> ResultTable<T> {
    pub fn design(&self) -> &FactorialDesign {
        &self.design
    }

    pub fn centre_ids(&self) -> &[String] {
        &self.centre_ids
    }

    pub fn rows(&self) -> &[TableRow<T>] {
        &self.rows
    }

    /// Rows belonging to one centre, in design-point order.
    pub fn centre_rows(&self, centre: &str) -> impl Iterator<Item = &TableRow<T>> {
        self.rows.iter().filter(move |r| r.centre == centre)
    }

    /// Indices of design points at which every centre produced a result.
    /// Dropping the complement keeps centre vectors aligned and preserves
    /// positive semidefiniteness of correlation matrices built from them.
    pub fn complete_case_points(&self) -> Vec<usize> {
        let n_points = self.design.points().len();
        (0..n_points)
            .filter(|&p| {
                self.centre_ids.iter().enumerate().all(|(c, _)| {
                    matches!(self.rows[c * n_points + p].outcome, RowOutcome::Ok(_))
                })
            })
            .collect()
    }
}

/// Evaluates the 12 audit outputs at every design point for every centre.
///
/// Rows are independent work units evaluated in parallel; the result is a
/// pure function of the inputs and does not depend on worker count or
/// scheduling.
pub fn run_design<T: Scalar>(
    centres: &[CentreDataset<T>],
    design: &FactorialDesign,
    opt: &GammaOptions,
) -> ResultTable<T> {
    let jobs: Vec<(usize, usize)> = (0..centres.len())
        .flat_map(|c| (0..design.points().len()).map(move |p| (c, p)))
        .collect();
    let rows: Vec<TableRow<T>> = jobs
        .par_iter()
        .map(|&(c, p)| {
            let centre = &centres[c];
            let point = &design.points()[p];
            let outcome = match apply_design_point(centre, point, design) {
                Ok(realized) => {
                    match audit_outputs(&realized.reference, &realized.evaluated, &realized.mask, opt)
                    {
                        Ok(result) => RowOutcome::Ok(result),
                        Err(e) => RowOutcome::Err(e.to_string()),
                    }
                }
                Err(e) => RowOutcome::Err(e.to_string()),
            };
            TableRow { centre: centre.id.clone(), point: point.clone(), outcome }
        })
        .collect();
    ResultTable {
        design: design.clone(),
        centre_ids: centres.iter().map(|c| c.id.clone()).collect(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{synth_phantom, GridGeometry, NoiseSpec, PhantomSpec};

    fn two_level(id: FactorId, a: f64, b: f64) -> Factor {
        Factor::new(id, vec![LevelValue::Number(a), LevelValue::Number(b)]).unwrap()
    }

    #[test]
    fn product_design_has_expected_size() {
        let f1 = two_level(FactorId::F03, 0.0, 2.0);
        let f2 = Factor::new(
            FactorId::F04,
            vec![
                LevelValue::Number(0.0),
                LevelValue::Number(1.0),
                LevelValue::Number(2.0),
            ],
        )
        .unwrap();
        let d = full_factorial(vec![f1, f2]).unwrap();
        assert_eq!(d.points().len(), 6);
        // Last factor fastest.
        assert_eq!(d.points()[0], vec![0, 0]);
        assert_eq!(d.points()[1], vec![0, 1]);
        assert_eq!(d.points()[2], vec![0, 2]);
        assert_eq!(d.points()[3], vec![1, 0]);
    }

    #[test]
    fn default_design_is_balanced_512() {
        let d = full_factorial(default_factors()).unwrap();
        assert_eq!(d.points().len(), 512);
        assert!(d.is_balanced());
        for f in 0..9 {
            let ones = d.points().iter().filter(|p| p[f] == 1).count();
            assert_eq!(ones, 256);
        }
    }

    #[test]
    fn repeated_enumeration_is_identical() {
        let a = full_factorial(default_factors()).unwrap();
        let b = full_factorial(default_factors()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_factor_list_rejected() {
        assert_eq!(full_factorial(vec![]).unwrap_err(), DesignError::EmptyFactor);
    }

    #[test]
    fn factor_validation() {
        assert!(Factor::new(FactorId::F03, vec![LevelValue::Number(0.0)]).is_err());
        assert!(Factor::new(
            FactorId::F03,
            vec![LevelValue::Number(0.0), LevelValue::Number(0.0)]
        )
        .is_err());
        assert!(Factor::new(
            FactorId::F01,
            vec![LevelValue::Number(0.0), LevelValue::Number(1.0)]
        )
        .is_err());
    }

    fn test_centre() -> CentreDataset<f64> {
        let geom = GridGeometry {
            nx: 33,
            ny: 33,
            dx_mm: 1.0,
            dy_mm: 1.0,
            origin_x_mm: -16.0,
            origin_y_mm: -16.0,
        };
        let spec = PhantomSpec {
            peak_gy: 2.0,
            sigma_mm: 6.0,
            center_x_mm: 0.0,
            center_y_mm: 0.0,
            background_gy: 0.05,
        };
        let reference = synth_phantom(geom, &spec, &NoiseSpec::NONE).unwrap();
        let evaluated = reference.clone();
        CentreDataset {
            id: "t1".into(),
            reference,
            evaluated,
            roi: RoiSpec {
                shape: RoiShape::Rectangle,
                half_width_mm: 10.0,
                half_height_mm: 10.0,
                center_x_mm: 0.0,
                center_y_mm: 0.0,
            },
        }
    }

    #[test]
    fn baseline_point_changes_nothing() {
        let centre = test_centre();
        let design = full_factorial(default_factors()).unwrap();
        let baseline = vec![0usize; 9];
        let realized = apply_design_point(&centre, &baseline, &design).unwrap();
        assert_eq!(realized.reference, centre.reference);
        assert_eq!(realized.evaluated, centre.evaluated);
        let base_mask = realize_roi(&centre.evaluated, &centre.roi).unwrap();
        assert_eq!(realized.mask, base_mask);
    }

    #[test]
    fn single_dose_factor_scales_evaluated_only() {
        let centre = test_centre();
        let mut factors = default_factors();
        factors[2] = two_level(FactorId::F03, 0.0, 5.0);
        let design = full_factorial(factors).unwrap();
        let mut point = vec![0usize; 9];
        point[2] = 1;
        let realized = apply_design_point(&centre, &point, &design).unwrap();
        assert_eq!(realized.reference, centre.reference);
        for (out, inp) in realized.evaluated.values().iter().zip(centre.evaluated.values()) {
            assert_eq!(*out, inp * 1.05);
        }
    }

    #[test]
    fn run_design_has_one_row_per_pair() {
        let centre = test_centre();
        let f1 = two_level(FactorId::F03, 0.0, 2.0);
        let f2 = Factor::new(
            FactorId::F04,
            vec![
                LevelValue::Number(0.0),
                LevelValue::Number(1.0),
                LevelValue::Number(2.0),
            ],
        )
        .unwrap();
        let design = full_factorial(vec![f1, f2]).unwrap();
        let table = run_design(&[centre], &design, &GammaOptions::default());
        assert_eq!(table.rows().len(), 6);
        // Baseline row on identical grids: the all-perfect vector.
        let first = table.rows()[0].outcome.ok().unwrap();
        assert_eq!(first.gpr_gic1, 100.0);
        assert_eq!(first.median_gamma_gic4, 0.0);
        assert_eq!(first.dta_mm, 0.0);
        assert_eq!(first.com_distance_mm, 0.0);
    }
}
