//! The twelve audit outputs for one (reference, evaluated, mask)
//! configuration.
//!
//! Four gamma-index criteria, each reported as a passing rate and a median
//! gamma, plus mean/median dose difference, distance to agreement and
//! centre-of-mass distance. The gamma search minimizes
//! `sqrt(|r_r - r_e|^2 / dist^2 + (D_r(r_r) - D_e(r_e))^2 / dD^2)` over a
//! square candidate lattice inside the search radius, with the reference
//! dose obtained by bilinear sampling. The dose criterion `dD` is global:
//! a percentage of the in-mask reference maximum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{DoseGrid, GridGeometry, Mask, MIN_MASK_NODES};
use crate::scalar::{from_f64, from_usize, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("mask has {surviving} usable nodes, need at least {}", MIN_MASK_NODES)]
    EmptyMask { surviving: usize },
    #[error("gamma map contains no included nodes")]
    EmptyMap,
    #[error("grids share no usable overlap with the mask: {0}")]
    GeometryMismatch(String),
    #[error("reference dose is zero everywhere in the mask")]
    ZeroNormalization,
    #[error("total in-mask dose is zero in the {0} grid")]
    ZeroMass(&'static str),
    #[error("invalid gamma criterion: {0}")]
    InvalidCriterion(String),
    #[error("invalid gamma options: {0}")]
    InvalidOptions(String),
}

/// A (dose difference %, distance mm) gamma criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaCriterion {
    /// Dose-difference criterion as percent of the normalization dose.
    pub dose_pct: f64,
    /// Distance-to-agreement criterion in mm.
    pub dist_mm: f64,
}

impl GammaCriterion {
    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.dose_pct > 0.0) || !(self.dist_mm > 0.0) {
            return Err(MetricError::InvalidCriterion(format!(
                "criterion components must be > 0, got {}% / {} mm",
                self.dose_pct, self.dist_mm
            )));
        }
        Ok(())
    }
}

/// GIC1: 5% / 2 mm.
pub const GIC1: GammaCriterion = GammaCriterion { dose_pct: 5.0, dist_mm: 2.0 };
/// GIC2: 3% / 2 mm.
pub const GIC2: GammaCriterion = GammaCriterion { dose_pct: 3.0, dist_mm: 2.0 };
/// GIC3: 2% / 2 mm.
pub const GIC3: GammaCriterion = GammaCriterion { dose_pct: 2.0, dist_mm: 2.0 };
/// GIC4: 5% / 1 mm.
pub const GIC4: GammaCriterion = GammaCriterion { dose_pct: 5.0, dist_mm: 1.0 };

/// The four standard criteria in report order.
pub const STANDARD_CRITERIA: [GammaCriterion; 4] = [GIC1, GIC2, GIC3, GIC4];

/// Search and exclusion parameters for the gamma computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaOptions {
    /// Search window radius as a multiple of the distance criterion.
    pub search_radius_factor: f64,
    /// Candidate lattice step is `dist_mm / subsample_step_factor`.
    pub subsample_step_factor: f64,
    /// Evaluated points whose reference dose is below this percentage of
    /// the normalization dose are excluded from gamma and DTA statistics.
    pub low_dose_cutoff_pct: f64,
}

impl Default for GammaOptions {
    fn default() -> Self {
        GammaOptions {
            search_radius_factor: 3.0,
            subsample_step_factor: 10.0,
            low_dose_cutoff_pct: 10.0,
        }
    }
}

impl GammaOptions {
    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.search_radius_factor >= 1.0) {
            return Err(MetricError::InvalidOptions(format!(
                "search radius factor must be >= 1, got {}",
                self.search_radius_factor
            )));
        }
        if !(self.subsample_step_factor >= 2.0) {
            return Err(MetricError::InvalidOptions(format!(
                "subsample step factor must be >= 2, got {}",
                self.subsample_step_factor
            )));
        }
        if !(0.0..100.0).contains(&self.low_dose_cutoff_pct) {
            return Err(MetricError::InvalidOptions(format!(
                "low-dose cutoff must be in [0, 100), got {}",
                self.low_dose_cutoff_pct
            )));
        }
        Ok(())
    }

    /// Nominal search radius in mm for a criterion.
    pub fn search_radius_mm(&self, c: &GammaCriterion) -> f64 {
        self.search_radius_factor * c.dist_mm
    }
}

/// Candidate displacements shared by the gamma search and the DTA search:
/// a square lattice of step `dist/subsample_step_factor` clipped to the
/// search radius, ordered by distance from the origin (ties by lattice
/// index) so per-node scans are deterministic and can stop early.
pub fn candidate_offsets(c: &GammaCriterion, opt: &GammaOptions) -> Vec<CandidateOffset> {
    let step = c.dist_mm / opt.subsample_step_factor;
    let n = (opt.search_radius_factor * opt.subsample_step_factor + 1e-9).floor() as i64;
    let n2 = n * n;
    let mut out = Vec::new();
    for i in -n..=n {
        for j in -n..=n {
            let r2 = i * i + j * j;
            if r2 <= n2 {
                out.push(CandidateOffset {
                    dx_mm: i as f64 * step,
                    dy_mm: j as f64 * step,
                    lattice_r2: r2,
                    // step/dist = 1/subsample_step_factor, so the
                    // normalized displacement term depends only on the
                    // lattice index.
                    norm_disp2: r2 as f64 / (opt.subsample_step_factor * opt.subsample_step_factor),
                });
            }
        }
    }
    out.sort_by(|a, b| {
        a.lattice_r2
            .cmp(&b.lattice_r2)
            .then(a.dx_mm.total_cmp(&b.dx_mm))
            .then(a.dy_mm.total_cmp(&b.dy_mm))
    });
    out
}

/// One candidate displacement.
#[derive(Debug, Clone, Copy)]
pub struct CandidateOffset {
    pub dx_mm: f64,
    pub dy_mm: f64,
    /// Squared lattice index `i^2 + j^2`; exact ring key.
    pub lattice_r2: i64,
    /// `|offset|^2 / dist^2`, the displacement term of the gamma function.
    pub norm_disp2: f64,
}

/// Per-node gamma values aligned with the evaluated grid; excluded nodes
/// are `None`, never zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaMap<T: Scalar> {
    criterion: GammaCriterion,
    geom: GridGeometry,
    values: Vec<Option<T>>,
}

impl<T: Scalar> GammaMap<T> {
    pub fn criterion(&self) -> &GammaCriterion {
        &self.criterion
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    /// Per-node values, row-major by y then x; `None` marks excluded nodes.
    pub fn values(&self) -> &[Option<T>] {
        &self.values
    }

    pub fn included(&self) -> impl Iterator<Item = T> + '_ {
        self.values.iter().filter_map(|v| *v)
    }
}

/// The 12 audit outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditResult<T: Scalar> {
    pub gpr_gic1: T,
    pub gpr_gic2: T,
    pub gpr_gic3: T,
    pub gpr_gic4: T,
    pub median_gamma_gic1: T,
    pub median_gamma_gic2: T,
    pub median_gamma_gic3: T,
    pub median_gamma_gic4: T,
    pub mean_dose_diff_pct: T,
    pub median_dose_diff_pct: T,
    pub dta_mm: T,
    pub com_distance_mm: T,
}

impl<T: Scalar> AuditResult<T> {
    /// Values in fixed report order (the 12 response columns).
    pub fn as_array(&self) -> [T; 12] {
        [
            self.gpr_gic1,
            self.gpr_gic2,
            self.gpr_gic3,
            self.gpr_gic4,
            self.median_gamma_gic1,
            self.median_gamma_gic2,
            self.median_gamma_gic3,
            self.median_gamma_gic4,
            self.mean_dose_diff_pct,
            self.median_dose_diff_pct,
            self.dta_mm,
            self.com_distance_mm,
        ]
    }
}

/// One of the 12 response columns, in fixed report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseMetric {
    GprGic1,
    GprGic2,
    GprGic3,
    GprGic4,
    MedianGammaGic1,
    MedianGammaGic2,
    MedianGammaGic3,
    MedianGammaGic4,
    MeanDoseDiffPct,
    MedianDoseDiffPct,
    DtaMm,
    ComMm,
}

impl ResponseMetric {
    pub const ALL: [ResponseMetric; 12] = [
        ResponseMetric::GprGic1,
        ResponseMetric::GprGic2,
        ResponseMetric::GprGic3,
        ResponseMetric::GprGic4,
        ResponseMetric::MedianGammaGic1,
        ResponseMetric::MedianGammaGic2,
        ResponseMetric::MedianGammaGic3,
        ResponseMetric::MedianGammaGic4,
        ResponseMetric::MeanDoseDiffPct,
        ResponseMetric::MedianDoseDiffPct,
        ResponseMetric::DtaMm,
        ResponseMetric::ComMm,
    ];

    /// The four gamma passing rates, in GIC order.
    pub const GPR: [ResponseMetric; 4] = [
        ResponseMetric::GprGic1,
        ResponseMetric::GprGic2,
        ResponseMetric::GprGic3,
        ResponseMetric::GprGic4,
    ];

    /// Column label used in CSV reports and output file names.
    pub fn label(&self) -> &'static str {
        match self {
            ResponseMetric::GprGic1 => "gpr_gic1",
            ResponseMetric::GprGic2 => "gpr_gic2",
            ResponseMetric::GprGic3 => "gpr_gic3",
            ResponseMetric::GprGic4 => "gpr_gic4",
            ResponseMetric::MedianGammaGic1 => "median_gamma_gic1",
            ResponseMetric::MedianGammaGic2 => "median_gamma_gic2",
            ResponseMetric::MedianGammaGic3 => "median_gamma_gic3",
            ResponseMetric::MedianGammaGic4 => "median_gamma_gic4",
            ResponseMetric::MeanDoseDiffPct => "mean_dose_diff_pct",
            ResponseMetric::MedianDoseDiffPct => "median_dose_diff_pct",
            ResponseMetric::DtaMm => "dta_mm",
            ResponseMetric::ComMm => "com_mm",
        }
    }

    pub fn extract<T: Scalar>(&self, r: &AuditResult<T>) -> T {
        match self {
            ResponseMetric::GprGic1 => r.gpr_gic1,
            ResponseMetric::GprGic2 => r.gpr_gic2,
            ResponseMetric::GprGic3 => r.gpr_gic3,
            ResponseMetric::GprGic4 => r.gpr_gic4,
            ResponseMetric::MedianGammaGic1 => r.median_gamma_gic1,
            ResponseMetric::MedianGammaGic2 => r.median_gamma_gic2,
            ResponseMetric::MedianGammaGic3 => r.median_gamma_gic3,
            ResponseMetric::MedianGammaGic4 => r.median_gamma_gic4,
            ResponseMetric::MeanDoseDiffPct => r.mean_dose_diff_pct,
            ResponseMetric::MedianDoseDiffPct => r.median_dose_diff_pct,
            ResponseMetric::DtaMm => r.dta_mm,
            ResponseMetric::ComMm => r.com_distance_mm,
        }
    }
}

impl std::fmt::Display for ResponseMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One includable node: linear index, physical position, reference dose
/// (bilinearly sampled at the node position) and evaluated dose.
struct IncludedNode<T> {
    idx: usize,
    x_mm: f64,
    y_mm: f64,
    ref_dose: T,
    eval_dose: T,
}

/// Nodes usable for metric computation plus the normalization dose.
struct Inclusion<T> {
    nodes: Vec<IncludedNode<T>>,
    dnorm: T,
}

/// Collects mask nodes that are valid on the evaluated grid and sampleable
/// on the reference grid, computes the global normalization dose (in-mask
/// reference maximum), then optionally applies the low-dose cutoff.
fn included_nodes<T: Scalar>(
    reference: &DoseGrid<T>,
    evaluated: &DoseGrid<T>,
    mask: &Mask,
    cutoff_pct: Option<f64>,
) -> Result<Inclusion<T>, MetricError> {
    let geom = *evaluated.geometry();
    if mask.geometry() != &geom {
        return Err(MetricError::GeometryMismatch(
            "mask geometry differs from the evaluated grid".into(),
        ));
    }
    let mut nodes = Vec::new();
    for j in 0..geom.ny {
        for i in 0..geom.nx {
            let idx = geom.idx(i, j);
            if !mask.inside()[idx] || !evaluated.is_valid(i, j) {
                continue;
            }
            let (x, y) = geom.node_pos(i, j);
            if let Some(ref_dose) = reference.sample_valid(x, y) {
                nodes.push(IncludedNode {
                    idx,
                    x_mm: x,
                    y_mm: y,
                    ref_dose,
                    eval_dose: evaluated.value(i, j),
                });
            }
        }
    }
    if nodes.is_empty() {
        return Err(MetricError::GeometryMismatch(
            "no mask node is valid in both grids".into(),
        ));
    }
    let dnorm = nodes
        .iter()
        .map(|n| n.ref_dose)
        .fold(T::zero(), |a, b| if b > a { b } else { a });
    if !(dnorm > T::zero()) {
        return Err(MetricError::ZeroNormalization);
    }
    if let Some(cutoff) = cutoff_pct {
        let floor = from_f64::<T>(cutoff / 100.0) * dnorm;
        nodes.retain(|n| n.ref_dose >= floor);
    }
    if nodes.len() < MIN_MASK_NODES {
        return Err(MetricError::EmptyMask { surviving: nodes.len() });
    }
    Ok(Inclusion { nodes, dnorm })
}

/// Computes the per-node gamma map for one criterion.
///
/// For each included evaluated node the gamma function is minimized over
/// the candidate lattice; candidates whose reference sample is out of
/// bounds or invalid are skipped. The scan runs in ascending displacement
/// order and stops once the displacement term alone exceeds the current
/// minimum, which cannot change the result.
pub fn gamma_map<T: Scalar>(
    reference: &DoseGrid<T>,
    evaluated: &DoseGrid<T>,
    mask: &Mask,
    c: &GammaCriterion,
    opt: &GammaOptions,
) -> Result<GammaMap<T>, MetricError> {
    c.validate()?;
    opt.validate()?;
    let inc = included_nodes(reference, evaluated, mask, Some(opt.low_dose_cutoff_pct))?;
    let offsets = candidate_offsets(c, opt);
    let delta_d = from_f64::<T>(c.dose_pct / 100.0) * inc.dnorm;
    let geom = *evaluated.geometry();

    let mut values: Vec<Option<T>> = vec![None; geom.node_count()];
    let computed: Vec<(usize, T)> = {
        use rayon::prelude::*;
        inc.nodes
            .par_iter()
            .map(|node| {
                let gamma2 = gamma_sq_at(reference, node, &offsets, delta_d);
                (node.idx, gamma2.sqrt())
            })
            .collect()
    };
    for (idx, g) in computed {
        values[idx] = Some(g);
    }
    Ok(GammaMap { criterion: *c, geom, values })
}

fn gamma_sq_at<T: Scalar>(
    reference: &DoseGrid<T>,
    node: &IncludedNode<T>,
    offsets: &[CandidateOffset],
    delta_d: T,
) -> T {
    let mut best = T::infinity();
    for cand in offsets {
        let disp = from_f64::<T>(cand.norm_disp2);
        if disp >= best {
            break;
        }
        if let Some(ref_dose) = reference.sample_valid(node.x_mm + cand.dx_mm, node.y_mm + cand.dy_mm)
        {
            let dd = (ref_dose - node.eval_dose) / delta_d;
            let term = disp + dd * dd;
            if term < best {
                best = term;
            }
        }
    }
    // The zero-displacement candidate always samples the node itself,
    // which inclusion guarantees to be valid.
    debug_assert!(best.is_finite());
    best
}

/// Passing rate and median of a gamma map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaStats<T: Scalar> {
    /// Percentage of included nodes with gamma <= 1.
    pub gpr_pct: T,
    pub median_gamma: T,
}

pub fn gamma_stats<T: Scalar>(map: &GammaMap<T>) -> Result<GammaStats<T>, MetricError> {
    let mut gammas: Vec<T> = map.included().collect();
    if gammas.is_empty() {
        return Err(MetricError::EmptyMap);
    }
    let passing = gammas.iter().filter(|g| **g <= T::one()).count();
    let gpr_pct = from_usize::<T>(100) * from_usize::<T>(passing) / from_usize::<T>(gammas.len());
    let median_gamma = median_in_place(&mut gammas);
    Ok(GammaStats { gpr_pct, median_gamma })
}

/// Median with even counts averaged. Values must be finite.
fn median_in_place<T: Scalar>(values: &mut [T]) -> T {
    debug_assert!(!values.is_empty());
    values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / from_usize::<T>(2)
    }
}

/// Signed dose difference statistics: per node `(D_e - D_r)` as a
/// percentage of the normalization dose, reduced to mean and median over
/// the masked valid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoseDiffStats<T: Scalar> {
    pub mean_pct: T,
    pub median_pct: T,
}

pub fn dose_difference_stats<T: Scalar>(
    reference: &DoseGrid<T>,
    evaluated: &DoseGrid<T>,
    mask: &Mask,
) -> Result<DoseDiffStats<T>, MetricError> {
    let inc = included_nodes(reference, evaluated, mask, None)?;
    let hundred = from_usize::<T>(100);
    let mut diffs: Vec<T> = inc
        .nodes
        .iter()
        .map(|n| (n.eval_dose - n.ref_dose) / inc.dnorm * hundred)
        .collect();
    let mean_pct = diffs.iter().copied().sum::<T>() / from_usize::<T>(diffs.len());
    let median_pct = median_in_place(&mut diffs);
    Ok(DoseDiffStats { mean_pct, median_pct })
}

/// Median per-node distance to agreement in mm.
///
/// For each included node the candidate lattice is scanned ring by ring
/// (rings share an exact squared lattice distance). A ring agrees when the
/// range of reference-minus-evaluated dose over its candidates straddles
/// zero within the interpolation tolerance; a sign flip between two
/// consecutive sampled rings also brackets a crossing, which is charged to
/// the outer ring. Nodes with no agreement inside the search window are
/// capped at the nominal search radius.
pub fn dta_stat<T: Scalar>(
    reference: &DoseGrid<T>,
    evaluated: &DoseGrid<T>,
    mask: &Mask,
    opt: &GammaOptions,
) -> Result<T, MetricError> {
    dta_stat_with(reference, evaluated, mask, &GIC1, opt)
}

/// DTA with an explicit criterion controlling the candidate lattice.
pub fn dta_stat_with<T: Scalar>(
    reference: &DoseGrid<T>,
    evaluated: &DoseGrid<T>,
    mask: &Mask,
    c: &GammaCriterion,
    opt: &GammaOptions,
) -> Result<T, MetricError> {
    c.validate()?;
    opt.validate()?;
    let inc = included_nodes(reference, evaluated, mask, Some(opt.low_dose_cutoff_pct))?;
    let offsets = candidate_offsets(c, opt);
    let step = c.dist_mm / opt.subsample_step_factor;
    let cap = from_f64::<T>(opt.search_radius_mm(c));
    let tol = from_f64::<T>(1e-6) * inc.dnorm;

    let mut dtas: Vec<T> = {
        use rayon::prelude::*;
        inc.nodes
            .par_iter()
            .map(|node| node_dta(reference, node, &offsets, step, tol, cap))
            .collect()
    };
    Ok(median_in_place(&mut dtas))
}

fn node_dta<T: Scalar>(
    reference: &DoseGrid<T>,
    node: &IncludedNode<T>,
    offsets: &[CandidateOffset],
    step_mm: f64,
    tol: T,
    cap: T,
) -> T {
    // Sign of the previous non-empty ring: +1 all above, -1 all below.
    let mut prev_sign: Option<i8> = None;
    let mut k = 0usize;
    while k < offsets.len() {
        let ring_r2 = offsets[k].lattice_r2;
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        let mut sampled = false;
        while k < offsets.len() && offsets[k].lattice_r2 == ring_r2 {
            let cand = &offsets[k];
            if let Some(d) = reference.sample_valid(node.x_mm + cand.dx_mm, node.y_mm + cand.dy_mm)
            {
                let delta = d - node.eval_dose;
                if delta < lo {
                    lo = delta;
                }
                if delta > hi {
                    hi = delta;
                }
                sampled = true;
            }
            k += 1;
        }
        if !sampled {
            continue;
        }
        let radius = from_f64::<T>(step_mm * (ring_r2 as f64).sqrt());
        if lo <= tol && hi >= -tol {
            // Dose range straddles zero on this ring: agreement here.
            return radius;
        }
        let sign: i8 = if lo > tol { 1 } else { -1 };
        if let Some(prev) = prev_sign {
            if prev != sign {
                // Crossing bracketed between the previous sampled ring and
                // this one; charge it to the outer radius.
                return radius;
            }
        }
        prev_sign = Some(sign);
    }
    cap
}

/// Euclidean distance between the dose-weighted centroids of the two
/// grids over the masked valid nodes.
pub fn com_distance<T: Scalar>(
    reference: &DoseGrid<T>,
    evaluated: &DoseGrid<T>,
    mask: &Mask,
) -> Result<T, MetricError> {
    let inc = included_nodes(reference, evaluated, mask, None)?;
    let centroid = |dose: &dyn Fn(&IncludedNode<T>) -> T,
                    which: &'static str|
     -> Result<(T, T), MetricError> {
        let mut sx = T::zero();
        let mut sy = T::zero();
        let mut m = T::zero();
        for n in &inc.nodes {
            let d = dose(n);
            sx += from_f64::<T>(n.x_mm) * d;
            sy += from_f64::<T>(n.y_mm) * d;
            m += d;
        }
        if !(m > T::zero()) {
            return Err(MetricError::ZeroMass(which));
        }
        Ok((sx / m, sy / m))
    };
    let (rx, ry) = centroid(&|n| n.ref_dose, "reference")?;
    let (ex, ey) = centroid(&|n| n.eval_dose, "evaluated")?;
    let dx = ex - rx;
    let dy = ey - ry;
    Ok((dx * dx + dy * dy).sqrt())
}

/// Runs the full 12-output audit for one configuration with the four
/// standard criteria.
pub fn audit_outputs<T: Scalar>(
    reference: &DoseGrid<T>,
    evaluated: &DoseGrid<T>,
    mask: &Mask,
    opt: &GammaOptions,
) -> Result<AuditResult<T>, MetricError> {
    audit_outputs_with(reference, evaluated, mask, &STANDARD_CRITERIA, opt)
}

/// Runs the full 12-output audit with explicit criteria (report order:
/// the i-th criterion fills the `gic{i+1}` slots).
pub fn audit_outputs_with<T: Scalar>(
    reference: &DoseGrid<T>,
    evaluated: &DoseGrid<T>,
    mask: &Mask,
    criteria: &[GammaCriterion; 4],
    opt: &GammaOptions,
) -> Result<AuditResult<T>, MetricError> {
    let mut gpr = [T::zero(); 4];
    let mut median = [T::zero(); 4];
    for (k, c) in criteria.iter().enumerate() {
        let map = gamma_map(reference, evaluated, mask, c, opt)?;
        let stats = gamma_stats(&map)?;
        gpr[k] = stats.gpr_pct;
        median[k] = stats.median_gamma;
    }
    let dd = dose_difference_stats(reference, evaluated, mask)?;
    let dta = dta_stat_with(reference, evaluated, mask, &criteria[0], opt)?;
    let com = com_distance(reference, evaluated, mask)?;
    Ok(AuditResult {
        gpr_gic1: gpr[0],
        gpr_gic2: gpr[1],
        gpr_gic3: gpr[2],
        gpr_gic4: gpr[3],
        median_gamma_gic1: median[0],
        median_gamma_gic2: median[1],
        median_gamma_gic3: median[2],
        median_gamma_gic4: median[3],
        mean_dose_diff_pct: dd.mean_pct,
        median_dose_diff_pct: dd.median_pct,
        dta_mm: dta,
        com_distance_mm: com,
    })
}

/// Computes the gamma maps for all four criteria (report order).
pub fn gamma_maps_standard<T: Scalar>(
    reference: &DoseGrid<T>,
    evaluated: &DoseGrid<T>,
    mask: &Mask,
    criteria: &[GammaCriterion; 4],
    opt: &GammaOptions,
) -> Result<Vec<GammaMap<T>>, MetricError> {
    criteria
        .iter()
        .map(|c| gamma_map(reference, evaluated, mask, c, opt))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{realize_roi, GridGeometry, RoiShape, RoiSpec};

    fn geom(n: usize) -> GridGeometry {
        GridGeometry {
            nx: n,
            ny: n,
            dx_mm: 1.0,
            dy_mm: 1.0,
            origin_x_mm: 0.0,
            origin_y_mm: 0.0,
        }
    }

    fn uniform(n: usize, dose: f64) -> DoseGrid<f64> {
        DoseGrid::new(geom(n), vec![dose; n * n]).unwrap()
    }

    fn full_mask(g: &DoseGrid<f64>) -> Mask {
        let gm = g.geometry();
        let roi = RoiSpec {
            shape: RoiShape::Rectangle,
            half_width_mm: (gm.nx as f64) * gm.dx_mm,
            half_height_mm: (gm.ny as f64) * gm.dy_mm,
            center_x_mm: gm.origin_x_mm + gm.extent_mm().0 / 2.0,
            center_y_mm: gm.origin_y_mm + gm.extent_mm().1 / 2.0,
        };
        realize_roi(g, &roi).unwrap()
    }

    #[test]
    fn identical_grids_give_zero_gamma() {
        let g = uniform(8, 2.0);
        let mask = full_mask(&g);
        let map = gamma_map(&g, &g, &mask, &GIC1, &GammaOptions::default()).unwrap();
        for v in map.included() {
            assert_eq!(v, 0.0);
        }
        let stats = gamma_stats(&map).unwrap();
        assert_eq!(stats.gpr_pct, 100.0);
        assert_eq!(stats.median_gamma, 0.0);
    }

    #[test]
    fn exact_threshold_offset_on_uniform_field() {
        let refg = uniform(8, 2.0);
        let eval = refg.scaled(1.05);
        let mask = full_mask(&refg);
        let opt = GammaOptions::default();
        for c in [GIC1, GIC4] {
            let map = gamma_map(&refg, &eval, &mask, &c, &opt).unwrap();
            for v in map.included() {
                assert!((v - 1.0).abs() < 1e-12, "gamma {v} for {c:?}");
            }
            assert_eq!(gamma_stats(&map).unwrap().gpr_pct, 100.0);
        }
        for c in [GIC2, GIC3] {
            let map = gamma_map(&refg, &eval, &mask, &c, &opt).unwrap();
            assert_eq!(gamma_stats(&map).unwrap().gpr_pct, 0.0);
        }
    }

    #[test]
    fn gamma_stats_small_example() {
        // gammas {0.5, 1.0, 1.5, 2.0}: gamma = 1 passes, median averages.
        let g2 = geom(2);
        let map = GammaMap {
            criterion: GIC1,
            geom: g2,
            values: vec![Some(0.5), Some(1.0), Some(1.5), Some(2.0)],
        };
        let stats = gamma_stats(&map).unwrap();
        assert_eq!(stats.gpr_pct, 50.0);
        assert_eq!(stats.median_gamma, 1.25);
    }

    #[test]
    fn gamma_stats_empty_map_errors() {
        let map: GammaMap<f64> = GammaMap {
            criterion: GIC1,
            geom: geom(2),
            values: vec![None; 4],
        };
        assert_eq!(gamma_stats(&map), Err(MetricError::EmptyMap));
    }

    #[test]
    fn dose_difference_on_scaled_uniform_field() {
        let refg = uniform(8, 1.5);
        let eval = refg.scaled(1.02);
        let mask = full_mask(&refg);
        let dd = dose_difference_stats(&refg, &eval, &mask).unwrap();
        assert!((dd.mean_pct - 2.0).abs() < 1e-12);
        assert!((dd.median_pct - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dta_identical_grids_is_zero() {
        let g = uniform(8, 2.0);
        let mask = full_mask(&g);
        let dta = dta_stat(&g, &g, &mask, &GammaOptions::default()).unwrap();
        assert_eq!(dta, 0.0);
    }

    #[test]
    fn dta_no_agreement_caps_at_search_radius() {
        let refg = uniform(16, 1.0);
        let eval = uniform(16, 2.0);
        let mask = full_mask(&refg);
        let dta = dta_stat(&refg, &eval, &mask, &GammaOptions::default()).unwrap();
        assert_eq!(dta, 6.0);
    }

    #[test]
    fn dta_resolves_translated_ramp() {
        // Linear ramp along x; evaluated is the ramp translated +2 mm along
        // the gradient. Interior nodes agree at exactly 2 mm.
        let gm = geom(32);
        let ramp = |shift: f64| -> DoseGrid<f64> {
            let mut vals = Vec::with_capacity(32 * 32);
            for _j in 0..32 {
                for i in 0..32 {
                    vals.push(1.0 + 0.1 * (i as f64 - shift));
                }
            }
            DoseGrid::new(gm, vals).unwrap()
        };
        let refg = ramp(0.0);
        let eval = ramp(2.0);
        let roi = RoiSpec {
            shape: RoiShape::Rectangle,
            half_width_mm: 6.0,
            half_height_mm: 6.0,
            center_x_mm: 15.5,
            center_y_mm: 15.5,
        };
        let mask = realize_roi(&refg, &roi).unwrap();
        let opt = GammaOptions { low_dose_cutoff_pct: 0.0, ..GammaOptions::default() };
        let dta = dta_stat(&refg, &eval, &mask, &opt).unwrap();
        let step = GIC1.dist_mm / opt.subsample_step_factor;
        assert!((dta - 2.0).abs() <= step + 1e-12, "dta = {dta}");
    }

    #[test]
    fn com_identical_and_scaled() {
        let gm = geom(16);
        let mut vals = vec![0.0; 256];
        for j in 0..16 {
            for i in 0..16 {
                let dx = i as f64 - 7.0;
                let dy = j as f64 - 8.0;
                vals[gm.idx(i, j)] = 2.0 * (-(dx * dx + dy * dy) / 18.0).exp();
            }
        }
        let refg = DoseGrid::new(gm, vals).unwrap();
        let mask = full_mask(&refg);
        assert_eq!(com_distance(&refg, &refg, &mask).unwrap(), 0.0);
        // Scaling is centroid-invariant.
        let eval = refg.scaled(2.0);
        assert_eq!(com_distance(&refg, &eval, &mask).unwrap(), 0.0);
    }

    #[test]
    fn com_zero_mass_errors() {
        let g = uniform(8, 0.0);
        let present = uniform(8, 1.0);
        let mask = full_mask(&g);
        assert_eq!(
            com_distance(&present, &g, &mask),
            Err(MetricError::ZeroMass("evaluated"))
        );
    }

    #[test]
    fn audit_outputs_identity_vector() {
        let g = uniform(10, 2.0);
        let mask = full_mask(&g);
        let r = audit_outputs(&g, &g, &mask, &GammaOptions::default()).unwrap();
        assert_eq!(r.gpr_gic1, 100.0);
        assert_eq!(r.gpr_gic2, 100.0);
        assert_eq!(r.gpr_gic3, 100.0);
        assert_eq!(r.gpr_gic4, 100.0);
        assert_eq!(r.median_gamma_gic1, 0.0);
        assert_eq!(r.median_gamma_gic2, 0.0);
        assert_eq!(r.median_gamma_gic3, 0.0);
        assert_eq!(r.median_gamma_gic4, 0.0);
        assert_eq!(r.mean_dose_diff_pct, 0.0);
        assert_eq!(r.median_dose_diff_pct, 0.0);
        assert_eq!(r.dta_mm, 0.0);
        assert_eq!(r.com_distance_mm, 0.0);
    }

    #[test]
    fn low_dose_cutoff_excludes_cold_nodes() {
        // Half the grid at 5% of max: excluded by the default 10% cutoff.
        let gm = geom(8);
        let mut vals = vec![0.05; 64];
        for j in 0..8 {
            for i in 4..8 {
                vals[gm.idx(i, j)] = 1.0;
            }
        }
        let g = DoseGrid::new(gm, vals).unwrap();
        let mask = full_mask(&g);
        let map = gamma_map(&g, &g, &mask, &GIC1, &GammaOptions::default()).unwrap();
        let included = map.included().count();
        assert_eq!(included, 32);
        for j in 0..8 {
            for i in 0..4 {
                assert!(map.values()[gm.idx(i, j)].is_none());
            }
        }
    }

    #[test]
    fn empty_mask_error_when_cutoff_removes_too_much() {
        let gm = geom(5);
        let mut vals = vec![0.001; 25];
        vals[gm.idx(2, 2)] = 1.0;
        let g = DoseGrid::new(gm, vals).unwrap();
        let mask = full_mask(&g);
        let err = gamma_map(&g, &g, &mask, &GIC1, &GammaOptions::default()).unwrap_err();
        assert_eq!(err, MetricError::EmptyMask { surviving: 1 });
    }

    #[test]
    fn candidate_lattice_is_clipped_and_sorted() {
        let offs = candidate_offsets(&GIC1, &GammaOptions::default());
        // 30 steps of 0.2 mm: disc of lattice radius 30.
        assert!(offs.iter().all(|o| o.lattice_r2 <= 900));
        assert_eq!(offs[0].lattice_r2, 0);
        for w in offs.windows(2) {
            assert!(w[0].lattice_r2 <= w[1].lattice_r2);
        }
        let count_r2 = |r2: i64| offs.iter().filter(|o| o.lattice_r2 == r2).count();
        assert_eq!(count_r2(0), 1);
        assert_eq!(count_r2(1), 4);
    }
}
