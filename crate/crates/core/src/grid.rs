//! Uniform 2D dose grids with physical coordinates.
//!
//! A [`DoseGrid`] is a node-centred, uniformly spaced scalar field standing
//! in for a measured (film) or predicted (TPS) dose plane. The module also
//! provides bilinear sampling, region-of-interest masks and the rigid
//! perturbations (dose scale, translation) used as audit factors.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{from_f64, Scalar};

/// Fraction of a cell below which a query is snapped onto the nearest node.
///
/// Guarantees that sampling at node coordinates reproduces stored node
/// values exactly even when the coordinate arithmetic carries a few ulps of
/// rounding.
const NODE_SNAP: f64 = 1e-9;

/// Minimum number of nodes a mask must contain for statistics to be defined.
pub const MIN_MASK_NODES: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("query point ({x}, {y}) mm lies outside the grid extent")]
    OutOfBounds { x: f64, y: f64 },
    #[error("ROI covers only {found} grid nodes, need at least {}", MIN_MASK_NODES)]
    RoiTooSmall { found: usize },
    #[error("ROI does not overlap the grid")]
    RoiOutsideGrid,
    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),
    #[error("invalid phantom spec: {0}")]
    InvalidPhantom(String),
}

/// Node counts, spacing and origin of a uniform 2D grid.
///
/// Node `(i, j)` sits at `(origin_x + i*dx, origin_y + j*dy)` mm. The grid
/// covers the closed rectangle up to `(nx-1)*dx` by `(ny-1)*dy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub nx: usize,
    pub ny: usize,
    pub dx_mm: f64,
    pub dy_mm: f64,
    pub origin_x_mm: f64,
    pub origin_y_mm: f64,
}

impl GridGeometry {
    pub fn validate(&self) -> Result<(), GridError> {
        if self.nx < 2 || self.ny < 2 {
            return Err(GridError::InvalidGrid(format!(
                "node counts must be >= 2, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.dx_mm > 0.0) || !(self.dy_mm > 0.0) {
            return Err(GridError::InvalidGrid(format!(
                "node spacing must be > 0, got dx={} dy={}",
                self.dx_mm, self.dy_mm
            )));
        }
        if !self.origin_x_mm.is_finite() || !self.origin_y_mm.is_finite() {
            return Err(GridError::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Physical position of node `(i, j)` in mm.
    pub fn node_pos(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin_x_mm + i as f64 * self.dx_mm,
            self.origin_y_mm + j as f64 * self.dy_mm,
        )
    }

    /// Row-major (y-major) linear index of node `(i, j)`.
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Physical extent `(width, height)` in mm.
    pub fn extent_mm(&self) -> (f64, f64) {
        (
            (self.nx - 1) as f64 * self.dx_mm,
            (self.ny - 1) as f64 * self.dy_mm,
        )
    }
}

/// Fractional grid coordinate of a physical position along one axis,
/// snapped onto exact node indices when within [`NODE_SNAP`] of one.
///
/// Returns `(cell index, weight toward cell index + 1)` or `None` when the
/// position lies outside `[0, n-1]`.
fn locate(coord: f64, origin: f64, spacing: f64, n: usize) -> Option<(usize, f64)> {
    let u = (coord - origin) / spacing;
    let mut i = u.floor();
    let mut frac = u - i;
    if frac < NODE_SNAP {
        frac = 0.0;
    } else if frac > 1.0 - NODE_SNAP {
        i += 1.0;
        frac = 0.0;
    }
    if i < 0.0 || i > (n - 1) as f64 {
        return None;
    }
    let mut cell = i as usize;
    if cell == n - 1 {
        // Top edge: interpolate from the last interior cell.
        cell = n - 2;
        frac += 1.0;
    }
    Some((cell, frac))
}

/// A uniformly spaced 2D dose distribution in Gy.
///
/// Values are stored row-major by y then x. Nodes may be marked invalid
/// (for example when a rigid shift moves their pre-image off the input
/// grid); invalid nodes hold 0 Gy and are excluded from every downstream
/// mask and statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct DoseGrid<T: Scalar> {
    geom: GridGeometry,
    values: Vec<T>,
    valid: Vec<bool>,
}

impl<T: Scalar> DoseGrid<T> {
    /// Builds a grid after checking the structural invariants: node counts
    /// >= 2, positive spacing, `values.len() == nx*ny`, all values finite
    /// and non-negative.
    pub fn new(geom: GridGeometry, values: Vec<T>) -> Result<Self, GridError> {
        geom.validate()?;
        if values.len() != geom.node_count() {
            return Err(GridError::InvalidGrid(format!(
                "expected {} values for a {}x{} grid, got {}",
                geom.node_count(),
                geom.nx,
                geom.ny,
                values.len()
            )));
        }
        for (k, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < T::zero() {
                return Err(GridError::InvalidGrid(format!(
                    "dose value at index {k} is {v}, must be finite and >= 0"
                )));
            }
        }
        let valid = vec![true; values.len()];
        Ok(Self { geom, values, valid })
    }

    /// Builds a grid with an explicit validity mask; invalid entries are
    /// forced to zero dose.
    fn with_validity(geom: GridGeometry, mut values: Vec<T>, valid: Vec<bool>) -> Self {
        debug_assert_eq!(values.len(), geom.node_count());
        debug_assert_eq!(valid.len(), geom.node_count());
        for (v, ok) in values.iter_mut().zip(&valid) {
            if !*ok {
                *v = T::zero();
            }
        }
        Self { geom, values, valid }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> T {
        self.values[self.geom.idx(i, j)]
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.valid[self.geom.idx(i, j)]
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }

    /// Bilinear interpolation of the dose at a physical position.
    ///
    /// Node coordinates reproduce stored node values exactly. Validity
    /// flags are ignored; use [`DoseGrid::sample_valid`] when invalid
    /// regions must poison the result.
    pub fn sample_bilinear(&self, x_mm: f64, y_mm: f64) -> Result<T, GridError> {
        let (ci, fx) = locate(x_mm, self.geom.origin_x_mm, self.geom.dx_mm, self.geom.nx)
            .ok_or(GridError::OutOfBounds { x: x_mm, y: y_mm })?;
        let (cj, fy) = locate(y_mm, self.geom.origin_y_mm, self.geom.dy_mm, self.geom.ny)
            .ok_or(GridError::OutOfBounds { x: x_mm, y: y_mm })?;
        Ok(self.interpolate(ci, cj, fx, fy))
    }

    /// Bilinear sample that returns `None` outside the extent or when any
    /// contributing node (weight > 0) is invalid.
    pub fn sample_valid(&self, x_mm: f64, y_mm: f64) -> Option<T> {
        let (ci, fx) = locate(x_mm, self.geom.origin_x_mm, self.geom.dx_mm, self.geom.nx)?;
        let (cj, fy) = locate(y_mm, self.geom.origin_y_mm, self.geom.dy_mm, self.geom.ny)?;
        for (di, wx) in [(0usize, 1.0 - fx), (1, fx)] {
            for (dj, wy) in [(0usize, 1.0 - fy), (1, fy)] {
                if wx * wy > 0.0 && !self.valid[self.geom.idx(ci + di, cj + dj)] {
                    return None;
                }
            }
        }
        Some(self.interpolate(ci, cj, fx, fy))
    }

    fn interpolate(&self, ci: usize, cj: usize, fx: f64, fy: f64) -> T {
        let v00 = self.values[self.geom.idx(ci, cj)];
        let v10 = self.values[self.geom.idx(ci + 1, cj)];
        let v01 = self.values[self.geom.idx(ci, cj + 1)];
        let v11 = self.values[self.geom.idx(ci + 1, cj + 1)];
        let fx = from_f64::<T>(fx);
        let fy = from_f64::<T>(fy);
        let one = T::one();
        let bottom = (one - fx) * v00 + fx * v10;
        let top = (one - fx) * v01 + fx * v11;
        (one - fy) * bottom + fy * top
    }

    /// Applies a perturbation: multiplicative dose scale plus rigid
    /// translation, resampling bilinearly. Nodes whose shifted pre-image
    /// leaves the input extent (or lands on invalid input) are marked
    /// invalid in the output. Geometry is unchanged.
    pub fn apply_perturbation(&self, p: &Perturbation) -> Result<DoseGrid<T>, GridError> {
        p.validate()?;
        let scale = from_f64::<T>(1.0 + p.dose_offset_pct / 100.0);
        if p.shift_x_mm == 0.0 && p.shift_y_mm == 0.0 {
            // No resampling: pure scale is exact.
            let values = self.values.iter().map(|&v| v * scale).collect();
            return Ok(DoseGrid::with_validity(self.geom, values, self.valid.clone()));
        }
        let n = self.geom.node_count();
        let mut values = Vec::with_capacity(n);
        let mut valid = Vec::with_capacity(n);
        for j in 0..self.geom.ny {
            for i in 0..self.geom.nx {
                let (x, y) = self.geom.node_pos(i, j);
                match self.sample_valid(x - p.shift_x_mm, y - p.shift_y_mm) {
                    Some(v) => {
                        values.push(v * scale);
                        valid.push(true);
                    }
                    None => {
                        values.push(T::zero());
                        valid.push(false);
                    }
                }
            }
        }
        Ok(DoseGrid::with_validity(self.geom, values, valid))
    }

    /// Returns a copy with all dose values multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> DoseGrid<T> {
        let values = self.values.iter().map(|&v| v * factor).collect();
        DoseGrid::with_validity(self.geom, values, self.valid.clone())
    }

    /// Returns a copy translated by a whole-grid origin shift; values and
    /// validity are untouched.
    pub fn translated(&self, shift_x_mm: f64, shift_y_mm: f64) -> DoseGrid<T> {
        let mut geom = self.geom;
        geom.origin_x_mm += shift_x_mm;
        geom.origin_y_mm += shift_y_mm;
        DoseGrid {
            geom,
            values: self.values.clone(),
            valid: self.valid.clone(),
        }
    }
}

/// Region-of-interest shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiShape {
    Rectangle,
    Ellipse,
}

impl std::fmt::Display for RoiShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RoiShape::Rectangle => f.write_str("rectangle"),
            RoiShape::Ellipse => f.write_str("ellipse"),
        }
    }
}

impl std::str::FromStr for RoiShape {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rectangle" => Ok(RoiShape::Rectangle),
            "ellipse" => Ok(RoiShape::Ellipse),
            other => Err(format!("unknown ROI shape {other:?}, expected rectangle or ellipse")),
        }
    }
}

/// Axis-aligned rectangular or elliptic region of interest in grid
/// coordinates (mm). Boundaries are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiSpec {
    pub shape: RoiShape,
    pub half_width_mm: f64,
    pub half_height_mm: f64,
    pub center_x_mm: f64,
    pub center_y_mm: f64,
}

impl RoiSpec {
    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.half_width_mm > 0.0) || !(self.half_height_mm > 0.0) {
            return Err(GridError::InvalidGrid(format!(
                "ROI half extents must be > 0, got {}x{}",
                self.half_width_mm, self.half_height_mm
            )));
        }
        Ok(())
    }

    /// Boundary-inclusive point membership test.
    pub fn contains(&self, x_mm: f64, y_mm: f64) -> bool {
        let rx = (x_mm - self.center_x_mm) / self.half_width_mm;
        let ry = (y_mm - self.center_y_mm) / self.half_height_mm;
        match self.shape {
            RoiShape::Rectangle => rx.abs() <= 1.0 && ry.abs() <= 1.0,
            RoiShape::Ellipse => rx * rx + ry * ry <= 1.0,
        }
    }

    /// Returns a copy with both half extents multiplied by `scale`.
    pub fn scaled(&self, scale: f64) -> RoiSpec {
        RoiSpec {
            half_width_mm: self.half_width_mm * scale,
            half_height_mm: self.half_height_mm * scale,
            ..*self
        }
    }

    /// Returns a copy with a different shape.
    pub fn with_shape(&self, shape: RoiShape) -> RoiSpec {
        RoiSpec { shape, ..*self }
    }
}

/// Boolean node mask aligned with a grid geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    geom: GridGeometry,
    inside: Vec<bool>,
}

impl Mask {
    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn is_inside(&self, i: usize, j: usize) -> bool {
        self.inside[self.geom.idx(i, j)]
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// Node-wise conjunction of two masks over the same geometry.
    pub fn intersect(&self, other: &Mask) -> Mask {
        assert_eq!(
            self.geom, other.geom,
            "mask intersection requires identical geometry"
        );
        let inside = self
            .inside
            .iter()
            .zip(&other.inside)
            .map(|(&a, &b)| a && b)
            .collect();
        Mask { geom: self.geom, inside }
    }
}

/// Realizes an ROI on a grid: a node is included iff its physical
/// coordinates lie inside the shape, boundary inclusive.
pub fn realize_roi<T: Scalar>(grid: &DoseGrid<T>, roi: &RoiSpec) -> Result<Mask, GridError> {
    roi.validate()?;
    let geom = *grid.geometry();
    let mut inside = vec![false; geom.node_count()];
    let mut count = 0usize;
    for j in 0..geom.ny {
        for i in 0..geom.nx {
            let (x, y) = geom.node_pos(i, j);
            if roi.contains(x, y) {
                inside[geom.idx(i, j)] = true;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(GridError::RoiOutsideGrid);
    }
    if count < MIN_MASK_NODES {
        return Err(GridError::RoiTooSmall { found: count });
    }
    Ok(Mask { geom, inside })
}

/// Multiplicative dose offset (percent) plus rigid translation (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Dose scale as percent: +2 means every value is multiplied by 1.02.
    pub dose_offset_pct: f64,
    pub shift_x_mm: f64,
    pub shift_y_mm: f64,
}

impl Perturbation {
    pub const IDENTITY: Perturbation = Perturbation {
        dose_offset_pct: 0.0,
        shift_x_mm: 0.0,
        shift_y_mm: 0.0,
    };

    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.dose_offset_pct > -100.0) {
            return Err(GridError::InvalidPerturbation(format!(
                "dose offset must be > -100%, got {}",
                self.dose_offset_pct
            )));
        }
        if !self.shift_x_mm.is_finite() || !self.shift_y_mm.is_finite() {
            return Err(GridError::InvalidPerturbation("shift must be finite".into()));
        }
        Ok(())
    }
}

/// Isotropic Gaussian dose blob: peak, width, centre and flat background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub peak_gy: f64,
    pub sigma_mm: f64,
    pub center_x_mm: f64,
    pub center_y_mm: f64,
    pub background_gy: f64,
}

/// Seeded multiplicative noise: each node is scaled by
/// `1 + (amplitude_pct/100) * u` with `u` uniform in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub seed: u64,
    pub amplitude_pct: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec { seed: 0, amplitude_pct: 0.0 };
}

/// Synthesizes a Gaussian dose blob plus background with seeded
/// multiplicative noise. Deterministic for a fixed seed: nodes are visited
/// row-major by y then x, one noise draw per node.
pub fn synth_phantom<T: Scalar>(
    geom: GridGeometry,
    spec: &PhantomSpec,
    noise: &NoiseSpec,
) -> Result<DoseGrid<T>, GridError> {
    geom.validate()?;
    if !(spec.sigma_mm > 0.0) {
        return Err(GridError::InvalidPhantom(format!(
            "sigma must be > 0, got {}",
            spec.sigma_mm
        )));
    }
    if !(spec.background_gy >= 0.0) || !(spec.peak_gy > spec.background_gy) {
        return Err(GridError::InvalidPhantom(format!(
            "need peak > background >= 0, got peak={} background={}",
            spec.peak_gy, spec.background_gy
        )));
    }
    if !(0.0..100.0).contains(&noise.amplitude_pct) {
        return Err(GridError::InvalidPhantom(format!(
            "noise amplitude must be in [0, 100), got {}",
            noise.amplitude_pct
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let inv_two_sigma2 = 1.0 / (2.0 * spec.sigma_mm * spec.sigma_mm);
    let mut values = Vec::with_capacity(geom.node_count());
    for j in 0..geom.ny {
        for i in 0..geom.nx {
            let (x, y) = geom.node_pos(i, j);
            let dx = x - spec.center_x_mm;
            let dy = y - spec.center_y_mm;
            let blob = spec.peak_gy * (-(dx * dx + dy * dy) * inv_two_sigma2).exp();
            let mut v = spec.background_gy + blob;
            if noise.amplitude_pct > 0.0 {
                let u: f64 = rng.gen_range(-1.0..=1.0);
                v *= 1.0 + noise.amplitude_pct / 100.0 * u;
            }
            values.push(from_f64::<T>(v));
        }
    }
    DoseGrid::new(geom, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(nx: usize, ny: usize, d: f64) -> GridGeometry {
        GridGeometry {
            nx,
            ny,
            dx_mm: d,
            dy_mm: d,
            origin_x_mm: 0.0,
            origin_y_mm: 0.0,
        }
    }

    fn grid_from(values: &[f64], nx: usize, ny: usize, d: f64) -> DoseGrid<f64> {
        DoseGrid::new(geom(nx, ny, d), values.to_vec()).unwrap()
    }

    #[test]
    fn constructor_rejects_bad_grids() {
        assert!(DoseGrid::<f64>::new(geom(1, 2, 1.0), vec![0.0, 0.0]).is_err());
        let mut g = geom(2, 2, 1.0);
        g.dx_mm = 0.0;
        assert!(DoseGrid::<f64>::new(g, vec![0.0; 4]).is_err());
        assert!(DoseGrid::<f64>::new(geom(2, 2, 1.0), vec![0.0; 3]).is_err());
        assert!(DoseGrid::<f64>::new(geom(2, 2, 1.0), vec![0.0, 1.0, -0.5, 2.0]).is_err());
        assert!(DoseGrid::<f64>::new(geom(2, 2, 1.0), vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn sample_reproduces_node_values() {
        let g = grid_from(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3, 2, 1.0);
        assert_eq!(g.sample_bilinear(1.0, 0.0).unwrap(), 2.0);
        assert_eq!(g.sample_bilinear(2.0, 1.0).unwrap(), 6.0);
        // Node exactness with awkward origin/spacing arithmetic.
        let mut aw = geom(4, 4, 0.3);
        aw.origin_x_mm = 0.1;
        aw.origin_y_mm = -0.7;
        let vals: Vec<f64> = (0..16).map(|k| k as f64).collect();
        let g = DoseGrid::new(aw, vals).unwrap();
        for j in 0..4 {
            for i in 0..4 {
                let (x, y) = aw.node_pos(i, j);
                assert_eq!(g.sample_bilinear(x, y).unwrap(), g.value(i, j), "node {i},{j}");
            }
        }
    }

    #[test]
    fn sample_midpoint_of_linear_field() {
        // 2x2 grid varying along y: {0,0;1,1}; cell centre -> 0.5.
        let g = grid_from(&[0.0, 0.0, 1.0, 1.0], 2, 2, 1.0);
        assert_eq!(g.sample_bilinear(0.5, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn sample_out_of_bounds_errors() {
        let g = grid_from(&[0.0; 4], 2, 2, 1.0);
        assert!(matches!(
            g.sample_bilinear(-0.5, 0.0),
            Err(GridError::OutOfBounds { .. })
        ));
        assert!(matches!(
            g.sample_bilinear(0.0, 1.5),
            Err(GridError::OutOfBounds { .. })
        ));
        // Exactly on the far edge is in bounds.
        assert_eq!(g.sample_bilinear(1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn roi_covering_grid_is_all_true() {
        let g = grid_from(&vec![1.0; 25], 5, 5, 1.0);
        let roi = RoiSpec {
            shape: RoiShape::Rectangle,
            half_width_mm: 10.0,
            half_height_mm: 10.0,
            center_x_mm: 2.0,
            center_y_mm: 2.0,
        };
        let mask = realize_roi(&g, &roi).unwrap();
        assert_eq!(mask.count(), 25);
    }

    #[test]
    fn roi_ellipse_symmetry() {
        // Symmetric grid centred on the ellipse: mask symmetric under
        // x -> -x and y -> -y about the centre.
        let mut gm = geom(9, 9, 1.0);
        gm.origin_x_mm = -4.0;
        gm.origin_y_mm = -4.0;
        let g = DoseGrid::new(gm, vec![1.0; 81]).unwrap();
        let roi = RoiSpec {
            shape: RoiShape::Ellipse,
            half_width_mm: 3.2,
            half_height_mm: 2.1,
            center_x_mm: 0.0,
            center_y_mm: 0.0,
        };
        let mask = realize_roi(&g, &roi).unwrap();
        for j in 0..9 {
            for i in 0..9 {
                assert_eq!(mask.is_inside(i, j), mask.is_inside(8 - i, j));
                assert_eq!(mask.is_inside(i, j), mask.is_inside(i, 8 - j));
            }
        }
    }

    #[test]
    fn roi_too_small_rejected() {
        let g = grid_from(&vec![1.0; 25], 5, 5, 1.0);
        let roi = RoiSpec {
            shape: RoiShape::Rectangle,
            half_width_mm: 0.4,
            half_height_mm: 0.4,
            center_x_mm: 2.0,
            center_y_mm: 2.0,
        };
        assert_eq!(realize_roi(&g, &roi), Err(GridError::RoiTooSmall { found: 1 }));
        let outside = RoiSpec {
            shape: RoiShape::Rectangle,
            half_width_mm: 1.0,
            half_height_mm: 1.0,
            center_x_mm: 50.0,
            center_y_mm: 50.0,
        };
        assert_eq!(realize_roi(&g, &outside), Err(GridError::RoiOutsideGrid));
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let g = grid_from(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0], 3, 2, 1.0);
        let out = g.apply_perturbation(&Perturbation::IDENTITY).unwrap();
        assert_eq!(out, g);
    }

    #[test]
    fn pure_scale_multiplies_every_node() {
        let g = grid_from(&[0.0, 1.0, 2.0, 3.0], 2, 2, 1.0);
        let p = Perturbation {
            dose_offset_pct: 10.0,
            shift_x_mm: 0.0,
            shift_y_mm: 0.0,
        };
        let out = g.apply_perturbation(&p).unwrap();
        for (a, b) in out.values().iter().zip(g.values()) {
            assert_eq!(*a, b * 1.1);
        }
        assert!(out.all_valid());
    }

    #[test]
    fn whole_node_shift_equals_index_shift() {
        let vals: Vec<f64> = (0..48).map(|k| (k * 7 % 13) as f64).collect();
        let g = grid_from(&vals, 8, 6, 1.5);
        let p = Perturbation {
            dose_offset_pct: 0.0,
            shift_x_mm: 1.5,
            shift_y_mm: 0.0,
        };
        let out = g.apply_perturbation(&p).unwrap();
        for j in 0..6 {
            assert!(!out.is_valid(0, j), "column 0 has no pre-image");
            for i in 1..8 {
                assert_eq!(out.value(i, j), g.value(i - 1, j), "node {i},{j}");
            }
        }
    }

    #[test]
    fn perturbation_rejects_full_negative_offset() {
        let g = grid_from(&[1.0; 4], 2, 2, 1.0);
        let p = Perturbation {
            dose_offset_pct: -100.0,
            shift_x_mm: 0.0,
            shift_y_mm: 0.0,
        };
        assert!(g.apply_perturbation(&p).is_err());
    }

    #[test]
    fn phantom_peak_and_determinism() {
        let gm = geom(17, 17, 1.0);
        let spec = PhantomSpec {
            peak_gy: 2.0,
            sigma_mm: 4.0,
            center_x_mm: 8.0,
            center_y_mm: 8.0,
            background_gy: 0.25,
        };
        let clean: DoseGrid<f64> = synth_phantom(gm, &spec, &NoiseSpec::NONE).unwrap();
        assert!((clean.value(8, 8) - 2.25).abs() < 1e-15);
        let noise = NoiseSpec { seed: 7, amplitude_pct: 1.0 };
        let a: DoseGrid<f64> = synth_phantom(gm, &spec, &noise).unwrap();
        let b: DoseGrid<f64> = synth_phantom(gm, &spec, &noise).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, clean);
    }

    #[test]
    fn phantom_centroid_matches_centre() {
        // Noise-free blob on a grid symmetric about the centre: the
        // dose-weighted centroid equals the specified centre.
        let mut gm = geom(33, 33, 0.5);
        gm.origin_x_mm = -8.0;
        gm.origin_y_mm = -8.0;
        let spec = PhantomSpec {
            peak_gy: 1.0,
            sigma_mm: 2.5,
            center_x_mm: 0.0,
            center_y_mm: 0.0,
            background_gy: 0.1,
        };
        let g: DoseGrid<f64> = synth_phantom(gm, &spec, &NoiseSpec::NONE).unwrap();
        let (mut sx, mut sy, mut m) = (0.0, 0.0, 0.0);
        for j in 0..33 {
            for i in 0..33 {
                let (x, y) = gm.node_pos(i, j);
                let v = g.value(i, j);
                sx += x * v;
                sy += y * v;
                m += v;
            }
        }
        assert!((sx / m - 0.0).abs() < 1e-6 * gm.dx_mm);
        assert!((sy / m - 0.0).abs() < 1e-6 * gm.dy_mm);
    }
}
