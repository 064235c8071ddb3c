//! File formats: DGRID v1 dose grids and AUDIT v1 run configurations.
//!
//! DGRID v1 is a JSON document with explicit geometry and a row-major
//! (y-major) value array:
//!
//! ```json
//! {"format": "dgrid", "version": 1, "nx": 4, "ny": 3,
//!  "dx_mm": 1.0, "dy_mm": 1.0, "origin_mm": [-1.5, -1.0],
//!  "unit": "Gy", "values": [0.0, 0.1, ...]}
//! ```
//!
//! A CSV matrix (one row per y, `nx` comma-separated values) is accepted
//! when accompanied by a sidecar header `<file>.json` carrying the same
//! geometry fields minus `values`. Gamma maps are written with unit
//! `"gamma"`; excluded nodes are stored as JSON `null` (JSON has no NaN
//! literal) and read back as excluded. Readers reject unknown formats and
//! versions.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{default_factors, Factor, FactorId, LevelValue};
use crate::gamma::{GammaCriterion, GammaMap, GammaOptions, STANDARD_CRITERIA};
use crate::grid::{DoseGrid, GridGeometry, NoiseSpec, PhantomSpec, RoiSpec};
use crate::scalar::{from_f64, Scalar};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl IoError {
    fn invalid(path: &Path, message: impl Into<String>) -> Self {
        IoError::Invalid { path: path.to_path_buf(), message: message.into() }
    }
}

pub const DGRID_FORMAT: &str = "dgrid";
pub const AUDIT_FORMAT: &str = "audit";
pub const SUPPORTED_VERSION: u32 = 1;

/// DGRID v1 document. `values` uses `null` for excluded nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgridFile {
    pub format: String,
    pub version: u32,
    pub nx: usize,
    pub ny: usize,
    pub dx_mm: f64,
    pub dy_mm: f64,
    pub origin_mm: [f64; 2],
    pub unit: String,
    pub values: Vec<Option<f64>>,
}

/// Sidecar header for the CSV matrix form: DGRID v1 without `values`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgridHeader {
    pub format: String,
    pub version: u32,
    pub nx: usize,
    pub ny: usize,
    pub dx_mm: f64,
    pub dy_mm: f64,
    pub origin_mm: [f64; 2],
    pub unit: String,
}

fn check_header(
    path: &Path,
    format: &str,
    version: u32,
    nx: usize,
    ny: usize,
    dx_mm: f64,
    dy_mm: f64,
    origin_mm: [f64; 2],
) -> Result<(), IoError> {
    if format != DGRID_FORMAT {
        return Err(IoError::invalid(
            path,
            format!("format must be {DGRID_FORMAT:?}, got {format:?}"),
        ));
    }
    if version != SUPPORTED_VERSION {
        return Err(IoError::invalid(
            path,
            format!("unsupported version {version}, this reader accepts {SUPPORTED_VERSION}"),
        ));
    }
    if nx < 2 || ny < 2 {
        return Err(IoError::invalid(path, format!("nx and ny must be >= 2, got {nx}x{ny}")));
    }
    if !(dx_mm > 0.0) || !(dy_mm > 0.0) {
        return Err(IoError::invalid(
            path,
            format!("dx_mm and dy_mm must be > 0, got {dx_mm} and {dy_mm}"),
        ));
    }
    if !origin_mm.iter().all(|v| v.is_finite()) {
        return Err(IoError::invalid(path, "origin_mm must be finite"));
    }
    Ok(())
}

impl DgridFile {
    pub fn validate(&self, path: &Path) -> Result<(), IoError> {
        check_header(
            path,
            &self.format,
            self.version,
            self.nx,
            self.ny,
            self.dx_mm,
            self.dy_mm,
            self.origin_mm,
        )?;
        if self.values.len() != self.nx * self.ny {
            return Err(IoError::invalid(
                path,
                format!(
                    "values has {} entries, nx*ny = {}",
                    self.values.len(),
                    self.nx * self.ny
                ),
            ));
        }
        match self.unit.as_str() {
            "Gy" => {
                for (k, v) in self.values.iter().enumerate() {
                    match v {
                        None => {
                            return Err(IoError::invalid(
                                path,
                                format!("values[{k}] is null; dose grids must be fully defined"),
                            ))
                        }
                        Some(x) if !x.is_finite() || *x < 0.0 => {
                            return Err(IoError::invalid(
                                path,
                                format!("values[{k}] = {x}, dose must be finite and >= 0"),
                            ))
                        }
                        _ => {}
                    }
                }
            }
            "gamma" => {
                for (k, v) in self.values.iter().enumerate() {
                    if let Some(x) = v {
                        if !x.is_finite() || *x < 0.0 {
                            return Err(IoError::invalid(
                                path,
                                format!("values[{k}] = {x}, gamma must be finite and >= 0"),
                            ));
                        }
                    }
                }
            }
            other => {
                return Err(IoError::invalid(
                    path,
                    format!("unit must be \"Gy\" or \"gamma\", got {other:?}"),
                ))
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry {
            nx: self.nx,
            ny: self.ny,
            dx_mm: self.dx_mm,
            dy_mm: self.dy_mm,
            origin_x_mm: self.origin_mm[0],
            origin_y_mm: self.origin_mm[1],
        }
    }
}

/// Reads a dose grid from a DGRID v1 file. A `.csv` path is read as the
/// matrix form with its `<file>.json` sidecar header; anything else is
/// parsed as the JSON document form.
pub fn read_dose_grid<T: Scalar>(path: &Path) -> Result<DoseGrid<T>, IoError> {
    let file = if path.extension().is_some_and(|e| e == "csv") {
        read_csv_form(path)?
    } else {
        parse_dgrid_json(path)?
    };
    file.validate(path)?;
    if file.unit != "Gy" {
        return Err(IoError::invalid(
            path,
            format!("expected a dose grid with unit \"Gy\", got {:?}", file.unit),
        ));
    }
    let values: Vec<T> = file
        .values
        .iter()
        .map(|v| from_f64::<T>(v.expect("validated dose grid")))
        .collect();
    DoseGrid::new(file.geometry(), values)
        .map_err(|e| IoError::invalid(path, e.to_string()))
}

fn parse_dgrid_json(path: &Path) -> Result<DgridFile, IoError> {
    let text = fs::read_to_string(path)
        .map_err(|source| IoError::Read { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.to_path_buf(), source })
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".json");
    PathBuf::from(os)
}

fn read_csv_form(path: &Path) -> Result<DgridFile, IoError> {
    let header_path = sidecar_path(path);
    let header_text = fs::read_to_string(&header_path)
        .map_err(|source| IoError::Read { path: header_path.clone(), source })?;
    let header: DgridHeader = serde_json::from_str(&header_text)
        .map_err(|source| IoError::Json { path: header_path.clone(), source })?;
    check_header(
        &header_path,
        &header.format,
        header.version,
        header.nx,
        header.ny,
        header.dx_mm,
        header.dy_mm,
        header.origin_mm,
    )?;
    let text = fs::read_to_string(path)
        .map_err(|source| IoError::Read { path: path.to_path_buf(), source })?;
    let mut values = Vec::with_capacity(header.nx * header.ny);
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        for cell in line.split(',') {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| {
                IoError::invalid(
                    path,
                    format!("line {}: {cell:?} is not a number", lineno + 1),
                )
            })?;
            values.push(Some(v));
        }
    }
    Ok(DgridFile {
        format: header.format,
        version: header.version,
        nx: header.nx,
        ny: header.ny,
        dx_mm: header.dx_mm,
        dy_mm: header.dy_mm,
        origin_mm: header.origin_mm,
        unit: header.unit,
        values,
    })
}

/// Serializes a dose grid as a DGRID v1 JSON document. Invalid nodes are
/// written as `null`.
pub fn dose_grid_to_file<T: Scalar>(grid: &DoseGrid<T>) -> DgridFile {
    let geom = grid.geometry();
    let values = (0..geom.ny)
        .flat_map(|j| (0..geom.nx).map(move |i| (i, j)))
        .map(|(i, j)| {
            if grid.is_valid(i, j) {
                Some(grid.value(i, j).to_f64().expect("finite dose"))
            } else {
                None
            }
        })
        .collect();
    DgridFile {
        format: DGRID_FORMAT.into(),
        version: SUPPORTED_VERSION,
        nx: geom.nx,
        ny: geom.ny,
        dx_mm: geom.dx_mm,
        dy_mm: geom.dy_mm,
        origin_mm: [geom.origin_x_mm, geom.origin_y_mm],
        unit: "Gy".into(),
        values,
    }
}

/// Serializes a gamma map as DGRID v1 with unit `"gamma"`; excluded nodes
/// become `null`.
pub fn gamma_map_to_file<T: Scalar>(map: &GammaMap<T>) -> DgridFile {
    let geom = map.geometry();
    DgridFile {
        format: DGRID_FORMAT.into(),
        version: SUPPORTED_VERSION,
        nx: geom.nx,
        ny: geom.ny,
        dx_mm: geom.dx_mm,
        dy_mm: geom.dy_mm,
        origin_mm: [geom.origin_x_mm, geom.origin_y_mm],
        unit: "gamma".into(),
        values: map
            .values()
            .iter()
            .map(|v| v.map(|g| g.to_f64().expect("finite gamma")))
            .collect(),
    }
}

pub fn write_json_file<S: Serialize>(path: &Path, value: &S) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|source| IoError::Json { path: path.to_path_buf(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| IoError::Write { path: path.to_path_buf(), source })
}

// ---------------------------------------------------------------------------
// AUDIT v1 run configuration
// ---------------------------------------------------------------------------

/// AUDIT v1 configuration: factors with explicit levels, gamma-option
/// overrides, and centre datasets given either as DGRID file references or
/// as seeded synthetic specs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditConfig {
    pub format: String,
    pub version: u32,
    /// Offset added to every synthetic seed; overridable from the CLI.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub gamma_options: Option<GammaOptions>,
    /// Omitted factors fall back to the default two-level design.
    #[serde(default)]
    pub factors: Option<Vec<FactorConfig>>,
    pub centres: Vec<CentreConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorConfig {
    pub id: FactorId,
    pub levels: Vec<LevelValue>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CentreConfig {
    Synthetic {
        id: String,
        synthetic: SyntheticCentre,
    },
    Files {
        id: String,
        reference: PathBuf,
        evaluated: PathBuf,
        roi: RoiSpec,
    },
}

impl CentreConfig {
    pub fn id(&self) -> &str {
        match self {
            CentreConfig::Synthetic { id, .. } | CentreConfig::Files { id, .. } => id,
        }
    }

    /// DGRID files referenced by this centre, if any.
    pub fn file_inputs(&self) -> Vec<&Path> {
        match self {
            CentreConfig::Synthetic { .. } => Vec::new(),
            CentreConfig::Files { reference, evaluated, .. } => {
                vec![reference.as_path(), evaluated.as_path()]
            }
        }
    }
}

/// A simulated audit centre: the reference plane is a seeded noisy
/// phantom; the evaluated plane is the same analytic blob re-synthesized
/// with the centre's systematic delivery mismatch (dose scale applied to
/// peak and background, rigid shift applied to the blob centre) and its
/// own noise seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticCentre {
    pub grid: GridGeometryConfig,
    pub phantom: PhantomConfig,
    pub roi: RoiSpec,
    pub reference_seed: u64,
    #[serde(default)]
    pub reference_noise_pct: f64,
    pub evaluated_seed: u64,
    #[serde(default)]
    pub evaluated_noise_pct: f64,
    pub delivery: DeliveryMismatch,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridGeometryConfig {
    pub nx: usize,
    pub ny: usize,
    pub dx_mm: f64,
    pub dy_mm: f64,
    pub origin_mm: [f64; 2],
}

impl From<GridGeometryConfig> for GridGeometry {
    fn from(g: GridGeometryConfig) -> Self {
        GridGeometry {
            nx: g.nx,
            ny: g.ny,
            dx_mm: g.dx_mm,
            dy_mm: g.dy_mm,
            origin_x_mm: g.origin_mm[0],
            origin_y_mm: g.origin_mm[1],
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub peak_gy: f64,
    pub sigma_mm: f64,
    pub center_mm: [f64; 2],
    pub background_gy: f64,
}

/// Systematic difference between delivered and planned dose.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DeliveryMismatch {
    #[serde(default)]
    pub dose_offset_pct: f64,
    #[serde(default)]
    pub shift_x_mm: f64,
    #[serde(default)]
    pub shift_y_mm: f64,
}

pub fn parse_audit_config(path: &Path) -> Result<AuditConfig, IoError> {
    let text = fs::read_to_string(path)
        .map_err(|source| IoError::Read { path: path.to_path_buf(), source })?;
    let cfg: AuditConfig = serde_json::from_str(&text)
        .map_err(|source| IoError::Json { path: path.to_path_buf(), source })?;
    validate_audit_config(&cfg, path)?;
    Ok(cfg)
}

pub fn validate_audit_config(cfg: &AuditConfig, path: &Path) -> Result<(), IoError> {
    if cfg.format != AUDIT_FORMAT {
        return Err(IoError::invalid(
            path,
            format!("format must be {AUDIT_FORMAT:?}, got {:?}", cfg.format),
        ));
    }
    if cfg.version != SUPPORTED_VERSION {
        return Err(IoError::invalid(
            path,
            format!(
                "unsupported version {}, this reader accepts {SUPPORTED_VERSION}",
                cfg.version
            ),
        ));
    }
    if cfg.centres.is_empty() {
        return Err(IoError::invalid(path, "centres must not be empty"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for c in &cfg.centres {
        if !seen.insert(c.id().to_string()) {
            return Err(IoError::invalid(path, format!("duplicate centre id {:?}", c.id())));
        }
    }
    if let Some(opt) = &cfg.gamma_options {
        opt.validate().map_err(|e| IoError::invalid(path, e.to_string()))?;
    }
    let factors = resolve_factors(cfg).map_err(|e| IoError::invalid(path, e))?;
    if factors.is_empty() {
        return Err(IoError::invalid(path, "factor list must not be empty"));
    }
    for c in &cfg.centres {
        if let CentreConfig::Synthetic { id, synthetic } = c {
            let geom: GridGeometry = synthetic.grid.into();
            geom.validate()
                .map_err(|e| IoError::invalid(path, format!("centre {id}: {e}")))?;
            synthetic
                .roi
                .validate()
                .map_err(|e| IoError::invalid(path, format!("centre {id}: {e}")))?;
            if !(synthetic.phantom.sigma_mm > 0.0) {
                return Err(IoError::invalid(
                    path,
                    format!("centre {id}: phantom sigma_mm must be > 0"),
                ));
            }
        }
    }
    Ok(())
}

/// Materializes the factor list, falling back to the default design.
pub fn resolve_factors(cfg: &AuditConfig) -> Result<Vec<Factor>, String> {
    match &cfg.factors {
        None => Ok(default_factors()),
        Some(list) => {
            let mut seen = std::collections::BTreeSet::new();
            list.iter()
                .map(|f| {
                    if !seen.insert(f.id) {
                        return Err(format!("duplicate factor {}", f.id));
                    }
                    Factor::new(f.id, f.levels.clone()).map_err(|e| e.to_string())
                })
                .collect()
        }
    }
}

/// Effective gamma options: config override or defaults.
pub fn resolve_gamma_options(cfg: &AuditConfig) -> GammaOptions {
    cfg.gamma_options.unwrap_or_default()
}

/// The criteria reported as GIC1..GIC4 (fixed standard set).
pub fn resolve_criteria() -> [GammaCriterion; 4] {
    STANDARD_CRITERIA
}

/// Builds the reference/evaluated grids for a synthetic centre.
pub fn realize_synthetic<T: Scalar>(
    spec: &SyntheticCentre,
    seed_offset: u64,
) -> Result<(DoseGrid<T>, DoseGrid<T>), String> {
    let geom: GridGeometry = spec.grid.into();
    let base = PhantomSpec {
        peak_gy: spec.phantom.peak_gy,
        sigma_mm: spec.phantom.sigma_mm,
        center_x_mm: spec.phantom.center_mm[0],
        center_y_mm: spec.phantom.center_mm[1],
        background_gy: spec.phantom.background_gy,
    };
    let reference = crate::grid::synth_phantom(
        geom,
        &base,
        &NoiseSpec {
            seed: spec.reference_seed.wrapping_add(seed_offset),
            amplitude_pct: spec.reference_noise_pct,
        },
    )
    .map_err(|e| e.to_string())?;
    let scale = 1.0 + spec.delivery.dose_offset_pct / 100.0;
    let delivered = PhantomSpec {
        peak_gy: base.peak_gy * scale,
        sigma_mm: base.sigma_mm,
        center_x_mm: base.center_x_mm + spec.delivery.shift_x_mm,
        center_y_mm: base.center_y_mm + spec.delivery.shift_y_mm,
        background_gy: base.background_gy * scale,
    };
    let evaluated = crate::grid::synth_phantom(
        geom,
        &delivered,
        &NoiseSpec {
            seed: spec.evaluated_seed.wrapping_add(seed_offset),
            amplitude_pct: spec.evaluated_noise_pct,
        },
    )
    .map_err(|e| e.to_string())?;
    Ok((reference, evaluated))
}
