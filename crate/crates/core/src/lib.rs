//! Dose-comparison metrics and factorial sensitivity analysis for
//! radiotherapy audit data.
//!
//! The crate compares a reference (planned) and an evaluated (measured) 2D
//! dose distribution inside a region of interest and reports twelve outputs:
//! four gamma-index criteria, each as a passing rate and a median gamma,
//! plus mean/median dose difference, distance to agreement and
//! centre-of-mass distance. On top of that it sweeps a balanced factorial
//! design over ROI and registration factors, derives relative sensitivities
//! from Type III sums of squares, and emits Pearson-correlation matrices
//! between metrics, audit centres and factors.
//!
//! All numerics are generic over the scalar type ([`scalar::Scalar`]);
//! `f64` aliases are exported at the crate root and used by the CLI.

pub mod anova;
pub mod correlation;
pub mod demo;
pub mod design;
pub mod gamma;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod scalar;

pub use grid::{GridGeometry, Mask, NoiseSpec, Perturbation, PhantomSpec, RoiShape, RoiSpec};

/// `f64` instantiations used by the CLI and the audit pipeline.
pub type DoseGrid = grid::DoseGrid<f64>;
pub type GammaMap = gamma::GammaMap<f64>;
pub type AuditResult = gamma::AuditResult<f64>;
pub type CentreDataset = design::CentreDataset<f64>;
pub type ResultTable = design::ResultTable<f64>;
pub type AnovaTable = anova::AnovaTable<f64>;
pub type SensitivityVector = anova::SensitivityVector<f64>;
pub type SensitivitySweep = anova::SensitivitySweep<f64>;
pub type CorrelationMatrix = correlation::CorrelationMatrix<f64>;

/// Single-precision aliases.
pub type DoseGrid32 = grid::DoseGrid<f32>;
pub type GammaMap32 = gamma::GammaMap<f32>;
pub type AuditResult32 = gamma::AuditResult<f32>;
