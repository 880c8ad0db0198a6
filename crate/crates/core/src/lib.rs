//! Numerical laboratory for non-local Sobolev seminorms and non-local perimeters.
//!
//! The crate evaluates the functionals
//!
//! * `[u]^p = ∫∫ |u(x) − u(y)|^p K(x − y) dx dy` (non-local seminorm),
//! * `P_K(E; Ω)` (relative K-perimeter) and `P_K(E) = ½ [χ_E]_{W^{K,1}}`,
//! * `V_K(E) = ∫∫_{E×E} K(x − y) dx dy` (interaction energy),
//!
//! on sets and functions sampled on uniform grids, together with kernel
//! hypothesis certification, the constructive extension operator on box
//! domains, the exact interval-perimeter formula in one dimension and a set
//! of isoperimetric experiments.
//!
//! Sets and functions are piecewise constant on grid cells. The default
//! quadrature integrates the kernel exactly against the cell-pair overlap
//! (a tent function), so discrete perimeters of rasterized sets are the
//! continuum perimeters of those rasterized sets up to quadrature error.

pub mod closedform1d;
pub mod error;
pub mod extension;
pub mod functional;
pub mod grid;
pub mod isoperimetry;
pub mod kernels;
pub mod norm;
pub mod numeric;
pub mod report;

pub use error::{Error, Result};
pub use kernels::{
    certify, kernel_integral, CertificateReport, Hypothesis, Kernel, KernelFamily, KernelSpec,
    Region, SamplingConfig, Truncation, Weight,
};
pub use functional::{
    curvature, divergence_probe, interaction_energy, perimeter, perimeter_via_energy, seminorm, CurvatureReport,
    Domain, EnergyMethod, EnergyReport, EpsSchedule, NearFieldRule, ProbeCurve, ProbeSchedule, QuadratureScheme,
    WeightTable,
};
pub use grid::{Grid, GridFunction, GridSet, Shape};
pub use closedform1d::{build_profile, interval_perimeter, perimeter_curve_report, CurveReport, Profile1D, Provenance};
pub use extension::{extend, BoxDomain, BoundCheck, ExtendOptions, ExtensionReport};
pub use isoperimetry::{
    ball_curve, first_variation_check, optimize, poincare_constant, rearrangement_check, relative_isoperimetric_check,
    relative_isoperimetric_suite, sobolev_assumption_check, two_ball_counterexample, BallCurve, ConstantKind,
    FirstVariation, InequalityReport, OptimizeMode, OptimizeOptions, PoincareMode, PoincareOptions, ShapeResult,
    SobolevOptions, TwoBallSetup,
};
pub use norm::Norm;
pub use report::Verdict;
