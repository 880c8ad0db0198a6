//! Isoperimetric experiments: ball-perimeter curves, the first-variation
//! consistency check, volume-constrained shape optimization, the two-ball
//! counterexample to ball optimality, Poincaré constants and the Sobolev and
//! relative isoperimetric checks.

mod counterexample;
mod optimize;
mod poincare;
mod sobolev;

pub use counterexample::{two_ball_counterexample, CounterexampleReport, TwoBallSetup};
pub use optimize::{optimize, AnnealSchedule, OptimizeMode, OptimizeOptions, ShapeResult, TracePoint};
pub use poincare::{poincare_constant, PoincareMode, PoincareOptions, PoincareReport};
pub use sobolev::{
    rearranged_kernel, relative_isoperimetric_check, relative_isoperimetric_suite, sobolev_assumption_check,
    RelativeSuite, SobolevCheck, SobolevOptions,
};

use crate::error::{Error, Result};
use crate::functional::{curvature, perimeter_with, table_for, Domain, EpsSchedule, QuadratureScheme};
use crate::grid::{rasterize, rearrange_set, Grid, GridSet, Shape};
use crate::kernels::Kernel;
use crate::numeric::fsum;
use crate::report::{csv_num, ser_f64, ser_vec_f64, Verdict};
use rayon::prelude::*;
use serde::Serialize;

/// How the constant of an [`InequalityReport`] was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantKind {
    /// Closed-form bound.
    Bound,
    /// Heuristic numerical estimate (a lower bound on the optimal constant).
    Estimate,
    /// `lhs / rhs` for the evaluated data.
    Implied,
    /// Constant fixed by the caller.
    Given,
}

/// `lhs ≤ constant · rhs + tol`.
#[derive(Clone, Debug, Serialize)]
pub struct InequalityReport {
    pub id: String,
    #[serde(serialize_with = "ser_f64")]
    pub lhs: f64,
    #[serde(serialize_with = "ser_f64")]
    pub rhs: f64,
    #[serde(serialize_with = "ser_f64")]
    pub constant: f64,
    pub constant_kind: ConstantKind,
    #[serde(serialize_with = "ser_f64")]
    pub tol: f64,
    pub verdict: Verdict,
}

impl InequalityReport {
    /// Builds the report with the verdict implied by the numbers.
    pub fn new(id: &str, lhs: f64, rhs: f64, constant: f64, kind: ConstantKind, tol: f64) -> InequalityReport {
        let mut r = InequalityReport {
            id: id.to_string(),
            lhs,
            rhs,
            constant,
            constant_kind: kind,
            tol,
            verdict: Verdict::Inconclusive,
        };
        r.verdict = r.evaluate();
        r
    }

    /// `Holds` iff `lhs ≤ constant·rhs + tol`; non-finite inputs other than an
    /// infinite right side are inconclusive.
    pub fn evaluate(&self) -> Verdict {
        if self.lhs.is_nan() || self.rhs.is_nan() || self.constant.is_nan() {
            return Verdict::Inconclusive;
        }
        let right = if self.rhs == 0.0 || self.constant == 0.0 { 0.0 } else { self.constant * self.rhs };
        Verdict::from_bool(self.lhs <= right + self.tol)
    }

    /// `lhs / rhs` (0 when both vanish).
    pub fn implied_constant(&self) -> f64 {
        implied(self.lhs, self.rhs)
    }
}

fn implied(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

/// Centered grid just large enough for a ball of the given radius plus one
/// cell of margin.
pub fn ball_grid(dim: usize, h: f64, radius: f64) -> Result<Grid> {
    let cells = (radius / h).ceil() + 1.0;
    Grid::centered(dim, h, cells * h)
}

fn centered_ball(g: &Grid, r: f64) -> Result<GridSet> {
    rasterize(g, &Shape::ball(vec![0.0; g.dim()], r))
}

/// Radius of the euclidean ball with the volume of the set.
pub fn equivalent_radius(e: &GridSet) -> f64 {
    let d = e.grid().dim() as f64;
    (e.volume() / unit_ball_volume(e.grid().dim())).powf(1.0 / d)
}

pub fn unit_ball_volume(d: usize) -> f64 {
    use std::f64::consts::PI;
    PI.powf(d as f64 / 2.0) / statrs::function::gamma::gamma(d as f64 / 2.0 + 1.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct BallCurve {
    #[serde(serialize_with = "ser_vec_f64")]
    pub radii: Vec<f64>,
    /// Volumes of the rasterized balls.
    #[serde(serialize_with = "ser_vec_f64")]
    pub volumes: Vec<f64>,
    #[serde(serialize_with = "ser_vec_f64")]
    pub perimeters: Vec<f64>,
    #[serde(serialize_with = "ser_vec_f64")]
    pub errors: Vec<f64>,
    /// Largest decrease beyond the combined error bars (0 when monotone).
    #[serde(serialize_with = "ser_f64")]
    pub worst_violation: f64,
    pub verdict: Verdict,
}

impl BallCurve {
    pub fn to_csv(&self, header: &str) -> String {
        let mut s = String::new();
        if !header.is_empty() {
            s.push_str(header);
            s.push('\n');
        }
        s.push_str("r,perimeter,error,volume\n");
        for i in 0..self.radii.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                csv_num(self.radii[i]),
                csv_num(self.perimeters[i]),
                csv_num(self.errors[i]),
                csv_num(self.volumes[i])
            ));
        }
        s
    }
}

/// `P_K(B_r)` for each radius on one grid of spacing h, with the verdict
/// "non-decreasing within the combined error bars".
pub fn ball_curve(k: &Kernel, radii: &[f64], h: f64, scheme: &QuadratureScheme) -> Result<BallCurve> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parameter("radii must be positive and increasing".into()));
    }
    let g = ball_grid(k.dim(), h, *radii.last().unwrap())?;
    let table = table_for(k, &g, scheme)?;
    let sets: Vec<GridSet> = radii.iter().map(|&r| centered_ball(&g, r)).collect::<Result<_>>()?;
    let reports: Vec<_> = sets.par_iter().map(|e| perimeter_with(e, Domain::WholeSpace, &table)).collect::<Result<_>>()?;
    let perimeters: Vec<f64> = reports.iter().map(|r| r.value).collect();
    let errors: Vec<f64> = reports.iter().map(|r| r.error).collect();
    let mut worst = 0.0f64;
    let mut inconclusive = reports.iter().any(|r| r.inconclusive || !r.value.is_finite());
    for i in 1..perimeters.len() {
        let drop = perimeters[i - 1] - perimeters[i];
        let allowed = errors[i - 1] + errors[i] + 1e-12 * perimeters[i].abs();
        if drop > allowed {
            worst = worst.max(drop - allowed);
        }
        inconclusive |= !perimeters[i].is_finite();
    }
    let verdict = if worst > 0.0 {
        Verdict::Fails
    } else if inconclusive {
        Verdict::Inconclusive
    } else {
        Verdict::Holds
    };
    Ok(BallCurve {
        radii: radii.to_vec(),
        volumes: sets.iter().map(|e| e.volume()).collect(),
        perimeters,
        errors,
        worst_violation: worst,
        verdict,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FirstVariation {
    #[serde(serialize_with = "ser_f64")]
    pub r: f64,
    /// Central difference of the ball curve in the volume-equivalent radius.
    #[serde(serialize_with = "ser_f64")]
    pub dp_dr: f64,
    /// `Σ_faces H_K · h^{d−1} · |n·ν|` over the rasterized sphere.
    #[serde(serialize_with = "ser_f64")]
    pub surface_sum: f64,
    #[serde(serialize_with = "ser_f64")]
    pub discrepancy: f64,
    pub faces: usize,
    pub inconclusive_faces: usize,
}

/// Compares the derivative of `r ↦ P_K(B_r)` with the surface integral of the
/// non-local curvature. Intended for bounded kernels that are smooth away
/// from the origin.
///
/// The derivative is a central difference over `r ± h`, taken in the radius
/// of the ball with the same volume as the rasterized set. Boundary faces of
/// the rasterized ball are weighted by `|n·ν|`, the cosine between the face
/// normal and the radial direction, so that the staircase carries the surface
/// measure of the sphere.
pub fn first_variation_check(
    k: &Kernel,
    r: f64,
    h: f64,
    scheme: &QuadratureScheme,
    schedule: &EpsSchedule,
) -> Result<FirstVariation> {
    if !k.is_bounded() {
        return Err(Error::Precondition("the first-variation check needs a bounded kernel".into()));
    }
    if !(r > 2.0 * h) {
        return Err(Error::Parameter("radius must exceed two cells".into()));
    }
    let d = k.dim();
    let g = ball_grid(d, h, r + h)?;
    let table = table_for(k, &g, scheme)?;
    let (lo, hi) = (centered_ball(&g, r - h)?, centered_ball(&g, r + h)?);
    let p_lo = perimeter_with(&lo, Domain::WholeSpace, &table)?.value;
    let p_hi = perimeter_with(&hi, Domain::WholeSpace, &table)?.value;
    let dr = equivalent_radius(&hi) - equivalent_radius(&lo);
    let dp_dr = (p_hi - p_lo) / dr;

    let e = centered_ball(&g, r)?;
    let faces = crate::functional::boundary_faces(&e);
    let area = h.powi(d as i32 - 1);
    let origin = g.origin().to_vec();
    let results: Vec<Result<(f64, bool)>> = faces
        .par_iter()
        .map(|x| {
            let c = curvature(&e, x, k, schedule)?;
            let rad = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            // the face normal is the axis on which x sits on a cell face
            let axis = (0..d)
                .find(|&a| {
                    let t = (x[a] - origin[a]) / h;
                    (t - t.round()).abs() < 1e-6
                })
                .unwrap_or(0);
            let cos = if rad > 0.0 { (x[axis] / rad).abs() } else { 1.0 };
            Ok((c.value * area * cos, c.converged != Verdict::Holds))
        })
        .collect();
    let mut terms = Vec::with_capacity(results.len());
    let mut bad = 0;
    for res in results {
        let (v, flag) = res?;
        terms.push(v);
        bad += flag as usize;
    }
    if bad * 10 > faces.len() {
        return Err(Error::Inconclusive(format!("curvature did not settle at {bad} of {} boundary faces", faces.len())));
    }
    let surface_sum = fsum(terms);
    let discrepancy = if dp_dr == 0.0 && surface_sum == 0.0 {
        0.0
    } else {
        (dp_dr - surface_sum).abs() / dp_dr.abs().max(surface_sum.abs())
    };
    Ok(FirstVariation { r, dp_dr, surface_sum, discrepancy, faces: faces.len(), inconclusive_faces: bad })
}

/// `P_K(E*) ≤ (1 + tol)·P_K(E)` where E* is the discrete symmetric-decreasing
/// rearrangement of E (same cell count, cells closest to the origin).
pub fn rearrangement_check(e: &GridSet, k: &Kernel, tol: f64, scheme: &QuadratureScheme) -> Result<InequalityReport> {
    let table = table_for(k, e.grid(), scheme)?;
    rearrangement_check_with(e, &table, tol)
}

pub fn rearrangement_check_with(e: &GridSet, table: &crate::functional::WeightTable, tol: f64) -> Result<InequalityReport> {
    let star = rearrange_set(e);
    let lhs = perimeter_with(&star, Domain::WholeSpace, table)?.value;
    let rhs = perimeter_with(e, Domain::WholeSpace, table)?.value;
    Ok(InequalityReport::new("rearrangement", lhs, rhs, 1.0 + tol, ConstantKind::Given, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn report_verdicts() {
        assert_eq!(InequalityReport::new("a", 1.0, 1.0, 1.0, ConstantKind::Given, 0.0).verdict, Verdict::Holds);
        assert_eq!(InequalityReport::new("a", 1.1, 1.0, 1.0, ConstantKind::Given, 0.0).verdict, Verdict::Fails);
        assert_eq!(InequalityReport::new("a", 0.0, 0.0, f64::INFINITY, ConstantKind::Implied, 0.0).verdict, Verdict::Holds);
        assert_eq!(InequalityReport::new("a", 1.0, 0.0, 1.0, ConstantKind::Given, 0.0).implied_constant(), f64::INFINITY);
    }

    #[test]
    fn fractional_interval_curve_matches_closed_form() {
        let k = Kernel::fractional(1, 0.5, 1.0).unwrap();
        let radii: Vec<f64> = (1..=8).map(|i| i as f64 / 16.0).collect();
        let c = ball_curve(&k, &radii, 1.0 / 256.0, &QuadratureScheme::default()).unwrap();
        for (r, p) in c.radii.iter().zip(&c.perimeters) {
            assert_relative_eq!(*p, 8.0 * (2.0 * r).sqrt(), max_relative = 0.05);
        }
        assert_eq!(c.verdict, Verdict::Holds);
    }

    #[test]
    fn indicator_curve_is_affine_then_flat() {
        let k = Kernel::indicator(1, 1.0).unwrap();
        let radii: Vec<f64> = (1..=12).map(|i| i as f64 / 8.0).collect();
        let c = ball_curve(&k, &radii, 1.0 / 64.0, &QuadratureScheme::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Holds);
        // P((−r, r)) = 4r − 4r² for r ≤ ½ and 1 beyond
        for (r, p) in c.radii.iter().zip(&c.perimeters) {
            let exact = if *r <= 0.5 { 4.0 * r - 4.0 * r * r } else { 1.0 };
            assert_relative_eq!(*p, exact, max_relative = 0.02);
        }
    }

    #[test]
    fn first_variation_indicator_interval() {
        let k = Kernel::indicator(1, 1.0).unwrap();
        let f = first_variation_check(&k, 0.25, 1.0 / 128.0, &QuadratureScheme::default(), &EpsSchedule::default()).unwrap();
        assert_relative_eq!(f.dp_dr, 2.0, max_relative = 0.05);
        assert_relative_eq!(f.surface_sum, 2.0, max_relative = 0.05);
        assert!(f.discrepancy < 0.1);
    }

    #[test]
    fn first_variation_plateau_is_zero() {
        let k = Kernel::indicator(1, 0.5).unwrap();
        let f = first_variation_check(&k, 1.0, 1.0 / 32.0, &QuadratureScheme::default(), &EpsSchedule::default()).unwrap();
        assert!(f.dp_dr.abs() < 1e-9 && f.surface_sum.abs() < 1e-9, "{f:?}");
    }

    #[test]
    fn rearranged_interval_is_not_worse() {
        let g = Grid::centered(1, 1.0 / 64.0, 1.0).unwrap();
        let e = rasterize(&g, &Shape::UnionOfBoxes { boxes: vec![(vec![-0.8], vec![-0.5]), (vec![0.1], vec![0.3])] }).unwrap();
        let k = Kernel::fractional(1, 0.5, 1.0).unwrap();
        let r = rearrangement_check(&e, &k, 0.0, &QuadratureScheme::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert!(r.lhs < r.rhs);
    }
}
