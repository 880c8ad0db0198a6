//! Integrals of kernels over balls, tails, annuli and cube exteriors.

use super::Kernel;
use crate::error::{param, Result};
use crate::numeric::{fsum, sphere_area, sphere_directions, Integral, IntegralStatus, LineIntegrator};
use rayon::prelude::*;
use serde::Serialize;

/// Integration region (radii are euclidean).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "region", content = "value", rename_all = "snake_case")]
pub enum Region {
    All,
    /// `{|z|₂ > r}`.
    Tail(f64),
    /// `{|z|₂ < r}`.
    Ball(f64),
    /// `{r0 < |z|₂ ≤ r1}`.
    Annulus(f64, f64),
    /// `{|z|_∞ > a}`.
    CubeExterior(f64),
}

/// Integration weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "weight", content = "p", rename_all = "snake_case")]
pub enum Weight {
    One,
    /// `min{1, |z|₂^p}`.
    MinOnePow(f64),
}

/// `∫_region K(z) w(z) dz` in polar coordinates, with the divergence
/// escalation rule applied along every ray. Divergent integrals return
/// `value = +∞` and status `Divergent`.
pub fn kernel_integral(k: &Kernel, region: Region, weight: Weight) -> Result<Integral> {
    kernel_integral_with(k, region, weight, &LineIntegrator::default())
}

pub fn kernel_integral_with(k: &Kernel, region: Region, weight: Weight, li: &LineIntegrator) -> Result<Integral> {
    match region {
        Region::Tail(r) | Region::Ball(r) | Region::CubeExterior(r) if !(r > 0.0) => {
            return param(format!("region radius must be positive, got {r}"));
        }
        Region::Annulus(a, b) if !(a >= 0.0 && b >= a) => return param("annulus needs 0 ≤ r0 ≤ r1"),
        _ => {}
    }
    if let Weight::MinOnePow(p) = weight {
        if !(p > 0.0) {
            return param("weight exponent must be positive");
        }
    }
    let d = k.dim();
    let dirs: Vec<(Vec<f64>, f64)> = if k.is_radial() && k.norm().is_euclidean() && !matches!(region, Region::CubeExterior(_)) {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        vec![(e, sphere_area(d))]
    } else {
        let n = if d == 2 { 16 } else { 8 };
        sphere_directions(d, n, false).into_iter().map(|x| (x.v, x.w)).collect()
    };
    let origin_singular = k.singular_at_origin();
    let parts: Vec<Integral> = dirs
        .par_iter()
        .map(|(theta, w)| {
            let (a, b) = match region {
                Region::All => (0.0, f64::INFINITY),
                Region::Tail(r) => (r, f64::INFINITY),
                Region::Ball(r) => (0.0, r),
                Region::Annulus(r0, r1) => (r0, r1),
                Region::CubeExterior(c) => {
                    let m = theta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                    (c / m, f64::INFINITY)
                }
            };
            let ray = k.ray(theta);
            let f = |t: f64| {
                if t <= 0.0 {
                    return 0.0;
                }
                let kv = ray.eval(t);
                if kv == 0.0 {
                    return 0.0;
                }
                let wv = match weight {
                    Weight::One => 1.0,
                    Weight::MinOnePow(p) => t.powf(p).min(1.0),
                };
                kv * wv * t.powi(d as i32 - 1)
            };
            let mut breaks = k.ray_breaks(theta);
            if let Weight::MinOnePow(_) = weight {
                breaks.push(1.0);
            }
            let mut singular = k.ray_singular(theta);
            if a == 0.0 && origin_singular {
                singular.push(0.0);
            }
            li.integrate(&f, a, b, &breaks, &singular).scale(*w)
        })
        .collect();
    if parts.iter().any(|p| p.status == IntegralStatus::Divergent) {
        return Ok(Integral::divergent());
    }
    let status = if parts.iter().any(|p| p.status == IntegralStatus::Inconclusive) {
        IntegralStatus::Inconclusive
    } else {
        IntegralStatus::Converged
    };
    let value = fsum(parts.iter().map(|p| p.value));
    let error = fsum(parts.iter().map(|p| p.error));
    // angular quadrature error is not part of the radial estimates
    let error = if dirs.len() > 1 { error + 1e-9 * value.abs() } else { error };
    Ok(Integral { value, error, status })
}
