//! Non-local curvature
//! `H_K(E, x) = lim_{ε→0} ∫_{|y−x|>ε} (χ_{E^c}(y) − χ_E(y)) K(x − y) dy`
//! at a boundary point of a rasterized set, by polar rays from x.

use crate::error::{Error, Result};
use crate::grid::GridSet;
use crate::kernels::Kernel;
use crate::numeric::{fsum, sphere_directions, Integral, IntegralStatus, LineIntegrator};
use crate::report::{ser_f64, ser_vec_f64, Verdict};
use rayon::prelude::*;
use serde::Serialize;

/// Geometric schedule `ε_k = ε₀ 2^{−k}`, stopped at the last value ≥ `min_eps`
/// (the grid spacing when unset).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsSchedule {
    pub eps0: f64,
    pub min_eps: Option<f64>,
    /// Accepted spread of the last three iterates, relative to the value.
    pub rel_tol: f64,
    /// Accepted absolute spread.
    pub abs_tol: f64,
    /// Directions on a half circle in d = 2 (full circle for non-symmetric K).
    pub directions: usize,
}

impl Default for EpsSchedule {
    fn default() -> Self {
        EpsSchedule { eps0: 0.5, min_eps: None, rel_tol: 0.05, abs_tol: 1e-6, directions: 1024 }
    }
}

impl EpsSchedule {
    pub fn values(&self, h: f64) -> Vec<f64> {
        let floor = self.min_eps.unwrap_or(h).max(h);
        let mut out = Vec::new();
        let mut e = self.eps0;
        while e >= floor * (1.0 - 1e-12) && out.len() < 64 {
            out.push(e);
            e *= 0.5;
        }
        if out.is_empty() {
            out.push(floor);
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvatureReport {
    pub point: Vec<f64>,
    #[serde(serialize_with = "ser_vec_f64")]
    pub eps: Vec<f64>,
    #[serde(serialize_with = "ser_vec_f64")]
    pub values: Vec<f64>,
    /// Last iterate.
    #[serde(serialize_with = "ser_f64")]
    pub value: f64,
    /// Spread of the last three iterates.
    #[serde(serialize_with = "ser_f64")]
    pub error: f64,
    /// `Holds` when the spread is within tolerance, `Inconclusive` otherwise.
    pub converged: Verdict,
}

/// Maximal intervals `(a, b, σ)` of `t ∈ (0, ∞)` on which `x + tθ` stays in E
/// (σ = −1) or in its complement (σ = +1); the last interval is unbounded.
fn ray_segments(e: &GridSet, x: &[f64], theta: &[f64]) -> Vec<(f64, f64, f64)> {
    let g = e.grid();
    let h = g.h();
    let d = g.dim();
    let origin = g.origin();
    let upper = g.upper();
    // exit time from the box
    let mut t_exit = f64::INFINITY;
    for a in 0..d {
        if theta[a] > 0.0 {
            t_exit = t_exit.min((upper[a] - x[a]) / theta[a]);
        } else if theta[a] < 0.0 {
            t_exit = t_exit.min((origin[a] - x[a]) / theta[a]);
        }
    }
    let t_exit = t_exit.max(0.0);
    let mut ts = vec![0.0];
    for a in 0..d {
        if theta[a] == 0.0 {
            continue;
        }
        let n = g.counts()[a];
        for j in 0..=n {
            let f = origin[a] + j as f64 * h;
            let t = (f - x[a]) / theta[a];
            if t > 0.0 && t < t_exit {
                ts.push(t);
            }
        }
    }
    ts.push(t_exit);
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mut segs: Vec<(f64, f64, f64)> = Vec::new();
    for w in ts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let m = 0.5 * (a + b);
        let p: Vec<f64> = (0..d).map(|i| x[i] + m * theta[i]).collect();
        let inside = g.locate(&p).map(|idx| e.contains(g.ravel(&idx))).unwrap_or(false);
        let s = if inside { -1.0 } else { 1.0 };
        match segs.last_mut() {
            Some(last) if last.2 == s => last.1 = b,
            _ => segs.push((a, b, s)),
        }
    }
    match segs.last_mut() {
        Some(last) if last.2 == 1.0 => last.1 = f64::INFINITY,
        _ => segs.push((t_exit, f64::INFINITY, 1.0)),
    }
    segs
}

/// Merges two segment lists into intervals with σ₊ + σ₋.
fn merge(a: &[(f64, f64, f64)], b: &[(f64, f64, f64)]) -> Vec<(f64, f64, f64)> {
    let mut cuts: Vec<f64> = a.iter().chain(b).flat_map(|s| [s.0, s.1]).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let val = |segs: &[(f64, f64, f64)], t: f64| segs.iter().find(|s| t > s.0 && t < s.1).map(|s| s.2).unwrap_or(1.0);
    let mut out: Vec<(f64, f64, f64)> = Vec::new();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let m = if hi.is_finite() { 0.5 * (lo + hi) } else { lo + 1.0 };
        let s = val(a, m) + val(b, m);
        match out.last_mut() {
            Some(last) if last.2 == s => last.1 = hi,
            _ => out.push((lo, hi, s)),
        }
    }
    out
}

fn ray_integral(k: &Kernel, theta: &[f64], segs: &[(f64, f64, f64)], eps: f64, li: &LineIntegrator) -> Integral {
    let d = theta.len() as i32;
    let ray = k.ray(theta);
    let breaks = k.ray_breaks(theta);
    let sing = k.ray_singular(theta);
    let f = |t: f64| {
        let v = ray.eval(t);
        if v == 0.0 {
            0.0
        } else {
            v * t.powi(d - 1)
        }
    };
    let mut total = Integral::zero();
    for &(a, b, s) in segs {
        if s == 0.0 || b <= eps {
            continue;
        }
        let lo = a.max(eps);
        let r = li.integrate(&f, lo, b, &breaks, &sing);
        total = total.add(r.scale(s));
    }
    total
}

/// Curvature iterates over the ε-schedule at the point `x`.
pub fn curvature(e: &GridSet, x: &[f64], k: &Kernel, schedule: &EpsSchedule) -> Result<CurvatureReport> {
    let g = e.grid();
    let d = g.dim();
    if k.dim() != d || x.len() != d {
        return Err(Error::Dimension("point, set and kernel must share the dimension".into()));
    }
    if !on_boundary(e, x) {
        return Err(Error::Precondition(format!("point {x:?} is not on the rasterized boundary")));
    }
    if !(schedule.eps0 > 0.0) {
        return Err(Error::Parameter("eps0 must be positive".into()));
    }
    let eps = schedule.values(g.h());
    let symmetric = k.is_symmetric();
    let dirs: Vec<(Vec<f64>, f64)> = match d {
        1 => {
            if symmetric {
                vec![(vec![1.0], 1.0)]
            } else {
                vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)]
            }
        }
        2 => {
            use std::f64::consts::PI;
            let span = if symmetric { PI } else { 2.0 * PI };
            let n = schedule.directions.max(8);
            (0..n)
                .map(|i| {
                    let t = (i as f64 + 0.5) * span / n as f64;
                    (vec![t.cos(), t.sin()], span / n as f64)
                })
                .collect()
        }
        _ => sphere_directions(d, 12, symmetric).into_iter().map(|q| (q.v, q.w)).collect(),
    };
    let li = LineIntegrator { rel_tol: 1e-9, ..LineIntegrator::default() };
    let segs: Vec<Vec<(f64, f64, f64)>> = dirs
        .par_iter()
        .map(|(theta, _)| {
            let plus = ray_segments(e, x, theta);
            if symmetric {
                let m: Vec<f64> = theta.iter().map(|v| -v).collect();
                merge(&plus, &ray_segments(e, x, &m))
            } else {
                plus
            }
        })
        .collect();
    let mut values = Vec::with_capacity(eps.len());
    for &ep in &eps {
        let parts: Vec<Integral> = dirs
            .par_iter()
            .zip(&segs)
            .map(|((theta, w), s)| ray_integral(k, theta, s, ep, &li).scale(*w))
            .collect();
        if parts.iter().any(|p| p.status == IntegralStatus::Divergent) {
            values.push(f64::NAN);
        } else {
            values.push(fsum(parts.iter().map(|p| p.value)));
        }
    }
    let n = values.len();
    let last = &values[n.saturating_sub(3)..];
    let value = values[n - 1];
    let spread = if last.iter().any(|v| !v.is_finite()) {
        f64::INFINITY
    } else {
        last.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - last.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let ok = spread <= schedule.rel_tol * value.abs() + schedule.abs_tol;
    Ok(CurvatureReport {
        point: x.to_vec(),
        eps,
        values,
        value,
        error: spread,
        converged: if ok { Verdict::Holds } else { Verdict::Inconclusive },
    })
}

/// Whether both E and its complement meet every neighbourhood of `x` at
/// cell scale.
pub fn on_boundary(e: &GridSet, x: &[f64]) -> bool {
    let g = e.grid();
    let d = g.dim();
    let q = 0.25 * g.h();
    let (mut inside, mut outside) = (false, false);
    for corner in 0..(1usize << d) {
        let p: Vec<f64> = (0..d).map(|a| x[a] + if corner >> a & 1 == 1 { q } else { -q }).collect();
        match g.locate(&p) {
            Some(idx) if e.contains(g.ravel(&idx)) => inside = true,
            _ => outside = true,
        }
    }
    inside && outside
}

/// Centers of the faces separating E from its complement, a convenient
/// supply of boundary points.
pub fn boundary_faces(e: &GridSet) -> Vec<Vec<f64>> {
    let g = e.grid();
    let d = g.dim();
    let h = g.h();
    let mut out = Vec::new();
    for i in e.indices() {
        let idx: Vec<i64> = g.unravel(i).into_iter().map(|c| c as i64).collect();
        let c = g.center(i);
        for a in 0..d {
            for s in [-1i64, 1] {
                let mut j = idx.clone();
                j[a] += s;
                let outside = g.ravel_signed(&j).map(|f| !e.contains(f)).unwrap_or(true);
                if outside {
                    let mut p = c.clone();
                    p[a] += 0.5 * h * s as f64;
                    out.push(p);
                }
            }
        }
    }
    out
}
