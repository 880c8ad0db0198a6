//! Cell-pair weights.
//!
//! For piecewise constant data on cells of side h, the double integral of
//! `f(x, y) K(x − y)` over a pair of cells separated by the integer shift k
//! reduces to `W_k = ∫ K(z) T(z − kh) dz`, where `T(w) = Π_a (h − |w_a|)₊` is
//! the overlap of two cells (∫T = h^{2d}). The table stores `W_k` for
//! `|k|_∞ ≤ L` and the mass `Σ_{|k|_∞ > L} W_k` of the remaining shifts.

use super::{NearFieldRule, QuadratureScheme};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::norm::Norm;
use crate::numeric::{fsum, gl_interval, sphere_directions, Integral, IntegralStatus, LineIntegrator};
use rayon::prelude::*;

#[derive(Clone, Debug)]
pub struct WeightTable {
    dim: usize,
    h: f64,
    half: usize,
    side: usize,
    weights: Vec<f64>,
    errors: Vec<f64>,
    tail: f64,
    tail_error: f64,
    /// Some weight could not be bounded by the scheme (flag propagated to
    /// reports as inconclusive).
    pub inconclusive: bool,
}

impl WeightTable {
    /// Builds the table for shifts `|k|_∞ ≤ half`.
    pub fn build(k: &Kernel, h: f64, half: usize, scheme: &QuadratureScheme) -> Result<WeightTable> {
        if !(h > 0.0) {
            return Err(Error::Parameter("grid spacing must be positive".into()));
        }
        if k.is_symmetrized() {
            let inner = k.inner().expect("symmetrized kernel has an inner kernel");
            let t = WeightTable::build(inner, h, half, scheme)?;
            return Ok(t.symmetrized());
        }
        let d = k.dim();
        let mut half = half;
        if let Some(r) = scheme.outer_radius {
            half = half.min((r / h).floor().max(1.0) as usize);
        }
        let support = k.support_radius();
        if support.is_finite() {
            // shifts whose tent support misses the kernel support carry no weight
            let needed = (support / h).ceil() as usize + 1;
            half = half.min(needed);
        }
        let side = 2 * half + 1;
        let total = side.pow(d as u32);
        let ctx = Ctx::new(k, h, scheme);
        let cells: Vec<(f64, f64, bool)> = (0..total)
            .into_par_iter()
            .map(|flat| {
                let kk = unflatten(flat, d, half);
                ctx.weight(&kk)
            })
            .collect();
        let mut weights = Vec::with_capacity(total);
        let mut errors = Vec::with_capacity(total);
        let mut inconclusive = false;
        for (w, e, flag) in cells {
            weights.push(w);
            errors.push(e);
            inconclusive |= flag;
        }
        let (tail, tail_error) = if scheme.tail_compensation && !(support.is_finite() && support <= half as f64 * h) {
            let t = ctx.tail(half);
            if t.status == IntegralStatus::Inconclusive {
                inconclusive = true;
            }
            (t.value, t.error)
        } else {
            (0.0, 0.0)
        };
        Ok(WeightTable { dim: d, h, half, side, weights, errors, tail, tail_error, inconclusive })
    }

    fn symmetrized(&self) -> WeightTable {
        let mut out = self.clone();
        let n = self.weights.len();
        for i in 0..n {
            let j = n - 1 - i; // index of −k
            out.weights[i] = 0.5 * (self.weights[i] + self.weights[j]);
            out.errors[i] = 0.5 * (self.errors[i] + self.errors[j]);
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    /// Largest tabulated shift L (per axis).
    pub fn half(&self) -> usize {
        self.half
    }
    /// Mass of the shifts outside the table.
    pub fn tail(&self) -> f64 {
        self.tail
    }
    pub fn tail_error(&self) -> f64 {
        self.tail_error
    }

    pub fn index(&self, k: &[i64]) -> Option<usize> {
        let l = self.half as i64;
        let mut acc = 0usize;
        for &c in k {
            if c < -l || c > l {
                return None;
            }
            acc = acc * self.side + (c + l) as usize;
        }
        Some(acc)
    }

    pub fn shift(&self, flat: usize) -> Vec<i64> {
        unflatten(flat, self.dim, self.half)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, k: &[i64]) -> f64 {
        self.index(k).map(|i| self.weights[i]).unwrap_or(0.0)
    }
    pub fn weight_at(&self, flat: usize) -> f64 {
        self.weights[flat]
    }
    pub fn error_at(&self, flat: usize) -> f64 {
        self.errors[flat]
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Flat index of the zero shift.
    pub fn zero_index(&self) -> usize {
        self.weights.len() / 2
    }

    /// Flat indices of the shifts in the half space `k ≻ 0`
    /// (first non-zero component positive), in shell-major then
    /// lexicographic order.
    pub fn half_space(&self) -> Vec<usize> {
        let z = self.zero_index();
        let mut v: Vec<usize> = (z + 1..self.weights.len()).collect();
        v.sort_by_key(|&i| {
            let k = self.shift(i);
            (k.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0), i)
        });
        v
    }

    /// `W_k + W_{−k}` and its error, for a flat index.
    pub fn pair(&self, flat: usize) -> (f64, f64) {
        let j = self.weights.len() - 1 - flat;
        (self.weights[flat] + self.weights[j], self.errors[flat] + self.errors[j])
    }

    /// Whether `|k|_∞ ≤ 1`.
    pub fn is_near(&self, flat: usize) -> bool {
        self.shift(flat).iter().all(|c| c.abs() <= 1)
    }

    /// `Σ_{k ≠ 0} W_k + tail`: the total interaction mass of one cell.
    pub fn total_mass(&self) -> f64 {
        let z = self.zero_index();
        fsum(self.weights.iter().enumerate().filter(|(i, _)| *i != z).map(|(_, w)| *w).chain(std::iter::once(self.tail)))
    }
}

fn unflatten(mut flat: usize, d: usize, half: usize) -> Vec<i64> {
    let side = 2 * half + 1;
    let mut k = vec![0i64; d];
    for a in (0..d).rev() {
        k[a] = (flat % side) as i64 - half as i64;
        flat /= side;
    }
    k
}

struct Ctx<'a> {
    k: &'a Kernel,
    h: f64,
    d: usize,
    rule: NearFieldRule,
    li: LineIntegrator,
    /// Radii (in |·|_* and in |·|₂) where the kernel jumps or kinks.
    star_breaks: Vec<f64>,
    euc_breaks: Vec<f64>,
}

impl<'a> Ctx<'a> {
    fn new(k: &'a Kernel, h: f64, scheme: &QuadratureScheme) -> Ctx<'a> {
        let (star_breaks, euc_breaks) = k.break_radii();
        Ctx {
            k,
            h,
            d: k.dim(),
            rule: scheme.near_field,
            li: LineIntegrator { rel_tol: 1e-10, ..LineIntegrator::default() },
            star_breaks,
            euc_breaks,
        }
    }

    /// (W_k, error, inconclusive flag).
    fn weight(&self, kk: &[i64]) -> (f64, f64, bool) {
        let h2d = self.h.powi(2 * self.d as i32);
        let is_zero = kk.iter().all(|c| *c == 0);
        let center: Vec<f64> = kk.iter().map(|c| *c as f64 * self.h).collect();
        if self.rule == NearFieldRule::ExcludeDiagonalCell {
            if is_zero {
                let v = self.k.eval(&center);
                return if v.is_finite() { (v * h2d, 0.0, false) } else { (0.0, 0.0, true) };
            }
            let v = self.k.eval(&center);
            let near = kk.iter().all(|c| c.abs() <= 1);
            let sing_near = near && self.k.singular_at_origin();
            return (v * h2d, self.point_error(kk, v * h2d), sing_near || !v.is_finite());
        }
        if is_zero && self.k.singular_at_origin() {
            return (f64::INFINITY, 0.0, false);
        }
        if self.d == 1 {
            return self.exact_1d(kk[0]);
        }
        let near = kk.iter().all(|c| c.abs() <= 1);
        if near {
            let r = self.polar_near(kk);
            return (r.value, r.error, r.status == IntegralStatus::Inconclusive);
        }
        let linf = kk.iter().map(|c| c.unsigned_abs()).max().unwrap();
        let straddles = self.straddles(&center);
        if linf <= 6 || straddles {
            let m = if straddles { 8 } else { 2 };
            let fine = self.tensor(&center, m);
            let coarse = self.tensor(&center, m / 2);
            return (fine, (fine - coarse).abs(), false);
        }
        let v = self.k.eval(&center) * h2d;
        (v, self.point_error(kk, v), !v.is_finite())
    }

    /// Heuristic error of the point rule for power-law like kernels.
    fn point_error(&self, kk: &[i64], v: f64) -> f64 {
        let r2: f64 = kk.iter().map(|c| (*c as f64).powi(2)).sum();
        let d = self.d as f64;
        v.abs() * (d + 1.0) * (d + 3.0) / (24.0 * r2.max(1.0))
    }

    fn exact_1d(&self, k: i64) -> (f64, f64, bool) {
        let h = self.h;
        let c = k as f64 * h;
        let f = |z: f64| {
            let t = tent(z, k, h);
            if t <= 0.0 {
                return 0.0;
            }
            let kv = self.k.eval(&[z]);
            if kv == 0.0 {
                0.0
            } else {
                kv * t
            }
        };
        let (a, b) = (c - h, c + h);
        let mut breaks = vec![c];
        for z in self.k.ray_breaks(&[1.0]) {
            breaks.push(z);
        }
        for z in self.k.ray_breaks(&[-1.0]) {
            breaks.push(-z);
        }
        let mut singular = Vec::new();
        if self.k.singular_at_origin() {
            singular.push(0.0);
        }
        for t in self.k.ray_singular(&[1.0]) {
            singular.push(t);
        }
        for t in self.k.ray_singular(&[-1.0]) {
            singular.push(-t);
        }
        let r = if singular.contains(&a) || singular.contains(&b) || singular.iter().any(|s| *s > a && *s < b) {
            // split at singular points so they become interval ends
            self.li.integrate(&f, a, b, &breaks, &singular)
        } else {
            let mut pts = vec![a, b];
            pts.extend(breaks.iter().filter(|x| **x > a && **x < b));
            self.li.integrate(&f, a, b, &pts, &[])
        };
        match r.status {
            IntegralStatus::Divergent => (f64::INFINITY, 0.0, false),
            IntegralStatus::Inconclusive => (r.value, r.error, true),
            IntegralStatus::Converged => (r.value, r.error, false),
        }
    }

    /// Whether the tent support around `center` meets a break radius.
    fn straddles(&self, center: &[f64]) -> bool {
        if self.star_breaks.is_empty() && self.euc_breaks.is_empty() {
            return false;
        }
        let h = self.h;
        let near: Vec<f64> = center.iter().map(|c| (c.abs() - h).max(0.0)).collect();
        let far: Vec<f64> = center.iter().map(|c| c.abs() + h).collect();
        let norm = self.k.norm();
        let (lo_s, hi_s) = (norm.eval(&near), norm.eval(&far));
        let (lo_e, hi_e) = (Norm::Euclidean.eval(&near), Norm::Euclidean.eval(&far));
        self.star_breaks.iter().any(|r| *r >= lo_s && *r <= hi_s) || self.euc_breaks.iter().any(|r| *r >= lo_e && *r <= hi_e)
    }

    /// Tensor Gauss–Legendre rule with m panels per half-axis.
    fn tensor(&self, center: &[f64], m: usize) -> f64 {
        let h = self.h;
        let mut nodes = Vec::new();
        for j in 0..m {
            let a = -h + j as f64 * h / m as f64;
            gl_interval(4, a, a + h / m as f64, &mut nodes);
            gl_interval(4, -a - h / m as f64, -a, &mut nodes);
        }
        let axis: Vec<(f64, f64)> = nodes.iter().map(|(x, w)| (*x, w * (h - x.abs()))).collect();
        let n = axis.len();
        let d = self.d;
        let total = n.pow(d as u32);
        let mut z = vec![0.0; d];
        let mut terms = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut w = 1.0;
            for a in (0..d).rev() {
                let (x, wx) = axis[rem % n];
                rem /= n;
                z[a] = center[a] + x;
                w *= wx;
            }
            let kv = self.k.eval(&z);
            if kv != 0.0 {
                terms.push(kv * w);
            }
        }
        fsum(terms)
    }

    /// Polar integration around the origin for `|k|_∞ ≤ 1` (d ≥ 2).
    fn polar_near(&self, kk: &[i64]) -> Integral {
        let h = self.h;
        let d = self.d;
        let dirs = near_directions(d);
        let singular0 = self.k.singular_at_origin();
        let parts: Vec<Integral> = dirs
            .iter()
            .map(|(theta, w)| {
                let mut tmax = f64::INFINITY;
                for a in 0..d {
                    let c = kk[a] as f64 * h;
                    if theta[a] > 0.0 {
                        tmax = tmax.min((c + h) / theta[a]);
                    } else if theta[a] < 0.0 {
                        tmax = tmax.min((c - h) / theta[a]);
                    } else if c.abs() >= h {
                        tmax = 0.0;
                    }
                }
                if !(tmax > 0.0) {
                    return Integral::zero();
                }
                let mut breaks: Vec<f64> = (0..d)
                    .filter(|&a| theta[a] != 0.0)
                    .map(|a| kk[a] as f64 * h / theta[a])
                    .filter(|t| *t > 0.0 && *t < tmax)
                    .collect();
                breaks.extend(self.k.ray_breaks(theta).into_iter().filter(|t| *t < tmax));
                let ray = self.k.ray(theta);
                let f = |t: f64| {
                    if t <= 0.0 {
                        return 0.0;
                    }
                    let mut tw = 1.0;
                    for a in 0..d {
                        tw *= tent(t * theta[a], kk[a], h);
                    }
                    if tw == 0.0 {
                        return 0.0;
                    }
                    let kv = ray.eval(t);
                    if kv == 0.0 {
                        0.0
                    } else {
                        kv * tw * t.powi(d as i32 - 1)
                    }
                };
                let sing: Vec<f64> = if singular0 { vec![0.0] } else { vec![] };
                self.li.integrate(&f, 0.0, tmax, &breaks, &sing).scale(*w)
            })
            .collect();
        combine(parts)
    }

    /// `Σ_{|k|_∞ > L} W_k = ∫ K(z) (h^d − Π_a s(z_a)) dz` with
    /// `s(x) = clamp((L+1)h − |x|, 0, h)`.
    fn tail(&self, half: usize) -> Integral {
        let h = self.h;
        let d = self.d;
        let lh = half as f64 * h;
        let l1 = lh + h;
        let s = |x: f64| ((l1 - x.abs()).min(h)).max(0.0);
        if d == 1 {
            let mut total = Integral::zero();
            for sgn in [1.0, -1.0] {
                let theta = [sgn];
                let ray = self.k.ray(&theta);
                let f = |t: f64| {
                    let w = h - s(t);
                    if w == 0.0 {
                        0.0
                    } else {
                        ray.eval(t) * w
                    }
                };
                let mut breaks = self.k.ray_breaks(&theta);
                breaks.push(l1);
                let sing = self.k.ray_singular(&theta);
                total = total.add(self.li.integrate(&f, lh, f64::INFINITY, &breaks, &sing));
            }
            return total;
        }
        let hd = h.powi(d as i32);
        let dirs = tail_directions(d, half);
        let parts: Vec<Integral> = dirs
            .par_iter()
            .map(|(theta, w)| {
                let m = theta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let a = lh / m;
                let ray = self.k.ray(theta);
                let f = |t: f64| {
                    let mut p = 1.0;
                    for x in theta {
                        p *= s(t * x);
                    }
                    let wv = hd - p;
                    if wv <= 0.0 {
                        return 0.0;
                    }
                    let kv = ray.eval(t);
                    if kv == 0.0 {
                        0.0
                    } else {
                        kv * wv * t.powi(d as i32 - 1)
                    }
                };
                let mut breaks: Vec<f64> = theta
                    .iter()
                    .filter(|x| **x != 0.0)
                    .flat_map(|x| [lh / x.abs(), l1 / x.abs()])
                    .filter(|t| *t > a)
                    .collect();
                breaks.extend(self.k.ray_breaks(theta));
                let sing = self.k.ray_singular(theta);
                self.li.integrate(&f, a, f64::INFINITY, &breaks, &sing).scale(*w)
            })
            .collect();
        let mut r = combine(parts);
        // angular quadrature error is not part of the radial estimates
        r.error += 1e-8 * r.value.abs();
        r
    }
}

fn combine(parts: Vec<Integral>) -> Integral {
    if parts.iter().any(|p| p.status == IntegralStatus::Divergent) {
        return Integral::divergent();
    }
    let status = if parts.iter().any(|p| p.status == IntegralStatus::Inconclusive) {
        IntegralStatus::Inconclusive
    } else {
        IntegralStatus::Converged
    };
    Integral { value: fsum(parts.iter().map(|p| p.value)), error: fsum(parts.iter().map(|p| p.error)), status }
}

/// Angular panels split at the directions of the lattice points with
/// coordinates in {−2, …, 2}, where the tent products have kinks.
/// `(h − |x − kh|)₊`, written so that no cancellation occurs near the cell
/// corner `x = 0` when `|k| = 1`.
fn tent(x: f64, k: i64, h: f64) -> f64 {
    let c = k as f64 * h;
    let v = if x < c { (h - c) + x } else { (h + c) - x };
    v.max(0.0)
}

fn near_directions(d: usize) -> Vec<(Vec<f64>, f64)> {
    if d == 2 {
        let mut angles: Vec<f64> = Vec::new();
        for i in -2i32..=2 {
            for j in -2i32..=2 {
                if i != 0 || j != 0 {
                    angles.push((j as f64).atan2(i as f64));
                }
            }
        }
        return arcs(angles, 12);
    }
    sphere_directions(d, 12, false).into_iter().map(|x| (x.v, x.w)).collect()
}

fn tail_directions(d: usize, half: usize) -> Vec<(Vec<f64>, f64)> {
    if d == 2 {
        let (a, b) = (half as f64, half as f64 + 1.0);
        let mut angles: Vec<f64> = (0..8).map(|k| k as f64 * std::f64::consts::FRAC_PI_4).collect();
        for (x, y) in [(a, b), (b, a)] {
            for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
                angles.push((sy * y).atan2(sx * x));
            }
        }
        return arcs(angles, 16);
    }
    sphere_directions(d, 8, false).into_iter().map(|x| (x.v, x.w)).collect()
}

fn arcs(mut angles: Vec<f64>, n: usize) -> Vec<(Vec<f64>, f64)> {
    use std::f64::consts::PI;
    for a in angles.iter_mut() {
        if *a < 0.0 {
            *a += 2.0 * PI;
        }
    }
    angles.push(0.0);
    angles.push(2.0 * PI);
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let mut nodes = Vec::new();
    for w in angles.windows(2) {
        gl_interval(n, w[0], w[1], &mut nodes);
    }
    nodes.into_iter().map(|(t, w)| (vec![t.cos(), t.sin()], w)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{kernel_integral, KernelFamily, Region, Truncation, Weight};
    use approx::assert_relative_eq;

    fn scheme() -> QuadratureScheme {
        QuadratureScheme::default()
    }

    #[test]
    fn indicator_weights_1d_exact() {
        // K = χ(−1,1), h = 1/4: W_k = h² for |k| ≤ 3, W_4 = h²/2
        let k = Kernel::indicator(1, 1.0).unwrap();
        let t = WeightTable::build(&k, 0.25, 10, &scheme()).unwrap();
        assert_relative_eq!(t.weight(&[0]), 0.0625, max_relative = 1e-13);
        assert_relative_eq!(t.weight(&[3]), 0.0625, max_relative = 1e-13);
        assert_relative_eq!(t.weight(&[-4]), 0.03125, max_relative = 1e-13);
        assert_eq!(t.weight(&[5]), 0.0);
        assert_eq!(t.tail(), 0.0);
    }

    #[test]
    fn partition_of_mass_1d() {
        // Σ_k W_k = h ‖K‖₁ for an integrable kernel
        let k = Kernel::fractional(1, 0.5, 1.0).unwrap().truncate(Truncation::Cap(5.0)).unwrap();
        let h = 0.05;
        let t = WeightTable::build(&k, h, 40, &scheme()).unwrap();
        let total = t.total_mass() + t.weight(&[0]);
        let l1 = kernel_integral(&k, Region::All, Weight::One).unwrap().value;
        assert_relative_eq!(total, h * l1, max_relative = 1e-8);
    }

    #[test]
    fn partition_of_mass_2d() {
        let k = Kernel::new(2, KernelFamily::Gaussian { sigma: 0.3, amplitude: 1.0 }, Norm::Euclidean).unwrap();
        let h = 0.1;
        let t = WeightTable::build(&k, h, 5, &scheme()).unwrap();
        let total = t.total_mass() + t.weight(&[0, 0]);
        let l1 = 2.0 * std::f64::consts::PI * 0.09;
        assert_relative_eq!(total, h * h * l1, max_relative = 1e-6);
    }

    #[test]
    fn fractional_near_weights_2d_match_tensor_far() {
        let k = Kernel::fractional(2, 0.5, 1.0).unwrap();
        let t = WeightTable::build(&k, 0.1, 8, &scheme()).unwrap();
        // far weights approach the point rule
        let w = t.weight(&[8, 3]);
        let p = k.eval(&[0.8, 0.3]) * 1e-4;
        assert_relative_eq!(w, p, max_relative = 0.01);
        // symmetry of a symmetric kernel
        assert_relative_eq!(t.weight(&[1, 0]), t.weight(&[0, -1]), max_relative = 1e-8);
        assert_relative_eq!(t.weight(&[1, 1]), t.weight(&[-1, 1]), max_relative = 1e-8);
        assert!(t.weight(&[0, 0]).is_infinite());
        assert!(t.weight(&[1, 0]) > t.weight(&[1, 1]));
    }

    #[test]
    fn symmetrized_table_is_average() {
        let k = Kernel::new(1, KernelFamily::OneSidedExp { rate: 2.0 }, Norm::Euclidean).unwrap();
        let t = WeightTable::build(&k, 0.1, 20, &scheme()).unwrap();
        let s = WeightTable::build(&k.symmetrize(), 0.1, 20, &scheme()).unwrap();
        for c in -20..=20i64 {
            assert_eq!(s.weight(&[c]), 0.5 * (t.weight(&[c]) + t.weight(&[-c])));
        }
        let (p, _) = t.pair(t.index(&[3]).unwrap());
        let (q, _) = s.pair(s.index(&[3]).unwrap());
        assert_eq!(p, q);
    }

    #[test]
    fn tail_of_fractional_1d() {
        // Σ_{|k|>L} W_k ≈ h·2∫_{(L+½)h}^∞ z^{−1.5} dz
        let k = Kernel::fractional(1, 0.5, 1.0).unwrap();
        let h = 0.01;
        let t = WeightTable::build(&k, h, 100, &scheme()).unwrap();
        let approx = h * 4.0 / (100.5f64 * h).sqrt();
        assert_relative_eq!(t.tail(), approx, max_relative = 1e-4);
    }
}
