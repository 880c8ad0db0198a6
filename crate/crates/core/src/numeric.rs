//! Quadrature and summation primitives.
//!
//! * [`fsum`]: exact (correctly rounded) floating point summation.
//! * [`gk_adaptive`]: globally adaptive Gauss–Kronrod (7/15) on finite intervals.
//! * [`LineIntegrator`]: integrals over intervals with integrable (or not)
//!   endpoint singularities and infinite ranges, using geometric shells and
//!   the divergence escalation rule.
//! * [`gauss_legendre`] and [`sphere_directions`]: angular quadrature.

use serde::Serialize;
use statrs::function::gamma::gamma;
use std::collections::BinaryHeap;

/// Exact sum of a sequence of floats, rounded once (Shewchuk partials).
///
/// Non-finite inputs propagate (`inf + -inf` gives NaN).
pub fn fsum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    let mut special = 0.0f64;
    let mut has_special = false;
    for mut x in values {
        if !x.is_finite() {
            special += x;
            has_special = true;
            continue;
        }
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    if has_special {
        return special;
    }
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    // half-even correction, as in CPython's math.fsum
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// Value with an absolute error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One 15-point Kronrod panel with the embedded 7-point Gauss error estimate.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Quad {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let x = hl * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    let value = rk * hl;
    let mut error = ((rk - rg) * hl).abs();
    if !value.is_finite() {
        error = f64::INFINITY;
    }
    Quad { value, error }
}

struct Panel {
    a: f64,
    b: f64,
    q: Quad,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.q.error == other.q.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.q.error.total_cmp(&other.q.error)
    }
}

/// Globally adaptive Gauss–Kronrod quadrature on a finite interval.
///
/// Bisects the panel with the largest error until the summed error is below
/// `max(abs_tol, rel_tol·|I|)` or `max_panels` is reached.
pub fn gk_adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Quad {
    if a == b {
        return Quad { value: 0.0, error: 0.0 };
    }
    let q = gk15(f, a, b);
    if !q.value.is_finite() {
        return q;
    }
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, q });
    let mut total = q.value;
    let mut err = q.error;
    let mut count = 1;
    while err > abs_tol.max(rel_tol * total.abs()) && count < max_panels {
        let p = heap.pop().expect("heap is never empty");
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            heap.push(p);
            break;
        }
        let l = gk15(f, p.a, m);
        let r = gk15(f, m, p.b);
        if !l.value.is_finite() || !r.value.is_finite() {
            return Quad { value: f64::INFINITY, error: f64::INFINITY };
        }
        total += l.value + r.value - p.q.value;
        err += l.error + r.error - p.q.error;
        heap.push(Panel { a: p.a, b: m, q: l });
        heap.push(Panel { a: m, b: p.b, q: r });
        count += 1;
    }
    let panels = heap.into_vec();
    let value = fsum(panels.iter().map(|p| p.q.value));
    let error = fsum(panels.iter().map(|p| p.q.error)).max(0.0);
    Quad { value, error }
}

/// Outcome class of an integral that may diverge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegralStatus {
    Converged,
    Divergent,
    Inconclusive,
}

/// Result of a possibly divergent integral. Divergent integrals carry
/// `value = +∞`; inconclusive ones carry the last partial value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub status: IntegralStatus,
}

impl Integral {
    pub fn zero() -> Self {
        Integral { value: 0.0, error: 0.0, status: IntegralStatus::Converged }
    }

    pub fn divergent() -> Self {
        Integral { value: f64::INFINITY, error: 0.0, status: IntegralStatus::Divergent }
    }

    pub fn converged(q: Quad) -> Self {
        Integral { value: q.value, error: q.error, status: IntegralStatus::Converged }
    }

    /// Sum of two integrals; divergence dominates, then inconclusiveness.
    pub fn add(self, other: Integral) -> Integral {
        use IntegralStatus::*;
        let status = match (self.status, other.status) {
            (Divergent, _) | (_, Divergent) => Divergent,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Converged,
        };
        if status == Divergent {
            return Integral::divergent();
        }
        Integral { value: self.value + other.value, error: self.error + other.error, status }
    }

    pub fn scale(self, w: f64) -> Integral {
        if self.status == IntegralStatus::Divergent {
            return self;
        }
        Integral { value: self.value * w, error: self.error * w.abs(), status: self.status }
    }

    pub fn is_finite(&self) -> bool {
        self.status != IntegralStatus::Divergent && self.value.is_finite()
    }
}

/// Integrator for line integrals with singular endpoints and infinite ranges.
#[derive(Clone, Debug)]
pub struct LineIntegrator {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Growth factor of the divergence escalation rule.
    pub growth: f64,
    pub max_shells: usize,
    pub max_panels: usize,
}

impl Default for LineIntegrator {
    fn default() -> Self {
        LineIntegrator {
            abs_tol: 1e-300,
            rel_tol: 1e-11,
            growth: 1.5,
            max_shells: 1024,
            max_panels: 400,
        }
    }
}

impl LineIntegrator {
    fn finite<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> Quad {
        gk_adaptive(f, a, b, self.abs_tol, self.rel_tol * 0.1, self.max_panels)
    }

    /// Accumulates shell contributions until they become negligible, or the
    /// escalation rule declares divergence.
    fn shells<S: FnMut(usize) -> Option<Quad>>(&self, mut shell: S) -> Integral {
        let mut contrib: Vec<f64> = Vec::new();
        let mut partial: Vec<f64> = Vec::new();
        let mut err = 0.0;
        let mut sum = 0.0;
        for j in 0..self.max_shells {
            let q = match shell(j) {
                Some(q) => q,
                None => {
                    // shells no longer resolvable in floating point: decide
                    // from the available history
                    let n = contrib.len();
                    if n >= 16 {
                        let m = n / 4;
                        let (s1, s2, s4) = (partial[m - 1], partial[2 * m - 1], partial[n - 1]);
                        if s1 > 0.0 && s2 > self.growth * s1 && s4 > self.growth * s2 {
                            return Integral::divergent();
                        }
                        let tail = &contrib[n - 4..];
                        let q = (tail[3] / tail[2]).abs();
                        let decaying = tail.windows(2).all(|w| w[1].abs() <= w[0].abs());
                        if decaying && q < 0.95 {
                            let rem = tail[3] * q / (1.0 - q);
                            return Integral {
                                value: sum + rem,
                                error: err + rem.abs() * 2.0,
                                status: IntegralStatus::Converged,
                            };
                        }
                    }
                    return Integral { value: sum, error: err, status: IntegralStatus::Inconclusive };
                }
            };
            if !q.value.is_finite() {
                return Integral::divergent();
            }
            sum += q.value;
            err += q.error;
            contrib.push(q.value);
            partial.push(sum.abs());
            let n = contrib.len();
            if n >= 4 {
                let small = |c: f64| c.abs() <= self.abs_tol.max(self.rel_tol * sum.abs());
                if small(contrib[n - 1]) && small(contrib[n - 2]) && small(contrib[n - 3]) {
                    let (c1, c0) = (contrib[n - 1], contrib[n - 2]);
                    let mut rem = 0.0;
                    if c0 != 0.0 {
                        let ratio = (c1 / c0).abs();
                        if ratio < 1.0 {
                            rem = c1 * ratio / (1.0 - ratio);
                        }
                    }
                    return Integral {
                        value: sum + rem,
                        error: err + rem.abs() + c1.abs(),
                        status: IntegralStatus::Converged,
                    };
                }
            }
            // escalation: partial sums at n, 2n, 4n shells
            let mut m = 16;
            while 4 * m <= n {
                if 4 * m == n {
                    let (s1, s2, s4) = (partial[m - 1], partial[2 * m - 1], partial[4 * m - 1]);
                    if s1 > 0.0 && s2 > self.growth * s1 && s4 > self.growth * s2 {
                        return Integral::divergent();
                    }
                }
                m *= 2;
            }
        }
        Integral { value: sum, error: err, status: IntegralStatus::Inconclusive }
    }

    /// ∫_a^b f with a (possible) singularity at `a` (`toward_a`) or at `b`.
    pub fn singular_end<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64, toward_a: bool) -> Integral {
        let w = b - a;
        if w <= 0.0 {
            return Integral::zero();
        }
        self.shells(|j| {
            let outer = w * 0.5f64.powi(j as i32);
            let inner = outer * 0.5;
            let (lo, hi) = if toward_a {
                (a + inner, a + outer)
            } else {
                (b - outer, b - inner)
            };
            if !(lo < hi) || (toward_a && lo <= a) || (!toward_a && hi >= b) {
                return None;
            }
            Some(self.finite(f, lo, hi))
        })
    }

    /// ∫_a^∞ f for a > 0.
    pub fn to_infinity<F: Fn(f64) -> f64>(&self, f: &F, a: f64) -> Integral {
        let a = if a > 0.0 { a } else { 1.0 };
        self.shells(|j| {
            let lo = a * 2f64.powi(j as i32);
            let hi = lo * 2.0;
            if !hi.is_finite() {
                return None;
            }
            Some(self.finite(f, lo, hi))
        })
    }

    /// ∫_a^b f where `b` may be `+∞`, splitting at `breaks` and treating the
    /// points of `singular` as possible singularities.
    pub fn integrate<F: Fn(f64) -> f64>(
        &self,
        f: &F,
        a: f64,
        b: f64,
        breaks: &[f64],
        singular: &[f64],
    ) -> Integral {
        if !(b > a) {
            return Integral::zero();
        }
        let mut pts: Vec<f64> = vec![a];
        for &x in breaks.iter().chain(singular.iter()) {
            if x > a && x < b && x.is_finite() {
                pts.push(x);
            }
        }
        let infinite = b.is_infinite();
        if !infinite {
            pts.push(b);
        } else if pts.len() == 1 && (a <= 0.0 || singular.contains(&a)) {
            // need a finite split point before the infinite tail
            pts.push(a + a.abs().max(1.0));
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let is_sing = |x: f64| singular.iter().any(|&s| s == x);
        let mut total = Integral::zero();
        for w in pts.windows(2) {
            let (p, q) = (w[0], w[1]);
            let piece = match (is_sing(p), is_sing(q)) {
                (false, false) => Integral::converged(self.finite(f, p, q)),
                (true, false) => self.singular_end(f, p, q, true),
                (false, true) => self.singular_end(f, p, q, false),
                (true, true) => {
                    let m = 0.5 * (p + q);
                    self.singular_end(f, p, m, true).add(self.singular_end(f, m, q, false))
                }
            };
            total = total.add(piece);
            if total.status == IntegralStatus::Divergent {
                return total;
            }
        }
        if infinite {
            let last = *pts.last().unwrap();
            total = total.add(self.to_infinity(f, last));
        }
        total
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to [a, b], appended to `out`.
pub fn gl_interval(n: usize, a: f64, b: f64, out: &mut Vec<(f64, f64)>) {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    for i in 0..n {
        out.push((c + hl * x[i], hl * w[i]));
    }
}

/// Quadrature direction on the unit sphere.
#[derive(Clone, Debug)]
pub struct Direction {
    pub v: Vec<f64>,
    pub w: f64,
}

/// Surface measure of the unit sphere S^{d−1}.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / gamma(h)
}

/// Volume of the unit ball in R^d.
pub fn ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    std::f64::consts::PI.powf(h) / gamma(h + 1.0)
}

/// Product quadrature on S^{d−1} for d ≤ 3, with sub-arcs split at multiples
/// of π/4 so that kinks of ℓ_p and weighted norms fall on panel edges.
///
/// With `half = true` only one direction of every antipodal pair is returned
/// (the weights still integrate over the half sphere).
pub fn sphere_directions(d: usize, n: usize, half: bool) -> Vec<Direction> {
    use std::f64::consts::PI;
    match d {
        1 => {
            let mut v = vec![Direction { v: vec![1.0], w: 1.0 }];
            if !half {
                v.push(Direction { v: vec![-1.0], w: 1.0 });
            }
            v
        }
        2 => {
            let arcs = if half { 4 } else { 8 };
            let mut nodes = Vec::new();
            for k in 0..arcs {
                gl_interval(n, k as f64 * PI / 4.0, (k + 1) as f64 * PI / 4.0, &mut nodes);
            }
            nodes
                .into_iter()
                .map(|(t, w)| Direction { v: vec![t.cos(), t.sin()], w })
                .collect()
        }
        3 => {
            let mut mus = Vec::new();
            if !half {
                gl_interval(n, -1.0, 0.0, &mut mus);
            }
            gl_interval(n, 0.0, 1.0, &mut mus);
            let mut phis = Vec::new();
            for k in 0..8 {
                gl_interval(n, k as f64 * PI / 4.0, (k + 1) as f64 * PI / 4.0, &mut phis);
            }
            let mut out = Vec::with_capacity(mus.len() * phis.len());
            for &(mu, wm) in &mus {
                let s = (1.0 - mu * mu).max(0.0).sqrt();
                for &(phi, wp) in &phis {
                    out.push(Direction { v: vec![s * phi.cos(), s * phi.sin(), mu], w: wm * wp });
                }
            }
            out
        }
        _ => panic!("sphere quadrature implemented for d ≤ 3"),
    }
}
