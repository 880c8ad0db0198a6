//! Kernels K: R^d → [0, +∞] and their transforms.
//!
//! A [`Kernel`] is a zoo family evaluated through a norm |·|_* (radial
//! families use `κ(|z|_*)`), optionally wrapped by symmetrization or a
//! truncation. Truncation radii are euclidean.

mod certify;
mod integral;
mod spec;

pub use certify::{certify, CertificateReport, Hypothesis, SamplingConfig, Witness};
pub use integral::{kernel_integral, Region, Weight};
pub use spec::KernelSpec;

use crate::error::{param, Error, Result};
use crate::norm::Norm;
use serde::Serialize;

/// Zoo of kernel families.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `scale·|z|_*^{−d−sp}`.
    Fractional { s: f64, p: f64, scale: f64 },
    /// `α_k |z|_*^{−d−s_k p}` on `R_{k−1} < |z|_* ≤ R_k`; `radii` holds
    /// `R_1 < … < R_{M−1}` and the last piece extends to infinity.
    PiecewiseFractional { alphas: Vec<f64>, radii: Vec<f64>, s: Vec<f64>, p: f64 },
    /// `(1 − log|z|_*)^{−α} |z|_*^{−d−s}` for `|z|_* ≤ 1`, zero beyond.
    LogFractional { s: f64, alpha: f64 },
    /// Radial profile `β t^{−d−s}` on (0,1], `α sin(2πt) + β` on (1,M],
    /// `β (t−M+1)^{−d−s}` beyond.
    Oscillating { s: f64, alpha: f64, beta: f64, m: u32 },
    /// `|z|_*^{−d} (−log|z|_*)^{γ−1}` for `|z|_* < 1/3`, zero beyond.
    LogGamma { gamma: f64 },
    /// Indicator of the open `|·|_*` ball of the given radius.
    Indicator { radius: f64 },
    /// `scale·|z|_*^{−a}`; fails integrability at infinity when `a ≤ d`.
    Power { exponent: f64, scale: f64 },
    /// `amplitude·exp(−|z|_*²/(2σ²))`.
    Gaussian { sigma: f64, amplitude: f64 },
    /// One-dimensional, non-symmetric: `exp(−rate·z)` for z > 0, zero otherwise.
    OneSidedExp { rate: f64 },
    /// One-dimensional: `Σ_± |z ∓ offset|^{−a}` restricted to `|z ∓ offset| < reach`;
    /// singular away from the origin.
    OffsetSingular { offset: f64, exponent: f64, reach: f64 },
    /// Radial profile from samples (non-increasing), piecewise linear between
    /// radii, with power-law continuation `(t/r_0)^{−head}` below the first
    /// radius and `(t/r_n)^{−tail}` above the last (`tail = +∞` means zero).
    Tabulated { radii: Vec<f64>, values: Vec<f64>, head_exponent: f64, tail_exponent: f64 },
}

/// Truncations of a kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum Truncation {
    /// `χ_{B_δ^c} K`.
    OutsideBall(f64),
    /// `min{k, K}`.
    Cap(f64),
    /// `χ_{B_ε^c} K` as used by the curvature approximation; same formula as
    /// [`Truncation::OutsideBall`].
    ExcludeBall(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "node", rename_all = "snake_case")]
enum Node {
    Base { family: KernelFamily },
    Symmetrized { inner: Box<Kernel> },
    Truncated { inner: Box<Kernel>, truncation: Truncation },
}

/// Where a kernel may be infinite or locally non-integrable.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularSet {
    None,
    Origin,
    Points(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Kernel {
    dim: usize,
    norm: Norm,
    node: Node,
}

impl KernelFamily {
    fn is_radial(&self) -> bool {
        !matches!(self, KernelFamily::OneSidedExp { .. } | KernelFamily::OffsetSingular { .. })
    }

    /// Radial profile κ(t) at norm radius t (radial families only).
    fn profile(&self, t: f64, d: f64) -> f64 {
        use KernelFamily::*;
        match self {
            Fractional { s, p, scale } => scale * t.powf(-d - s * p),
            PiecewiseFractional { alphas, radii, s, p } => {
                let k = radii.iter().position(|&r| t <= r).unwrap_or(radii.len());
                if alphas[k] == 0.0 {
                    return 0.0;
                }
                alphas[k] * t.powf(-d - s[k] * p)
            }
            LogFractional { s, alpha } => {
                if t > 1.0 {
                    0.0
                } else if t == 0.0 {
                    f64::INFINITY
                } else {
                    (1.0 - t.ln()).powf(-alpha) * t.powf(-d - s)
                }
            }
            Oscillating { s, alpha, beta, m } => {
                let m = *m as f64;
                if t <= 1.0 {
                    beta * t.powf(-d - s)
                } else if t <= m {
                    alpha * (2.0 * std::f64::consts::PI * t).sin() + beta
                } else {
                    beta * (t - m + 1.0).powf(-d - s)
                }
            }
            LogGamma { gamma } => {
                if t >= 1.0 / 3.0 {
                    0.0
                } else if t == 0.0 {
                    f64::INFINITY
                } else {
                    t.powf(-d) * (-t.ln()).powf(gamma - 1.0)
                }
            }
            Indicator { radius } => {
                if t < *radius {
                    1.0
                } else {
                    0.0
                }
            }
            Power { exponent, scale } => scale * t.powf(-exponent),
            Gaussian { sigma, amplitude } => amplitude * (-t * t / (2.0 * sigma * sigma)).exp(),
            Tabulated { radii, values, head_exponent, tail_exponent } => {
                let n = radii.len();
                if t < radii[0] {
                    if *head_exponent == 0.0 {
                        values[0]
                    } else {
                        values[0] * (t / radii[0]).powf(-head_exponent)
                    }
                } else if t > radii[n - 1] {
                    if tail_exponent.is_infinite() {
                        0.0
                    } else {
                        values[n - 1] * (t / radii[n - 1]).powf(-tail_exponent)
                    }
                } else {
                    let i = radii.partition_point(|&r| r <= t).clamp(1, n - 1);
                    let (r0, r1) = (radii[i - 1], radii[i]);
                    let w = (t - r0) / (r1 - r0);
                    values[i - 1] * (1.0 - w) + values[i] * w
                }
            }
            OneSidedExp { .. } | OffsetSingular { .. } => unreachable!("non-radial family"),
        }
    }

    /// Evaluation of non-radial (one-dimensional) families.
    fn eval_direct(&self, z: f64) -> f64 {
        match self {
            KernelFamily::OneSidedExp { rate } => {
                if z > 0.0 {
                    (-rate * z).exp()
                } else {
                    0.0
                }
            }
            KernelFamily::OffsetSingular { offset, exponent, reach } => {
                let mut v = 0.0;
                for c in [*offset, -*offset] {
                    let r = (z - c).abs();
                    if r < *reach {
                        v += r.powf(-exponent);
                    }
                }
                v
            }
            _ => unreachable!("radial family"),
        }
    }

    /// Norm radii where the profile has kinks or jumps.
    fn radial_breaks(&self) -> Vec<f64> {
        use KernelFamily::*;
        match self {
            PiecewiseFractional { radii, .. } => radii.clone(),
            LogFractional { .. } => vec![1.0],
            Oscillating { m, .. } => (1..=*m).map(|k| k as f64).collect(),
            LogGamma { .. } => vec![1.0 / 3.0],
            Indicator { radius } => vec![*radius],
            Tabulated { radii, .. } => radii.clone(),
            _ => vec![],
        }
    }

    fn singular_at_origin(&self) -> bool {
        use KernelFamily::*;
        match self {
            Fractional { .. } | PiecewiseFractional { .. } | LogFractional { .. } | Oscillating { .. } | LogGamma { .. } => true,
            Power { .. } => true,
            Tabulated { head_exponent, .. } => *head_exponent > 0.0,
            _ => false,
        }
    }

    fn norm_support(&self) -> f64 {
        use KernelFamily::*;
        match self {
            LogFractional { .. } => 1.0,
            LogGamma { .. } => 1.0 / 3.0,
            Indicator { radius } => *radius,
            PiecewiseFractional { alphas, .. } if *alphas.last().unwrap() == 0.0 => {
                let k = alphas.iter().position(|a| *a == 0.0).unwrap();
                if k == 0 {
                    0.0
                } else if let PiecewiseFractional { radii, .. } = self {
                    radii[k - 1]
                } else {
                    unreachable!()
                }
            }
            Tabulated { radii, tail_exponent, .. } if tail_exponent.is_infinite() => *radii.last().unwrap(),
            _ => f64::INFINITY,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        use KernelFamily::*;
        let s_ok = |s: f64| s > 0.0 && s < 1.0;
        match self {
            Fractional { s, p, scale } => {
                if !s_ok(*s) {
                    return param(format!("fractional kernel needs 0 < s < 1, got s = {s}"));
                }
                if !(*p >= 1.0) || !(*scale > 0.0) {
                    return param("fractional kernel needs p ≥ 1 and scale > 0");
                }
            }
            PiecewiseFractional { alphas, radii, s, p } => {
                let m = alphas.len();
                if m == 0 || s.len() != m || radii.len() + 1 != m {
                    return param(format!(
                        "piecewise-fractional kernel with {m} pieces needs {m} exponents and {} radii",
                        m.saturating_sub(1)
                    ));
                }
                if !(alphas[0] > 0.0) || alphas.iter().any(|a| !(*a >= 0.0)) {
                    return param("piecewise-fractional coefficients must be ≥ 0 with α_1 > 0");
                }
                if alphas.windows(2).any(|w| w[1] > w[0]) {
                    return param("piecewise-fractional coefficients must be non-increasing: α_1 ≥ … ≥ α_M");
                }
                if radii.first().is_some_and(|r| !(*r >= 1.0)) || radii.windows(2).any(|w| !(w[1] > w[0])) {
                    return param("piecewise-fractional radii must satisfy 1 ≤ R_1 < … ");
                }
                if s.iter().any(|x| !s_ok(*x)) || s.windows(2).any(|w| w[1] < w[0]) {
                    return param("piecewise-fractional exponents must satisfy 0 < s_1 ≤ … ≤ s_M < 1");
                }
                if !(*p >= 1.0) {
                    return param("piecewise-fractional kernel needs p ≥ 1");
                }
            }
            LogFractional { s, alpha } => {
                if !(*s >= 0.0 && *s < 1.0) || !alpha.is_finite() {
                    return param("log-fractional kernel needs 0 ≤ s < 1 and finite α");
                }
            }
            Oscillating { s, alpha, beta, m } => {
                if !s_ok(*s) || !(*alpha > 0.0 && alpha < beta) || *m < 1 || !beta.is_finite() {
                    return param("oscillating kernel needs 0 < s < 1, 0 < α < β, M ≥ 1");
                }
            }
            LogGamma { gamma } => {
                if !(*gamma > 0.0) || !gamma.is_finite() {
                    return param("log-gamma kernel needs γ > 0");
                }
            }
            Indicator { radius } => {
                if !(*radius > 0.0) || !radius.is_finite() {
                    return param("indicator kernel needs a positive radius");
                }
            }
            Power { exponent, scale } => {
                if !(*exponent > 0.0) || !(*scale > 0.0) {
                    return param("power kernel needs exponent > 0 and scale > 0");
                }
            }
            Gaussian { sigma, amplitude } => {
                if !(*sigma > 0.0) || !(*amplitude > 0.0) {
                    return param("gaussian kernel needs σ > 0 and amplitude > 0");
                }
            }
            OneSidedExp { rate } => {
                if d != 1 {
                    return Err(Error::Dimension("one-sided exponential kernel is one-dimensional".into()));
                }
                if !(*rate > 0.0) {
                    return param("one-sided exponential kernel needs rate > 0");
                }
            }
            OffsetSingular { offset, exponent, reach } => {
                if d != 1 {
                    return Err(Error::Dimension("offset-singular kernel is one-dimensional".into()));
                }
                if !(*offset > 0.0) || !(*reach > 0.0 && reach < offset) || !(*exponent > 0.0) {
                    return param("offset-singular kernel needs 0 < reach < offset and exponent > 0");
                }
            }
            Tabulated { radii, values, head_exponent, tail_exponent } => {
                if radii.len() < 2 || radii.len() != values.len() {
                    return param("tabulated kernel needs at least two (radius, value) samples");
                }
                if !(radii[0] > 0.0) || radii.windows(2).any(|w| !(w[1] > w[0])) {
                    return param("tabulated radii must be positive and increasing");
                }
                if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || values.windows(2).any(|w| w[1] > w[0]) {
                    return param("tabulated values must be finite, non-negative and non-increasing");
                }
                if !(*head_exponent >= 0.0) || !(*tail_exponent > 0.0) {
                    return param("tabulated continuation exponents must be positive");
                }
            }
        }
        Ok(())
    }
}

impl Kernel {
    /// Builds a kernel from a family, checking parameter ranges.
    pub fn new(dim: usize, family: KernelFamily, norm: Norm) -> Result<Kernel> {
        if dim == 0 {
            return Err(Error::Dimension("dimension must be positive".into()));
        }
        norm.check_dim(dim)?;
        family.validate(dim)?;
        Ok(Kernel { dim, norm, node: Node::Base { family } })
    }

    /// Euclidean fractional kernel `|z|^{−d−sp}`.
    pub fn fractional(dim: usize, s: f64, p: f64) -> Result<Kernel> {
        Kernel::new(dim, KernelFamily::Fractional { s, p, scale: 1.0 }, Norm::Euclidean)
    }

    /// Euclidean indicator of the ball of radius `radius`.
    pub fn indicator(dim: usize, radius: f64) -> Result<Kernel> {
        Kernel::new(dim, KernelFamily::Indicator { radius }, Norm::Euclidean)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self) -> &Norm {
        &self.norm
    }

    /// The zoo family at the root of the transform chain.
    pub fn family(&self) -> &KernelFamily {
        match &self.node {
            Node::Base { family } => family,
            Node::Symmetrized { inner } | Node::Truncated { inner, .. } => inner.family(),
        }
    }

    /// The untransformed kernel, if this is a plain family.
    pub fn base_family(&self) -> Option<&KernelFamily> {
        match &self.node {
            Node::Base { family } => Some(family),
            _ => None,
        }
    }

    pub fn truncation(&self) -> Option<Truncation> {
        match &self.node {
            Node::Truncated { truncation, .. } => Some(*truncation),
            _ => None,
        }
    }

    pub fn inner(&self) -> Option<&Kernel> {
        match &self.node {
            Node::Base { .. } => None,
            Node::Symmetrized { inner } | Node::Truncated { inner, .. } => Some(inner),
        }
    }

    pub fn is_symmetrized(&self) -> bool {
        matches!(self.node, Node::Symmetrized { .. })
    }

    /// `(K(z) + K(−z))/2`. Symmetric kernels are returned unchanged, which
    /// makes the operation idempotent.
    pub fn symmetrize(&self) -> Kernel {
        if self.is_symmetric() {
            return self.clone();
        }
        Kernel {
            dim: self.dim,
            norm: self.norm.clone(),
            node: Node::Symmetrized { inner: Box::new(self.clone()) },
        }
    }

    /// Applies a truncation (`δ, k, ε > 0`).
    pub fn truncate(&self, t: Truncation) -> Result<Kernel> {
        let v = match t {
            Truncation::OutsideBall(v) | Truncation::Cap(v) | Truncation::ExcludeBall(v) => v,
        };
        if !(v > 0.0) {
            return param(format!("truncation parameter must be positive, got {v}"));
        }
        Ok(Kernel {
            dim: self.dim,
            norm: self.norm.clone(),
            node: Node::Truncated { inner: Box::new(self.clone()), truncation: t },
        })
    }

    /// Whether K(z) depends on z only through |z|_* (truncations use the
    /// euclidean radius, so they are radial only for euclidean kernels).
    pub fn is_radial(&self) -> bool {
        match &self.node {
            Node::Base { family } => family.is_radial(),
            Node::Symmetrized { inner } => inner.is_radial(),
            Node::Truncated { inner, truncation } => {
                inner.is_radial() && (matches!(truncation, Truncation::Cap(_)) || self.norm.is_euclidean())
            }
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match &self.node {
            Node::Base { family } => !matches!(family, KernelFamily::OneSidedExp { .. }),
            Node::Symmetrized { .. } => true,
            Node::Truncated { inner, .. } => inner.is_symmetric(),
        }
    }

    /// Evaluates K at radial arguments: `star = |z|_*`, `euc = |z|₂`.
    fn eval_radial(&self, star: f64, euc: f64) -> f64 {
        match &self.node {
            Node::Base { family } => family.profile(star, self.dim as f64),
            Node::Symmetrized { inner } => inner.eval_radial(star, euc),
            Node::Truncated { inner, truncation } => match truncation {
                Truncation::OutsideBall(r) | Truncation::ExcludeBall(r) => {
                    if euc < *r {
                        0.0
                    } else {
                        inner.eval_radial(star, euc)
                    }
                }
                Truncation::Cap(k) => inner.eval_radial(star, euc).min(*k),
            },
        }
    }

    /// K(z). Singular kernels return `+∞` at their singular points.
    pub fn eval(&self, z: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), self.dim);
        match &self.node {
            Node::Base { family } => {
                if family.is_radial() {
                    family.profile(self.norm.eval(z), self.dim as f64)
                } else {
                    family.eval_direct(z[0])
                }
            }
            Node::Symmetrized { inner } => {
                let m: Vec<f64> = z.iter().map(|x| -x).collect();
                0.5 * (inner.eval(z) + inner.eval(&m))
            }
            Node::Truncated { inner, truncation } => match truncation {
                Truncation::OutsideBall(r) | Truncation::ExcludeBall(r) => {
                    if Norm::Euclidean.eval(z) < *r {
                        0.0
                    } else {
                        inner.eval(z)
                    }
                }
                Truncation::Cap(k) => inner.eval(z).min(*k),
            },
        }
    }

    /// The function `t ↦ K(tθ)` for a direction θ.
    pub fn ray(&self, theta: &[f64]) -> Ray<'_> {
        Ray {
            kernel: self,
            theta: theta.to_vec(),
            star: self.norm.eval(theta),
            euc: Norm::Euclidean.eval(theta),
            radial: self.is_radial(),
        }
    }

    /// Values of t > 0 where `t ↦ K(tθ)` has kinks or jumps.
    pub fn ray_breaks(&self, theta: &[f64]) -> Vec<f64> {
        let star = self.norm.eval(theta);
        let euc = Norm::Euclidean.eval(theta);
        let mut out = self.ray_breaks_inner(theta, star, euc);
        out.retain(|t| t.is_finite() && *t > 0.0);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn ray_breaks_inner(&self, theta: &[f64], star: f64, euc: f64) -> Vec<f64> {
        match &self.node {
            Node::Base { family } => {
                if family.is_radial() {
                    family.radial_breaks().into_iter().map(|r| r / star).collect()
                } else {
                    match family {
                        KernelFamily::OffsetSingular { offset, reach, .. } => {
                            let sgn = theta[0].signum();
                            let mut v = Vec::new();
                            for c in [*offset, -*offset] {
                                for e in [c - reach, c, c + reach] {
                                    if e * sgn > 0.0 {
                                        v.push(e.abs() / theta[0].abs());
                                    }
                                }
                            }
                            v
                        }
                        _ => vec![],
                    }
                }
            }
            Node::Symmetrized { inner } => {
                let m: Vec<f64> = theta.iter().map(|x| -x).collect();
                let mut v = inner.ray_breaks_inner(theta, star, euc);
                v.extend(inner.ray_breaks_inner(&m, star, euc));
                v
            }
            Node::Truncated { inner, truncation } => {
                let mut v = inner.ray_breaks_inner(theta, star, euc);
                match truncation {
                    Truncation::OutsideBall(r) | Truncation::ExcludeBall(r) => v.push(r / euc),
                    Truncation::Cap(k) => v.extend(crossings(&inner.ray(theta), *k)),
                }
                v
            }
        }
    }

    /// Radii where a radial kernel jumps or kinks, split into norm radii
    /// (`|z|_*`) and euclidean radii (`|z|₂`).
    pub fn break_radii(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.node {
            Node::Base { family } => {
                if family.is_radial() {
                    (family.radial_breaks(), vec![])
                } else {
                    (vec![], vec![])
                }
            }
            Node::Symmetrized { inner } => inner.break_radii(),
            Node::Truncated { inner, truncation } => {
                let (mut s, mut e) = inner.break_radii();
                match truncation {
                    Truncation::OutsideBall(r) | Truncation::ExcludeBall(r) => e.push(*r),
                    Truncation::Cap(k) => {
                        let mut e1 = vec![0.0; self.dim];
                        e1[0] = 1.0;
                        let star = self.norm.eval(&e1);
                        s.extend(crossings(&inner.ray(&e1), *k).into_iter().map(|t| t * star));
                    }
                }
                (s, e)
            }
        }
    }

    /// Values of t > 0 where `K(tθ)` is singular.
    pub fn ray_singular(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        if let SingularSet::Points(ps) = self.singular_set() {
            let euc = Norm::Euclidean.eval(theta);
            for p in ps {
                // p must be a positive multiple of θ
                let t = Norm::Euclidean.eval(&p) / euc;
                let aligned = p.iter().zip(theta).all(|(a, b)| (a - t * b).abs() <= 1e-12 * (1.0 + a.abs()));
                if aligned && t > 0.0 {
                    out.push(t);
                }
            }
        }
        out
    }

    pub fn singular_set(&self) -> SingularSet {
        match &self.node {
            Node::Base { family } => match family {
                KernelFamily::OffsetSingular { offset, .. } => SingularSet::Points(vec![vec![*offset], vec![-*offset]]),
                f if f.singular_at_origin() => SingularSet::Origin,
                _ => SingularSet::None,
            },
            Node::Symmetrized { inner } => match inner.singular_set() {
                SingularSet::Points(ps) => {
                    let mut all = ps.clone();
                    for p in ps {
                        let m: Vec<f64> = p.iter().map(|x| -x).collect();
                        if !all.contains(&m) {
                            all.push(m);
                        }
                    }
                    SingularSet::Points(all)
                }
                s => s,
            },
            Node::Truncated { inner, truncation } => match truncation {
                Truncation::Cap(_) => SingularSet::None,
                Truncation::OutsideBall(r) | Truncation::ExcludeBall(r) => match inner.singular_set() {
                    SingularSet::Origin => SingularSet::None,
                    SingularSet::Points(ps) => {
                        let kept: Vec<Vec<f64>> = ps.into_iter().filter(|p| Norm::Euclidean.eval(p) >= *r).collect();
                        if kept.is_empty() {
                            SingularSet::None
                        } else {
                            SingularSet::Points(kept)
                        }
                    }
                    SingularSet::None => SingularSet::None,
                },
            },
        }
    }

    pub fn singular_at_origin(&self) -> bool {
        self.singular_set() == SingularSet::Origin
    }

    /// Euclidean radius outside which K vanishes (`+∞` if none).
    pub fn support_radius(&self) -> f64 {
        match &self.node {
            Node::Base { family } => match family {
                KernelFamily::OffsetSingular { offset, reach, .. } => offset + reach,
                KernelFamily::OneSidedExp { .. } => f64::INFINITY,
                f => {
                    let r = f.norm_support();
                    if r.is_finite() {
                        r / self.norm.equivalence(self.dim).0
                    } else {
                        r
                    }
                }
            },
            Node::Symmetrized { inner } | Node::Truncated { inner, .. } => inner.support_radius(),
        }
    }

    /// Whether `K` is bounded (no singular points).
    pub fn is_bounded(&self) -> bool {
        self.singular_set() == SingularSet::None
    }

    /// Detects a radially non-increasing euclidean kernel by dense sampling of
    /// the profile on a logarithmic grid.
    pub fn is_radially_nonincreasing(&self) -> bool {
        if !self.is_radial() || !self.norm.is_euclidean() {
            return false;
        }
        let n = 6000;
        let mut prev = f64::INFINITY;
        for i in 0..=n {
            let t = 10f64.powf(-6.0 + 12.0 * i as f64 / n as f64);
            let v = self.eval_radial(t, t);
            if v > prev * (1.0 + 1e-12) {
                return false;
            }
            prev = v;
        }
        true
    }

    /// Radial profile `t ↦ K(t e_1)` (meaningful for radial kernels).
    pub fn radial_profile(&self, t: f64) -> f64 {
        let mut e = vec![0.0; self.dim];
        e[0] = 1.0;
        let star = self.norm.eval(&e);
        self.eval_radial(t * star, t)
    }

    /// Short human-readable description.
    pub fn describe(&self) -> String {
        match &self.node {
            Node::Base { family } => {
                let s = serde_json::to_value(family).map(|v| v.to_string()).unwrap_or_default();
                format!("d={} norm={} {}", self.dim, self.norm.label(), s)
            }
            Node::Symmetrized { inner } => format!("sym({})", inner.describe()),
            Node::Truncated { inner, truncation } => {
                let t = match truncation {
                    Truncation::OutsideBall(v) => format!("outside_ball {v}"),
                    Truncation::Cap(v) => format!("cap {v}"),
                    Truncation::ExcludeBall(v) => format!("exclude_ball {v}"),
                };
                format!("{t}({})", inner.describe())
            }
        }
    }
}

/// Locates t where `K(tθ)` crosses the level `k` (scan plus bisection).
fn crossings(ray: &Ray<'_>, k: f64) -> Vec<f64> {
    let n = 400;
    let ts: Vec<f64> = (0..=n).map(|i| 10f64.powf(-8.0 + 16.0 * i as f64 / n as f64)).collect();
    let mut out = Vec::new();
    for w in ts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (ray.eval(a) - k, ray.eval(b) - k);
        if fa.is_nan() || fb.is_nan() || (fa > 0.0) == (fb > 0.0) {
            continue;
        }
        let (mut lo, mut hi) = (a, b);
        for _ in 0..100 {
            let m = 0.5 * (lo + hi);
            if (ray.eval(m) - k > 0.0) == (fa > 0.0) {
                lo = m;
            } else {
                hi = m;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    out
}

/// A kernel restricted to a ray `t ↦ K(tθ)`.
pub struct Ray<'a> {
    kernel: &'a Kernel,
    theta: Vec<f64>,
    star: f64,
    euc: f64,
    radial: bool,
}

impl Ray<'_> {
    pub fn eval(&self, t: f64) -> f64 {
        if self.radial {
            self.kernel.eval_radial(t * self.star, t * self.euc)
        } else if self.theta.len() == 1 {
            self.kernel.eval(&[t * self.theta[0]])
        } else {
            let z: Vec<f64> = self.theta.iter().map(|x| x * t).collect();
            self.kernel.eval(&z)
        }
    }
}
