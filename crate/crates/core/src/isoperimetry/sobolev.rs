//! The isoperimetric assumption `P_{K*}(B^(m)) ≥ m^{1/q}/C` behind the
//! Sobolev inequality, and the relative isoperimetric inequality
//! `min{|E∩Ω|, |Ω∖E|}^{1/q} ≤ C P_K(E; Ω)`.

use super::{ball_curve, implied, unit_ball_volume, ConstantKind, InequalityReport};
use crate::closedform1d::build_profile;
use crate::error::{Error, Result};
use crate::functional::{perimeter_with, table_for, Domain, QuadratureScheme};
use crate::grid::{rasterize, Grid, GridSet, Shape};
use crate::kernels::{Kernel, KernelFamily};
use crate::norm::Norm;
use crate::report::{csv_num, ser_f64, ser_vec_f64, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SobolevOptions {
    /// Grid spacing for ball perimeters computed on a grid (d ≥ 2).
    pub h: f64,
    /// Half-width and spacing of the sampling box for the layer-cake
    /// rearrangement of kernels that are not radially non-increasing.
    pub sample_half_width: f64,
    pub sample_h: f64,
    /// Largest |log-log slope| of ρ at either end of the mass range still
    /// read as "bounded away from zero".
    pub slope_tol: f64,
    pub scheme: QuadratureScheme,
}

impl Default for SobolevOptions {
    fn default() -> Self {
        SobolevOptions { h: 1.0 / 64.0, sample_half_width: 4.0, sample_h: 1.0 / 64.0, slope_tol: 0.05, scheme: QuadratureScheme::default() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SobolevCheck {
    /// At the mass minimizing ρ: `lhs = m^{1/q}`, `rhs = P_{K*}(B^(m))`.
    pub inequality: InequalityReport,
    #[serde(serialize_with = "ser_f64")]
    pub q: f64,
    #[serde(serialize_with = "ser_vec_f64")]
    pub masses: Vec<f64>,
    #[serde(serialize_with = "ser_vec_f64")]
    pub perimeters: Vec<f64>,
    /// `ρ(m) = P_{K*}(B^(m)) m^{−1/q}`.
    #[serde(serialize_with = "ser_vec_f64")]
    pub rho: Vec<f64>,
    /// Log-log slopes of ρ over the first and the last three masses.
    #[serde(serialize_with = "ser_f64")]
    pub slope_small: f64,
    #[serde(serialize_with = "ser_f64")]
    pub slope_large: f64,
    /// K* = K (radially non-increasing) rather than a sampled rearrangement.
    pub analytic_rearrangement: bool,
    /// Some perimeter is infinite, so the assumption holds vacuously there.
    pub vacuous: bool,
}

impl SobolevCheck {
    pub fn to_csv(&self, header: &str) -> String {
        let mut s = String::new();
        if !header.is_empty() {
            s.push_str(header);
            s.push('\n');
        }
        s.push_str("m,rho,perimeter\n");
        for i in 0..self.masses.len() {
            s.push_str(&format!("{},{},{}\n", csv_num(self.masses[i]), csv_num(self.rho[i]), csv_num(self.perimeters[i])));
        }
        s
    }
}

/// Symmetric-decreasing rearrangement `K*` of a kernel.
///
/// Radially non-increasing euclidean kernels are their own rearrangement.
/// Otherwise the kernel is sampled at the cell centers of the box
/// `[−R, R]^d`, the samples are sorted in decreasing order and laid out by
/// volume (`|B_{r_i}| = (i + ½) h^d`), and power laws measured on the kernel
/// continue the table below the first and above the last sample.
pub fn rearranged_kernel(k: &Kernel, half_width: f64, hs: f64) -> Result<(Kernel, bool)> {
    if k.is_radially_nonincreasing() {
        return Ok((k.clone(), true));
    }
    let d = k.dim();
    let g = Grid::centered(d, hs, half_width)?;
    let mut vals: Vec<f64> = (0..g.len()).into_par_iter().map(|i| k.eval(&g.center(i))).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Unsupported("kernel is infinite at a sample point".into()));
    }
    vals.sort_by(|a, b| b.total_cmp(a));
    let omega = unit_ball_volume(d);
    let cell = g.cell_volume();
    let positive = vals.iter().take_while(|v| **v > 0.0).count();
    if positive < 2 {
        return Err(Error::Unsupported("too few positive kernel samples to rearrange".into()));
    }
    let radii: Vec<f64> = (0..positive).map(|i| ((i as f64 + 0.5) * cell / omega).powf(1.0 / d as f64)).collect();
    let values = vals[..positive].to_vec();
    let along = |t: f64| {
        let mut e = vec![0.0; d];
        e[0] = t;
        k.eval(&e)
    };
    let slope = |a: f64, b: f64| -> f64 {
        let (ka, kb) = (along(a), along(b));
        if ka > 0.0 && kb > 0.0 {
            (ka / kb).ln() / (b / a).ln()
        } else {
            f64::INFINITY
        }
    };
    let head = if k.singular_at_origin() { slope(0.25 * hs, 0.5 * hs).max(0.0) } else { 0.0 };
    let tail = if positive < vals.len() { f64::INFINITY } else { slope(half_width, 2.0 * half_width) };
    if !(tail > 0.0) {
        return Err(Error::Unsupported("kernel does not decay beyond the sampling box".into()));
    }
    let family = KernelFamily::Tabulated { radii, values, head_exponent: head, tail_exponent: tail };
    Ok((Kernel::new(d, family, Norm::Euclidean)?, false))
}

fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Evaluates `ρ(m) = P_{K*}(B^(m)) m^{−1/q}` on increasing masses.
///
/// The assumption asks for `inf_m ρ(m) > 0` over all m > 0. On a finite
/// sample this is read from the ends of the range: the verdict fails when
/// the log-log slope of ρ over the last three masses is below `−slope_tol`
/// (ρ → 0 as m → ∞) or the slope over the first three exceeds `slope_tol`
/// (ρ → 0 as m → 0). Otherwise it holds with `C = 1 / min ρ`.
pub fn sobolev_assumption_check(k: &Kernel, q: f64, masses: &[f64], opts: &SobolevOptions) -> Result<SobolevCheck> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::Parameter("q must lie in [1, ∞)".into()));
    }
    if masses.len() < 3 || masses.iter().any(|m| !(*m > 0.0)) || masses.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parameter("need at least three positive, increasing masses".into()));
    }
    let d = k.dim();
    let (kstar, analytic) = rearranged_kernel(k, opts.sample_half_width, opts.sample_h)?;
    let omega = unit_ball_volume(d);
    let radii: Vec<f64> = masses.iter().map(|m| (m / omega).powf(1.0 / d as f64)).collect();
    let perimeters: Vec<f64> = if d == 1 {
        match build_profile(&kstar) {
            Ok(profile) => radii.iter().map(|r| profile.interval_perimeter(*r)).collect(),
            // not integrable away from the origin: every ball has infinite perimeter
            Err(Error::Precondition(_)) => vec![f64::INFINITY; radii.len()],
            Err(e) => return Err(e),
        }
    } else {
        ball_curve(&kstar, &radii, opts.h, &opts.scheme)?.perimeters
    };
    let rho: Vec<f64> = perimeters.iter().zip(masses).map(|(p, m)| p * m.powf(-1.0 / q)).collect();
    let vacuous = rho.iter().any(|r| r.is_infinite());
    let n = masses.len();
    let (slope_small, slope_large) = if vacuous {
        (f64::NAN, f64::NAN)
    } else {
        (loglog_slope(&masses[..3], &rho[..3]), loglog_slope(&masses[n - 3..], &rho[n - 3..]))
    };
    let (imin, rmin) = rho.iter().enumerate().fold((0, f64::INFINITY), |b, (i, r)| if *r < b.1 { (i, *r) } else { b });
    let c = if rmin > 0.0 { 1.0 / rmin } else { f64::INFINITY };
    let lhs = masses[imin].powf(1.0 / q);
    let mut inequality = InequalityReport::new("sobolev_assumption", lhs, perimeters[imin], c, ConstantKind::Implied, 1e-12 * lhs);
    inequality.verdict = if vacuous {
        Verdict::Holds
    } else if rho.iter().any(|r| r.is_nan()) {
        Verdict::Inconclusive
    } else if slope_large < -opts.slope_tol || slope_small > opts.slope_tol || rmin <= 0.0 {
        Verdict::Fails
    } else {
        Verdict::Holds
    };
    Ok(SobolevCheck {
        inequality,
        q,
        masses: masses.to_vec(),
        perimeters,
        rho,
        slope_small,
        slope_large,
        analytic_rearrangement: analytic,
        vacuous,
    })
}

/// Both sides of the relative isoperimetric inequality for one set; the
/// constant is the implied one, `lhs / rhs`.
pub fn relative_isoperimetric_check(e: &GridSet, omega: &GridSet, k: &Kernel, q: f64, scheme: &QuadratureScheme) -> Result<InequalityReport> {
    let table = table_for(k, e.grid(), scheme)?;
    relative_with(e, omega, q, &table)
}

fn relative_with(e: &GridSet, omega: &GridSet, q: f64, table: &crate::functional::WeightTable) -> Result<InequalityReport> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::Parameter("q must lie in [1, ∞)".into()));
    }
    if omega.is_empty() || omega.components().len() != 1 {
        return Err(Error::Precondition("Ω must be a non-empty connected set".into()));
    }
    let inside = e.intersect(omega)?.volume();
    let outside = omega.minus(e)?.volume();
    let lhs = inside.min(outside).powf(1.0 / q);
    let rhs = perimeter_with(e, Domain::Set(omega), table)?.value;
    let c = implied(lhs, rhs);
    Ok(InequalityReport::new("relative_isoperimetric", lhs, rhs, c, ConstantKind::Implied, 1e-12 * lhs))
}

#[derive(Clone, Debug, Serialize)]
pub struct RelativeSuite {
    #[serde(serialize_with = "ser_vec_f64")]
    pub implied: Vec<f64>,
    /// Empirical constant: the largest implied constant.
    #[serde(serialize_with = "ser_f64")]
    pub max_implied: f64,
    #[serde(serialize_with = "ser_f64")]
    pub min_implied: f64,
    pub warnings: Vec<String>,
    pub verdict: Verdict,
}

/// Relative isoperimetric check over `count` random sets (unions of one to
/// three balls centered in the bounding box of Ω) in the union of boxes Ω,
/// rasterized at spacing h. The same seed draws the same continuum sets at
/// every resolution.
pub fn relative_isoperimetric_suite(
    boxes: &[(Vec<f64>, Vec<f64>)],
    k: &Kernel,
    q: f64,
    h: f64,
    count: usize,
    seed: u64,
    scheme: &QuadratureScheme,
) -> Result<RelativeSuite> {
    let d = k.dim();
    if boxes.is_empty() || boxes.iter().any(|(a, b)| a.len() != d || b.len() != d) {
        return Err(Error::Dimension("boxes must match the kernel dimension".into()));
    }
    let lo: Vec<f64> = (0..d).map(|a| boxes.iter().map(|b| b.0[a]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..d).map(|a| boxes.iter().map(|b| b.1[a]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let size = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let snap = |x: f64, up: bool| if up { (x / h).ceil() * h } else { (x / h).floor() * h };
    let glo: Vec<f64> = lo.iter().map(|x| snap(x - 0.5 * size, false)).collect();
    let ghi: Vec<f64> = hi.iter().map(|x| snap(x + 0.5 * size, true)).collect();
    let g = Grid::covering(h, &glo, &ghi)?;
    let omega = rasterize(&g, &Shape::UnionOfBoxes { boxes: boxes.to_vec() })?;
    let table = table_for(k, &g, scheme)?;
    let mut warnings = Vec::new();
    if !k.is_symmetric() {
        warnings.push("kernel is not symmetric".to_string());
    }
    if !k.singular_at_origin() {
        warnings.push("kernel is not singular at the origin; the inequality assumes a non-integrable kernel".to_string());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes: Vec<Shape> = (0..count)
        .map(|_| {
            let nb = rng.gen_range(1..=3);
            let balls = (0..nb)
                .map(|_| {
                    let c: Vec<f64> = (0..d).map(|a| rng.gen_range(lo[a]..hi[a])).collect();
                    (c, rng.gen_range(0.1..0.4) * size)
                })
                .collect();
            Shape::UnionOfBalls { balls }
        })
        .collect();
    let implied_c: Vec<f64> = shapes
        .iter()
        .map(|s| {
            let e = rasterize(&g, s)?;
            Ok(relative_with(&e, &omega, q, &table)?.implied_constant())
        })
        .collect::<Result<_>>()?;
    let positive: Vec<f64> = implied_c.iter().copied().filter(|c| *c > 0.0).collect();
    let max_implied = implied_c.iter().copied().fold(0.0, f64::max);
    let min_implied = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let verdict = if max_implied.is_finite() { Verdict::Holds } else { Verdict::Fails };
    Ok(RelativeSuite { implied: implied_c, max_implied, min_implied, warnings, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn masses() -> Vec<f64> {
        (0..=10).map(|i| 0.1 * 100f64.powf(i as f64 / 10.0)).collect()
    }

    #[test]
    fn fractional_rho_is_constant_at_matching_q() {
        let k = Kernel::fractional(1, 0.5, 1.0).unwrap();
        let c = sobolev_assumption_check(&k, 2.0, &masses(), &SobolevOptions::default()).unwrap();
        for r in &c.rho {
            assert_relative_eq!(*r, 8.0, max_relative = 0.01);
        }
        assert_eq!(c.inequality.verdict, Verdict::Holds);
        assert!(c.analytic_rearrangement);
    }

    #[test]
    fn fractional_fails_for_mismatched_q() {
        let k = Kernel::fractional(1, 0.5, 1.0).unwrap();
        for q in [1.0, 4.0] {
            let c = sobolev_assumption_check(&k, q, &masses(), &SobolevOptions::default()).unwrap();
            assert_eq!(c.inequality.verdict, Verdict::Fails, "q={q}");
            assert!(c.rho.windows(2).all(|w| (w[1] - w[0]).signum() == (c.rho[1] - c.rho[0]).signum()));
        }
    }

    #[test]
    fn log_kernel_fails() {
        let k = Kernel::new(1, KernelFamily::LogGamma { gamma: 1.0 }, Norm::Euclidean).unwrap();
        let c = sobolev_assumption_check(&k, 2.0, &masses(), &SobolevOptions::default()).unwrap();
        assert_eq!(c.inequality.verdict, Verdict::Fails);
        assert!(c.rho.last().unwrap() < &c.rho[0]);
    }

    #[test]
    fn sampled_rearrangement_of_radial_profile() {
        // a weighted-norm gaussian is not radial in the euclidean sense; its
        // rearrangement preserves the distribution of values
        let k = Kernel::new(2, KernelFamily::Gaussian { sigma: 0.5, amplitude: 1.0 }, Norm::weighted(vec![1.0, 2.0]).unwrap()).unwrap();
        let (ks, analytic) = rearranged_kernel(&k, 3.0, 1.0 / 32.0).unwrap();
        assert!(!analytic);
        // {K > ½} is the ellipse |z|_* < ρ, ρ² = 2σ² ln 2, of area πρ²/2;
        // the rearranged level set is the disc of the same area
        let r = (0.25f64 * 2f64.ln()).sqrt();
        assert!(ks.eval(&[0.0, r * 0.95]) > 0.5 && ks.eval(&[r * 1.05, 0.0]) < 0.5);
    }

    #[test]
    fn relative_check_cases() {
        let g = Grid::new(1.0 / 16.0, vec![48, 48], vec![-1.0, -1.0]).unwrap();
        let omega = rasterize(&g, &Shape::Box { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] }).unwrap();
        let k = Kernel::fractional(2, 0.5, 1.0).unwrap();
        let full = omega.clone();
        let r = relative_isoperimetric_check(&full, &omega, &k, 2.0, &QuadratureScheme::default()).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.verdict, Verdict::Holds);
        let half = rasterize(&g, &Shape::Box { lo: vec![0.0, 0.0], hi: vec![0.5, 1.0] }).unwrap();
        let r = relative_isoperimetric_check(&half, &omega, &k, 2.0, &QuadratureScheme::default()).unwrap();
        assert!(r.lhs > 0.0 && r.rhs > 0.0 && r.constant.is_finite());
    }
}
