//! Exact interval perimeters in one dimension.
//!
//! For a symmetric kernel on R integrable away from the origin, take
//! `G' = K` on (0, ∞) and `H' = G`. Then
//! `½ P_K((−r, r)) = 2 G(∞) r + H(0⁺) − H(2r)`, independently of the
//! additive constants chosen for G and H.

use crate::error::{Error, Result};
use crate::kernels::{kernel_integral, Kernel, KernelFamily, Region, Weight};
use crate::numeric::{IntegralStatus, LineIntegrator};
use crate::report::{csv_num, ser_vec_f64, Verdict};
use serde::Serialize;
use statrs::function::gamma::{gamma, gamma_ur};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Analytic,
    Numeric,
}

#[derive(Clone, Debug)]
enum Form {
    /// `scale |z|^{−1−a}`.
    Fractional { a: f64, scale: f64 },
    Indicator { radius: f64 },
    LogGamma { gamma: f64 },
    Numeric { kernel: Kernel, h0: f64 },
}

/// The pair (G, H) of a one-dimensional kernel.
#[derive(Clone, Debug)]
pub struct Profile1D {
    form: Form,
    /// Additive constant of G.
    g_offset: f64,
    /// Integration constant of H.
    h_offset: f64,
}

/// Builds the profile; analytic for fractional, indicator and log-γ
/// kernels, numeric otherwise.
pub fn build_profile(k: &Kernel) -> Result<Profile1D> {
    check(k)?;
    let unit = k.norm().eval(&[1.0]) == 1.0;
    let form = match (k.truncation(), k.base_family(), unit && !k.is_symmetrized()) {
        (None, Some(KernelFamily::Fractional { s, p, scale }), true) => Form::Fractional { a: s * p, scale: *scale },
        (None, Some(KernelFamily::Indicator { radius }), true) => Form::Indicator { radius: *radius },
        (None, Some(KernelFamily::LogGamma { gamma }), true) => Form::LogGamma { gamma: *gamma },
        _ => numeric_form(k)?,
    };
    Ok(Profile1D { form, g_offset: 0.0, h_offset: 0.0 })
}

fn check(k: &Kernel) -> Result<()> {
    if k.dim() != 1 {
        return Err(Error::Dimension("interval profiles are one-dimensional".into()));
    }
    if !k.is_symmetric() {
        return Err(Error::Precondition("the interval formula needs a symmetric kernel".into()));
    }
    let far = kernel_integral(k, Region::Tail(1.0), Weight::One)?;
    if far.status != IntegralStatus::Converged {
        return Err(Error::Precondition("kernel is not integrable away from the origin; G(∞) would be infinite".into()));
    }
    Ok(())
}

/// Numeric profile with `G(∞) = 0` and `H(0⁺) = ∫_0^∞ K(z) min(z, 1) dz`
/// when finite (`H(x) = H(0⁺) − ∫ K(z) min(z, x) dz`).
fn numeric_form(k: &Kernel) -> Result<Form> {
    let li = LineIntegrator::default();
    let ray = k.ray(&[1.0]);
    let f = |z: f64| {
        let v = ray.eval(z);
        if v == 0.0 {
            0.0
        } else {
            v * z.min(1.0)
        }
    };
    let mut sing = vec![];
    if k.singular_at_origin() {
        sing.push(0.0);
    }
    sing.extend(k.ray_singular(&[1.0]));
    let mut breaks = k.ray_breaks(&[1.0]);
    breaks.push(1.0);
    let r = li.integrate(&f, 0.0, f64::INFINITY, &breaks, &sing);
    let h0 = match r.status {
        IntegralStatus::Converged => r.value,
        IntegralStatus::Divergent => f64::INFINITY,
        IntegralStatus::Inconclusive => return Err(Error::Precondition("H(0⁺) could not be resolved".into())),
    };
    Ok(Form::Numeric { kernel: k.clone(), h0 })
}

impl Profile1D {
    pub fn provenance(&self) -> Provenance {
        match self.form {
            Form::Numeric { .. } => Provenance::Numeric,
            _ => Provenance::Analytic,
        }
    }

    /// Same kernel with G shifted by `c` and H by `c x + c'`.
    pub fn shifted(&self, c: f64, c_prime: f64) -> Profile1D {
        Profile1D { form: self.form.clone(), g_offset: self.g_offset + c, h_offset: self.h_offset + c_prime }
    }

    /// Forces the numeric path (for cross-checks).
    pub fn numeric(k: &Kernel) -> Result<Profile1D> {
        check(k)?;
        Ok(Profile1D { form: numeric_form(k)?, g_offset: 0.0, h_offset: 0.0 })
    }

    fn g0(&self, x: f64) -> f64 {
        match &self.form {
            Form::Fractional { a, scale } => -scale * x.powf(-a) / a,
            Form::Indicator { radius } => x.min(*radius),
            Form::LogGamma { gamma } => {
                if x >= 1.0 / 3.0 {
                    0.0
                } else {
                    -((-x.ln()).powf(*gamma) - 3f64.ln().powf(*gamma)) / gamma
                }
            }
            Form::Numeric { kernel, .. } => {
                let li = LineIntegrator::default();
                let ray = kernel.ray(&[1.0]);
                let f = |z: f64| ray.eval(z);
                let r = li.integrate(&f, x, f64::INFINITY, &kernel.ray_breaks(&[1.0]), &kernel.ray_singular(&[1.0]));
                -r.value
            }
        }
    }

    fn h0(&self, x: f64) -> f64 {
        match &self.form {
            Form::Fractional { a, scale } => {
                if (a - 1.0).abs() < 1e-15 {
                    -scale * x.ln()
                } else {
                    -scale * x.powf(1.0 - a) / (a * (1.0 - a))
                }
            }
            Form::Indicator { radius } => {
                let r = *radius;
                if x <= r {
                    0.5 * x * x
                } else {
                    0.5 * r * r + r * (x - r)
                }
            }
            Form::LogGamma { gamma: g } => {
                let x = x.min(1.0 / 3.0);
                let l3 = 3f64.ln().powf(*g);
                -gamma_ur(g + 1.0, -x.ln()) * gamma(g + 1.0) / g + x * l3 / g
            }
            Form::Numeric { kernel, h0 } => {
                // H(x) = H(0⁺) − ∫ K(z) min(z, x) dz
                let li = LineIntegrator::default();
                let ray = kernel.ray(&[1.0]);
                if h0.is_finite() {
                    let f = |z: f64| {
                        let v = ray.eval(z);
                        if v == 0.0 {
                            0.0
                        } else {
                            v * z.min(x)
                        }
                    };
                    let mut breaks = kernel.ray_breaks(&[1.0]);
                    breaks.push(x);
                    let mut sing = kernel.ray_singular(&[1.0]);
                    if kernel.singular_at_origin() {
                        sing.push(0.0);
                    }
                    h0 - li.integrate(&f, 0.0, f64::INFINITY, &breaks, &sing).value
                } else {
                    // normalized by H(1) = 0
                    let f = |z: f64| {
                        let v = ray.eval(z);
                        if v == 0.0 {
                            0.0
                        } else {
                            v * (z.min(1.0) - z.min(x))
                        }
                    };
                    let mut breaks = kernel.ray_breaks(&[1.0]);
                    breaks.extend([x, 1.0]);
                    li.integrate(&f, x.min(1.0), f64::INFINITY, &breaks, &kernel.ray_singular(&[1.0])).value
                }
            }
        }
    }

    /// `G(x)` for x > 0.
    pub fn g(&self, x: f64) -> f64 {
        self.g0(x) + self.g_offset
    }

    /// `H(x)` for x > 0.
    pub fn h(&self, x: f64) -> f64 {
        self.h0(x) + self.g_offset * x + self.h_offset
    }

    pub fn g_inf(&self) -> f64 {
        let base = match &self.form {
            Form::Fractional { .. } | Form::LogGamma { .. } | Form::Numeric { .. } => 0.0,
            Form::Indicator { radius } => *radius,
        };
        base + self.g_offset
    }

    /// `H(0⁺)`, possibly `+∞`.
    pub fn h_zero(&self) -> f64 {
        let base = match &self.form {
            Form::Fractional { a, .. } => {
                if *a < 1.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Form::Indicator { .. } => 0.0,
            Form::LogGamma { .. } => 0.0,
            Form::Numeric { h0, .. } => *h0,
        };
        base + self.h_offset
    }

    /// `P_K((−r, r)) = 2 (2 G(∞) r + H(0⁺) − H(2r))`; `+∞` when H(0⁺) is.
    pub fn interval_perimeter(&self, r: f64) -> f64 {
        let h0 = self.h_zero();
        if !h0.is_finite() {
            return f64::INFINITY;
        }
        2.0 * (2.0 * self.g_inf() * r + h0 - self.h(2.0 * r))
    }

    /// `dP/dr = 4 (G(∞) − G(2r))`.
    pub fn interval_perimeter_slope(&self, r: f64) -> f64 {
        4.0 * (self.g_inf() - self.g(2.0 * r))
    }
}

pub fn interval_perimeter(profile: &Profile1D, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Parameter("radius must be positive".into()));
    }
    Ok(profile.interval_perimeter(r))
}

#[derive(Clone, Debug, Serialize)]
pub struct CurveReport {
    #[serde(serialize_with = "ser_vec_f64")]
    pub radii: Vec<f64>,
    #[serde(serialize_with = "ser_vec_f64")]
    pub perimeters: Vec<f64>,
    pub monotone: Verdict,
    pub concave: Verdict,
    pub c1: Verdict,
    /// Smallest sampled radius from which the curve stays constant.
    pub constant_from: Option<f64>,
}

impl CurveReport {
    pub fn verdict(&self) -> Verdict {
        if [self.monotone, self.concave, self.c1].contains(&Verdict::Fails) {
            Verdict::Fails
        } else {
            Verdict::Holds
        }
    }

    /// CSV with columns r, perimeter, first difference, second difference.
    pub fn to_csv(&self, header: &str) -> String {
        let mut s = String::new();
        if !header.is_empty() {
            s.push_str(header);
            s.push('\n');
        }
        s.push_str("r,perimeter,first_difference,second_difference\n");
        let n = self.radii.len();
        for i in 0..n {
            let d1 = if i + 1 < n { self.perimeters[i + 1] - self.perimeters[i] } else { f64::NAN };
            let d2 = if i + 2 < n { self.perimeters[i + 2] - 2.0 * self.perimeters[i + 1] + self.perimeters[i] } else { f64::NAN };
            s.push_str(&format!("{},{},{},{}\n", csv_num(self.radii[i]), csv_num(self.perimeters[i]), csv_num(d1), csv_num(d2)));
        }
        s
    }
}

/// Monotonicity, concavity and C¹ checks of `r ↦ P((−r, r))` on the given
/// radii (strictly increasing).
pub fn perimeter_curve_report(profile: &Profile1D, radii: &[f64]) -> Result<CurveReport> {
    if radii.len() < 3 || radii.windows(2).any(|w| !(w[1] > w[0])) || radii[0] <= 0.0 {
        return Err(Error::Parameter("need at least three positive, strictly increasing radii".into()));
    }
    let p: Vec<f64> = radii.iter().map(|r| profile.interval_perimeter(*r)).collect();
    let scale = p.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let tol = 1e-9 * scale;
    let slopes: Vec<f64> = (0..p.len() - 1).map(|i| (p[i + 1] - p[i]) / (radii[i + 1] - radii[i])).collect();
    let monotone = Verdict::from_bool(p.windows(2).all(|w| w[1] - w[0] >= -tol));
    let stol = 1e-9 * slopes.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300) + tol / (radii[radii.len() - 1] - radii[0]);
    let concave = Verdict::from_bool(slopes.windows(2).all(|w| w[1] - w[0] <= stol));
    // mean-value check against the exact derivative at the ends of each step
    let d: Vec<f64> = radii.iter().map(|r| profile.interval_perimeter_slope(*r)).collect();
    let c1 = Verdict::from_bool(slopes.iter().enumerate().all(|(i, s)| {
        let (lo, hi) = (d[i].min(d[i + 1]), d[i].max(d[i + 1]));
        *s >= lo - stol - 1e-6 * s.abs() && *s <= hi + stol + 1e-6 * s.abs()
    }));
    let last = *p.last().unwrap();
    let mut constant_from = None;
    for i in (0..p.len()).rev() {
        if (p[i] - last).abs() <= tol {
            constant_from = Some(radii[i]);
        } else {
            break;
        }
    }
    if constant_from == Some(*radii.last().unwrap()) {
        constant_from = None;
    }
    Ok(CurveReport { radii: radii.to_vec(), perimeters: p, monotone, concave, c1, constant_from })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::Norm;
    use approx::assert_relative_eq;

    #[test]
    fn fractional_closed_form() {
        let p = build_profile(&Kernel::fractional(1, 0.5, 1.0).unwrap()).unwrap();
        assert_eq!(p.provenance(), Provenance::Analytic);
        assert_relative_eq!(p.g(4.0), -1.0, max_relative = 1e-15);
        assert_relative_eq!(p.h(4.0), -8.0, max_relative = 1e-15);
        assert_relative_eq!(interval_perimeter(&p, 0.5).unwrap(), 8.0, max_relative = 1e-15);
        assert_relative_eq!(interval_perimeter(&p, 2.0).unwrap(), 16.0, max_relative = 1e-15);
    }

    #[test]
    fn indicator_closed_form() {
        let p = build_profile(&Kernel::indicator(1, 1.0).unwrap()).unwrap();
        assert_relative_eq!(p.interval_perimeter(0.5), 1.0, max_relative = 1e-15);
        assert_relative_eq!(p.interval_perimeter(0.25), 0.75, max_relative = 1e-15);
        assert_relative_eq!(p.interval_perimeter(3.0), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn constants_cancel() {
        let p = build_profile(&Kernel::fractional(1, 0.3, 1.0).unwrap()).unwrap();
        let q = p.shifted(2.5, -7.0);
        for r in [0.1, 1.0, 3.0] {
            assert_relative_eq!(p.interval_perimeter(r), q.interval_perimeter(r), max_relative = 1e-12);
        }
    }

    #[test]
    fn numeric_matches_analytic() {
        let k = Kernel::fractional(1, 0.5, 1.0).unwrap();
        let a = build_profile(&k).unwrap();
        let n = Profile1D::numeric(&k).unwrap();
        assert_eq!(n.provenance(), Provenance::Numeric);
        for x in [0.01, 0.1, 1.0, 10.0] {
            assert_relative_eq!(n.g(x), a.g(x), max_relative = 1e-6);
        }
        for r in [0.1, 0.5, 2.0] {
            assert_relative_eq!(n.interval_perimeter(r), a.interval_perimeter(r), max_relative = 1e-6);
        }
        let lg = Kernel::new(1, KernelFamily::LogGamma { gamma: 1.5 }, Norm::Euclidean).unwrap();
        let a = build_profile(&lg).unwrap();
        let n = Profile1D::numeric(&lg).unwrap();
        for r in [0.01, 0.1, 0.2] {
            assert_relative_eq!(n.interval_perimeter(r), a.interval_perimeter(r), max_relative = 1e-6);
        }
    }

    #[test]
    fn curve_verdicts() {
        let radii: Vec<f64> = (1..=50).map(|i| 0.1 * i as f64).collect();
        let p = build_profile(&Kernel::fractional(1, 0.5, 1.0).unwrap()).unwrap();
        let r = perimeter_curve_report(&p, &radii).unwrap();
        assert_eq!(r.verdict(), Verdict::Holds);
        assert_eq!(r.constant_from, None);
        let lg = build_profile(&Kernel::new(1, KernelFamily::LogGamma { gamma: 2.0 }, Norm::Euclidean).unwrap()).unwrap();
        let radii: Vec<f64> = (1..=40).map(|i| 0.01 * i as f64).collect();
        let r = perimeter_curve_report(&lg, &radii).unwrap();
        assert_eq!(r.verdict(), Verdict::Holds);
        let c = r.constant_from.unwrap();
        assert!((c - 1.0 / 6.0).abs() <= 0.01, "{c}");
        let ind = build_profile(&Kernel::indicator(1, 1.0).unwrap()).unwrap();
        let radii: Vec<f64> = (1..=30).map(|i| 0.05 * i as f64).collect();
        assert_eq!(perimeter_curve_report(&ind, &radii).unwrap().verdict(), Verdict::Holds);
    }

    #[test]
    fn rejects_far_failure() {
        let k = Kernel::new(1, KernelFamily::Power { exponent: 0.5, scale: 1.0 }, Norm::Euclidean).unwrap();
        assert!(build_profile(&k).is_err());
    }
}
