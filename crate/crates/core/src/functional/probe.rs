//! Partial seminorms over growing interaction ranges, used to exhibit the
//! blow-up of `[u]` for kernels that are not integrable away from the origin.

use super::{shift_energy, Domain, QuadratureScheme, WeightTable};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::kernels::{kernel_integral, Kernel, Region, Weight};
use crate::numeric::{fsum, IntegralStatus, LineIntegrator};
use crate::report::{ser_vec_f64, Verdict};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeSchedule {
    /// Shifts with `|k|_∞ h ≤ R_j`, `R_j = h 2^j` for `j = 0..levels`;
    /// radii beyond the grid add `2‖u‖_p^p h^d ∫_{annulus} K`.
    Expanding { levels: usize },
    /// One dimension: exclude `||z| − a| < η_j`, `η_j = a 2^{−j−1}`, around
    /// a singular radius a.
    Shrinking { radius: f64, levels: usize },
}

impl Default for ProbeSchedule {
    fn default() -> Self {
        ProbeSchedule::Expanding { levels: 40 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeCurve {
    /// Interaction radius (expanding) or exclusion half-width (shrinking).
    #[serde(serialize_with = "ser_vec_f64")]
    pub param: Vec<f64>,
    #[serde(serialize_with = "ser_vec_f64")]
    pub values: Vec<f64>,
}

impl ProbeCurve {
    /// `last / first` over the non-zero part of the curve.
    pub fn growth_ratio(&self) -> f64 {
        let first = self.values.iter().find(|v| **v > 0.0).copied();
        match (first, self.values.last()) {
            (Some(a), Some(b)) => b / a,
            _ => 1.0,
        }
    }

    /// Relative change over the last quarter of the curve.
    pub fn tail_change(&self) -> f64 {
        let n = self.values.len();
        if n < 4 {
            return f64::INFINITY;
        }
        let a = self.values[n - 1 - n / 4];
        let b = self.values[n - 1];
        if b == 0.0 {
            0.0
        } else {
            (b - a).abs() / b.abs()
        }
    }

    /// `Fails` (blow-up) when the curve keeps growing by more than 10×,
    /// `Holds` when it settles within 1%.
    pub fn verdict(&self) -> Verdict {
        if self.values.iter().all(|v| *v == 0.0) || self.tail_change() <= 0.01 {
            Verdict::Holds
        } else if self.growth_ratio() > 10.0 || self.values.last().map(|v| v.is_infinite()).unwrap_or(false) {
            Verdict::Fails
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn to_csv(&self, header: &str) -> String {
        let mut s = String::new();
        if !header.is_empty() {
            s.push_str(header);
            s.push('\n');
        }
        s.push_str("param,value\n");
        for (p, v) in self.param.iter().zip(&self.values) {
            s.push_str(&format!("{},{}\n", crate::report::csv_num(*p), crate::report::csv_num(*v)));
        }
        s
    }
}

pub fn divergence_probe(u: &GridFunction, k: &Kernel, p: f64, schedule: &ProbeSchedule) -> Result<ProbeCurve> {
    let g = u.grid();
    if k.dim() != g.dim() {
        return Err(Error::Dimension("kernel and grid dimensions differ".into()));
    }
    if !(p >= 1.0) {
        return Err(Error::Parameter("exponent p must be ≥ 1".into()));
    }
    match schedule {
        ProbeSchedule::Expanding { levels } => expanding(u, k, p, *levels),
        ProbeSchedule::Shrinking { radius, levels } => shrinking(u, k, p, *radius, *levels),
    }
}

fn expanding(u: &GridFunction, k: &Kernel, p: f64, levels: usize) -> Result<ProbeCurve> {
    let g = u.grid();
    let h = g.h();
    let d = g.dim();
    let scheme = QuadratureScheme { tail_compensation: false, ..QuadratureScheme::default() };
    let table = WeightTable::build(k, h, super::full_half(g), &scheme)?;
    let l = table.half();
    let mass = fsum(u.values().iter().map(|x| x.abs().powf(p)));
    // contribution per shell index m = |k|_∞
    let shifts = table.half_space();
    let per: Vec<(usize, f64)> = shifts
        .par_iter()
        .map(|&flat| {
            let kk = table.shift(flat);
            let m = kk.iter().map(|c| c.unsigned_abs() as usize).max().unwrap();
            let (w, _) = table.pair(flat);
            if w == 0.0 {
                return (m, 0.0);
            }
            let uk = shift_energy(u, p, Domain::WholeSpace, &kk);
            (m, if uk == 0.0 { 0.0 } else { w * uk })
        })
        .collect();
    let mut shell = vec![Vec::new(); l + 1];
    for (m, v) in per {
        shell[m].push(v);
    }
    let shell: Vec<f64> = shell.into_iter().map(fsum).collect();
    let li = LineIntegrator::default();
    let mut param = Vec::new();
    let mut values = Vec::new();
    let mut beyond = 0.0;
    let mut r_prev = (l as f64 + 0.5) * h;
    for j in 0..levels {
        let r = h * 2f64.powi(j as i32);
        let m = (r / h).round() as usize;
        let v = if m <= l {
            fsum(shell[..=m].iter().copied())
        } else {
            if r > r_prev && mass > 0.0 {
                let a = kernel_integral_annulus(k, r_prev, r, &li)?;
                beyond += 2.0 * mass * h.powi(d as i32) * a;
                r_prev = r;
            }
            fsum(shell.iter().copied()) + beyond
        };
        param.push(r);
        values.push(v);
    }
    Ok(ProbeCurve { param, values })
}

fn kernel_integral_annulus(k: &Kernel, r0: f64, r1: f64, _li: &LineIntegrator) -> Result<f64> {
    let a = kernel_integral(k, Region::CubeExterior(r0), Weight::One)?;
    let b = kernel_integral(k, Region::CubeExterior(r1), Weight::One)?;
    if a.status == IntegralStatus::Converged && b.status == IntegralStatus::Converged {
        return Ok((a.value - b.value).max(0.0));
    }
    // non-integrable tail: integrate the shell directly
    let r = kernel_integral(k, Region::Annulus(r0, r1), Weight::One)?;
    Ok(if r.status == IntegralStatus::Divergent { f64::INFINITY } else { r.value })
}

fn shrinking(u: &GridFunction, k: &Kernel, p: f64, a: f64, levels: usize) -> Result<ProbeCurve> {
    let g = u.grid();
    if g.dim() != 1 {
        return Err(Error::Unsupported("the shrinking-exclusion probe is one-dimensional".into()));
    }
    if !(a > 0.0) {
        return Err(Error::Parameter("singular radius must be positive".into()));
    }
    let h = g.h();
    let n = g.counts()[0] as i64;
    let li = LineIntegrator { rel_tol: 1e-10, ..LineIntegrator::default() };
    let mut param = Vec::new();
    let mut values = Vec::new();
    let energies: Vec<f64> = (1..n).into_par_iter().map(|m| shift_energy(u, p, Domain::WholeSpace, &[m])).collect();
    for j in 0..levels {
        let eta = a * 0.5f64.powi(j as i32 + 1);
        let terms: Vec<f64> = (1..n)
            .into_par_iter()
            .map(|m| {
                let uk = energies[(m - 1) as usize];
                if uk == 0.0 {
                    return 0.0;
                }
                let mut w = 0.0;
                for c in [m as f64 * h, -(m as f64) * h] {
                    w += excluded_weight(k, c, h, a, eta, &li);
                }
                w * uk
            })
            .collect();
        param.push(eta);
        values.push(fsum(terms));
    }
    Ok(ProbeCurve { param, values })
}

/// `∫ K(z) (h − |z − c|)₊ 1{||z| − a| ≥ η} dz`.
fn excluded_weight(k: &Kernel, c: f64, h: f64, a: f64, eta: f64, li: &LineIntegrator) -> f64 {
    let f = |z: f64| {
        if ((z.abs() - a).abs()) < eta {
            return 0.0;
        }
        let t = h - (z - c).abs();
        if t <= 0.0 {
            0.0
        } else {
            k.eval(&[z]) * t
        }
    };
    let mut pts = vec![c - h, c, c + h];
    for e in [a - eta, a + eta, -a - eta, -a + eta, 0.0] {
        if e > c - h && e < c + h {
            pts.push(e);
        }
    }
    let r = li.integrate(&f, c - h, c + h, &pts, &[]);
    if r.status == IntegralStatus::Divergent {
        f64::INFINITY
    } else {
        r.value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::kernels::KernelFamily;
    use crate::norm::Norm;

    fn bump(g: &Grid) -> GridFunction {
        GridFunction::from_fn(g, |x| (1.0 - x[0] * x[0]).max(0.0))
    }

    #[test]
    fn far_failure_grows() {
        let g = Grid::centered(1, 1.0 / 32.0, 2.0).unwrap();
        let k = Kernel::new(1, KernelFamily::Power { exponent: 1.0, scale: 1.0 }, Norm::Euclidean).unwrap();
        let c = divergence_probe(&bump(&g), &k, 1.0, &ProbeSchedule::default()).unwrap();
        assert!(c.growth_ratio() > 10.0, "{:?}", c.values);
        assert_eq!(c.verdict(), Verdict::Fails);
        assert!(c.values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn far_kernel_converges() {
        let g = Grid::centered(1, 1.0 / 32.0, 2.0).unwrap();
        let k = Kernel::fractional(1, 0.5, 1.0).unwrap();
        let c = divergence_probe(&bump(&g), &k, 1.0, &ProbeSchedule::default()).unwrap();
        assert!(c.tail_change() < 0.01, "{:?}", c.values);
        assert_eq!(c.verdict(), Verdict::Holds);
        let z = divergence_probe(&GridFunction::zeros(&g), &k, 1.0, &ProbeSchedule::default()).unwrap();
        assert!(z.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn offset_singularity_grows_under_shrinking_exclusion() {
        let g = Grid::centered(1, 1.0 / 16.0, 2.0).unwrap();
        let k = Kernel::new(1, KernelFamily::OffsetSingular { offset: 0.5, exponent: 1.0, reach: 0.25 }, Norm::Euclidean).unwrap();
        let c = divergence_probe(&bump(&g), &k, 1.0, &ProbeSchedule::Shrinking { radius: 0.5, levels: 30 }).unwrap();
        assert!(c.growth_ratio() > 10.0, "{:?}", c.values);
    }
}
