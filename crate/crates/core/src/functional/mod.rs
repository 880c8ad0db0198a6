//! Discrete non-local functionals: seminorm, perimeter, interaction energy,
//! curvature and the divergence probe.
//!
//! All sums run over integer cell shifts k and use the cell-pair weights of
//! [`WeightTable`]. Per-shift contributions are computed in parallel and
//! reduced with a correctly rounded sum, so results do not depend on the
//! number of worker threads.

mod correlate;
mod curvature;
mod probe;
mod weights;

pub use correlate::{correlate, for_each_pair, Correlation, Spectrum};
pub use curvature::{boundary_faces, curvature, on_boundary, CurvatureReport, EpsSchedule};
pub use probe::{divergence_probe, ProbeCurve, ProbeSchedule};
pub use weights::WeightTable;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, GridSet};
use crate::kernels::{kernel_integral, Kernel, Region, Weight};
use crate::numeric::{fsum, IntegralStatus};
use crate::report::ser_f64;
use rayon::prelude::*;
use serde::Serialize;

/// How the interactions of neighbouring cells are integrated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NearFieldRule {
    /// Midpoint weights `K(kh) h^{2d}`; the diagonal cell is dropped when K
    /// is singular there. Cannot bound the error of singular kernels.
    ExcludeDiagonalCell,
    /// Exact integration of the kernel against the cell-pair overlap for
    /// the neighbouring shifts (the default).
    AnalyticCorrection,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadratureScheme {
    pub near_field: NearFieldRule,
    /// Interactions beyond this euclidean distance are folded into the tail
    /// mass instead of being summed shift by shift.
    pub outer_radius: Option<f64>,
    /// Add the interactions with cells outside the grid box.
    pub tail_compensation: bool,
}

impl Default for QuadratureScheme {
    fn default() -> Self {
        QuadratureScheme { near_field: NearFieldRule::AnalyticCorrection, outer_radius: None, tail_compensation: true }
    }
}

impl QuadratureScheme {
    pub fn label(&self) -> String {
        let near = match self.near_field {
            NearFieldRule::ExcludeDiagonalCell => "exclude_diagonal_cell",
            NearFieldRule::AnalyticCorrection => "analytic_correction",
        };
        let outer = self.outer_radius.map(|r| format!(" outer_radius={r}")).unwrap_or_default();
        format!("{near} tail_compensation={}{outer} summation=fixed", self.tail_compensation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyMethod {
    Direct,
    Fft,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    #[serde(serialize_with = "ser_f64")]
    pub value: f64,
    #[serde(serialize_with = "ser_f64")]
    pub error: f64,
    /// Contribution of the shifts with `|k|_∞ ≤ 1`.
    #[serde(serialize_with = "ser_f64")]
    pub near_share: f64,
    /// Contribution of the interactions beyond the tabulated shifts.
    #[serde(serialize_with = "ser_f64")]
    pub tail_share: f64,
    pub method: EnergyMethod,
    pub scheme: String,
    /// The scheme could not bound some part of the sum.
    pub inconclusive: bool,
}

impl EnergyReport {
    fn zero(method: EnergyMethod, scheme: &str) -> EnergyReport {
        EnergyReport {
            value: 0.0,
            error: 0.0,
            near_share: 0.0,
            tail_share: 0.0,
            method,
            scheme: scheme.to_string(),
            inconclusive: false,
        }
    }
}

/// Integration domain for the seminorm and the perimeter.
#[derive(Clone, Copy, Debug)]
pub enum Domain<'a> {
    /// All of R^d; data vanish outside the grid box.
    WholeSpace,
    /// A subset of the grid box.
    Set(&'a GridSet),
}

/// Largest shift needed to couple any two cells of the grid.
pub fn full_half(grid: &Grid) -> usize {
    grid.counts().iter().copied().max().unwrap_or(1).saturating_sub(1).max(1)
}

/// Weight table covering every pair of cells of the grid.
pub fn table_for(k: &Kernel, grid: &Grid, scheme: &QuadratureScheme) -> Result<WeightTable> {
    if k.dim() != grid.dim() {
        return Err(Error::Dimension(format!("kernel dimension {} but grid dimension {}", k.dim(), grid.dim())));
    }
    WeightTable::build(k, grid.h(), full_half(grid), scheme)
}

fn mul(w: f64, c: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        w * c
    }
}

struct Accum {
    terms: Vec<f64>,
    errors: Vec<f64>,
    near: Vec<f64>,
}

impl Accum {
    fn from(parts: Vec<(f64, f64, bool)>) -> Accum {
        let mut a = Accum { terms: Vec::with_capacity(parts.len()), errors: Vec::new(), near: Vec::new() };
        for (v, e, near) in parts {
            a.terms.push(v);
            a.errors.push(e);
            if near {
                a.near.push(v);
            }
        }
        a
    }

    fn report(self, tail: f64, tail_err: f64, method: EnergyMethod, scheme: &str, inconclusive: bool) -> EnergyReport {
        let value = fsum(self.terms.into_iter().chain(std::iter::once(tail)));
        let error = fsum(self.errors.into_iter().chain(std::iter::once(tail_err)));
        EnergyReport {
            value: value.max(0.0),
            error: if error.is_nan() { f64::INFINITY } else { error.abs() },
            near_share: fsum(self.near),
            tail_share: tail,
            method,
            scheme: scheme.to_string(),
            inconclusive,
        }
    }
}

fn pow_abs(x: f64, p: f64) -> f64 {
    let a = x.abs();
    if p == 1.0 {
        a
    } else if p == 2.0 {
        a * a
    } else {
        a.powf(p)
    }
}

/// `U(k) = Σ |u(x + k) − u(x)|^p` over the pairs counted by the domain.
pub fn shift_energy(u: &GridFunction, p: f64, domain: Domain<'_>, k: &[i64]) -> f64 {
    let g = u.grid();
    let v = u.values();
    let mut acc = 0.0;
    match domain {
        Domain::Set(omega) => {
            let m = omega.cells();
            for_each_pair(g, k, |i, j| {
                if let Some(j) = j {
                    if m[i] && m[j] {
                        acc += pow_abs(v[j] - v[i], p);
                    }
                }
            });
        }
        Domain::WholeSpace => {
            for_each_pair(g, k, |i, j| match j {
                Some(j) => acc += pow_abs(v[j] - v[i], p),
                None => acc += pow_abs(v[i], p),
            });
            let back: Vec<i64> = k.iter().map(|c| -c).collect();
            for_each_pair(g, &back, |i, j| {
                if j.is_none() {
                    acc += pow_abs(v[i], p);
                }
            });
        }
    }
    acc
}

/// Discrete seminorm `Σ_{x,y} |u(x) − u(y)|^p W(x − y)` with a prebuilt table.
pub fn seminorm_with(u: &GridFunction, p: f64, domain: Domain<'_>, table: &WeightTable) -> Result<EnergyReport> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Parameter(format!("exponent p must be ≥ 1, got {p}")));
    }
    let g = u.grid();
    if let Domain::Set(omega) = domain {
        g.check_same(omega.grid())?;
    }
    if table.dim() != g.dim() || (table.h() - g.h()).abs() > 1e-12 * g.h() {
        return Err(Error::Precondition("weight table does not match the grid".into()));
    }
    let scheme = "";
    let counts = g.counts().to_vec();
    let shifts = table.half_space();
    let parts: Vec<(f64, f64, bool)> = shifts
        .par_iter()
        .map(|&flat| {
            let k = table.shift(flat);
            if matches!(domain, Domain::Set(_)) && k.iter().zip(&counts).any(|(c, n)| c.unsigned_abs() as usize >= *n) {
                return (0.0, 0.0, false);
            }
            let (w, e) = table.pair(flat);
            if w == 0.0 {
                return (0.0, 0.0, table.is_near(flat));
            }
            let uk = shift_energy(u, p, domain, &k);
            (mul(w, uk), mul(e, uk), table.is_near(flat))
        })
        .collect();
    let (tail, tail_err) = match domain {
        Domain::WholeSpace => {
            let s = fsum(u.values().iter().map(|x| pow_abs(*x, p)));
            (mul(table.tail(), 2.0 * s), mul(table.tail_error(), 2.0 * s))
        }
        Domain::Set(_) => (0.0, 0.0),
    };
    Ok(Accum::from(parts).report(tail, tail_err, EnergyMethod::Direct, scheme, table.inconclusive))
}

/// Discrete non-local seminorm `[u]^p` of a grid function over a domain.
pub fn seminorm(u: &GridFunction, k: &Kernel, p: f64, domain: Domain<'_>, scheme: &QuadratureScheme) -> Result<EnergyReport> {
    let table = table_for(k, u.grid(), scheme)?;
    let mut r = seminorm_with(u, p, domain, &table)?;
    r.scheme = scheme.label();
    Ok(r)
}

fn mask(set: &GridSet) -> Vec<f64> {
    set.cells().iter().map(|c| *c as u8 as f64).collect()
}

/// `Σ_{x∈X, y∈Y} W(x − y)` from the correlation `C_{Y,X}`, with the
/// near-field share and the error bound.
fn cross_sum(table: &WeightTable, c: &Correlation) -> Vec<(f64, f64, bool)> {
    (0..table.len())
        .into_par_iter()
        .map(|flat| {
            let k = table.shift(flat);
            let n = c.get(&k);
            if n == 0.0 {
                return (0.0, 0.0, false);
            }
            (mul(table.weight_at(flat), n), mul(table.error_at(flat), n), table.is_near(flat))
        })
        .collect()
}

/// K-perimeter with a prebuilt table.
pub fn perimeter_with(e: &GridSet, domain: Domain<'_>, table: &WeightTable) -> Result<EnergyReport> {
    let g = e.grid();
    if table.dim() != g.dim() || (table.h() - g.h()).abs() > 1e-12 * g.h() {
        return Err(Error::Precondition("weight table does not match the grid".into()));
    }
    if e.is_empty() {
        return Ok(EnergyReport::zero(EnergyMethod::Fft, ""));
    }
    match domain {
        Domain::WholeSpace => {
            let n = e.count() as f64;
            let se = Spectrum::new(g, &mask(e));
            let c = correlate(&se, &se, true);
            let parts: Vec<(f64, f64, bool)> = table
                .half_space()
                .into_par_iter()
                .map(|flat| {
                    let k = table.shift(flat);
                    let miss = n - c.get(&k);
                    let (w, err) = table.pair(flat);
                    (mul(w, miss), mul(err, miss), table.is_near(flat))
                })
                .collect();
            Ok(Accum::from(parts).report(mul(table.tail(), n), mul(table.tail_error(), n), EnergyMethod::Fft, "", table.inconclusive))
        }
        Domain::Set(omega) => {
            g.check_same(omega.grid())?;
            let a = e.intersect(omega)?;
            let b = omega.minus(e)?;
            let out = omega.complement();
            let c_out = out.minus(e)?;
            let d_out = out.intersect(e)?;
            let full = GridSet::full(g);
            let (sa, sb) = (Spectrum::new(g, &mask(&a)), Spectrum::new(g, &mask(&b)));
            let mut parts = Vec::new();
            // ½ [S(A,B) + S(B,A)]
            for (x, y) in [(&sb, &sa), (&sa, &sb)] {
                parts.extend(cross_sum(table, &correlate(x, y, true)).into_iter().map(|(v, e, n)| (0.5 * v, 0.5 * e, n)));
            }
            if !c_out.is_empty() {
                parts.extend(cross_sum(table, &correlate(&Spectrum::new(g, &mask(&c_out)), &sa, true)));
            }
            if !d_out.is_empty() {
                parts.extend(cross_sum(table, &correlate(&Spectrum::new(g, &mask(&d_out)), &sb, true)));
            }
            // S(A, outside the box): shifts whose partner leaves the box
            let na = a.count() as f64;
            let mut tail = 0.0;
            let mut tail_err = 0.0;
            if na > 0.0 {
                let cb = correlate(&Spectrum::new(g, &mask(&full)), &sa, true);
                let z = table.zero_index();
                parts.extend((0..table.len()).into_par_iter().filter(|f| *f != z).map(|flat| {
                    let leave = na - cb.get(&table.shift(flat));
                    (mul(table.weight_at(flat), leave), mul(table.error_at(flat), leave), table.is_near(flat))
                }).collect::<Vec<_>>());
                tail = mul(table.tail(), na);
                tail_err = mul(table.tail_error(), na);
            }
            Ok(Accum::from(parts).report(tail, tail_err, EnergyMethod::Fft, "", table.inconclusive))
        }
    }
}

/// K-perimeter `P_K(E; Ω)`; with [`Domain::WholeSpace`] this is
/// `P_K(E) = ½ [χ_E]`.
pub fn perimeter(e: &GridSet, k: &Kernel, domain: Domain<'_>, scheme: &QuadratureScheme) -> Result<EnergyReport> {
    let table = table_for(k, e.grid(), scheme)?;
    let mut r = perimeter_with(e, domain, &table)?;
    r.scheme = scheme.label();
    Ok(r)
}

/// Direct double sum `Σ_{x∈X} Σ_{y∈E} W(y − x)` for the given cells X ⊆ E
/// (all of E gives the interaction energy).
pub fn energy_direct_partial(e: &GridSet, table: &WeightTable, rows: &[usize]) -> (f64, f64) {
    let g = e.grid();
    let d = g.dim();
    let l = table.half() as i64;
    let side = 2 * l + 1;
    let members: Vec<Vec<i64>> = e.indices().into_iter().map(|i| g.unravel(i).into_iter().map(|c| c as i64).collect()).collect();
    let w = table.weights();
    let parts: Vec<(f64, f64)> = rows
        .par_iter()
        .map(|&x| {
            let xi: Vec<i64> = g.unravel(x).into_iter().map(|c| c as i64).collect();
            let mut s = 0.0;
            let mut err = 0.0;
            'outer: for y in &members {
                let mut idx = 0i64;
                for a in 0..d {
                    let k = y[a] - xi[a];
                    if k < -l || k > l {
                        continue 'outer;
                    }
                    idx = idx * side + k + l;
                }
                s += w[idx as usize];
                err += table.error_at(idx as usize);
            }
            (s, err)
        })
        .collect();
    (fsum(parts.iter().map(|p| p.0)), fsum(parts.iter().map(|p| p.1)))
}

/// Interaction energy `V_K(E) = Σ_{x,y∈E} W(y − x)`.
pub fn interaction_energy_with(e: &GridSet, table: &WeightTable, method: EnergyMethod) -> Result<EnergyReport> {
    if e.is_empty() {
        return Ok(EnergyReport::zero(method, ""));
    }
    let z = table.zero_index();
    let near = |parts: &[(f64, f64, bool)]| parts.iter().filter(|p| p.2).map(|p| p.0).collect::<Vec<_>>();
    match method {
        EnergyMethod::Direct => {
            let rows = e.indices();
            let (value, error) = energy_direct_partial(e, table, &rows);
            // near share from the counts of the neighbouring shifts
            let se = Spectrum::new(e.grid(), &mask(e));
            let c = correlate(&se, &se, true);
            let parts: Vec<(f64, f64, bool)> = (0..table.len())
                .filter(|f| table.is_near(*f))
                .map(|f| (mul(table.weight_at(f), c.get(&table.shift(f))), 0.0, true))
                .collect();
            Ok(EnergyReport {
                value,
                error,
                near_share: fsum(near(&parts)),
                tail_share: 0.0,
                method,
                scheme: String::new(),
                inconclusive: table.inconclusive,
            })
        }
        EnergyMethod::Fft => {
            if !table.weight_at(z).is_finite() {
                return Err(Error::Unsupported("fft energy needs a bounded kernel; cap or truncate it first".into()));
            }
            let se = Spectrum::new(e.grid(), &mask(e));
            let c = correlate(&se, &se, true);
            let parts = cross_sum(table, &c);
            Ok(Accum::from(parts).report(0.0, 0.0, method, "", table.inconclusive))
        }
    }
}

pub fn interaction_energy(e: &GridSet, k: &Kernel, method: EnergyMethod, scheme: &QuadratureScheme) -> Result<EnergyReport> {
    if method == EnergyMethod::Fft && !k.is_bounded() {
        return Err(Error::Unsupported("fft energy is rejected for kernels with singular points; supply a capped kernel".into()));
    }
    let table = table_for(k, e.grid(), scheme)?;
    let mut r = interaction_energy_with(e, &table, method)?;
    r.scheme = scheme.label();
    Ok(r)
}

/// `P_K(E) = ‖K‖₁ |E| − V_K(E)` for integrable symmetric kernels.
pub fn perimeter_via_energy(e: &GridSet, k: &Kernel, scheme: &QuadratureScheme) -> Result<EnergyReport> {
    if !k.is_symmetric() {
        return Err(Error::Precondition("perimeter via energy needs a symmetric kernel".into()));
    }
    let mass = kernel_integral(k, Region::All, Weight::One)?;
    if mass.status != IntegralStatus::Converged {
        return Err(Error::Precondition("perimeter via energy needs an integrable kernel".into()));
    }
    if e.is_empty() {
        return Ok(EnergyReport::zero(EnergyMethod::Direct, &scheme.label()));
    }
    let method = if k.is_bounded() { EnergyMethod::Fft } else { EnergyMethod::Direct };
    let v = interaction_energy(e, k, method, scheme)?;
    let vol = e.volume();
    Ok(EnergyReport {
        value: (mass.value * vol - v.value).max(0.0),
        error: mass.error * vol + v.error + 1e-12 * mass.value * vol,
        near_share: v.near_share,
        tail_share: 0.0,
        method,
        scheme: scheme.label(),
        inconclusive: v.inconclusive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{rasterize, Shape};
    use crate::kernels::Truncation;
    use approx::assert_relative_eq;

    fn line(h: f64, half_width: f64) -> Grid {
        Grid::centered(1, h, half_width).unwrap()
    }

    #[test]
    fn seminorm_of_interval_indicator() {
        let g = line(1.0 / 64.0, 4.0);
        let u = rasterize(&g, &Shape::Box { lo: vec![-0.5], hi: vec![0.5] }).unwrap().indicator();
        let k = Kernel::indicator(1, 1.0).unwrap();
        let full = GridSet::full(&g);
        let r = seminorm(&u, &k, 1.0, Domain::Set(&full), &QuadratureScheme::default()).unwrap();
        assert_relative_eq!(r.value, 2.0, max_relative = 0.02);
        let c = GridFunction::constant(&g, 3.0);
        assert_eq!(seminorm(&c, &k, 2.0, Domain::Set(&full), &QuadratureScheme::default()).unwrap().value, 0.0);
    }

    #[test]
    fn perimeter_of_interval() {
        let g = line(1.0 / 64.0, 4.0);
        let e = rasterize(&g, &Shape::Box { lo: vec![-0.5], hi: vec![0.5] }).unwrap();
        let s = QuadratureScheme::default();
        let k = Kernel::indicator(1, 1.0).unwrap();
        let p = perimeter(&e, &k, Domain::WholeSpace, &s).unwrap();
        assert_relative_eq!(p.value, 1.0, max_relative = 1e-9);
        let f = Kernel::fractional(1, 0.5, 1.0).unwrap();
        let p = perimeter(&e, &f, Domain::WholeSpace, &s).unwrap();
        assert_relative_eq!(p.value, 8.0, max_relative = 1e-6);
        assert!(p.error < 1e-3 && p.tail_share > 0.0);
        assert_eq!(perimeter(&GridSet::empty(&g), &f, Domain::WholeSpace, &s).unwrap().value, 0.0);
    }

    #[test]
    fn perimeter_is_half_whole_space_seminorm() {
        let g = Grid::centered(2, 0.1, 0.8).unwrap();
        let e = rasterize(&g, &Shape::ball(vec![0.05, 0.0], 0.4)).unwrap();
        let k = Kernel::fractional(2, 0.5, 1.0).unwrap();
        let s = QuadratureScheme::default();
        let p = perimeter(&e, &k, Domain::WholeSpace, &s).unwrap();
        let sn = seminorm(&e.indicator(), &k, 1.0, Domain::WholeSpace, &s).unwrap();
        assert_relative_eq!(p.value, 0.5 * sn.value, max_relative = 1e-12);
    }

    #[test]
    fn relative_perimeter_with_box_domain() {
        let g = line(1.0 / 32.0, 3.0);
        let e = rasterize(&g, &Shape::Box { lo: vec![-0.5], hi: vec![0.5] }).unwrap();
        let k = Kernel::fractional(1, 0.5, 1.0).unwrap();
        let s = QuadratureScheme::default();
        let full = GridSet::full(&g);
        let whole = perimeter(&e, &k, Domain::WholeSpace, &s).unwrap();
        let rel = perimeter(&e, &k, Domain::Set(&full), &s).unwrap();
        assert_relative_eq!(whole.value, rel.value, max_relative = 1e-10);
        let omega = rasterize(&g, &Shape::Box { lo: vec![0.0], hi: vec![2.0] }).unwrap();
        let part = perimeter(&e, &k, Domain::Set(&omega), &s).unwrap();
        assert!(part.value < whole.value);
    }

    #[test]
    fn interaction_energy_interval() {
        let g = line(1.0 / 32.0, 2.0);
        let e = rasterize(&g, &Shape::Box { lo: vec![-0.5], hi: vec![0.5] }).unwrap();
        let k = Kernel::indicator(1, 1.0).unwrap();
        let s = QuadratureScheme::default();
        let d = interaction_energy(&e, &k, EnergyMethod::Direct, &s).unwrap();
        let f = interaction_energy(&e, &k, EnergyMethod::Fft, &s).unwrap();
        assert_relative_eq!(d.value, 1.0, max_relative = 1e-9);
        assert_relative_eq!(d.value, f.value, max_relative = 1e-12);
        let frac = Kernel::fractional(1, 0.5, 1.0).unwrap();
        assert!(interaction_energy(&e, &frac, EnergyMethod::Fft, &s).is_err());
        let via = perimeter_via_energy(&e, &k, &s).unwrap();
        assert_relative_eq!(via.value, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn perimeter_via_energy_far_kernel() {
        let g = line(1.0 / 64.0, 1.0);
        let e = rasterize(&g, &Shape::Box { lo: vec![-0.25], hi: vec![0.25] }).unwrap();
        let k = Kernel::fractional(1, 0.5, 1.0).unwrap().truncate(Truncation::OutsideBall(1.0)).unwrap();
        let s = QuadratureScheme::default();
        let r = perimeter_via_energy(&e, &k, &s).unwrap();
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-6);
        let p = perimeter(&e, &k, Domain::WholeSpace, &s).unwrap();
        assert_relative_eq!(p.value, 2.0, max_relative = 1e-6);
    }

    #[test]
    fn symmetrization_invariance_is_exact() {
        let g = line(0.05, 1.0);
        let u = GridFunction::from_fn(&g, |x| (3.0 * x[0]).sin() + x[0] * x[0]);
        let k = Kernel::new(1, crate::kernels::KernelFamily::OneSidedExp { rate: 1.5 }, crate::norm::Norm::Euclidean).unwrap();
        let s = QuadratureScheme::default();
        for d in [Domain::WholeSpace, Domain::Set(&GridSet::full(&g))] {
            let a = seminorm(&u, &k, 1.5, d, &s).unwrap();
            let b = seminorm(&u, &k.symmetrize(), 1.5, d, &s).unwrap();
            assert_eq!(a.value, b.value);
        }
    }
}
