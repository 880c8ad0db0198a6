//! Extension of functions from box domains to the whole space.
//!
//! A domain is a finite union of axis-aligned boxes whose faces lie on grid
//! faces. Each face carries a chart: the reflection through the face plane
//! and a cutoff width ρ. The extension reflects u evenly across every face
//! (successively per axis, which also fills the corners) and multiplies by
//! the tensor cutoff `Π_a (1 − dist_a/ρ)₊`, which equals 1 on the box. Boxes
//! must be more than 2ρ apart so that the extended pieces do not overlap.

use crate::error::{Error, Result};
use crate::functional::{seminorm, seminorm_with, Domain, QuadratureScheme, WeightTable};
use crate::grid::{mollify, Grid, GridFunction, GridSet};
use crate::kernels::Kernel;
use crate::numeric::fsum;
use crate::report::{ser_f64, Verdict};
use serde::Serialize;

/// One face of a box with its reflection plane and cutoff width.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Chart {
    pub box_index: usize,
    pub axis: usize,
    /// −1 for the lower face, +1 for the upper face.
    pub side: i8,
    pub plane: f64,
    pub rho: f64,
}

#[derive(Clone, Debug)]
struct CellBox {
    lo: Vec<usize>,
    hi: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct BoxDomain {
    grid: Grid,
    boxes: Vec<CellBox>,
    rho: f64,
    set: GridSet,
}

fn snap(g: &Grid, a: usize, x: f64) -> Result<usize> {
    let t = (x - g.origin()[a]) / g.h();
    let r = t.round();
    if (t - r).abs() > 1e-9 || r < 0.0 || r > g.counts()[a] as f64 {
        return Err(Error::Precondition(format!("box face {x} is not a grid face inside the grid along axis {a}")));
    }
    Ok(r as usize)
}

impl BoxDomain {
    pub fn new(grid: &Grid, boxes: &[(Vec<f64>, Vec<f64>)], rho: f64) -> Result<BoxDomain> {
        let d = grid.dim();
        let h = grid.h();
        if boxes.is_empty() {
            return Err(Error::Parameter("at least one box is required".into()));
        }
        if !(rho >= h) {
            return Err(Error::Parameter(format!("cutoff width {rho} must be at least one cell ({h})")));
        }
        let mut cb = Vec::new();
        for (lo, hi) in boxes {
            if lo.len() != d || hi.len() != d {
                return Err(Error::Dimension("box dimension does not match the grid".into()));
            }
            let mut l = Vec::new();
            let mut u = Vec::new();
            for a in 0..d {
                let (i, j) = (snap(grid, a, lo[a])?, snap(grid, a, hi[a])?);
                if j <= i {
                    return Err(Error::Parameter("box with empty extent".into()));
                }
                if ((j - i) as f64) * h < rho * (1.0 - 1e-12) {
                    return Err(Error::Precondition("cutoff width exceeds the box width; reflections would leave the box".into()));
                }
                // the cutoff region must stay inside the grid
                let r = (rho / h).ceil() as usize;
                if i < r || j + r > grid.counts()[a] {
                    return Err(Error::Precondition("charts do not fit inside the grid: enlarge the grid margin".into()));
                }
                l.push(i);
                u.push(j);
            }
            cb.push(CellBox { lo: l, hi: u });
        }
        for i in 0..cb.len() {
            for j in i + 1..cb.len() {
                let gap = (0..d)
                    .map(|a| {
                        let g1 = cb[j].lo[a] as i64 - cb[i].hi[a] as i64;
                        let g2 = cb[i].lo[a] as i64 - cb[j].hi[a] as i64;
                        g1.max(g2) as f64 * h
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                if gap <= 2.0 * rho {
                    return Err(Error::Precondition(format!("boxes {i} and {j} are closer than twice the cutoff width")));
                }
            }
        }
        let cells = (0..grid.len())
            .map(|f| {
                let idx = grid.unravel(f);
                cb.iter().any(|b| (0..d).all(|a| idx[a] >= b.lo[a] && idx[a] < b.hi[a]))
            })
            .collect();
        let set = GridSet::new(grid.clone(), cells)?;
        Ok(BoxDomain { grid: grid.clone(), boxes: cb, rho, set })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    /// Rasterized domain.
    pub fn set(&self) -> &GridSet {
        &self.set
    }

    pub fn charts(&self) -> Vec<Chart> {
        let g = &self.grid;
        let mut out = Vec::new();
        for (bi, b) in self.boxes.iter().enumerate() {
            for a in 0..g.dim() {
                for (side, i) in [(-1i8, b.lo[a]), (1, b.hi[a])] {
                    out.push(Chart { box_index: bi, axis: a, side, plane: g.origin()[a] + i as f64 * g.h(), rho: self.rho });
                }
            }
        }
        out
    }

    /// Mirror index and cutoff factor of a cell with respect to one box.
    fn image(&self, b: &CellBox, idx: &[usize]) -> Option<(Vec<usize>, f64)> {
        let h = self.grid.h();
        let mut m = idx.to_vec();
        let mut w = 1.0;
        for a in 0..idx.len() {
            let i = idx[a] as i64;
            let (lo, hi) = (b.lo[a] as i64, b.hi[a] as i64);
            let (mirror, dist) = if i < lo {
                (2 * lo - 1 - i, (lo - i) as f64 - 0.5)
            } else if i >= hi {
                (2 * hi - 1 - i, (i - hi) as f64 + 0.5)
            } else {
                (i, 0.0)
            };
            let f = (1.0 - dist * h / self.rho).max(0.0);
            if f == 0.0 {
                return None;
            }
            m[a] = mirror as usize;
            w *= f;
        }
        Some((m, w))
    }

    fn assemble(&self, u: &GridFunction, cutoff: bool) -> GridFunction {
        let g = &self.grid;
        let values: Vec<f64> = (0..g.len())
            .map(|f| {
                let idx = g.unravel(f);
                let mut v = 0.0;
                for b in &self.boxes {
                    if let Some((m, w)) = self.image(b, &idx) {
                        let x = u.values()[g.ravel(&m)];
                        v += if cutoff { w * x } else { x };
                    }
                }
                v
            })
            .collect();
        GridFunction::new(g.clone(), values).expect("finite values")
    }
}

/// Zero extension of u from Ω: `ũ = u` on Ω and 0 elsewhere. Requires u to
/// vanish on the cells of Ω closer than `standoff` to the complement.
pub fn zero_extend(u: &GridFunction, omega: &GridSet, standoff: f64) -> Result<GridFunction> {
    u.grid().check_same(omega.grid())?;
    if !(standoff > 0.0) {
        return Err(Error::Parameter("standoff must be positive".into()));
    }
    let m = support_distance(u, omega);
    if (m as f64) * u.grid().h() < standoff * (1.0 - 1e-12) && u.values().iter().any(|v| *v != 0.0) {
        return Err(Error::Precondition(format!(
            "u does not vanish within {standoff} of the complement (support is {} cells away)",
            m
        )));
    }
    Ok(u.restrict(omega))
}

/// Smallest sup-norm cell distance from the support of u (inside Ω) to the
/// complement of Ω, counting everything outside the grid box as complement.
pub fn support_distance(u: &GridFunction, omega: &GridSet) -> usize {
    let g = u.grid();
    let d = g.dim();
    let mut best = usize::MAX;
    let outside: Vec<Vec<i64>> = (0..g.len())
        .filter(|f| !omega.contains(*f))
        .map(|f| g.unravel(f).into_iter().map(|c| c as i64).collect())
        .collect();
    for f in 0..g.len() {
        if u.values()[f] == 0.0 || !omega.contains(f) {
            continue;
        }
        let idx = g.unravel(f);
        // distance to the exterior of the box
        let mut m = (0..d).map(|a| (idx[a] + 1).min(g.counts()[a] - idx[a])).min().unwrap();
        for y in &outside {
            let dist = (0..d).map(|a| (y[a] - idx[a] as i64).unsigned_abs() as usize).max().unwrap();
            m = m.min(dist);
        }
        best = best.min(m);
    }
    best
}

/// `[ũ]^p ≤ [u]^p_Ω + 2 ‖u‖_p^p · tail`, with the tail mass taken over the
/// shifts that can reach the complement from the support of u.
#[derive(Clone, Debug, Serialize)]
pub struct BoundCheck {
    #[serde(serialize_with = "ser_f64")]
    pub lhs: f64,
    #[serde(serialize_with = "ser_f64")]
    pub rhs: f64,
    #[serde(serialize_with = "ser_f64")]
    pub constant: f64,
    pub verdict: Verdict,
}

impl BoundCheck {
    fn new(lhs: f64, rhs: f64, constant: f64, tol: f64) -> BoundCheck {
        BoundCheck { lhs, rhs, constant, verdict: Verdict::from_bool(lhs <= rhs + tol) }
    }
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// `Σ_{|k|_∞ ≥ m} W_k` including the untabulated tail.
fn table_mass_beyond(t: &WeightTable, m: usize) -> f64 {
    let z = t.zero_index();
    let parts = (0..t.len()).filter(|f| *f != z).filter_map(|f| {
        let k = t.shift(f);
        let n = k.iter().map(|c| c.unsigned_abs() as usize).max().unwrap();
        (n >= m).then(|| t.weight_at(f))
    });
    fsum(parts.chain(std::iter::once(t.tail())))
}

pub fn vanishing_check(u: &GridFunction, omega: &GridSet, k: &Kernel, p: f64, standoff: f64) -> Result<BoundCheck> {
    let ext = zero_extend(u, omega, standoff)?;
    let scheme = QuadratureScheme::default();
    let table = crate::functional::table_for(k, u.grid(), &scheme)?;
    let lhs = seminorm_with(&ext, p, Domain::WholeSpace, &table)?;
    let inner = seminorm_with(u, p, Domain::Set(omega), &table)?;
    let m = support_distance(u, omega);
    let mass = if m == usize::MAX { 0.0 } else { table_mass_beyond(&table, m) };
    let s = fsum(u.restrict(omega).values().iter().map(|v| v.abs().powf(p)));
    let rhs = inner.value + 2.0 * s * mass;
    Ok(BoundCheck::new(lhs.value, rhs, mass / u.grid().cell_volume(), 1e-12 * rhs + lhs.error + inner.error))
}

/// Even reflection across the mid-plane of the grid along `axis`: the upper
/// half is kept and mirrored onto the lower half.
pub fn reflect_even(u: &GridFunction, axis: usize) -> Result<GridFunction> {
    let g = u.grid();
    if axis >= g.dim() {
        return Err(Error::Dimension("reflection axis out of range".into()));
    }
    let n = g.counts()[axis];
    if n % 2 != 0 {
        return Err(Error::Precondition("the box is not symmetric about a cell face along the reflection axis".into()));
    }
    let half = n / 2;
    let values = (0..g.len())
        .map(|f| {
            let mut idx = g.unravel(f);
            if idx[axis] < half {
                idx[axis] = n - 1 - idx[axis];
            }
            u.values()[g.ravel(&idx)]
        })
        .collect();
    GridFunction::new(g.clone(), values)
}

/// Upper half `{x_axis > mid}` of the grid as a set.
pub fn upper_half(g: &Grid, axis: usize) -> GridSet {
    let half = g.counts()[axis] / 2;
    let cells = (0..g.len()).map(|f| g.unravel(f)[axis] >= half).collect();
    GridSet::new(g.clone(), cells).expect("same grid")
}

/// Pointwise product with a cutoff taking values in [0, 1].
pub fn apply_cutoff(u: &GridFunction, psi: &GridFunction) -> Result<GridFunction> {
    u.grid().check_same(psi.grid())?;
    if psi.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Parameter("cutoff values must lie in [0, 1]".into()));
    }
    let values = u.values().iter().zip(psi.values()).map(|(a, b)| a * b).collect();
    GridFunction::new(u.grid().clone(), values)
}

/// Largest difference quotient `|ψ(x) − ψ(y)| / |x − y|` over neighbouring
/// cells (including diagonals).
pub fn lipschitz_constant(psi: &GridFunction) -> f64 {
    let g = psi.grid();
    let d = g.dim();
    let mut best = 0.0f64;
    let offsets = 3usize.pow(d as u32);
    for off in 0..offsets {
        let mut k = vec![0i64; d];
        let mut r = off;
        for a in 0..d {
            k[a] = (r % 3) as i64 - 1;
            r /= 3;
        }
        if k.iter().all(|c| *c == 0) {
            continue;
        }
        let dist = g.h() * (k.iter().map(|c| (c * c) as f64).sum::<f64>()).sqrt();
        crate::functional::for_each_pair(g, &k, |i, j| {
            if let Some(j) = j {
                best = best.max((psi.values()[j] - psi.values()[i]).abs() / dist);
            }
        });
    }
    best
}

/// `‖ψu‖_{W^{K,p}} ≤ C ‖u‖_{W^{K,p}}` (whole space, `‖·‖^p = ‖·‖_p^p + [·]^p`)
/// with `C^p = 2^{p−1} (1 + M)`, `M = h^{−d} Σ_k min(1, (L |k| h)^p) W_k`
/// for the Lipschitz constant L of ψ.
pub fn cutoff_check(u: &GridFunction, psi: &GridFunction, k: &Kernel, p: f64) -> Result<BoundCheck> {
    let pu = apply_cutoff(u, psi)?;
    let lip = lipschitz_constant(psi);
    let scheme = QuadratureScheme::default();
    let table = crate::functional::table_for(k, u.grid(), &scheme)?;
    let h = u.grid().h();
    let z = table.zero_index();
    let m = fsum(
        (0..table.len())
            .filter(|f| *f != z)
            .map(|f| {
                let kk = table.shift(f);
                let r = h * kk.iter().map(|c| (c * c) as f64).sum::<f64>().sqrt();
                (lip * r).powf(p).min(1.0) * table.weight_at(f)
            })
            .chain(std::iter::once(table.tail())),
    ) / u.grid().cell_volume();
    let cp = 2f64.powf(p - 1.0) * (1.0 + m);
    let norm = |f: &GridFunction| -> Result<(f64, f64)> {
        let s = seminorm_with(f, p, Domain::WholeSpace, &table)?;
        Ok((f.lp_norm_pow(p) + s.value, s.error))
    };
    let (a, ea) = norm(&pu)?;
    let (b, eb) = norm(u)?;
    let c = cp.powf(1.0 / p);
    Ok(BoundCheck::new(a.powf(1.0 / p), c * b.powf(1.0 / p), c, 1e-9 * c * b.powf(1.0 / p) + ea + eb))
}

#[derive(Clone, Debug, Serialize)]
pub struct StageNorms {
    pub stage: String,
    #[serde(serialize_with = "ser_f64")]
    pub lp: f64,
    #[serde(serialize_with = "ser_f64")]
    pub semi: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtensionReport {
    /// `‖u‖_{L^p(Ω)}`.
    #[serde(serialize_with = "ser_f64")]
    pub lp_in: f64,
    /// `[u]_{W^{K,p}(Ω)}`.
    #[serde(serialize_with = "ser_f64")]
    pub semi_in: f64,
    #[serde(serialize_with = "ser_f64")]
    pub lp_out: f64,
    #[serde(serialize_with = "ser_f64")]
    pub semi_out: f64,
    /// `‖ũ‖_{W^{K,p}(R^d)} / ‖u‖_{W^{K,p}(Ω)}`.
    #[serde(serialize_with = "ser_f64")]
    pub ratio: f64,
    pub stages: Vec<StageNorms>,
    /// "symmetric_norm" when the pinned norm is invariant under the face
    /// reflections (no doubling constant enters), "doubling" otherwise.
    pub reflection_route: String,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ExtendOptions {
    pub p: f64,
    /// Whether (Dec), (Dou) and (Nts) were certified for the kernel.
    pub certified: bool,
    pub scheme: QuadratureScheme,
}

impl Default for ExtendOptions {
    fn default() -> Self {
        ExtendOptions { p: 1.0, certified: false, scheme: QuadratureScheme::default() }
    }
}

fn norms(u: &GridFunction, p: f64, d: Domain<'_>, t: &WeightTable, omega: Option<&GridSet>) -> Result<(f64, f64)> {
    let lp = match omega {
        Some(o) => u.lp_norm_pow_on(p, o),
        None => u.lp_norm_pow(p),
    }
    .powf(1.0 / p);
    let semi = seminorm_with(u, p, d, t)?.value.powf(1.0 / p);
    Ok((lp, semi))
}

/// The extension `ũ` (equal to u on Ω) and its norm report.
pub fn extend(u: &GridFunction, omega: &BoxDomain, k: &Kernel, opts: &ExtendOptions) -> Result<(GridFunction, ExtensionReport)> {
    u.grid().check_same(omega.grid())?;
    let p = opts.p;
    let mut warnings = Vec::new();
    if !opts.certified {
        warnings.push("kernel hypotheses (Dec), (Dou), (Nts) not certified".to_string());
    }
    let table = crate::functional::table_for(k, u.grid(), &opts.scheme)?;
    let set = omega.set();
    let (lp_in, semi_in) = norms(u, p, Domain::Set(set), &table, Some(set))?;
    let zero = u.restrict(set);
    let reflected = omega.assemble(u, false);
    let out = omega.assemble(u, true);
    let mut stages = Vec::new();
    for (name, f) in [("zero_extension", &zero), ("reflection", &reflected), ("cutoff", &out)] {
        let (lp, semi) = norms(f, p, Domain::WholeSpace, &table, None)?;
        stages.push(StageNorms { stage: name.to_string(), lp, semi });
    }
    let (lp_out, semi_out) = (stages[2].lp, stages[2].semi);
    let num = (lp_out.powf(p) + semi_out.powf(p)).powf(1.0 / p);
    let den = (lp_in.powf(p) + semi_in.powf(p)).powf(1.0 / p);
    let ratio = if den == 0.0 { if num == 0.0 { 1.0 } else { f64::INFINITY } } else { num / den };
    let route = if (0..u.grid().dim()).all(|a| k.norm().reflection_symmetric(a)) { "symmetric_norm" } else { "doubling" };
    let report = ExtensionReport {
        lp_in,
        semi_in,
        lp_out,
        semi_out,
        ratio,
        stages,
        reflection_route: route.to_string(),
        warnings,
    };
    Ok((out, report))
}

/// Distances `‖(ũ_ε − u)|_Ω‖_{W^{K,p}(Ω)}` for mollified extensions.
pub fn density_check(u: &GridFunction, omega: &BoxDomain, k: &Kernel, p: f64, eps: &[f64]) -> Result<Vec<f64>> {
    let (ext, _) = extend(u, omega, k, &ExtendOptions { p, ..Default::default() })?;
    let set = omega.set();
    let mut out = Vec::new();
    for &e in eps {
        let m = mollify(&ext, e)?;
        let diff = m.combine(1.0, u, -1.0)?.restrict(set);
        let s = seminorm(&diff, k, p, Domain::Set(set), &QuadratureScheme::default())?;
        out.push((diff.lp_norm_pow_on(p, set) + s.value).powf(1.0 / p));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square_domain(h: f64) -> (Grid, BoxDomain) {
        let g = Grid::covering(h, &[-0.5, -0.5], &[1.5, 1.5]).unwrap();
        let d = BoxDomain::new(&g, &[(vec![0.0, 0.0], vec![1.0, 1.0])], 0.25).unwrap();
        (g, d)
    }

    #[test]
    fn extension_restricts_to_input() {
        let (g, dom) = square_domain(1.0 / 8.0);
        let k = Kernel::fractional(2, 0.5, 1.0).unwrap();
        let one = GridFunction::constant(&g, 1.0);
        let (ext, rep) = extend(&one, &dom, &k, &ExtendOptions::default()).unwrap();
        for f in dom.set().indices() {
            assert_eq!(ext.values()[f], 1.0);
        }
        assert!(ext.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(rep.ratio.is_finite() && rep.ratio > 0.0);
        assert_eq!(dom.charts().len(), 4);
    }

    #[test]
    fn compact_support_matches_zero_extension() {
        let (g, dom) = square_domain(1.0 / 16.0);
        let k = Kernel::fractional(2, 0.5, 1.0).unwrap();
        let u = GridFunction::from_fn(&g, |x| {
            let r2 = (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2);
            (0.04 - r2).max(0.0)
        });
        let (ext, _) = extend(&u, &dom, &k, &ExtendOptions::default()).unwrap();
        let z = zero_extend(&u, dom.set(), 0.25).unwrap();
        assert_eq!(ext, z);
    }

    #[test]
    fn reflection_doubles_lp_exactly() {
        let g = Grid::centered(2, 0.1, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = GridFunction::new(g.clone(), (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let r = reflect_even(&u, 1).unwrap();
        let up = upper_half(&g, 1);
        assert_eq!(r.lp_norm_pow(1.5), 2.0 * r.lp_norm_pow_on(1.5, &up));
        assert_eq!(r.lp_norm_pow_on(1.5, &up), u.lp_norm_pow_on(1.5, &up));
        let odd = Grid::new(0.1, vec![3, 3], vec![0.0, 0.0]).unwrap();
        assert!(reflect_even(&GridFunction::zeros(&odd), 0).is_err());
    }

    #[test]
    fn cutoff_rules() {
        let g = Grid::centered(1, 0.05, 1.0).unwrap();
        let u = GridFunction::from_fn(&g, |x| x[0].cos());
        let one = GridFunction::constant(&g, 1.0);
        assert_eq!(apply_cutoff(&u, &one).unwrap(), u);
        assert!(apply_cutoff(&u, &GridFunction::zeros(&g)).unwrap().values().iter().all(|v| *v == 0.0));
        assert!(apply_cutoff(&u, &GridFunction::constant(&g, 1.5)).is_err());
        let tent = GridFunction::from_fn(&g, |x| (1.0 - x[0].abs()).max(0.0));
        assert!((lipschitz_constant(&tent) - 1.0).abs() < 1e-9);
        let k = Kernel::fractional(1, 0.5, 1.0).unwrap();
        let c = cutoff_check(&u, &tent, &k, 1.0).unwrap();
        assert_eq!(c.verdict, Verdict::Holds);
    }

    #[test]
    fn rejects_bad_domains() {
        let g = Grid::covering(0.1, &[0.0], &[3.0]).unwrap();
        assert!(BoxDomain::new(&g, &[(vec![0.5], vec![1.0]), (vec![1.3], vec![2.0])], 0.2).is_err());
        assert!(BoxDomain::new(&g, &[(vec![0.0], vec![1.0])], 0.2).is_err());
        assert!(BoxDomain::new(&g, &[(vec![0.55], vec![1.0])], 0.2).is_err());
        assert!(BoxDomain::new(&g, &[(vec![0.5], vec![1.0]), (vec![1.5], vec![2.5])], 0.2).is_ok());
    }
}
