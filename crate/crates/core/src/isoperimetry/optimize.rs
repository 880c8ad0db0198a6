//! Volume-constrained perimeter minimization over grid sets of fixed cell
//! count, by pair swaps: remove a boundary cell a of E, add a cell b outside E.
//!
//! With `F(c) = Σ_{y∈E, y≠c} W(c − y)` the change of `P_K` under the swap
//! `a → b` is `2F(a) − 2F(b) + 2W(b − a)`; F is updated in O(N) per accepted
//! move. A cell with `F(b) = 0` can never give a decrease, so the greedy
//! scan only visits cells that interact with E; annealing proposes cells
//! touching E or, with probability ½, any cell outside E.

use crate::error::{Error, Result};
use crate::functional::{perimeter_with, table_for, Domain, QuadratureScheme, WeightTable};
use crate::grid::GridSet;
use crate::kernels::Kernel;
use crate::report::{csv_num, ser_f64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Geometric cooling `T_k = T₀ · cooling^k`, one level every
/// `moves_per_level` proposals.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnnealSchedule {
    /// Initial temperature; the median |ΔP| of 100 random probe moves when
    /// unset.
    pub t0: Option<f64>,
    pub cooling: f64,
    /// Proposals per temperature level; the boundary size of the initial set
    /// when unset.
    pub moves_per_level: Option<usize>,
    /// Finish with a greedy descent from the best annealed state.
    pub polish: bool,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule { t0: None, cooling: 0.97, moves_per_level: None, polish: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OptimizeMode {
    /// Steepest descent over all swaps, ties broken by the smallest (a, b).
    Greedy,
    Anneal(AnnealSchedule),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizeOptions {
    pub mode: OptimizeMode,
    /// Greedy: accepted moves; anneal: proposals.
    pub max_moves: usize,
    pub seed: u64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions { mode: OptimizeMode::Greedy, max_moves: 10_000, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub iteration: usize,
    #[serde(serialize_with = "ser_f64")]
    pub perimeter: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ShapeResult {
    #[serde(skip)]
    pub best: GridSet,
    pub cells: usize,
    #[serde(serialize_with = "ser_f64")]
    pub volume: f64,
    /// Accepted states (iteration, perimeter), starting with the initial set.
    pub trace: Vec<TracePoint>,
    pub accepted: usize,
    pub rejected: usize,
    #[serde(serialize_with = "ser_f64")]
    pub initial_perimeter: f64,
    /// `P_K(best)` recomputed from scratch: an upper bound on `p_K(m)`.
    #[serde(serialize_with = "ser_f64")]
    pub profile_estimate: f64,
    /// No improving move was left (greedy) or the last greedy polish stopped.
    pub converged: bool,
    pub seed: u64,
    pub mode: OptimizeMode,
}

impl ShapeResult {
    pub fn to_csv(&self, header: &str) -> String {
        let mut s = String::new();
        if !header.is_empty() {
            s.push_str(header);
            s.push('\n');
        }
        s.push_str("iteration,perimeter\n");
        for t in &self.trace {
            s.push_str(&format!("{},{}\n", t.iteration, csv_num(t.perimeter)));
        }
        s
    }
}

/// Minimizes `P_K` over sets with the cell count of `init`, which must match
/// the volume `m` within one cell.
pub fn optimize(k: &Kernel, init: &GridSet, m: f64, opts: &OptimizeOptions, scheme: &QuadratureScheme) -> Result<ShapeResult> {
    let g = init.grid();
    let cell = g.cell_volume();
    if (init.volume() - m).abs() > cell * (1.0 + 1e-9) {
        return Err(Error::Precondition(format!("initial volume {} differs from m = {m} by more than one cell", init.volume())));
    }
    if init.is_empty() || init.count() == g.len() {
        return Err(Error::Precondition("the initial set must be neither empty nor the whole grid".into()));
    }
    // P_K only sees the symmetric part of the kernel
    let sym = if k.is_symmetric() { k.clone() } else { k.symmetrize() };
    let table = table_for(&sym, g, scheme)?;
    let p0 = perimeter_with(init, Domain::WholeSpace, &table)?.value;
    if !p0.is_finite() {
        return Err(Error::Precondition("the initial set has infinite perimeter".into()));
    }
    let mut st = State::new(init, &table);
    let mut trace = vec![TracePoint { iteration: 0, perimeter: p0 }];
    let mut p = p0;
    let (mut accepted, mut rejected) = (0, 0);
    let mut converged;
    match &opts.mode {
        OptimizeMode::Greedy => {
            converged = greedy(&mut st, &mut p, opts.max_moves, &mut trace, &mut accepted);
        }
        OptimizeMode::Anneal(sched) => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let (best_cells, best_p) = anneal(&mut st, &mut p, sched, opts.max_moves, &mut rng, &mut trace, &mut accepted, &mut rejected);
            converged = false;
            if sched.polish {
                let best = GridSet::new(g.clone(), best_cells)?;
                st = State::new(&best, &table);
                p = best_p;
                let start = trace.last().map(|t| t.iteration).unwrap_or(0);
                let mut polish_trace = vec![];
                converged = greedy(&mut st, &mut p, opts.max_moves, &mut polish_trace, &mut accepted);
                trace.extend(polish_trace.into_iter().map(|t| TracePoint { iteration: start + t.iteration, perimeter: t.perimeter }));
            } else {
                st = State::new(&GridSet::new(g.clone(), best_cells)?, &table);
            }
        }
    }
    let best = GridSet::new(g.clone(), st.cells.clone())?;
    let profile_estimate = perimeter_with(&best, Domain::WholeSpace, &table)?.value;
    Ok(ShapeResult {
        cells: best.count(),
        volume: best.volume(),
        best,
        trace,
        accepted,
        rejected,
        initial_perimeter: p0,
        profile_estimate,
        converged,
        seed: opts.seed,
        mode: opts.mode.clone(),
    })
}

/// Indexable set with O(1) insert, remove and uniform sampling.
struct Pool {
    items: Vec<usize>,
    pos: Vec<usize>,
}

impl Pool {
    fn new(n: usize) -> Pool {
        Pool { items: Vec::new(), pos: vec![usize::MAX; n] }
    }
    fn insert(&mut self, i: usize) {
        if self.pos[i] == usize::MAX {
            self.pos[i] = self.items.len();
            self.items.push(i);
        }
    }
    fn remove(&mut self, i: usize) {
        let p = self.pos[i];
        if p != usize::MAX {
            let last = *self.items.last().unwrap();
            self.items.swap_remove(p);
            if last != i {
                self.pos[last] = p;
            }
            self.pos[i] = usize::MAX;
        }
    }
    fn sorted(&self) -> Vec<usize> {
        let mut v = self.items.clone();
        v.sort_unstable();
        v
    }
}

struct State<'a> {
    table: &'a WeightTable,
    d: usize,
    counts: Vec<i64>,
    coords: Vec<i64>,
    cells: Vec<bool>,
    field: Vec<f64>,
    /// Face neighbours inside E.
    inside_nbrs: Vec<usize>,
    /// Cells of E with a face neighbour outside E (or outside the grid).
    removable: Pool,
    /// Cells outside E with a face neighbour in E.
    addable: Pool,
    outside: Pool,
}

impl<'a> State<'a> {
    fn new(e: &GridSet, table: &'a WeightTable) -> State<'a> {
        let g = e.grid();
        let d = g.dim();
        let n = g.len();
        let coords: Vec<i64> = (0..n).flat_map(|i| g.unravel(i).into_iter().map(|c| c as i64)).collect();
        let counts: Vec<i64> = g.counts().iter().map(|c| *c as i64).collect();
        let cells = e.cells().to_vec();
        let members = e.indices();
        let mut st = State {
            table,
            d,
            counts,
            coords,
            cells,
            field: vec![0.0; n],
            inside_nbrs: vec![0; n],
            removable: Pool::new(n),
            addable: Pool::new(n),
            outside: Pool::new(n),
        };
        let field: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|c| crate::numeric::fsum(members.iter().filter(|&&y| y != c).map(|&y| st.w(c, y))))
            .collect();
        st.field = field;
        for i in 0..n {
            st.inside_nbrs[i] = st.neighbours(i).into_iter().flatten().filter(|&j| st.cells[j]).count();
        }
        for i in 0..n {
            st.classify(i);
        }
        st
    }

    fn w(&self, a: usize, b: usize) -> f64 {
        let d = self.d;
        let mut k = [0i64; 8];
        for (x, kx) in k.iter_mut().enumerate().take(d) {
            *kx = self.coords[a * d + x] - self.coords[b * d + x];
        }
        self.table.weight(&k[..d])
    }

    fn neighbours(&self, i: usize) -> Vec<Option<usize>> {
        let d = self.d;
        let mut out = Vec::with_capacity(2 * d);
        let mut stride = 1i64;
        let mut strides = vec![0i64; d];
        for a in (0..d).rev() {
            strides[a] = stride;
            stride *= self.counts[a];
        }
        for a in 0..d {
            let c = self.coords[i * d + a];
            for s in [-1i64, 1] {
                let t = c + s;
                out.push(if t < 0 || t >= self.counts[a] { None } else { Some((i as i64 + s * strides[a]) as usize) });
            }
        }
        out
    }

    fn classify(&mut self, i: usize) {
        let full = 2 * self.d;
        if self.cells[i] {
            self.outside.remove(i);
            self.addable.remove(i);
            if self.inside_nbrs[i] < full {
                self.removable.insert(i);
            } else {
                self.removable.remove(i);
            }
        } else {
            self.removable.remove(i);
            self.outside.insert(i);
            if self.inside_nbrs[i] > 0 {
                self.addable.insert(i);
            } else {
                self.addable.remove(i);
            }
        }
    }

    fn delta(&self, a: usize, b: usize) -> f64 {
        2.0 * (self.field[a] - self.field[b] + self.w(b, a))
    }

    fn swap(&mut self, a: usize, b: usize) {
        self.cells[a] = false;
        self.cells[b] = true;
        let n = self.cells.len();
        let upd: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|c| {
                let plus = if c == b { 0.0 } else { self.w(c, b) };
                let minus = if c == a { 0.0 } else { self.w(c, a) };
                plus - minus
            })
            .collect();
        for (f, u) in self.field.iter_mut().zip(upd) {
            *f += u;
        }
        for (cell, step) in [(a, -1i64), (b, 1)] {
            for j in self.neighbours(cell).into_iter().flatten() {
                self.inside_nbrs[j] = (self.inside_nbrs[j] as i64 + step) as usize;
                self.classify(j);
            }
            self.classify(cell);
        }
    }
}

fn greedy(st: &mut State<'_>, p: &mut f64, max_moves: usize, trace: &mut Vec<TracePoint>, accepted: &mut usize) -> bool {
    for it in 1..=max_moves {
        let rem = st.removable.sorted();
        let add: Vec<usize> = st.outside.sorted().into_iter().filter(|&b| st.field[b] > 0.0).collect();
        let best = rem
            .par_iter()
            .filter_map(|&a| {
                let mut local: Option<(f64, usize, usize)> = None;
                for &b in &add {
                    let dp = st.delta(a, b);
                    if local.map(|l| dp < l.0).unwrap_or(true) {
                        local = Some((dp, a, b));
                    }
                }
                local
            })
            .reduce_with(|x, y| if y.0 < x.0 || (y.0 == x.0 && (y.1, y.2) < (x.1, x.2)) { y } else { x });
        let Some((dp, a, b)) = best else { return true };
        // strict decrease beyond round-off of the running total
        if !(dp < -1e-12 * p.abs()) {
            return true;
        }
        st.swap(a, b);
        *p += dp;
        *accepted += 1;
        trace.push(TracePoint { iteration: it, perimeter: *p });
    }
    false
}

#[allow(clippy::too_many_arguments)]
fn anneal(
    st: &mut State<'_>,
    p: &mut f64,
    sched: &AnnealSchedule,
    max_moves: usize,
    rng: &mut ChaCha8Rng,
    trace: &mut Vec<TracePoint>,
    accepted: &mut usize,
    rejected: &mut usize,
) -> (Vec<bool>, f64) {
    let propose = |st: &State<'_>, rng: &mut ChaCha8Rng| -> Option<(usize, usize)> {
        if st.removable.items.is_empty() || st.addable.items.is_empty() {
            return None;
        }
        let a = st.removable.items[rng.gen_range(0..st.removable.items.len())];
        let pool = if rng.gen::<bool>() { &st.addable } else { &st.outside };
        let b = pool.items[rng.gen_range(0..pool.items.len())];
        Some((a, b))
    };
    let t0 = match sched.t0 {
        Some(t) => t,
        None => {
            let mut probes: Vec<f64> = (0..100).filter_map(|_| propose(st, rng)).map(|(a, b)| st.delta(a, b).abs()).collect();
            probes.sort_by(f64::total_cmp);
            if probes.is_empty() {
                0.0
            } else {
                probes[probes.len() / 2]
            }
        }
    };
    let per_level = sched.moves_per_level.unwrap_or(st.removable.items.len().max(1));
    let mut best = (st.cells.clone(), *p);
    for it in 1..=max_moves {
        let temp = t0 * sched.cooling.powi(((it - 1) / per_level) as i32);
        let Some((a, b)) = propose(st, rng) else { break };
        let dp = st.delta(a, b);
        let u: f64 = rng.gen();
        let ok = dp <= 0.0 || (temp > 0.0 && u < (-dp / temp).exp());
        if ok {
            st.swap(a, b);
            *p += dp;
            *accepted += 1;
            trace.push(TracePoint { iteration: it, perimeter: *p });
            if *p < best.1 {
                best = (st.cells.clone(), *p);
            }
        } else {
            *rejected += 1;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{rasterize, Grid, Shape};
    use crate::kernels::Truncation;
    use approx::assert_relative_eq;

    #[test]
    fn delta_matches_recomputation() {
        let g = Grid::centered(2, 1.0 / 8.0, 1.0).unwrap();
        let k = Kernel::fractional(2, 0.5, 1.0).unwrap();
        let e = rasterize(&g, &Shape::Box { lo: vec![-0.5, -0.3], hi: vec![0.2, 0.4] }).unwrap();
        let table = table_for(&k, &g, &QuadratureScheme::default()).unwrap();
        let st = State::new(&e, &table);
        let a = st.removable.sorted()[3];
        let b = st.addable.sorted()[5];
        let mut cells = e.cells().to_vec();
        cells[a] = false;
        cells[b] = true;
        let e2 = GridSet::new(g.clone(), cells).unwrap();
        let p1 = perimeter_with(&e, Domain::WholeSpace, &table).unwrap().value;
        let p2 = perimeter_with(&e2, Domain::WholeSpace, &table).unwrap().value;
        assert_relative_eq!(p2 - p1, st.delta(a, b), max_relative = 1e-9, epsilon = 1e-12);
    }

    #[test]
    fn greedy_trace_is_non_increasing_and_bounds_initial() {
        let g = Grid::centered(2, 1.0 / 16.0, 1.0).unwrap();
        let k = Kernel::fractional(2, 0.5, 1.0).unwrap();
        let e = rasterize(&g, &Shape::Box { lo: vec![-0.75, -0.125], hi: vec![0.75, 0.125] }).unwrap();
        let r = optimize(&k, &e, e.volume(), &OptimizeOptions { max_moves: 200, ..Default::default() }, &QuadratureScheme::default())
            .unwrap();
        assert!(r.trace.windows(2).all(|w| w[1].perimeter <= w[0].perimeter));
        assert!(r.profile_estimate <= r.initial_perimeter);
        assert_eq!(r.cells, e.count());
        assert_relative_eq!(r.trace.last().unwrap().perimeter, r.profile_estimate, max_relative = 1e-9);
    }

    #[test]
    fn anneal_is_seed_deterministic() {
        let g = Grid::centered(2, 1.0 / 8.0, 1.0).unwrap();
        let k = Kernel::fractional(2, 0.5, 1.0).unwrap();
        let e = rasterize(&g, &Shape::Box { lo: vec![-0.75, -0.25], hi: vec![0.75, 0.25] }).unwrap();
        let opts = OptimizeOptions { mode: OptimizeMode::Anneal(AnnealSchedule::default()), max_moves: 300, seed: 7 };
        let a = optimize(&k, &e, e.volume(), &opts, &QuadratureScheme::default()).unwrap();
        let b = optimize(&k, &e, e.volume(), &opts, &QuadratureScheme::default()).unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.profile_estimate.to_bits(), b.profile_estimate.to_bits());
        assert!(a.profile_estimate <= a.initial_perimeter);
    }

    #[test]
    fn truncated_kernel_escapes_the_ball() {
        let g = Grid::centered(1, 1.0 / 32.0, 1.5).unwrap();
        let k = Kernel::fractional(1, 0.5, 1.0).unwrap().truncate(Truncation::OutsideBall(1.0)).unwrap();
        let ball = rasterize(&g, &Shape::ball(vec![0.0], 0.25)).unwrap();
        let r = optimize(&k, &ball, 0.5, &OptimizeOptions::default(), &QuadratureScheme::default()).unwrap();
        assert!(r.profile_estimate < r.initial_perimeter - 0.01, "{} vs {}", r.profile_estimate, r.initial_perimeter);
    }

    #[test]
    fn volume_mismatch_rejected() {
        let g = Grid::centered(1, 1.0 / 32.0, 1.0).unwrap();
        let k = Kernel::fractional(1, 0.5, 1.0).unwrap();
        let e = rasterize(&g, &Shape::ball(vec![0.0], 0.25)).unwrap();
        assert!(optimize(&k, &e, 1.0, &OptimizeOptions::default(), &QuadratureScheme::default()).is_err());
    }
}
