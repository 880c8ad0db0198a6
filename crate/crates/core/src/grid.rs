//! Uniform grids, cell sets and cell functions.
//!
//! Cells are indexed row-major with the last axis fastest. Cell `i` has
//! center `origin + (i + ½)·h` per axis; `origin` is the lower corner of the
//! grid box. Functions are extended by zero outside the box.

use crate::error::{param, Error, Result};
use crate::numeric::fsum;
use serde::Serialize;
use std::io::{BufRead, Read, Write};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    dim: usize,
    h: f64,
    counts: Vec<usize>,
    origin: Vec<f64>,
}

impl Grid {
    pub fn new(h: f64, counts: Vec<usize>, origin: Vec<f64>) -> Result<Grid> {
        if counts.is_empty() || counts.len() != origin.len() {
            return Err(Error::Dimension("counts and origin must have the same positive length".into()));
        }
        if !(h > 0.0) || !h.is_finite() {
            return param(format!("grid spacing must be positive, got {h}"));
        }
        if counts.iter().any(|&n| n == 0) || origin.iter().any(|o| !o.is_finite()) {
            return param("grid needs positive cell counts and a finite origin");
        }
        Ok(Grid { dim: counts.len(), h, counts, origin })
    }

    /// Grid covering `[−a, a]^d` with `n = round(2a/h)` cells per axis,
    /// centered at the origin.
    pub fn centered(dim: usize, h: f64, half_width: f64) -> Result<Grid> {
        let n = (2.0 * half_width / h).round().max(1.0) as usize;
        Grid::new(h, vec![n; dim], vec![-(n as f64) * h / 2.0; dim])
    }

    /// Grid covering the box `[lo, hi]` (each side rounded to whole cells).
    pub fn covering(h: f64, lo: &[f64], hi: &[f64]) -> Result<Grid> {
        let counts: Vec<usize> = lo.iter().zip(hi).map(|(a, b)| ((b - a) / h).round().max(1.0) as usize).collect();
        Grid::new(h, counts, lo.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
    pub fn origin(&self) -> &[f64] {
        &self.origin
    }
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim];
        for a in (0..self.dim.saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.counts[a + 1];
        }
        s
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            idx[a] = flat % self.counts[a];
            flat /= self.counts[a];
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (i, n)| acc * n + i)
    }

    /// Flat index of a signed multi-index, if inside the grid.
    pub fn ravel_signed(&self, idx: &[i64]) -> Option<usize> {
        let mut acc = 0usize;
        for (i, n) in idx.iter().zip(&self.counts) {
            if *i < 0 || *i as usize >= *n {
                return None;
            }
            acc = acc * n + *i as usize;
        }
        Some(acc)
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        self.unravel(flat)
            .iter()
            .zip(&self.origin)
            .map(|(&i, o)| o + (i as f64 + 0.5) * self.h)
            .collect()
    }

    /// Upper corner of the grid box.
    pub fn upper(&self) -> Vec<f64> {
        self.origin.iter().zip(&self.counts).map(|(o, n)| o + *n as f64 * self.h).collect()
    }

    /// Cell containing a point (if inside the box).
    pub fn locate(&self, x: &[f64]) -> Option<Vec<usize>> {
        let mut idx = Vec::with_capacity(self.dim);
        for a in 0..self.dim {
            let t = ((x[a] - self.origin[a]) / self.h).floor();
            if t < 0.0 || t >= self.counts[a] as f64 {
                return None;
            }
            idx.push(t as usize);
        }
        Some(idx)
    }

    /// Whether `other` has identical geometry.
    pub fn same_as(&self, other: &Grid) -> bool {
        self == other
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::Dimension("objects live on different grids".into()))
        }
    }

    fn header(&self) -> String {
        let mut s = format!("{} {}", self.dim, fmt_f(self.h));
        for n in &self.counts {
            s.push_str(&format!(" {n}"));
        }
        for o in &self.origin {
            s.push_str(&format!(" {}", fmt_f(*o)));
        }
        s
    }

    fn parse_header(line: &str) -> Result<Grid> {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let bad = |m: &str| Error::GridFormat(format!("header: {m}"));
        let d: usize = toks.first().and_then(|t| t.parse().ok()).ok_or_else(|| bad("missing dimension"))?;
        if d == 0 || toks.len() != 2 + 2 * d {
            return Err(bad(&format!("expected `d h n1..nd origin1..origind`, got {} fields", toks.len())));
        }
        let h: f64 = toks[1].parse().map_err(|_| bad("bad spacing"))?;
        let counts: std::result::Result<Vec<usize>, _> = toks[2..2 + d].iter().map(|t| t.parse()).collect();
        let origin: std::result::Result<Vec<f64>, _> = toks[2 + d..].iter().map(|t| t.parse()).collect();
        Grid::new(h, counts.map_err(|_| bad("bad cell count"))?, origin.map_err(|_| bad("bad origin"))?)
    }
}

fn fmt_f(v: f64) -> String {
    // shortest representation that round-trips
    format!("{v:?}")
}

/// Set of grid cells.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSet {
    grid: Grid,
    cells: Vec<bool>,
}

/// Scalar field on grid cells (finite values).
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

/// Shapes accepted by [`rasterize`].
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    UnionOfBoxes { boxes: Vec<(Vec<f64>, Vec<f64>)> },
    UnionOfBalls { balls: Vec<(Vec<f64>, f64)> },
}

impl Shape {
    pub fn ball(center: Vec<f64>, radius: f64) -> Shape {
        Shape::Ball { center, radius }
    }

    fn contains(&self, x: &[f64]) -> bool {
        let in_ball = |c: &[f64], r: f64| x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() < r * r;
        let in_box = |lo: &[f64], hi: &[f64]| x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| v > a && v < b);
        match self {
            Shape::Ball { center, radius } => in_ball(center, *radius),
            Shape::Box { lo, hi } => in_box(lo, hi),
            Shape::UnionOfBoxes { boxes } => boxes.iter().any(|(lo, hi)| in_box(lo, hi)),
            Shape::UnionOfBalls { balls } => balls.iter().any(|(c, r)| in_ball(c, *r)),
        }
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let ball = |c: &[f64], r: f64| (c.iter().map(|v| v - r).collect::<Vec<_>>(), c.iter().map(|v| v + r).collect::<Vec<_>>());
        let merge = |acc: Option<(Vec<f64>, Vec<f64>)>, b: (Vec<f64>, Vec<f64>)| match acc {
            None => Some(b),
            Some((lo, hi)) => Some((
                lo.iter().zip(&b.0).map(|(a, c)| a.min(*c)).collect(),
                hi.iter().zip(&b.1).map(|(a, c)| a.max(*c)).collect(),
            )),
        };
        match self {
            Shape::Ball { center, radius } => ball(center, *radius),
            Shape::Box { lo, hi } => (lo.clone(), hi.clone()),
            Shape::UnionOfBoxes { boxes } => boxes.iter().cloned().fold(None, merge).unwrap_or_default(),
            Shape::UnionOfBalls { balls } => balls.iter().map(|(c, r)| ball(c, *r)).fold(None, merge).unwrap_or_default(),
        }
    }

    fn dim_ok(&self, d: usize) -> bool {
        match self {
            Shape::Ball { center, .. } => center.len() == d,
            Shape::Box { lo, hi } => lo.len() == d && hi.len() == d,
            Shape::UnionOfBoxes { boxes } => !boxes.is_empty() && boxes.iter().all(|(a, b)| a.len() == d && b.len() == d),
            Shape::UnionOfBalls { balls } => !balls.is_empty() && balls.iter().all(|(c, _)| c.len() == d),
        }
    }
}

/// Occupies the cells whose centers lie strictly inside the shape. Fails if
/// the shape's bounding box misses the grid box; an empty result (shape
/// thinner than a cell) is reported by [`GridSet::is_empty`].
pub fn rasterize(grid: &Grid, shape: &Shape) -> Result<GridSet> {
    if !shape.dim_ok(grid.dim()) {
        return Err(Error::Dimension("shape dimension does not match the grid".into()));
    }
    let (lo, hi) = shape.bounds();
    let up = grid.upper();
    if (0..grid.dim()).any(|a| hi[a] <= grid.origin[a] || lo[a] >= up[a]) {
        return Err(Error::Precondition("shape does not intersect the grid box".into()));
    }
    let cells = (0..grid.len()).map(|i| shape.contains(&grid.center(i))).collect();
    Ok(GridSet { grid: grid.clone(), cells })
}

impl GridSet {
    pub fn new(grid: Grid, cells: Vec<bool>) -> Result<GridSet> {
        if cells.len() != grid.len() {
            return Err(Error::Dimension(format!("{} cells for a grid of {}", cells.len(), grid.len())));
        }
        Ok(GridSet { grid, cells })
    }

    pub fn empty(grid: &Grid) -> GridSet {
        GridSet { grid: grid.clone(), cells: vec![false; grid.len()] }
    }

    pub fn full(grid: &Grid) -> GridSet {
        GridSet { grid: grid.clone(), cells: vec![true; grid.len()] }
    }

    pub fn from_fn<F: Fn(&[f64]) -> bool>(grid: &Grid, f: F) -> GridSet {
        GridSet { grid: grid.clone(), cells: (0..grid.len()).map(|i| f(&grid.center(i))).collect() }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn cells(&self) -> &[bool] {
        &self.cells
    }
    pub fn cells_mut(&mut self) -> &mut [bool] {
        &mut self.cells
    }
    pub fn contains(&self, flat: usize) -> bool {
        self.cells[flat]
    }
    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }
    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }
    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.grid.cell_volume()
    }

    /// Complement within the grid box.
    pub fn complement(&self) -> GridSet {
        GridSet { grid: self.grid.clone(), cells: self.cells.iter().map(|c| !c).collect() }
    }

    pub fn intersect(&self, other: &GridSet) -> Result<GridSet> {
        self.grid.check_same(&other.grid)?;
        Ok(GridSet { grid: self.grid.clone(), cells: self.cells.iter().zip(&other.cells).map(|(a, b)| *a && *b).collect() })
    }

    pub fn union(&self, other: &GridSet) -> Result<GridSet> {
        self.grid.check_same(&other.grid)?;
        Ok(GridSet { grid: self.grid.clone(), cells: self.cells.iter().zip(&other.cells).map(|(a, b)| *a || *b).collect() })
    }

    pub fn minus(&self, other: &GridSet) -> Result<GridSet> {
        self.grid.check_same(&other.grid)?;
        Ok(GridSet { grid: self.grid.clone(), cells: self.cells.iter().zip(&other.cells).map(|(a, b)| *a && !*b).collect() })
    }

    pub fn is_subset(&self, other: &GridSet) -> bool {
        self.cells.iter().zip(&other.cells).all(|(a, b)| !*a || *b)
    }

    /// Translation by whole cells; fails if occupied cells would leave the box.
    pub fn translate(&self, shift: &[i64]) -> Result<GridSet> {
        let mut out = vec![false; self.cells.len()];
        for i in 0..self.cells.len() {
            if self.cells[i] {
                let idx: Vec<i64> = self.grid.unravel(i).iter().zip(shift).map(|(a, s)| *a as i64 + s).collect();
                match self.grid.ravel_signed(&idx) {
                    Some(j) => out[j] = true,
                    None => return Err(Error::Precondition("translated set leaves the grid box".into())),
                }
            }
        }
        Ok(GridSet { grid: self.grid.clone(), cells: out })
    }

    /// Indices of occupied cells.
    pub fn indices(&self) -> Vec<usize> {
        (0..self.cells.len()).filter(|&i| self.cells[i]).collect()
    }

    pub fn indicator(&self) -> GridFunction {
        GridFunction { grid: self.grid.clone(), values: self.cells.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect() }
    }

    /// Occupied cells with at least one face-neighbour outside the set (or
    /// on the box boundary).
    pub fn boundary_cells(&self) -> Vec<usize> {
        let st = self.grid.strides();
        self.indices()
            .into_iter()
            .filter(|&i| {
                let idx = self.grid.unravel(i);
                (0..self.grid.dim).any(|a| {
                    idx[a] == 0 || idx[a] + 1 == self.grid.counts[a] || !self.cells[i - st[a]] || !self.cells[i + st[a]]
                })
            })
            .collect()
    }

    /// Connected components (face adjacency) as lists of cell indices.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let st = self.grid.strides();
        let mut label = vec![usize::MAX; self.cells.len()];
        let mut comps = Vec::new();
        for start in 0..self.cells.len() {
            if !self.cells[start] || label[start] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut stack = vec![start];
            label[start] = id;
            let mut members = Vec::new();
            while let Some(i) = stack.pop() {
                members.push(i);
                let idx = self.grid.unravel(i);
                for a in 0..self.grid.dim {
                    let mut nb = Vec::with_capacity(2);
                    if idx[a] > 0 {
                        nb.push(i - st[a]);
                    }
                    if idx[a] + 1 < self.grid.counts[a] {
                        nb.push(i + st[a]);
                    }
                    for j in nb {
                        if self.cells[j] && label[j] == usize::MAX {
                            label[j] = id;
                            stack.push(j);
                        }
                    }
                }
            }
            members.sort_unstable();
            comps.push(members);
        }
        comps
    }

    pub fn write_text<W: Write>(&self, w: W) -> Result<()> {
        self.indicator().write_text(w)
    }

    pub fn read<R: Read>(r: R) -> Result<GridSet> {
        let f = GridFunction::read(r)?;
        let mut cells = Vec::with_capacity(f.values.len());
        for v in &f.values {
            match *v {
                x if x == 0.0 => cells.push(false),
                x if x == 1.0 => cells.push(true),
                x => return Err(Error::GridFormat(format!("set files hold 0/1 values, found {x}"))),
            }
        }
        Ok(GridSet { grid: f.grid, cells })
    }
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<GridFunction> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!("{} values for a grid of {}", values.len(), grid.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return param("grid function values must be finite");
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: &Grid) -> GridFunction {
        GridFunction { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: &Grid, c: f64) -> GridFunction {
        GridFunction { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: &Grid, f: F) -> GridFunction {
        GridFunction { grid: grid.clone(), values: (0..grid.len()).map(|i| f(&grid.center(i))).collect() }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `Σ |u|^p h^d`.
    pub fn lp_norm_pow(&self, p: f64) -> f64 {
        self.grid.cell_volume() * fsum(self.values.iter().map(|v| v.abs().powf(p)))
    }

    /// `Σ_{x∈Ω} |u|^p h^d`.
    pub fn lp_norm_pow_on(&self, p: f64, omega: &GridSet) -> f64 {
        self.grid.cell_volume()
            * fsum(self.values.iter().zip(&omega.cells).filter(|(_, c)| **c).map(|(v, _)| v.abs().powf(p)))
    }

    /// Zero outside `omega`.
    pub fn restrict(&self, omega: &GridSet) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&omega.cells).map(|(v, c)| if *c { *v } else { 0.0 }).collect(),
        }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> GridFunction {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|v| f(*v)).collect() }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &GridFunction, b: f64) -> Result<GridFunction> {
        self.grid.check_same(&other.grid)?;
        Ok(GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Support (cells with non-zero value).
    pub fn support(&self) -> GridSet {
        GridSet { grid: self.grid.clone(), cells: self.values.iter().map(|v| *v != 0.0).collect() }
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.grid.header())?;
        let last = *self.grid.counts.last().unwrap();
        for row in self.values.chunks(last) {
            let line: Vec<String> = row.iter().map(|v| fmt_f(*v)).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Binary variant: header line prefixed by `#binary `, then little-endian
    /// f64 values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "#binary {}", self.grid.header())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the text or binary format. Lines starting with `#` before the
    /// header are skipped.
    pub fn read<R: Read>(r: R) -> Result<GridFunction> {
        let mut br = std::io::BufReader::new(r);
        let mut header = String::new();
        loop {
            header.clear();
            if br.read_line(&mut header)? == 0 {
                return Err(Error::GridFormat("missing header".into()));
            }
            // `# ...` lines before the header are comments
            if header.starts_with("#binary ") || !header.starts_with('#') {
                break;
            }
        }
        if let Some(h) = header.trim_end().strip_prefix("#binary ") {
            let grid = Grid::parse_header(h)?;
            let mut buf = Vec::new();
            br.read_to_end(&mut buf)?;
            if buf.len() != 8 * grid.len() {
                return Err(Error::GridFormat(format!("expected {} bytes of data, found {}", 8 * grid.len(), buf.len())));
            }
            let values = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            return GridFunction::new(grid, values).map_err(|e| Error::GridFormat(e.to_string()));
        }
        let grid = Grid::parse_header(header.trim())?;
        let mut rest = String::new();
        br.read_to_string(&mut rest)?;
        let mut values = Vec::with_capacity(grid.len());
        for tok in rest.split_whitespace() {
            values.push(tok.parse::<f64>().map_err(|_| Error::GridFormat(format!("bad value {tok:?}")))?);
        }
        if values.len() != grid.len() {
            return Err(Error::GridFormat(format!("expected {} values, found {}", grid.len(), values.len())));
        }
        GridFunction::new(grid, values).map_err(|e| Error::GridFormat(e.to_string()))
    }
}

/// `Δ_k u(x) = u(x + k) − u(x)` for an integer cell shift `k`; partners
/// outside the box read as zero.
pub fn forward_difference(u: &GridFunction, shift: &[i64]) -> Result<GridFunction> {
    let g = &u.grid;
    if shift.len() != g.dim {
        return Err(Error::Dimension("shift dimension does not match the grid".into()));
    }
    let values = (0..g.len())
        .map(|i| {
            let idx: Vec<i64> = g.unravel(i).iter().zip(shift).map(|(a, s)| *a as i64 + s).collect();
            let partner = g.ravel_signed(&idx).map(|j| u.values[j]).unwrap_or(0.0);
            partner - u.values[i]
        })
        .collect();
    Ok(GridFunction { grid: g.clone(), values })
}

/// Discrete mollifier weights `(1 − |m h/ε|²)₊²` on integer offsets, normalized
/// so that the (exactly summed) mass is one.
pub fn mollifier_stencil(dim: usize, h: f64, eps: f64) -> Vec<(Vec<i64>, f64)> {
    let r = (eps / h).ceil() as i64;
    let side = (2 * r + 1) as usize;
    let total = side.pow(dim as u32);
    let mut out = Vec::new();
    for flat in 0..total {
        let mut rem = flat;
        let mut off = vec![0i64; dim];
        for a in (0..dim).rev() {
            off[a] = (rem % side) as i64 - r;
            rem /= side;
        }
        let q: f64 = off.iter().map(|&m| (m as f64 * h / eps).powi(2)).sum();
        if q < 1.0 {
            out.push((off, (1.0 - q) * (1.0 - q)));
        }
    }
    let mass = fsum(out.iter().map(|x| x.1));
    for x in &mut out {
        x.1 /= mass;
    }
    out
}

/// `u_ε = Σ_m w_m u(· − m)`: convolution of the zero extension of `u` with the
/// discrete bump, evaluated on the same grid. Requires `ε ≥ h`.
///
/// Constants are reproduced exactly (up to rounding) at cells whose stencil
/// stays inside the box; near the box boundary the zero extension enters.
pub fn mollify(u: &GridFunction, eps: f64) -> Result<GridFunction> {
    let g = &u.grid;
    if !(eps >= g.h) {
        return param(format!("mollification radius {eps} is below the grid spacing {}", g.h));
    }
    let stencil = mollifier_stencil(g.dim, g.h, eps);
    use rayon::prelude::*;
    let values: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let idx = g.unravel(i);
            let mut acc = 0.0;
            let mut pos = vec![0i64; g.dim];
            for (off, w) in &stencil {
                for a in 0..g.dim {
                    pos[a] = idx[a] as i64 - off[a];
                }
                if let Some(j) = g.ravel_signed(&pos) {
                    acc += w * u.values[j];
                }
            }
            acc
        })
        .collect();
    Ok(GridFunction { grid: g.clone(), values })
}

/// Cell order by distance of the center to the origin, ties by index.
fn distance_ranking(g: &Grid) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = (0..g.len()).map(|i| (Norm2::sq(&g.center(i)), i)).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|x| x.1).collect()
}

struct Norm2;
impl Norm2 {
    fn sq(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }
}

/// Symmetric-decreasing rearrangement of a set: the same number of cells,
/// chosen closest to the origin.
pub fn rearrange_set(e: &GridSet) -> GridSet {
    let n = e.count();
    let mut cells = vec![false; e.cells.len()];
    for &i in distance_ranking(&e.grid).iter().take(n) {
        cells[i] = true;
    }
    GridSet { grid: e.grid.clone(), cells }
}

/// Symmetric-decreasing rearrangement of a function: the values `|u|` sorted
/// in decreasing order and laid out along the distance ranking.
pub fn rearrange_function(u: &GridFunction) -> GridFunction {
    let mut vals: Vec<f64> = u.values.iter().map(|v| v.abs()).collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    let mut out = vec![0.0; vals.len()];
    for (rank, &i) in distance_ranking(&u.grid).iter().enumerate() {
        out[i] = vals[rank];
    }
    GridFunction { grid: u.grid.clone(), values: out }
}

/// Mean of `u` over the occupied cells of `omega`.
pub fn mean(u: &GridFunction, omega: &GridSet) -> Result<f64> {
    u.grid.check_same(&omega.grid)?;
    let n = omega.count();
    if n == 0 {
        return Err(Error::Precondition("mean over an empty set".into()));
    }
    Ok(fsum(u.values.iter().zip(&omega.cells).filter(|(_, c)| **c).map(|(v, _)| *v)) / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn rasterize_volumes() {
        let g = Grid::centered(1, 0.01, 1.0).unwrap();
        let e = rasterize(&g, &Shape::ball(vec![0.0], 0.5)).unwrap();
        assert!((e.volume() - 1.0).abs() <= 0.01 + 1e-12);
        let g2 = Grid::centered(2, 0.02, 1.2).unwrap();
        let d = rasterize(&g2, &Shape::ball(vec![0.0, 0.0], 1.0)).unwrap();
        assert!((d.volume() - std::f64::consts::PI).abs() <= 5.0 * 0.02);
        let b = rasterize(
            &g2,
            &Shape::UnionOfBoxes { boxes: vec![(vec![-1.0, -1.0], vec![-0.5, 0.0]), (vec![0.1, 0.1], vec![0.5, 0.9])] },
        )
        .unwrap();
        let b1 = rasterize(&g2, &Shape::Box { lo: vec![-1.0, -1.0], hi: vec![-0.5, 0.0] }).unwrap();
        let b2 = rasterize(&g2, &Shape::Box { lo: vec![0.1, 0.1], hi: vec![0.5, 0.9] }).unwrap();
        assert_eq!(b.count(), b1.count() + b2.count());
        assert!(rasterize(&g2, &Shape::ball(vec![5.0, 5.0], 1.0)).is_err());
    }

    #[test]
    fn forward_difference_cases() {
        let g = Grid::new(0.1, vec![20], vec![0.0]).unwrap();
        let u = GridFunction::from_fn(&g, |x| 3.0 * x[0]);
        let d = forward_difference(&u, &[0]).unwrap();
        assert!(d.values().iter().all(|v| *v == 0.0));
        let d = forward_difference(&u, &[2]).unwrap();
        for v in &d.values()[..18] {
            assert_relative_eq!(*v, 0.6, max_relative = 1e-12);
        }
        // padding: partner outside reads as zero
        assert_eq!(d.values()[19], -u.values()[19]);
        let g2 = Grid::new(0.1, vec![5, 7], vec![0.0, 0.0]).unwrap();
        let mut r = rng(1);
        let u = GridFunction::new(g2.clone(), (0..35).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        let d = forward_difference(&u, &[1, 0]).unwrap();
        for i in 0..5 {
            for j in 0..7 {
                let here = u.values()[i * 7 + j];
                let there = if i + 1 < 5 { u.values()[(i + 1) * 7 + j] } else { 0.0 };
                assert_eq!(d.values()[i * 7 + j], there - here);
            }
        }
    }

    #[test]
    fn mollify_constant_interior_and_mass() {
        let g = Grid::new(0.01, vec![300], vec![-1.5]).unwrap();
        let u = GridFunction::constant(&g, 2.5);
        let m = mollify(&u, 0.05).unwrap();
        for i in 10..290 {
            assert_relative_eq!(m.values()[i], 2.5, max_relative = 1e-14);
        }
        let e = rasterize(&g, &Shape::ball(vec![0.0], 0.3)).unwrap().indicator();
        let me = mollify(&e, 0.05).unwrap();
        assert!(me.values().iter().all(|v| (-1e-15..=1.0 + 1e-15).contains(v)));
        assert_relative_eq!(fsum(me.values().iter().cloned()), fsum(e.values().iter().cloned()), max_relative = 1e-9);
        assert!(mollify(&u, 0.001).is_err());
    }

    #[test]
    fn rearrangement_examples() {
        let g = Grid::centered(1, 0.01, 2.0).unwrap();
        let e = rasterize(&g, &Shape::UnionOfBoxes { boxes: vec![(vec![-1.8], vec![-1.4]), (vec![0.5], vec![1.1])] }).unwrap();
        let s = rearrange_set(&e);
        assert_eq!(s.count(), e.count());
        let c = rasterize(&g, &Shape::ball(vec![0.0], 0.5)).unwrap();
        assert_eq!(s, c);
        let g2 = Grid::centered(2, 0.05, 1.0).unwrap();
        let b = rasterize(&g2, &Shape::ball(vec![0.3, -0.2], 0.4)).unwrap();
        let rb = rearrange_set(&b);
        assert_eq!(rb.count(), b.count());
        assert_eq!(rearrange_set(&rb), rb);
    }

    #[test]
    fn mean_examples() {
        let g = Grid::centered(2, 0.1, 1.0).unwrap();
        let omega = GridSet::full(&g);
        assert_eq!(mean(&GridFunction::constant(&g, 1.25), &omega).unwrap(), 1.25);
        let e = rasterize(&g, &Shape::ball(vec![0.0, 0.0], 0.5)).unwrap();
        assert_relative_eq!(mean(&e.indicator(), &omega).unwrap(), e.volume() / omega.volume(), max_relative = 1e-14);
        assert!(mean(&e.indicator(), &GridSet::empty(&g)).is_err());
    }

    #[test]
    fn io_roundtrip() {
        let g = Grid::new(0.125, vec![3, 4], vec![-0.5, 0.25]).unwrap();
        let mut r = rng(5);
        let u = GridFunction::new(g, (0..12).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        let mut buf = Vec::new();
        u.write_text(&mut buf).unwrap();
        assert_eq!(GridFunction::read(&buf[..]).unwrap(), u);
        let mut bin = Vec::new();
        u.write_binary(&mut bin).unwrap();
        assert_eq!(GridFunction::read(&bin[..]).unwrap(), u);
        assert!(GridFunction::read(&b"1 0.1 3 0.0\n1 2\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn rearranged_function_is_sorted_permutation(vals in prop::collection::vec(-5.0f64..5.0, 49)) {
            let g = Grid::centered(2, 1.0, 3.5).unwrap();
            let u = GridFunction::new(g.clone(), vals.clone()).unwrap();
            let r = rearrange_function(&u);
            let mut a: Vec<f64> = vals.iter().map(|v| v.abs()).collect();
            let mut b = r.values().to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
            for i in 0..49 {
                for j in 0..49 {
                    let (di, dj) = (Norm2::sq(&g.center(i)), Norm2::sq(&g.center(j)));
                    if di < dj {
                        prop_assert!(r.values()[i] >= r.values()[j]);
                    }
                }
            }
        }

        #[test]
        fn forward_difference_linear(
            a in -3.0f64..3.0, b in -3.0f64..3.0,
            u in prop::collection::vec(-1.0f64..1.0, 30),
            v in prop::collection::vec(-1.0f64..1.0, 30),
            k in -6i64..6,
        ) {
            let g = Grid::new(0.1, vec![30], vec![0.0]).unwrap();
            let u = GridFunction::new(g.clone(), u).unwrap();
            let v = GridFunction::new(g, v).unwrap();
            let lhs = forward_difference(&u.combine(a, &v, b).unwrap(), &[k]).unwrap();
            let du = forward_difference(&u, &[k]).unwrap();
            let dv = forward_difference(&v, &[k]).unwrap();
            for i in 0..30 {
                let x = lhs.values()[i];
                let y = a * du.values()[i] + b * dv.values()[i];
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn mollify_range(vals in prop::collection::vec(-2.0f64..2.0, 40), eps in 0.1f64..0.5) {
            let g = Grid::new(0.05, vec![40], vec![0.0]).unwrap();
            let u = GridFunction::new(g, vals.clone()).unwrap();
            let m = mollify(&u, eps).unwrap();
            let lo = vals.iter().cloned().fold(0.0, f64::min);
            let hi = vals.iter().cloned().fold(0.0, f64::max);
            for v in m.values() {
                prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
            }
        }
    }
}
