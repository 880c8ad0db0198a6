//! Lattice correlations and shifted-pair iteration.

use crate::grid::Grid;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Cross-correlation `C(k) = Σ_x X(x) Y(x + k)` of two cell arrays on one
/// grid, for all shifts with `|k_a| < n_a`.
pub struct Correlation {
    counts: Vec<usize>,
    padded: Vec<usize>,
    data: Vec<f64>,
}

impl Correlation {
    pub fn get(&self, k: &[i64]) -> f64 {
        let mut idx = 0usize;
        for a in 0..k.len() {
            let n = self.counts[a] as i64;
            if k[a] <= -n || k[a] >= n {
                return 0.0;
            }
            let m = self.padded[a] as i64;
            idx = idx * self.padded[a] + k[a].rem_euclid(m) as usize;
        }
        self.data[idx]
    }
}

fn fft_nd(data: &mut [Complex<f64>], shape: &[usize], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let d = shape.len();
    let total: usize = shape.iter().product();
    let mut stride = 1usize;
    for a in (0..d).rev() {
        let n = shape[a];
        let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let outer = total / (n * stride);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                for i in 0..n {
                    buf[i] = data[base + i * stride];
                }
                fft.process(&mut buf);
                for i in 0..n {
                    data[base + i * stride] = buf[i];
                }
            }
        }
        stride *= n;
    }
}

fn embed(grid: &Grid, values: &[f64], padded: &[usize]) -> Vec<Complex<f64>> {
    let total: usize = padded.iter().product();
    let mut out = vec![Complex::new(0.0, 0.0); total];
    for (flat, v) in values.iter().enumerate() {
        if *v == 0.0 {
            continue;
        }
        let idx = grid.unravel(flat);
        let mut p = 0usize;
        for a in 0..idx.len() {
            p = p * padded[a] + idx[a];
        }
        out[p] = Complex::new(*v, 0.0);
    }
    out
}

/// Transformed, zero-padded copy of a cell array, reusable across
/// correlations on the same grid.
pub struct Spectrum {
    shape: Vec<usize>,
    counts: Vec<usize>,
    data: Vec<Complex<f64>>,
}

impl Spectrum {
    pub fn new(grid: &Grid, values: &[f64]) -> Spectrum {
        let padded: Vec<usize> = grid.counts().iter().map(|n| 2 * n).collect();
        let mut data = embed(grid, values, &padded);
        fft_nd(&mut data, &padded, false);
        Spectrum { shape: padded, counts: grid.counts().to_vec(), data }
    }
}

/// `C(k) = Σ_x X(x) Y(x + k)`; with `round` the result is rounded to
/// integers (exact for 0/1 arrays).
pub fn correlate(x: &Spectrum, y: &Spectrum, round: bool) -> Correlation {
    let total = x.data.len();
    let mut prod: Vec<Complex<f64>> = x.data.iter().zip(&y.data).map(|(a, b)| a.conj() * b).collect();
    fft_nd(&mut prod, &x.shape, true);
    let scale = 1.0 / total as f64;
    let data = prod
        .into_iter()
        .map(|c| {
            let v = c.re * scale;
            if round {
                v.round().max(0.0)
            } else {
                v
            }
        })
        .collect();
    Correlation { counts: x.counts.clone(), padded: x.shape.clone(), data }
}

/// Calls `f(i, Some(j))` for every cell `i` of the box whose partner
/// `j = i + k` lies in the box, and `f(i, None)` otherwise, in row-major order.
pub fn for_each_pair<F: FnMut(usize, Option<usize>)>(grid: &Grid, k: &[i64], mut f: F) {
    let n = grid.counts();
    let d = n.len();
    let strides = grid.strides();
    let last = n[d - 1] as i64;
    let kl = k[d - 1];
    let rows: usize = n[..d - 1].iter().product();
    let mut r = vec![0usize; d - 1];
    let offset: i64 = (0..d).map(|a| k[a] * strides[a] as i64).sum();
    for row in 0..rows {
        let base = row * n[d - 1];
        let inside = (0..d - 1).all(|a| {
            let y = r[a] as i64 + k[a];
            y >= 0 && y < n[a] as i64
        });
        if !inside {
            for x in 0..n[d - 1] {
                f(base + x, None);
            }
        } else {
            let lo = (-kl).clamp(0, last) as usize;
            let hi = (last - kl).clamp(0, last) as usize;
            for x in 0..lo {
                f(base + x, None);
            }
            for x in lo..hi {
                let i = base + x;
                f(i, Some((i as i64 + offset) as usize));
            }
            for x in hi.max(lo)..n[d - 1] {
                f(base + x, None);
            }
        }
        for a in (0..d - 1).rev() {
            r[a] += 1;
            if r[a] < n[a] {
                break;
            }
            r[a] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_matches_direct_correlation() {
        let g = Grid::new(1.0, vec![5, 4], vec![0.0, 0.0]).unwrap();
        let x: Vec<f64> = (0..20).map(|i| ((i * 7) % 3 == 0) as u8 as f64).collect();
        let y: Vec<f64> = (0..20).map(|i| ((i * 5) % 4 != 1) as u8 as f64).collect();
        let c = correlate(&Spectrum::new(&g, &x), &Spectrum::new(&g, &y), true);
        for k0 in -4i64..=4 {
            for k1 in -3i64..=3 {
                let mut direct = 0.0;
                for_each_pair(&g, &[k0, k1], |i, j| {
                    if let Some(j) = j {
                        direct += x[i] * y[j];
                    }
                });
                assert_eq!(c.get(&[k0, k1]), direct, "shift {k0},{k1}");
            }
        }
        assert_eq!(c.get(&[5, 0]), 0.0);
    }

    #[test]
    fn pairs_cover_box() {
        let g = Grid::new(1.0, vec![3, 4], vec![0.0, 0.0]).unwrap();
        let mut seen = vec![0; 12];
        let mut partners = 0;
        for_each_pair(&g, &[1, -2], |i, j| {
            seen[i] += 1;
            if let Some(j) = j {
                partners += 1;
                let (a, b) = (g.unravel(i), g.unravel(j));
                assert_eq!(b[0] as i64 - a[0] as i64, 1);
                assert_eq!(b[1] as i64 - a[1] as i64, -2);
            }
        });
        assert!(seen.iter().all(|c| *c == 1));
        assert_eq!(partners, 2 * 2);
    }
}
