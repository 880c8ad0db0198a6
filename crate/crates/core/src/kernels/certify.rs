//! Sampling-based certification of kernel hypotheses.
//!
//! Verdicts are "holds (estimated)" from samples, "fails" only with a
//! re-evaluable witness, or "inconclusive". Sampling splits the seed space
//! into fixed chunks, each with its own ChaCha stream, so results do not
//! depend on the worker count.

use super::{kernel_integral, Kernel, Region, Weight};
use crate::error::{param, Result};
use crate::norm::Norm;
use crate::numeric::IntegralStatus;
use crate::report::{ser_f64, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Hypothesis {
    Nint,
    Far,
    Dec,
    Dou,
    /// `∫ K min{1, |z|^p} < ∞`.
    Nts(f64),
    Sym,
    Pos,
    Inf,
}

impl Hypothesis {
    pub fn label(&self) -> String {
        match self {
            Hypothesis::Nint => "Nint".into(),
            Hypothesis::Far => "Far".into(),
            Hypothesis::Dec => "Dec".into(),
            Hypothesis::Dou => "Dou".into(),
            Hypothesis::Nts(p) => format!("Nts_{p}"),
            Hypothesis::Sym => "Sym".into(),
            Hypothesis::Pos => "Pos".into(),
            Hypothesis::Inf => "Inf".into(),
        }
    }

    /// Parses `Nint`, `Far`, `Dec`, `Dou`, `Nts` / `Nts_<p>`, `Sym`, `Pos`, `Inf`
    /// (case-insensitive).
    pub fn parse(s: &str) -> Result<Hypothesis> {
        let l = s.trim().to_ascii_lowercase();
        Ok(match l.as_str() {
            "nint" => Hypothesis::Nint,
            "far" => Hypothesis::Far,
            "dec" => Hypothesis::Dec,
            "dou" => Hypothesis::Dou,
            "nts" => Hypothesis::Nts(1.0),
            "sym" => Hypothesis::Sym,
            "pos" => Hypothesis::Pos,
            "inf" => Hypothesis::Inf,
            _ => match l.strip_prefix("nts_").or_else(|| l.strip_prefix("nts:")) {
                Some(p) => Hypothesis::Nts(
                    p.parse().map_err(|_| crate::Error::Parameter(format!("bad Nts exponent {p:?}")))?,
                ),
                None => return param(format!("unknown hypothesis {s:?}")),
            },
        })
    }

    pub fn all() -> Vec<Hypothesis> {
        vec![
            Hypothesis::Nint,
            Hypothesis::Far,
            Hypothesis::Dec,
            Hypothesis::Dou,
            Hypothesis::Nts(1.0),
            Hypothesis::Sym,
            Hypothesis::Pos,
            Hypothesis::Inf,
        ]
    }
}

/// Sampling configuration recorded in every report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplingConfig {
    pub seed: u64,
    /// Number of sample points (or pairs).
    pub samples: usize,
    /// Euclidean radius of the sampling ball.
    pub box_radius: f64,
    /// Smallest sampled radius, as a fraction of the box radius.
    pub min_radius_fraction: f64,
    /// D of the doubling condition; `None` selects the default.
    pub doubling_radius: Option<f64>,
    /// Radii r at which integrability outside B_r is tested.
    pub far_radii: Vec<f64>,
    /// Candidate radii for the positive infimum around the origin.
    pub inf_radii: Vec<f64>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            seed: 0,
            samples: 20000,
            box_radius: 10.0,
            min_radius_fraction: 1e-4,
            doubling_radius: None,
            far_radii: vec![1e-2, 1e-1, 0.5, 1.0, 10.0],
            inf_radii: vec![1.0, 0.5, 0.1, 1e-2, 1e-3],
        }
    }
}

/// Evidence of a failure.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// Sample points and kernel values; `y` is the comparison point for
    /// pairwise hypotheses.
    Points {
        x: Vec<f64>,
        #[serde(serialize_with = "ser_f64")]
        kx: f64,
        y: Option<Vec<f64>>,
        #[serde(serialize_with = "crate::report::ser_opt_f64")]
        ky: Option<f64>,
    },
    /// An integral found divergent (or finite, for Nint).
    Integral {
        region: Region,
        weight: Weight,
        #[serde(serialize_with = "ser_f64")]
        value: f64,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateReport {
    pub hypothesis: String,
    pub verdict: Verdict,
    #[serde(serialize_with = "ser_constants")]
    pub constants: BTreeMap<String, f64>,
    pub witnesses: Vec<Witness>,
    pub config: SamplingConfig,
    pub note: String,
}

fn ser_constants<S: serde::Serializer>(m: &BTreeMap<String, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let v: BTreeMap<&String, serde_json::Value> = m.iter().map(|(k, v)| (k, crate::report::encode(*v))).collect();
    serde::Serialize::serialize(&v, s)
}

impl CertificateReport {
    fn new(h: Hypothesis, cfg: &SamplingConfig) -> Self {
        CertificateReport {
            hypothesis: h.label(),
            verdict: Verdict::Inconclusive,
            constants: BTreeMap::new(),
            witnesses: vec![],
            config: cfg.clone(),
            note: String::new(),
        }
    }

    /// Re-evaluates point witnesses: returns true if every stored kernel value
    /// is reproduced by the kernel.
    pub fn witnesses_reproduce(&self, k: &Kernel) -> bool {
        self.witnesses.iter().all(|w| match w {
            Witness::Points { x, kx, y, ky } => {
                let ok_x = k.eval(x) == *kx || (k.eval(x).is_nan() && kx.is_nan());
                let ok_y = match (y, ky) {
                    (Some(y), Some(ky)) => k.eval(y) == *ky,
                    _ => true,
                };
                ok_x && ok_y
            }
            Witness::Integral { .. } => true,
        })
    }
}

const CHUNK: usize = 1024;

/// Draws `n` points in the ball of radius `rmax` with log-uniform radii in
/// `[rmin, rmax]` and uniform directions; deterministic per (seed, chunk).
fn sample_points(d: usize, n: usize, rmin: f64, rmax: f64, seed: u64, salt: u64) -> Vec<Vec<f64>> {
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            rng.set_stream(c as u64);
            let m = CHUNK.min(n - c * CHUNK);
            (0..m)
                .map(|_| {
                    let dir = random_direction(d, &mut rng);
                    let u: f64 = rng.gen();
                    let r = rmin * (rmax / rmin).powf(u);
                    dir.into_iter().map(|x| x * r).collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn random_direction<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = Norm::Euclidean.eval(&v);
        if n > 1e-3 && n <= 1.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Certifies one hypothesis. `norm` is the norm used by the (Dec) ordering
/// and the (Dou) scaling.
pub fn certify(k: &Kernel, h: Hypothesis, norm: &Norm, cfg: &SamplingConfig) -> Result<CertificateReport> {
    norm.check_dim(k.dim())?;
    if cfg.samples == 0 || !(cfg.box_radius > 0.0) || !(cfg.min_radius_fraction > 0.0 && cfg.min_radius_fraction < 1.0) {
        return param("sampling configuration needs samples > 0, box_radius > 0, 0 < min_radius_fraction < 1");
    }
    let mut rep = CertificateReport::new(h, cfg);
    match h {
        Hypothesis::Nint => {
            let r = kernel_integral(k, Region::All, Weight::One)?;
            rep.constants.insert("integral".into(), r.value);
            match r.status {
                IntegralStatus::Divergent => rep.verdict = Verdict::Holds,
                IntegralStatus::Converged => {
                    rep.verdict = Verdict::Fails;
                    rep.witnesses.push(Witness::Integral { region: Region::All, weight: Weight::One, value: r.value });
                    rep.note = "kernel is integrable".into();
                }
                IntegralStatus::Inconclusive => {}
            }
        }
        Hypothesis::Far => {
            let mut inconclusive = false;
            rep.verdict = Verdict::Holds;
            for &r in &cfg.far_radii {
                let v = kernel_integral(k, Region::Tail(r), Weight::One)?;
                rep.constants.insert(format!("tail({r})"), v.value);
                match v.status {
                    IntegralStatus::Divergent => {
                        rep.verdict = Verdict::Fails;
                        rep.witnesses.push(Witness::Integral { region: Region::Tail(r), weight: Weight::One, value: v.value });
                        rep.note = format!("K is not integrable outside B_{r}");
                        break;
                    }
                    IntegralStatus::Inconclusive => inconclusive = true,
                    IntegralStatus::Converged => {}
                }
            }
            if inconclusive && rep.verdict == Verdict::Holds {
                rep.verdict = Verdict::Inconclusive;
            }
        }
        Hypothesis::Nts(p) => {
            let w = Weight::MinOnePow(p);
            let v = kernel_integral(k, Region::All, w)?;
            rep.constants.insert("integral".into(), v.value);
            rep.verdict = match v.status {
                IntegralStatus::Converged => Verdict::Holds,
                IntegralStatus::Divergent => {
                    rep.witnesses.push(Witness::Integral { region: Region::All, weight: w, value: v.value });
                    Verdict::Fails
                }
                IntegralStatus::Inconclusive => Verdict::Inconclusive,
            };
        }
        Hypothesis::Dec => certify_dec(k, norm, cfg, &mut rep),
        Hypothesis::Dou => certify_dou(k, norm, cfg, &mut rep),
        Hypothesis::Sym => {
            let pts = sample_points(k.dim(), cfg.samples, cfg.box_radius * cfg.min_radius_fraction, cfg.box_radius, cfg.seed, 11);
            rep.verdict = Verdict::Holds;
            let mut worst = 0.0f64;
            for x in &pts {
                let m: Vec<f64> = x.iter().map(|v| -v).collect();
                let (a, b) = (k.eval(x), k.eval(&m));
                let diff = if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
                worst = worst.max(diff);
                if diff > 1e-12 {
                    rep.verdict = Verdict::Fails;
                    rep.witnesses.push(Witness::Points { x: x.clone(), kx: a, y: Some(m), ky: Some(b) });
                    break;
                }
            }
            rep.constants.insert("max_relative_asymmetry".into(), worst);
        }
        Hypothesis::Pos => {
            let pts = sample_points(k.dim(), cfg.samples, cfg.box_radius * cfg.min_radius_fraction, cfg.box_radius, cfg.seed, 13);
            rep.verdict = Verdict::Holds;
            let mut min = f64::INFINITY;
            for x in &pts {
                let v = k.eval(x);
                min = min.min(v);
                if !(v > 0.0) {
                    rep.verdict = Verdict::Fails;
                    rep.witnesses.push(Witness::Points { x: x.clone(), kx: v, y: None, ky: None });
                    break;
                }
            }
            // sampling a bounded box cannot see decay at infinity
            if rep.verdict == Verdict::Holds && k.support_radius() < f64::INFINITY {
                let mut x = vec![0.0; k.dim()];
                x[0] = k.support_radius() * 1.5;
                let v = k.eval(&x);
                if !(v > 0.0) {
                    rep.verdict = Verdict::Fails;
                    rep.witnesses.push(Witness::Points { x, kx: v, y: None, ky: None });
                }
            }
            rep.constants.insert("min_sampled".into(), min);
        }
        Hypothesis::Inf => {
            let mut best: Option<(f64, f64)> = None;
            let mut last_witness = None;
            for &r in &cfg.inf_radii {
                let pts = sample_points(k.dim(), cfg.samples, r * cfg.min_radius_fraction, r, cfg.seed, 17);
                let mut mu = f64::INFINITY;
                let mut arg = None;
                for x in &pts {
                    let v = k.eval(x);
                    if v < mu {
                        mu = v;
                        arg = Some(x.clone());
                    }
                }
                if mu > 0.0 {
                    best = Some((r, mu));
                    break;
                }
                last_witness = arg.map(|x| (x.clone(), k.eval(&x)));
            }
            match best {
                Some((r, mu)) => {
                    rep.verdict = Verdict::Holds;
                    rep.constants.insert("r".into(), r);
                    rep.constants.insert("mu".into(), mu);
                }
                None => {
                    if let Some((x, v)) = last_witness {
                        rep.verdict = Verdict::Fails;
                        rep.witnesses.push(Witness::Points { x, kx: v, y: None, ky: None });
                    }
                }
            }
        }
    }
    Ok(rep)
}

fn certify_dec(k: &Kernel, norm: &Norm, cfg: &SamplingConfig, rep: &mut CertificateReport) {
    let mut pts = sample_points(k.dim(), cfg.samples, cfg.box_radius * cfg.min_radius_fraction, cfg.box_radius, cfg.seed, 3);
    // include points along the first axis so radial profiles are densely probed
    let n_axis = 2000;
    for i in 0..n_axis {
        let mut x = vec![0.0; k.dim()];
        let u = i as f64 / (n_axis - 1) as f64;
        x[0] = cfg.box_radius * cfg.min_radius_fraction * (1.0 / cfg.min_radius_fraction).powf(u);
        pts.push(x);
    }
    let mut vals: Vec<(f64, f64, usize)> = pts
        .iter()
        .enumerate()
        .filter_map(|(i, x)| {
            let v = k.eval(x);
            v.is_finite().then(|| (norm.eval(x), v, i))
        })
        .collect();
    if vals.is_empty() || vals.iter().all(|v| v.1 == 0.0) {
        rep.note = "all samples hit K = 0 or K = +∞".into();
        return;
    }
    vals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
    // suffix maximum of K over points with norm ≥ current
    let n = vals.len();
    let mut suffix: Vec<(f64, usize)> = vec![(0.0, usize::MAX); n + 1];
    for i in (0..n).rev() {
        suffix[i] = if vals[i].1 > suffix[i + 1].0 { (vals[i].1, i) } else { suffix[i + 1] };
    }
    // points with equal norm must compare both ways: extend the suffix to the
    // start of each tie group
    let mut c0 = f64::INFINITY;
    let mut wit = None;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && vals[j + 1].0 == vals[i].0 {
            j += 1;
        }
        let (m, mi) = suffix[i];
        for t in i..=j {
            if m > 0.0 {
                let r = vals[t].1 / m;
                if r < c0 {
                    c0 = r;
                    wit = Some((vals[t].2, vals[mi].2));
                }
            }
        }
        i = j + 1;
    }
    rep.constants.insert("c0".into(), c0.min(1.0));
    if c0 > 0.0 {
        rep.verdict = Verdict::Holds;
    } else if let Some((a, b)) = wit {
        rep.verdict = Verdict::Fails;
        rep.witnesses.push(Witness::Points {
            x: pts[a].clone(),
            kx: k.eval(&pts[a]),
            y: Some(pts[b].clone()),
            ky: Some(k.eval(&pts[b])),
        });
        rep.note = "K(x) = 0 < K(y) with |x|_* ≤ |y|_*".into();
    }
}

fn certify_dou(k: &Kernel, norm: &Norm, cfg: &SamplingConfig, rep: &mut CertificateReport) {
    let dd = cfg.doubling_radius.unwrap_or_else(|| {
        let s = k.support_radius();
        if s.is_finite() {
            s / 2.0
        } else {
            1.0
        }
    });
    rep.constants.insert("D".into(), dd);
    // radii are in |·|_*; sample euclidean points and rescale
    let xs = sample_points(k.dim(), cfg.samples, cfg.min_radius_fraction, 1.0, cfg.seed, 5);
    let vs = sample_points(k.dim(), cfg.samples, 1.0, 1.0 + 1e-12, cfg.seed, 7);
    let mut cd = 0.0f64;
    let mut used = 0usize;
    let mut wit = None;
    for (x0, v) in xs.iter().zip(&vs) {
        // x with |x|_* = D·|x0|₂, log-uniform in (0, D]
        let scale = dd * Norm::Euclidean.eval(x0) / norm.eval(x0);
        let x: Vec<f64> = x0.iter().map(|t| t * scale).collect();
        let xs_norm = norm.eval(&x);
        let vn = norm.eval(v);
        let y: Vec<f64> = v.iter().map(|t| t * 2.0 * xs_norm / vn).collect();
        let (kx, ky) = (k.eval(&x), k.eval(&y));
        if !kx.is_finite() || !ky.is_finite() || (kx == 0.0 && ky == 0.0) {
            continue;
        }
        used += 1;
        if ky == 0.0 {
            wit = Some((x, kx, y, ky));
            cd = f64::INFINITY;
            break;
        }
        cd = cd.max(kx / ky);
    }
    rep.constants.insert("C_D".into(), cd);
    if let Some((x, kx, y, ky)) = wit {
        rep.verdict = Verdict::Fails;
        rep.witnesses.push(Witness::Points { x, kx, y: Some(y), ky: Some(ky) });
        rep.note = "K(y) = 0 < K(x) with |y|_* = 2|x|_*".into();
    } else if used == 0 {
        rep.note = "all samples hit K = 0 or K = +∞".into();
    } else {
        rep.verdict = Verdict::Holds;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelFamily, Truncation};
    use approx::assert_relative_eq;

    fn cfg() -> SamplingConfig {
        SamplingConfig { samples: 4000, ..Default::default() }
    }

    #[test]
    fn fractional_dec_and_dou() {
        let k = Kernel::fractional(1, 0.5, 1.0).unwrap();
        let r = certify(&k, Hypothesis::Dec, &Norm::Euclidean, &cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert!(r.constants["c0"] >= 1.0 - 1e-9);
        let cfg = SamplingConfig { doubling_radius: Some(1.0), ..cfg() };
        let r = certify(&k, Hypothesis::Dou, &Norm::Euclidean, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert_relative_eq!(r.constants["C_D"], 2f64.powf(1.5), max_relative = 1e-9);
    }

    #[test]
    fn oscillating_dec_constant() {
        let k = Kernel::new(2, KernelFamily::Oscillating { s: 0.5, alpha: 1.0, beta: 3.0, m: 4 }, Norm::Euclidean).unwrap();
        let r = certify(&k, Hypothesis::Dec, &Norm::Euclidean, &cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        let c0 = r.constants["c0"];
        assert!((0.5 - 1e-6..=1.0).contains(&c0), "c0 = {c0}");
        assert!(c0 < 0.6);
    }

    #[test]
    fn indicator_fails_nint_with_witness() {
        let k = Kernel::indicator(2, 1.0).unwrap();
        let r = certify(&k, Hypothesis::Nint, &Norm::Euclidean, &cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::Fails);
        assert!(!r.witnesses.is_empty());
    }

    #[test]
    fn truncated_kernel_fails_dec_inf_pos() {
        let k = Kernel::fractional(1, 0.5, 1.0).unwrap().truncate(Truncation::OutsideBall(1.0)).unwrap();
        for h in [Hypothesis::Dec, Hypothesis::Inf] {
            let r = certify(&k, h, &Norm::Euclidean, &cfg()).unwrap();
            assert_eq!(r.verdict, Verdict::Fails, "{h:?}");
            assert!(r.witnesses_reproduce(&k));
        }
        let r = certify(&k, Hypothesis::Far, &Norm::Euclidean, &cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
    }

    #[test]
    fn asymmetric_kernel_fails_sym() {
        let k = Kernel::new(1, KernelFamily::OneSidedExp { rate: 1.0 }, Norm::Euclidean).unwrap();
        let r = certify(&k, Hypothesis::Sym, &Norm::Euclidean, &cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::Fails);
        assert!(r.witnesses_reproduce(&k));
        let r = certify(&k.symmetrize(), Hypothesis::Sym, &Norm::Euclidean, &cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
    }

    #[test]
    fn bounded_phi_gives_alpha_over_beta() {
        // |z|_w^{-d-s} = |z|₂^{-d-s}·φ(z) with φ between 2^{-(d+s)} and 1
        let w = Norm::weighted(vec![1.0, 2.0]).unwrap();
        let k = Kernel::new(2, KernelFamily::Fractional { s: 0.5, p: 1.0, scale: 1.0 }, w).unwrap();
        let r = certify(&k, Hypothesis::Dec, &Norm::Euclidean, &cfg()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert!(r.constants["c0"] >= 2f64.powf(-2.5) - 1e-9);
    }

    #[test]
    fn deterministic_reports() {
        let k = Kernel::new(2, KernelFamily::Oscillating { s: 0.5, alpha: 1.0, beta: 3.0, m: 3 }, Norm::Euclidean).unwrap();
        let a = certify(&k, Hypothesis::Dec, &Norm::Euclidean, &cfg()).unwrap();
        let b = certify(&k, Hypothesis::Dec, &Norm::Euclidean, &cfg()).unwrap();
        assert_eq!(a.constants, b.constants);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
