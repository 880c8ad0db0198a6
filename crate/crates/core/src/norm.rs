//! Norms |·|_* on R^d used to measure kernel arguments.

use crate::error::{param, Result};
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Norm {
    Euclidean,
    /// ℓ_p norm, p ≥ 1.
    Lp { p: f64 },
    /// `sqrt(Σ (w_i x_i)²)` with positive per-axis weights.
    WeightedDiagonal { weights: Vec<f64> },
}

impl Default for Norm {
    fn default() -> Self {
        Norm::Euclidean
    }
}

impl Norm {
    pub fn lp(p: f64) -> Result<Norm> {
        if !(p >= 1.0) {
            return param(format!("ℓ_p norm needs p ≥ 1, got {p}"));
        }
        Ok(Norm::Lp { p })
    }

    pub fn weighted(weights: Vec<f64>) -> Result<Norm> {
        if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return param("weighted norm needs positive finite weights");
        }
        Ok(Norm::WeightedDiagonal { weights })
    }

    /// Checks compatibility with a dimension.
    pub fn check_dim(&self, d: usize) -> Result<()> {
        if let Norm::WeightedDiagonal { weights } = self {
            if weights.len() != d {
                return Err(crate::Error::Dimension(format!(
                    "weighted norm has {} weights, dimension is {d}",
                    weights.len()
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            Norm::Euclidean => z.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Lp { p } => {
                if *p == 1.0 {
                    z.iter().map(|x| x.abs()).sum()
                } else if p.is_infinite() {
                    z.iter().fold(0.0, |m, x| m.max(x.abs()))
                } else {
                    let m = z.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                    if m == 0.0 {
                        return 0.0;
                    }
                    m * z.iter().map(|x| (x.abs() / m).powf(*p)).sum::<f64>().powf(1.0 / p)
                }
            }
            Norm::WeightedDiagonal { weights } => {
                z.iter().zip(weights).map(|(x, w)| (x * w) * (x * w)).sum::<f64>().sqrt()
            }
        }
    }

    /// Constants `(lower, upper)` with `lower·|x|₂ ≤ |x|_* ≤ upper·|x|₂` on R^d.
    pub fn equivalence(&self, d: usize) -> (f64, f64) {
        match self {
            Norm::Euclidean => (1.0, 1.0),
            Norm::Lp { p } => {
                let e = (d as f64).powf(if p.is_infinite() { 0.0 } else { 1.0 / p } - 0.5);
                if *p >= 2.0 {
                    (e, 1.0)
                } else {
                    (1.0, e)
                }
            }
            Norm::WeightedDiagonal { weights } => {
                let lo = weights.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = weights.iter().cloned().fold(0.0, f64::max);
                (lo, hi)
            }
        }
    }

    pub fn is_euclidean(&self) -> bool {
        match self {
            Norm::Euclidean => true,
            Norm::Lp { p } => *p == 2.0,
            Norm::WeightedDiagonal { weights } => weights.iter().all(|w| *w == weights[0]) && weights[0] == 1.0,
        }
    }

    /// Whether `|(x', x_i)|_* = |(x', −x_i)|_*` for the given axis. All
    /// supported norms are invariant under coordinate reflections.
    pub fn reflection_symmetric(&self, _axis: usize) -> bool {
        true
    }

    pub fn label(&self) -> String {
        match self {
            Norm::Euclidean => "euclidean".into(),
            Norm::Lp { p } => format!("lp:{p}"),
            Norm::WeightedDiagonal { weights } => format!(
                "weighted:{}",
                weights.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
            ),
        }
    }

    /// Parses `euclidean`, `lp:<p>` or `weighted:<w1>,<w2>,…`.
    pub fn parse(s: &str) -> Result<Norm> {
        let s = s.trim();
        if s == "euclidean" || s == "l2" {
            return Ok(Norm::Euclidean);
        }
        if let Some(p) = s.strip_prefix("lp:") {
            let p: f64 = p.trim().parse().map_err(|_| crate::Error::Parameter(format!("bad norm exponent {p:?}")))?;
            return Norm::lp(p);
        }
        if let Some(w) = s.strip_prefix("weighted:") {
            let ws: std::result::Result<Vec<f64>, _> = w.split(',').map(|x| x.trim().parse::<f64>()).collect();
            let ws = ws.map_err(|_| crate::Error::Parameter(format!("bad norm weights {w:?}")))?;
            return Norm::weighted(ws);
        }
        param(format!("unknown norm {s:?}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norms() -> Vec<Norm> {
        vec![
            Norm::Euclidean,
            Norm::lp(1.0).unwrap(),
            Norm::lp(1.5).unwrap(),
            Norm::lp(4.0).unwrap(),
            Norm::weighted(vec![1.0, 2.0, 0.5]).unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn homogeneity_triangle_equivalence(
            x in prop::collection::vec(-10.0f64..10.0, 3),
            y in prop::collection::vec(-10.0f64..10.0, 3),
            t in -5.0f64..5.0,
        ) {
            for n in norms() {
                let tx: Vec<f64> = x.iter().map(|v| v * t).collect();
                prop_assert!((n.eval(&tx) - t.abs() * n.eval(&x)).abs() <= 1e-12 * (1.0 + n.eval(&tx)));
                let s: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
                prop_assert!(n.eval(&s) <= n.eval(&x) + n.eval(&y) + 1e-12);
                let (lo, hi) = n.equivalence(3);
                let e = Norm::Euclidean.eval(&x);
                prop_assert!(lo * e <= n.eval(&x) * (1.0 + 1e-12) + 1e-300);
                prop_assert!(n.eval(&x) <= hi * e * (1.0 + 1e-12) + 1e-300);
            }
        }
    }

    #[test]
    fn parse_roundtrip() {
        for n in norms() {
            assert_eq!(Norm::parse(&n.label()).unwrap(), n);
        }
        assert!(Norm::parse("lp:0.5").is_err());
        assert!(Norm::parse("taxicab").is_err());
    }
}
