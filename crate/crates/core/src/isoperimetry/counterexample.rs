//! Balls are not volume-constrained minimizers for the truncated kernel
//! `K_δ = χ_{B_δ^c} K`: a ball of radius r < δ/2 has no self-interaction, and
//! splitting it into two balls at distance x₀ gains a positive cross term.

use super::{unit_ball_volume, ConstantKind, InequalityReport};
use crate::error::{Error, Result};
use crate::functional::{interaction_energy_with, perimeter_with, table_for, Domain, EnergyMethod, QuadratureScheme};
use crate::grid::{rasterize, Grid, GridSet, Shape};
use crate::kernels::{kernel_integral, Kernel, Region, Truncation, Weight};
use crate::numeric::sphere_directions;
use crate::report::ser_f64;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoBallSetup {
    pub delta: f64,
    pub r: f64,
    pub x0: Vec<f64>,
    /// Grid spacing.
    pub h: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CounterexampleReport {
    /// `P(two balls) ≤ P(B_r) − margin`.
    pub inequality: InequalityReport,
    pub setup: TwoBallSetup,
    /// `‖K_δ‖₁`.
    #[serde(serialize_with = "ser_f64")]
    pub kernel_mass: f64,
    /// `|B_r|` (continuum).
    #[serde(serialize_with = "ser_f64")]
    pub mass: f64,
    /// Volume of the rasterized ball.
    #[serde(serialize_with = "ser_f64")]
    pub ball_volume: f64,
    #[serde(serialize_with = "ser_f64")]
    pub ball_perimeter: f64,
    /// `‖K_δ‖₁ |B_r| − V(B_r)`.
    #[serde(serialize_with = "ser_f64")]
    pub ball_perimeter_identity: f64,
    #[serde(serialize_with = "ser_f64")]
    pub ball_energy: f64,
    #[serde(serialize_with = "ser_f64")]
    pub two_ball_perimeter: f64,
    /// `2 ∫_{Ω₁} ∫_{Ω₂} K_δ(x − y)`.
    #[serde(serialize_with = "ser_f64")]
    pub cross_energy: f64,
    /// `2 |Ω₁| |Ω₂| inf_{B_{2r'}(x₀)} K_δ`.
    #[serde(serialize_with = "ser_f64")]
    pub cross_lower_bound: f64,
    /// Required gap: half the lower bound.
    #[serde(serialize_with = "ser_f64")]
    pub margin: f64,
}

/// Compares `P_{K_δ}(B_r)` with the perimeter of two balls of half the volume
/// centered at `±x₀/2`.
pub fn two_ball_counterexample(k: &Kernel, setup: &TwoBallSetup, scheme: &QuadratureScheme) -> Result<CounterexampleReport> {
    let d = k.dim();
    let TwoBallSetup { delta, r, ref x0, h } = *setup;
    if x0.len() != d {
        return Err(Error::Dimension("x0 must have the kernel dimension".into()));
    }
    if !(delta > 0.0) || !(h > 0.0) || !(r > 0.0) {
        return Err(Error::Parameter("delta, r and h must be positive".into()));
    }
    if !(r < delta / 2.0) {
        return Err(Error::Precondition(format!("radius {r} must be below delta/2 = {}", delta / 2.0)));
    }
    if !k.is_symmetric() {
        return Err(Error::Precondition("the kernel must be symmetric".into()));
    }
    let kd = k.truncate(Truncation::OutsideBall(delta))?;
    if !interior_positive(&kd, x0) {
        return Err(Error::Precondition(format!("x0 = {x0:?} is not interior to the positivity set of K_delta")));
    }
    let mass_k = kernel_integral(&kd, Region::All, Weight::One)?;
    if !mass_k.value.is_finite() {
        return Err(Error::Precondition("K_delta is not integrable".into()));
    }
    let rp = r / 2f64.powf(1.0 / d as f64);
    let half_x0: Vec<f64> = x0.iter().map(|v| 0.5 * v).collect();
    let minus: Vec<f64> = half_x0.iter().map(|v| -v).collect();
    let reach = half_x0.iter().fold(0.0f64, |m, v| m.max(v.abs())) + rp.max(r);
    let cells = (reach / h).ceil() + 2.0;
    let g = Grid::centered(d, h, cells * h)?;
    let ball = rasterize(&g, &Shape::ball(vec![0.0; d], r))?;
    let one = rasterize(&g, &Shape::ball(half_x0.clone(), rp))?;
    let other = rasterize(&g, &Shape::ball(minus.clone(), rp))?;
    let two = one.union(&other)?;
    if ball.is_empty() || one.is_empty() {
        return Err(Error::Parameter("grid too coarse for the balls".into()));
    }
    let table = table_for(&kd, &g, scheme)?;
    let energy = |e: &GridSet| -> Result<f64> {
        let method = if kd.is_bounded() { EnergyMethod::Fft } else { EnergyMethod::Direct };
        Ok(interaction_energy_with(e, &table, method)?.value)
    };
    let ball_energy = energy(&ball)?;
    let cross_energy = energy(&two)? - energy(&one)? - energy(&other)?;
    let ball_perimeter = perimeter_with(&ball, Domain::WholeSpace, &table)?.value;
    let two_ball_perimeter = perimeter_with(&two, Domain::WholeSpace, &table)?.value;
    let small = unit_ball_volume(d) * rp.powi(d as i32);
    let cross_lower_bound = 2.0 * small * small * inf_on_ball(&kd, x0, 2.0 * rp);
    let margin = 0.5 * cross_lower_bound;
    let mass = unit_ball_volume(d) * r.powi(d as i32);
    let inequality = InequalityReport::new("two_ball", two_ball_perimeter, ball_perimeter, 1.0, ConstantKind::Given, -margin);
    Ok(CounterexampleReport {
        inequality,
        setup: setup.clone(),
        kernel_mass: mass_k.value,
        mass,
        ball_volume: ball.volume(),
        ball_perimeter,
        ball_perimeter_identity: mass_k.value * ball.volume() - ball_energy,
        ball_energy,
        two_ball_perimeter,
        cross_energy,
        cross_lower_bound,
        margin,
    })
}

fn interior_positive(k: &Kernel, x0: &[f64]) -> bool {
    if !(k.eval(x0) > 0.0) {
        return false;
    }
    let step = 1e-6 * x0.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    (0..x0.len()).all(|a| {
        [-step, step].iter().all(|s| {
            let mut y = x0.to_vec();
            y[a] += s;
            k.eval(&y) > 0.0
        })
    })
}

/// `inf K` over the closed ball `B_ρ(c)`: exact for radially non-increasing
/// kernels (attained at the farthest point from the origin), sampled
/// otherwise.
fn inf_on_ball(k: &Kernel, c: &[f64], rho: f64) -> f64 {
    let d = c.len();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let base = k.inner().filter(|_| !k.is_symmetrized()).unwrap_or(k);
    if base.is_radially_nonincreasing() && norm > rho {
        // the truncation can only bite at the nearest point
        let far: Vec<f64> = c.iter().map(|v| v * (norm + rho) / norm).collect();
        let near: Vec<f64> = c.iter().map(|v| v * (norm - rho) / norm).collect();
        return k.eval(&far).min(k.eval(&near));
    }
    let dirs: Vec<Vec<f64>> = match d {
        1 => vec![vec![1.0], vec![-1.0]],
        _ => sphere_directions(d, 24, false).into_iter().map(|q| q.v).collect(),
    };
    let mut m = k.eval(c);
    for i in 1..=200 {
        let t = rho * i as f64 / 200.0;
        for th in &dirs {
            let y: Vec<f64> = c.iter().zip(th).map(|(a, b)| a + t * b).collect();
            m = m.min(k.eval(&y));
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;
    use crate::norm::Norm;
    use crate::report::Verdict;
    use approx::assert_relative_eq;

    fn kernel() -> Kernel {
        Kernel::new(1, KernelFamily::Power { exponent: 1.5, scale: 1.0 }, Norm::Euclidean).unwrap()
    }

    fn setup(r: f64) -> TwoBallSetup {
        TwoBallSetup { delta: 1.0, r, x0: vec![2.0], h: 1.0 / 128.0 }
    }

    #[test]
    fn one_dimensional_counterexample() {
        let rep = two_ball_counterexample(&kernel(), &setup(0.25), &QuadratureScheme::default()).unwrap();
        assert_relative_eq!(rep.kernel_mass, 4.0, max_relative = 1e-8);
        assert_eq!(rep.ball_energy, 0.0);
        assert_relative_eq!(rep.ball_perimeter, 2.0, max_relative = 0.01);
        assert_relative_eq!(rep.cross_lower_bound, 2.0 / 16.0 * 2.25f64.powf(-1.5), max_relative = 1e-12);
        assert!(rep.cross_energy >= rep.cross_lower_bound);
        assert!(rep.two_ball_perimeter <= 2.0 - 0.018, "{}", rep.two_ball_perimeter);
        assert_eq!(rep.inequality.verdict, Verdict::Holds);
    }

    #[test]
    fn guards() {
        assert!(matches!(
            two_ball_counterexample(&kernel(), &setup(0.6), &QuadratureScheme::default()),
            Err(Error::Precondition(_))
        ));
        let mut s = setup(0.25);
        s.x0 = vec![0.5];
        assert!(matches!(two_ball_counterexample(&kernel(), &s, &QuadratureScheme::default()), Err(Error::Precondition(_))));
    }
}
