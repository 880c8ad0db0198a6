//! Randomized invariants of the public API.

use kperim_core::closedform1d::build_profile;
use kperim_core::grid::{rasterize, rearrange_set};
use kperim_core::{
    extend, interaction_energy, kernel_integral, optimize, perimeter, seminorm, BoxDomain, Domain, EnergyMethod,
    ExtendOptions, Grid, GridFunction, GridSet, Kernel, KernelFamily, Norm, OptimizeOptions, QuadratureScheme, Region,
    Shape, Truncation, Weight,
};
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

fn one_sided(rate: f64) -> Kernel {
    Kernel::new(1, KernelFamily::OneSidedExp { rate }, Norm::Euclidean).unwrap()
}

/// Union of discs `(cx, cy, r)` on a centered 2D grid.
fn discs(g: &Grid, ds: &[(f64, f64, f64)]) -> GridSet {
    let mut e = GridSet::empty(g);
    for &(cx, cy, r) in ds {
        e = e.union(&rasterize(g, &Shape::ball(vec![cx, cy], r)).unwrap()).unwrap();
    }
    e
}

fn disc() -> impl Strategy<Value = (f64, f64, f64)> {
    (-0.4f64..0.4, -0.4f64..0.4, 0.1f64..0.35)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn symmetrize_is_idempotent(rate in 0.1f64..5.0, z in -3.0f64..3.0) {
        let s = one_sided(rate).symmetrize();
        prop_assert_eq!(s.symmetrize().eval(&[z]), s.eval(&[z]));
    }

    #[test]
    fn tail_integral_is_non_increasing(s in 0.1f64..0.9, r0 in 0.05f64..2.0, step in 0.01f64..3.0) {
        let k = Kernel::fractional(2, s, 1.0).unwrap();
        let a = kernel_integral(&k, Region::Tail(r0), Weight::One).unwrap();
        let b = kernel_integral(&k, Region::Tail(r0 + step), Weight::One).unwrap();
        prop_assert!(b.value <= a.value + a.error + b.error, "{} > {}", b.value, a.value);
    }

    #[test]
    fn rearrangement_keeps_count_and_is_idempotent(ds in prop::collection::vec(disc(), 1..4)) {
        let g = Grid::centered(2, 1.0 / 16.0, 1.0).unwrap();
        let e = discs(&g, &ds);
        let r = rearrange_set(&e);
        prop_assert_eq!(r.count(), e.count());
        prop_assert_eq!(rearrange_set(&r), r);
    }

    #[test]
    fn interval_perimeter_ignores_integration_constants(
        s in 0.1f64..0.9,
        c in -5.0f64..5.0,
        c_prime in -5.0f64..5.0,
        r in 0.01f64..4.0,
    ) {
        let p = build_profile(&Kernel::fractional(1, s, 1.0).unwrap()).unwrap();
        let q = p.shifted(c, c_prime);
        let (a, b) = (p.interval_perimeter(r), q.interval_perimeter(r));
        // the offsets cancel up to the rounding of the terms they enter
        let scale = a.abs() + 8.0 * (c.abs() * r + c_prime.abs());
        prop_assert!((a - b).abs() <= 1e-14 * scale, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn seminorm_is_invariant_under_symmetrization(
        vals in prop::collection::vec(-2.0f64..2.0, 32),
        rate in 0.5f64..3.0,
        p in prop::sample::select(vec![1.0, 2.0]),
    ) {
        let g = Grid::centered(1, 1.0 / 16.0, 1.0).unwrap();
        let u = GridFunction::new(g, vals).unwrap();
        let k = one_sided(rate);
        let sc = QuadratureScheme::default();
        let a = seminorm(&u, &k, p, Domain::WholeSpace, &sc).unwrap().value;
        let b = seminorm(&u, &k.symmetrize(), p, Domain::WholeSpace, &sc).unwrap().value;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn seminorm_is_non_negative_and_vanishes_on_constants(
        vals in prop::collection::vec(-2.0f64..2.0, 32),
        level in -3.0f64..3.0,
    ) {
        let g = Grid::centered(1, 1.0 / 16.0, 1.0).unwrap();
        let omega = GridSet::from_fn(&g, |x| x[0].abs() < 0.5);
        let k = Kernel::fractional(1, 0.25, 2.0).unwrap();
        let sc = QuadratureScheme::default();
        let u = GridFunction::new(g.clone(), vals).unwrap();
        prop_assert!(seminorm(&u, &k, 2.0, Domain::Set(&omega), &sc).unwrap().value >= 0.0);
        let c = GridFunction::constant(&g, level);
        prop_assert_eq!(seminorm(&c, &k, 2.0, Domain::Set(&omega), &sc).unwrap().value, 0.0);
    }

    #[test]
    fn extension_agrees_with_input_on_domain(vals in prop::collection::vec(-1.0f64..1.0, 32)) {
        let g = Grid::covering(1.0 / 16.0, &[-0.5], &[1.5]).unwrap();
        let dom = BoxDomain::new(&g, &[(vec![0.0], vec![1.0])], 0.25).unwrap();
        let idx = dom.set().indices();
        let mut u = GridFunction::zeros(&g);
        for (f, v) in idx.iter().zip(&vals) {
            u.values_mut()[*f] = *v;
        }
        let k = Kernel::fractional(1, 0.25, 1.0).unwrap();
        let (ext, _) = extend(&u, &dom, &k, &ExtendOptions::default()).unwrap();
        for f in idx {
            prop_assert_eq!(ext.values()[f], u.values()[f]);
        }
    }

    #[test]
    fn perimeter_is_translation_invariant(ds in prop::collection::vec(disc(), 1..3), sx in -3i64..=3, sy in -3i64..=3) {
        let g = Grid::centered(2, 1.0 / 8.0, 1.5).unwrap();
        let e = discs(&g, &ds);
        let t = e.translate(&[sx, sy]).unwrap();
        let k = Kernel::fractional(2, 0.5, 1.0).unwrap();
        let sc = QuadratureScheme::default();
        let a = perimeter(&e, &k, Domain::WholeSpace, &sc).unwrap().value;
        let b = perimeter(&t, &k, Domain::WholeSpace, &sc).unwrap().value;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn energy_is_monotone_under_inclusion(e in prop::collection::vec(disc(), 1..3), f in prop::collection::vec(disc(), 1..3)) {
        let g = Grid::centered(2, 1.0 / 8.0, 1.0).unwrap();
        let small = discs(&g, &e);
        let big = small.union(&discs(&g, &f)).unwrap();
        let k = Kernel::new(2, KernelFamily::Gaussian { sigma: 0.3, amplitude: 1.0 }, Norm::Euclidean).unwrap();
        let sc = QuadratureScheme::default();
        let a = interaction_energy(&small, &k, EnergyMethod::Direct, &sc).unwrap().value;
        let b = interaction_energy(&big, &k, EnergyMethod::Direct, &sc).unwrap().value;
        prop_assert!(a <= b, "{a} > {b}");
    }

    #[test]
    fn fft_energy_matches_direct(ds in prop::collection::vec(disc(), 1..4), cap in 5.0f64..100.0) {
        let g = Grid::centered(2, 1.0 / 16.0, 0.5).unwrap();
        let e = discs(&g, &ds);
        let k = Kernel::fractional(2, 0.5, 1.0).unwrap().truncate(Truncation::Cap(cap)).unwrap();
        let sc = QuadratureScheme::default();
        let a = interaction_energy(&e, &k, EnergyMethod::Direct, &sc).unwrap().value;
        let b = interaction_energy(&e, &k, EnergyMethod::Fft, &sc).unwrap().value;
        prop_assert!(rel(a, b) <= 1e-8, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(config(8))]

    #[test]
    fn greedy_trace_is_non_increasing(ds in prop::collection::vec(disc(), 1..3), seed in any::<u64>()) {
        let g = Grid::centered(2, 1.0 / 8.0, 1.0).unwrap();
        let e = discs(&g, &ds);
        let k = Kernel::new(2, KernelFamily::Gaussian { sigma: 0.3, amplitude: 1.0 }, Norm::Euclidean).unwrap();
        let opts = OptimizeOptions { max_moves: 100, seed, ..Default::default() };
        let r = optimize(&k, &e, e.volume(), &opts, &QuadratureScheme::default()).unwrap();
        prop_assert!(r.trace.windows(2).all(|w| w[1].perimeter <= w[0].perimeter));
        prop_assert_eq!(r.best.count(), e.count());
    }
}
