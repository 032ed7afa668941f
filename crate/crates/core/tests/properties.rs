use chns_core::diagnostics::{hminus1_distance, DiagnosticsRecord};
use chns_core::grid::{divergence_fc, gradient_cc, Grid, ScalarField, VectorField};
use chns_core::init::seeded_noise;
use chns_core::materials::{EntropyFunction, MobilitySpec, PotentialSpec};
use chns_core::operators::{helmholtz_project, trilinear_b};
use chns_core::solver::damping_pairing;
use proptest::prelude::*;

fn random_vector(grid: Grid, seed: u64) -> VectorField {
    let comps = (0..grid.dim())
        .map(|a| {
            let s = seeded_noise(Grid::new(grid.dim(), grid.n()).unwrap(), seed.wrapping_add(31 * a as u64 + 1));
            let mut v = s.into_values();
            v.resize(grid.num_faces(a), 0.25);
            v
        })
        .collect();
    let mut v = VectorField::from_components(grid, comps).unwrap();
    v.zero_boundary_normal();
    v
}

fn potentials() -> Vec<PotentialSpec> {
    let log = PotentialSpec::logarithmic(0.15, 0.3).unwrap();
    vec![PotentialSpec::regular(), log, log.regularize(0.1).unwrap(), log.regularize(0.02).unwrap()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn potential_derivatives_match_differences(s in -0.95f64..0.95) {
        let h = 1e-6;
        for p in potentials() {
            let f = |x: f64, order: u8| if order == 0 { p.value(x).unwrap() } else { p.deriv(x, order).unwrap() };
            for order in 0..2u8 {
                let fd = (f(s + h, order) - f(s - h, order)) / (2.0 * h);
                let exact = f(s, order + 1);
                prop_assert!((fd - exact).abs() <= 1e-5 * (1.0 + exact.abs()), "{} order {order} at {s}", p.label());
            }
        }
    }

    #[test]
    fn convex_part_is_convex(s in -0.999f64..0.999) {
        for p in potentials() {
            prop_assert!(p.deriv(s, 2).unwrap() + p.c0() >= -1e-10);
            prop_assert!(p.convex_second(s).unwrap() >= -1e-10);
        }
    }

    #[test]
    fn regularized_potential_lies_below(s in -0.9999f64..0.9999, eps in 0.01f64..0.5) {
        let log = PotentialSpec::logarithmic(0.15, 0.3).unwrap();
        let reg = log.regularize(eps).unwrap();
        prop_assert!(reg.value(s).unwrap() <= log.value(s).unwrap() + 1e-12);
        prop_assert!(reg.value(s).unwrap() >= 0.0);
    }

    #[test]
    fn clamped_mobility_converges(s in -1.0f64..1.0) {
        let m = MobilitySpec::degenerate(1).unwrap();
        let mut last = f64::INFINITY;
        for eps in [0.4, 0.2, 0.1, 0.05] {
            let c = m.regularize(eps).unwrap();
            let gap = (c.value(s) - m.value(s)).abs();
            prop_assert!(gap <= last + 1e-15);
            prop_assert!(c.value(s) >= c.bounds().unwrap().0 - 1e-15);
            last = gap;
        }
    }

    #[test]
    fn pairing_is_nonnegative(seed in any::<u64>(), r in 1.0f64..5.0, scale in 0.01f64..10.0) {
        let g = Grid::new(2, 8).unwrap();
        let mut u = random_vector(g, seed);
        u.scale(scale);
        let v = random_vector(g, seed ^ 0xabc);
        prop_assert!(damping_pairing(&u, &v, r) >= -1e-12);
    }

    #[test]
    fn trilinear_is_antisymmetric(seed in any::<u64>(), n in 8usize..14) {
        let g = Grid::new(2, n).unwrap();
        let (u, v, w) = (random_vector(g, seed), random_vector(g, seed + 1), random_vector(g, seed + 2));
        let scale = u.norm() * v.norm() * w.norm() / g.h();
        prop_assert!(trilinear_b(&u, &v, &v).abs() <= 1e-12 * scale);
        prop_assert!((trilinear_b(&u, &v, &w) + trilinear_b(&u, &w, &v)).abs() <= 1e-12 * scale);
    }

    #[test]
    fn projection_is_idempotent_and_solenoidal(seed in any::<u64>()) {
        let g = Grid::new(2, 12).unwrap();
        let v = random_vector(g, seed);
        let (p, _) = helmholtz_project(&v, 1e-12).unwrap();
        prop_assert!(divergence_fc(&p).max_abs() <= 1e-11);
        let (pp, _) = helmholtz_project(&p, 1e-12).unwrap();
        prop_assert!(pp.sub(&p).max_abs() <= 1e-10);
        prop_assert!(v.sub(&p).dot(&p).abs() <= 1e-10 * v.norm() * v.norm());
    }

    #[test]
    fn hminus1_is_symmetric(seed in any::<u64>()) {
        let g = Grid::new(2, 12).unwrap();
        let a = seeded_noise(g, seed);
        let mut b = seeded_noise(g, seed + 9);
        b.axpy(1.0, &ScalarField::constant(g, a.mean() - b.mean()));
        let x = hminus1_distance(&a, &b, 1e-12).unwrap();
        let y = hminus1_distance(&b, &a, 1e-12).unwrap();
        prop_assert!((x.star - y.star).abs() <= 1e-10 * (1.0 + x.star));
        prop_assert!((x.l2 - y.l2).abs() <= 1e-14);
    }

    #[test]
    fn entropy_function_is_convex_and_nonnegative(s in -1.5f64..1.5, eps in 0.02f64..0.5) {
        let m = MobilitySpec::degenerate(1).unwrap().regularize(eps).unwrap();
        let g = EntropyFunction::new(&m, 256).unwrap();
        prop_assert!(g.value(s) >= 0.0);
        prop_assert!(g.derivative(s + 1e-3) >= g.derivative(s));
        // G'' = 1/m_eps >= 1/sup m_eps gives quadratic growth.
        let m2 = m.bounds().unwrap().1;
        prop_assert!(g.value(s) >= 0.5 * s * s / m2 - 1e-8);
    }

    #[test]
    fn csv_rows_roundtrip(vals in proptest::collection::vec(-1e6f64..1e6, 11)) {
        let mut rec = DiagnosticsRecord::default();
        let header = DiagnosticsRecord::csv_header();
        for (name, v) in header.split(',').zip(&vals) {
            let row: Vec<String> = header.split(',').map(|c| if c == name { format!("{v:e}") } else { "0".into() }).collect();
            rec = DiagnosticsRecord::from_csv_row(&row.join(",")).unwrap();
            prop_assert_eq!(rec.get(name), Some(*v));
        }
        prop_assert_eq!(DiagnosticsRecord::from_csv_row(&rec.to_csv_row()).unwrap(), rec);
    }
}

#[test]
fn gradient_and_divergence_are_adjoint_across_resolutions() {
    for n in [16, 32, 64] {
        let g = Grid::new(2, n).unwrap();
        let phi = seeded_noise(g, n as u64);
        let v = random_vector(g, 3 * n as u64);
        let lhs = gradient_cc(&phi).dot(&v);
        let rhs = -phi.dot(&divergence_fc(&v));
        assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()), "n = {n}: {lhs} vs {rhs}");
    }
}

#[test]
fn trilinear_form_converges_under_refinement() {
    let pi = std::f64::consts::PI;
    let s = |k: f64, x: f64| (k * pi * x).sin();
    let value = |n: usize| {
        let g = Grid::new(2, n).unwrap();
        let u = VectorField::from_fn(g, |a, x| {
            if a == 0 { s(1.0, x[0]).powi(2) * s(2.0, x[1]) } else { -s(2.0, x[0]) * s(1.0, x[1]).powi(2) }
        });
        let v = VectorField::from_fn(g, |a, x| {
            if a == 0 { s(1.0, x[0]) * s(1.0, x[1]) * (1.0 + x[0]) } else { s(2.0, x[0]) * s(1.0, x[1]) * x[1] }
        });
        let w = VectorField::from_fn(g, |a, x| {
            if a == 0 { s(1.0, x[0]) * s(2.0, x[1]) * x[0] } else { s(1.0, x[0]) * s(1.0, x[1]) * (1.0 + x[1] * x[1]) }
        });
        trilinear_b(&u, &v, &w)
    };
    let b: Vec<f64> = [16, 32, 64, 128].iter().map(|&n| value(n)).collect();
    let d1 = (b[1] - b[0]).abs();
    let d2 = (b[2] - b[1]).abs();
    let d3 = (b[3] - b[2]).abs();
    assert!(d2 < d1 && d3 < d2, "{b:?}");
    let ratio = d2 / d3;
    assert!(ratio > 1.8, "refinement ratio {ratio}, values {b:?}");
}
