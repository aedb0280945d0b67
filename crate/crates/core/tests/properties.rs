use std::sync::Arc;

use approx::assert_relative_eq;
use normsolve::functional::{
    energy, fiber_from, fiber_map, gradient, integrals, pohozaev, project_tangent,
};
use normsolve::profiles::{BubbleParams, ConstantsTable};
use normsolve::thresholds::{h_eval, solve_r0_r1};
use normsolve::{Field, Grid, Params, Spacing, State};
use proptest::prelude::*;

fn grid3() -> Arc<Grid> {
    Arc::new(Grid::new(3, 24.0, 1024, Spacing::Graded { stretch: 4.0 }).unwrap())
}

/// Normalised sum of a few Gaussian shells.
fn mixture(grid: &Arc<Grid>, bumps: &[(f64, f64, f64)]) -> Field {
    let bumps = bumps.to_vec();
    Field::from_fn(grid.clone(), move |r| {
        bumps
            .iter()
            .map(|&(a, c, w)| a * (-((r - c) / w).powi(2)).exp())
            .sum()
    })
}

fn bumps() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((0.2f64..1.0, 0.0f64..2.0, 0.6f64..2.0), 1..4)
}

fn state_strategy() -> impl Strategy<Value = (Vec<(f64, f64, f64)>, Vec<(f64, f64, f64)>, f64, f64)> {
    (bumps(), bumps(), 0.2f64..1.0, 0.2f64..1.0)
}

fn build(grid: &Arc<Grid>, s: &(Vec<(f64, f64, f64)>, Vec<(f64, f64, f64)>, f64, f64)) -> State {
    State::normalized(mixture(grid, &s.0), mixture(grid, &s.1), s.2, s.3).unwrap()
}

fn params3(beta: f64, b1: f64, b2: f64) -> Params {
    Params { dim: 3, mu1: 1.0, mu2: 1.5, rho: 2.0, beta, b1, b2 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn gradient_matches_central_differences(s in state_strategy(), dir in bumps(), beta in 0.1f64..3.0) {
        let grid = grid3();
        let st = build(&grid, &s);
        let p = params3(beta, s.2, s.3);
        let h = mixture(&grid, &dir);
        let (gu, gv) = gradient(&p, &st);
        let exact = grid.dot(&gu, h.values()) + grid.dot(&gv, h.values());
        let eps = 1e-4;
        let shifted = |sign: f64| {
            let mv = |f: &Field| Field::new(grid.clone(), f.values().iter().zip(h.values()).map(|(a, b)| a + sign * eps * b).collect()).unwrap();
            State::new(mv(&st.u), mv(&st.v), st.b1, st.b2).unwrap()
        };
        let fd = (energy(&p, &shifted(1.0)) - energy(&p, &shifted(-1.0))) / (2.0 * eps);
        prop_assert!((fd - exact).abs() < 1e-5 * exact.abs().max(1e-3), "fd {fd} exact {exact}");
    }

    #[test]
    fn fiber_slope_at_zero_is_pohozaev(s in state_strategy(), beta in 0.0f64..3.0, dim in 1usize..=4) {
        let grid = Arc::new(Grid::new(dim, 24.0, 512, Spacing::Graded { stretch: 4.0 }).unwrap());
        let st = build(&grid, &s);
        let p = Params { dim, ..params3(beta, s.2, s.3) };
        let ints = integrals(&p, &st);
        let (psi, d1, _) = fiber_from(dim, &ints, beta, 0.0);
        let pz = pohozaev(&p, &st);
        prop_assert!((d1 - pz).abs() < 1e-6 * pz.abs().max(ints.kinetic()));
        prop_assert!((psi - energy(&p, &st)).abs() < 1e-12 * ints.kinetic());
    }

    #[test]
    fn fiber_map_is_energy_along_the_orbit(s in state_strategy(), t in -1.0f64..1.0) {
        let grid = grid3();
        let st = build(&grid, &s);
        let p = params3(1.0, s.2, s.3);
        let moved = st.dilate_exact(t).unwrap();
        let (a, b) = (fiber_map(&p, &st, t), energy(&p, &moved));
        prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs() + integrals(&p, &moved).kinetic()));
    }

    #[test]
    fn dilation_preserves_mass(s in state_strategy(), t in -0.5f64..0.5) {
        let grid = Arc::new(Grid::new(3, 40.0, 4096, Spacing::Graded { stretch: 4.0 }).unwrap());
        let st = build(&grid, &s);
        let (m1, m2) = st.masses();
        for moved in [st.dilate_exact(t).unwrap(), st.dilate(t).unwrap()] {
            let (n1, n2) = moved.masses();
            prop_assert!(((n1 - m1) / m1).abs() < 1e-8, "{m1} {n1}");
            prop_assert!(((n2 - m2) / m2).abs() < 1e-8, "{m2} {n2}");
        }
    }

    #[test]
    fn dilations_compose(s in state_strategy(), a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let grid = grid3();
        let st = build(&grid, &s);
        let twice = st.dilate_exact(a).unwrap().dilate_exact(b).unwrap();
        let once = st.dilate_exact(a + b).unwrap();
        for (x, y) in twice.grid().nodes().iter().zip(once.grid().nodes()) {
            prop_assert!((x - y).abs() < 1e-12 * y.max(1.0));
        }
        for (x, y) in twice.u.values().iter().zip(once.u.values()) {
            prop_assert!((x - y).abs() < 1e-12 * y.abs().max(1.0));
        }
        let p = params3(1.0, s.2, s.3);
        assert_relative_eq!(energy(&p, &twice), energy(&p, &once), max_relative = 1e-10, epsilon = 1e-14);
    }

    #[test]
    fn laplacian_is_symmetric(f in bumps(), g in bumps(), dim in 1usize..=4) {
        let grid = Arc::new(Grid::new(dim, 24.0, 512, Spacing::Graded { stretch: 4.0 }).unwrap());
        let (f, g) = (mixture(&grid, &f), mixture(&grid, &g));
        let lf = grid.laplacian(f.values());
        let lg = grid.laplacian(g.values());
        let (a, b) = (grid.dot(&lf, g.values()), grid.dot(f.values(), &lg));
        prop_assert!((a - b).abs() < 1e-8 * a.abs().max(b.abs()), "{a} {b}");
        // −⟨Δf, f⟩ is the kinetic energy.
        let k = grid.kinetic(f.values());
        prop_assert!((grid.dot(&lf, f.values()) + k).abs() < 1e-10 * k);
    }

    #[test]
    fn tangent_part_is_orthogonal_to_the_state(s in state_strategy(), beta in 0.0f64..2.0) {
        let grid = grid3();
        let st = build(&grid, &s);
        let p = params3(beta, s.2, s.3);
        let t = project_tangent(&st, gradient(&p, &st));
        let scale = t.norm.max(1e-12) * (s.2 + s.3);
        prop_assert!(grid.dot(&t.gu, st.u.values()).abs() < 1e-10 * scale);
        prop_assert!(grid.dot(&t.gv, st.v.values()).abs() < 1e-10 * scale);
    }

    #[test]
    fn envelope_bounds_the_energy(s in state_strategy(), t in -1.5f64..1.5) {
        let c = ConstantsTable::global();
        let grid = Arc::new(Grid::new(3, 40.0, 2048, Spacing::Graded { stretch: 4.0 }).unwrap());
        let st = build(&grid, &s).dilate_exact(t).unwrap();
        let p = params3(0.7, s.2, s.3);
        let k = integrals(&p, &st).kinetic().sqrt();
        let j = energy(&p, &st);
        prop_assert!(j >= h_eval(k, &p, &c) - 1e-8, "J {j} h {}", h_eval(k, &p, &c));
    }

    #[test]
    fn radii_move_apart_as_masses_shrink(b1 in 0.05f64..0.4, ratio in 0.5f64..2.0, beta in 0.1f64..1.0) {
        let c = ConstantsTable::global();
        let base = params3(beta, b1, b1 * ratio);
        let scales = [0.6, 0.7, 0.8, 0.9, 1.0];
        let radii: Vec<(f64, f64)> = scales
            .iter()
            .filter_map(|k| solve_r0_r1(&base.with_masses(k * base.b1, k * base.b2), &c).ok())
            .collect();
        prop_assume!(radii.len() == scales.len());
        for w in radii.windows(2) {
            prop_assert!(w[1].0 > w[0].0, "R0 {:?}", radii);
            prop_assert!(w[1].1 < w[0].1, "R1 {:?}", radii);
        }
        for &(r0, r1) in &radii {
            prop_assert!(r0 < r1);
        }
    }

    #[test]
    fn bubble_weights_solve_the_linear_system(mu1 in 0.1f64..3.0, mu2 in 0.1f64..3.0, gap in 0.05f64..3.0, above in any::<bool>()) {
        let rho = if above { mu1.max(mu2) + gap } else { mu1.min(mu2) * (1.0 - gap / 3.5) };
        match BubbleParams::new(mu1, mu2, rho) {
            Ok(b) => {
                prop_assert!(b.k1 > 0.0 && b.k2 > 0.0);
                prop_assert!((mu1 * b.k1 + rho * b.k2 - 1.0).abs() < 1e-9);
                prop_assert!((rho * b.k1 + mu2 * b.k2 - 1.0).abs() < 1e-9);
            }
            // Below the band the weights can still turn negative.
            Err(_) => prop_assert!(!above),
        }
    }
}

#[test]
fn mass_ladder_moves_the_radii() {
    let c = ConstantsTable::global();
    let base = Params { dim: 3, mu1: 1.0, mu2: 1.0, rho: 5.0, beta: 1.0, b1: 0.5, b2: 0.5 };
    let beta = 0.5 * normsolve::thresholds::condition_rhs_3d() / normsolve::thresholds::condition_lhs_3d(&base, &c);
    let radii: Vec<(f64, f64)> = [0.2, 0.4, 0.6, 0.8, 1.0]
        .iter()
        .map(|k| solve_r0_r1(&Params { beta, ..base }.with_masses(0.5 * k, 0.5 * k), &c).unwrap())
        .collect();
    for w in radii.windows(2) {
        assert!(w[1].0 > w[0].0 && w[1].1 < w[0].1, "{radii:?}");
    }
}
