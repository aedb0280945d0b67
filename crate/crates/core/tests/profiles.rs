use std::f64::consts::PI;
use std::sync::Arc;

use normsolve::profiles::shooting::{bisect_center, find_center, trace};
use normsolve::profiles::{
    gn_constant, gn_exponent, ground_state_on, solve_scalar_ground_state, sobolev_constant,
    AubinTalenti, BubbleParams, ConstantsTable,
};
use normsolve::{Error, Grid, Spacing};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn lp(grid: &Grid, u: &[f64], p: i32) -> f64 {
    let f: Vec<f64> = u.iter().map(|x| x.abs().powi(p)).collect();
    grid.integrate(&f)
}

fn weinstein(grid: &Grid, u: &[f64], p: u32) -> f64 {
    let gamma = gn_exponent(grid.dim(), p);
    lp(grid, u, p as i32).powf(1.0 / p as f64)
        / (grid.kinetic(u).powf(gamma / 2.0) * grid.norm_sq(u).powf((1.0 - gamma) / 2.0))
}

#[test]
fn planar_cubic_profile_identities() {
    let q = solve_scalar_ground_state(2, 3).unwrap();
    let g = q.field.grid();
    let (k, m, q4) = (q.field.kinetic(), q.field.mass(), lp(g, q.field.values(), 4));
    assert!(rel(k, m) < 1e-6, "{k} {m}");
    assert!(rel(m, 0.5 * q4) < 1e-6, "{m} {q4}");
    assert!(rel(k, 0.5 * q4) < 1e-6);
    // Known Townes mass 2π · 1.86225...
    assert!(rel(m, 2.0 * PI * 1.862_25) < 1e-5, "{m}");
}

#[test]
fn planar_quartic_constant_from_the_mass() {
    let c = ConstantsTable::global();
    assert!(rel(c.gn(2, 4).powi(4), 2.0 / c.q_mass_sq) < 1e-6);
    assert!(rel(gn_constant(2, 4).unwrap(), (2.0 / c.q_mass_sq).powf(0.25)) < 1e-6);
    for e in &c.gn {
        assert!(e.c > 0.0);
        assert_eq!(e.gamma, e.dim as f64 * (e.p as f64 - 2.0) / (2.0 * e.p as f64));
    }
    assert!(c.w_mass_sq > 0.0 && c.w_kinetic > 0.0 && c.q3_mass_sq > 0.0);
}

#[test]
fn line_constants_match_sech_closed_forms() {
    // p = 4: Q = √2 sech x, ‖Q‖₄⁴ = 16/3, ‖Q'‖² = 4/3, ‖Q‖² = 4, γ = 1/4.
    let c14 = (16.0f64 / 3.0).powf(0.25) / ((4.0f64 / 3.0).powf(0.125) * 4f64.powf(0.375));
    // p = 3: u = (3/2) sech²(x/2), ∫|u|³ = 36/5, ‖u'‖² = 6/5, ‖u‖² = 6, γ = 1/6.
    let c13 = (36.0f64 / 5.0).powf(1.0 / 3.0) / ((6.0f64 / 5.0).powf(1.0 / 12.0) * 6f64.powf(5.0 / 12.0));
    assert!(rel(gn_constant(1, 4).unwrap(), c14) < 1e-7);
    assert!(rel(gn_constant(1, 3).unwrap(), c13) < 1e-7);
}

#[test]
fn critical_quartic_constant_is_the_sobolev_one() {
    let s = sobolev_constant();
    // S = √(S²) with S² = 32π²/3 for this bubble normalisation.
    assert!(rel(s * s, 32.0 * PI * PI / 3.0) < 1e-9);
    assert!(rel(gn_constant(4, 4).unwrap(), 1.0 / s.sqrt()) < 1e-15);
    assert!(matches!(gn_constant(3, 6), Err(Error::Domain(_))));
    assert!(matches!(gn_constant(4, 5), Err(Error::Domain(_))));
    assert!(matches!(gn_constant(2, 2), Err(Error::Domain(_))));
}

/// Compass search on `Σ aₖ exp(−r²/wₖ²)`, three free parameters.
fn best_mixture(dim: usize, p: u32) -> f64 {
    let grid = Grid::new(dim, 60.0, 2048, Spacing::Graded { stretch: 4.0 }).unwrap();
    let quotient = |x: &[f64; 3]| {
        let (a, w1, w2) = (x[0], x[1].exp(), x[2].exp());
        let u = grid.tabulate(|r| (-r * r / (w1 * w1)).exp() + a * (-r * r / (w2 * w2)).exp());
        weinstein(&grid, &u, p)
    };
    let mut best = f64::NEG_INFINITY;
    for start in [[0.5, 0.0, 0.7], [-0.3, 0.5, -0.5], [1.0, -0.3, 0.9]] {
        let mut x = start;
        let mut fx = quotient(&x);
        let mut h = 0.25;
        while h > 1e-5 {
            let mut moved = false;
            for i in 0..3 {
                for s in [h, -h] {
                    let mut y = x;
                    y[i] += s;
                    let fy = quotient(&y);
                    if fy.is_finite() && fy > fx {
                        x = y;
                        fx = fy;
                        moved = true;
                    }
                }
            }
            if !moved {
                h *= 0.5;
            }
        }
        best = best.max(fx);
    }
    best
}

#[test]
fn gaussian_mixtures_approach_the_constants_from_below() {
    let c = ConstantsTable::global();
    for (dim, p) in [(3, 3), (3, 4)] {
        let best = best_mixture(dim, p);
        let cn = c.gn(dim, p);
        assert!(best <= cn * (1.0 + 1e-6), "({dim},{p}): {best} > {cn}");
        assert!(best >= cn * (1.0 - 5e-3), "({dim},{p}): {best} vs {cn}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_fields_stay_below_the_constant(
        entry in 0usize..8,
        bumps in prop::collection::vec((-1.0f64..1.0, 0.0f64..4.0, 0.3f64..3.0), 1..5),
    ) {
        let c = ConstantsTable::global();
        let e = c.gn[entry];
        let grid = Grid::new(e.dim, 60.0, 1024, Spacing::Graded { stretch: 4.0 }).unwrap();
        let u = grid.tabulate(|r| bumps.iter().map(|&(a, m, w)| a * (-((r - m) / w).powi(2)).exp()).sum());
        prop_assume!(grid.norm_sq(&u) > 1e-8);
        let q = weinstein(&grid, &u, e.p);
        prop_assert!(q <= e.c * (1.0 + 1e-6), "({},{}): {q} > {}", e.dim, e.p, e.c);
    }
}

#[test]
fn quadratic_profile_against_a_coarser_grid() {
    let w = solve_scalar_ground_state(3, 2).unwrap();
    assert!(w.residual < 1e-10);
    let coarse = ground_state_on(Arc::new(Grid::graded(3, 40.0, 2048, 3.0).unwrap()), 2).unwrap();
    assert!(rel(coarse.field.mass(), w.field.mass()) < 1e-4);
    // The raw shooting trajectory integrated by the trapezoid rule.
    let shot = trace(3, 2.0, w.center);
    let mut mass = 0.0;
    for pair in shot.trajectory.windows(2) {
        let ((r0, u0, _), (r1, u1, _)) = (pair[0], pair[1]);
        mass += 0.5 * (r1 - r0) * (r0 * r0 * u0 * u0 + r1 * r1 * u1 * u1);
    }
    assert!(rel(4.0 * PI * mass, w.field.mass()) < 1e-4, "{} vs {}", 4.0 * PI * mass, w.field.mass());
    // Radially decreasing.
    assert!(w.field.values().windows(2).all(|x| x[1] <= x[0] + 1e-14));
}

#[test]
fn central_value_is_bracket_independent() {
    for (dim, p) in [(2, 3.0), (3, 2.0)] {
        let c = find_center(dim, p).unwrap();
        let a = bisect_center(dim, p, 0.5 * c, 1.5 * c).unwrap();
        let b = bisect_center(dim, p, 0.9 * c, 3.0 * c).unwrap();
        assert!((a - b).abs() < 1e-8 * c, "{a} {b}");
        assert!(bisect_center(dim, p, 1.1 * c, 2.0 * c).is_err());
    }
}

#[test]
fn spatial_cubic_nehari_identity() {
    let u = solve_scalar_ground_state(3, 3).unwrap();
    let h1 = u.field.h1_norm_sq();
    let q4 = lp(u.field.grid(), u.field.values(), 4);
    assert!(rel(h1, q4) < 1e-6, "{h1} {q4}");
}

#[test]
fn refinement_is_at_least_second_order() {
    let reference = ground_state_on(Arc::new(Grid::graded(2, 40.0, 4096, 3.0).unwrap()), 3).unwrap().field.mass();
    let err = |n: usize| {
        let m = ground_state_on(Arc::new(Grid::graded(2, 40.0, n, 3.0).unwrap()), 3).unwrap().field.mass();
        (m - reference).abs()
    };
    let (e1, e2) = (err(256), err(512));
    assert!(e1 / e2 > 3.5, "{e1} {e2}");
}

#[test]
fn bubble_identities_with_tails() {
    let grid = Arc::new(Grid::graded(4, 1e8, 8192, 20.0).unwrap());
    let mut kinetic = Vec::new();
    for eps in [0.5, 1.0, 2.0] {
        let b = AubinTalenti::new(eps).unwrap();
        assert!(rel(b.value(0.0), 2.0 * 2f64.sqrt() / eps) < 1e-15);
        let u = b.sample(grid.clone());
        let k = u.kinetic() + b.gradient_tail(grid.r_max());
        let q = lp(&grid, u.values(), 4) + b.quartic_tail(grid.r_max());
        assert!(rel(k, q) < 1e-5, "ε = {eps}: {k} {q}");
        assert!(rel(k, 32.0 * PI * PI / 3.0) < 1e-5);
        kinetic.push(k);
    }
    assert!(rel(kinetic[0], kinetic[2]) < 1e-5);
    assert!(AubinTalenti::new(0.0).is_err());
}

#[test]
fn bubble_weight_examples() {
    let b = BubbleParams::new(1.0, 1.0, 2.0).unwrap();
    assert!((b.k1 - 1.0 / 3.0).abs() < 1e-15 && (b.k2 - 1.0 / 3.0).abs() < 1e-15);
    let b = BubbleParams::new(1.0, 2.0, 3.0).unwrap();
    assert!((b.k1 - 1.0 / 7.0).abs() < 1e-15 && (b.k2 - 2.0 / 7.0).abs() < 1e-15);
    assert!(rel(b.s_coupled.powi(2), (b.k1 + b.k2) * sobolev_constant().powi(2)) < 1e-14);
    assert!(matches!(BubbleParams::new(1.0, 2.0, 1.5), Err(Error::Regime(_))));
}

#[test]
fn bubble_pair_solves_the_critical_system() {
    let (mu1, mu2, rho) = (1.0, 2.0, 3.0);
    let b = BubbleParams::new(mu1, mu2, rho).unwrap();
    let grid = Grid::graded(4, 200.0, 4096, 8.0).unwrap();
    let at = AubinTalenti::new(1.0).unwrap();
    let u: Vec<f64> = grid.tabulate(|r| b.k1.sqrt() * at.value(r));
    let v: Vec<f64> = grid.tabulate(|r| b.k2.sqrt() * at.value(r));
    let (lu, lv) = (grid.laplacian(&u), grid.laplacian(&v));
    let mut worst: f64 = 0.0;
    for (j, &r) in grid.nodes().iter().enumerate() {
        if r > 0.05 && r < 20.0 {
            let ru = lu[j] + mu1 * u[j].powi(3) + rho * v[j] * v[j] * u[j];
            let rv = lv[j] + mu2 * v[j].powi(3) + rho * u[j] * u[j] * v[j];
            worst = worst.max(ru.abs() / u[j].powi(3)).max(rv.abs() / v[j].powi(3));
        }
    }
    assert!(worst < 1e-5, "{worst}");
}
