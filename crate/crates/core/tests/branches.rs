use std::sync::Arc;

use normsolve::evolution::{evolve, ComplexState, EvolveConfig, EvolutionTrace};
use normsolve::functional::{fiber_critical_points, fiber_from, integrals};
use normsolve::profiles::{BubbleParams, ConstantsTable};
use normsolve::solver::{
    aligned_distance, estimate_constant_a, solve, solve_semitrivial, Mode, SolveConfig, Support,
};
use normsolve::thresholds::{
    check_3d_window_membership, classify_regime, condition_lhs_3d, condition_rhs_3d,
    constant_a_bracket, solve_r0_r1, Membership, Regime,
};
use normsolve::{Field, Grid, Params, Spacing, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spatial() -> Params {
    let c = ConstantsTable::global();
    let p = Params { dim: 3, mu1: 1.0, mu2: 1.0, rho: 5.0, beta: 1.0, b1: 0.5, b2: 0.5 };
    p.with_beta(0.5 * condition_rhs_3d() / condition_lhs_3d(&p, &c))
}

fn line() -> Params {
    Params { dim: 1, mu1: 1.0, mu2: 1.0, rho: 1.0, beta: 1.0, b1: 1.0, b2: 1.0 }
}

#[test]
fn regime_examples() {
    let c = ConstantsTable::global();
    let q = c.q_mass_sq.sqrt();
    let p2 = Params { dim: 2, mu1: 1.0, mu2: 1.0, rho: 1.0, beta: 1.0, b1: 0.1 * q, b2: 0.1 * q };
    assert_eq!(classify_regime(&p2, &c).regime, Regime::Coercive2d);
    let wide = Params { b1: q, b2: q, ..p2 };
    assert_eq!(classify_regime(&wide, &c).regime, Regime::Unbounded2d);
    let p3 = Params { dim: 3, mu1: 1.0, mu2: 1.0, rho: 1.0, beta: 1e-3, b1: 1.0, b2: 1.0 };
    let r = classify_regime(&p3, &c);
    assert_eq!(r.regime, Regime::TwoSolution3d);
    assert!(r.condition_lhs < condition_rhs_3d() && r.r0.unwrap() < r.r1.unwrap());
    let p4 = Params { dim: 4, mu1: 1.0, mu2: 2.0, rho: 3.0, beta: -1.0, b1: 1.0, b2: 1.0 };
    assert_eq!(classify_regime(&p4, &c).regime, Regime::NonexistenceBetaNegative);
    assert_eq!(classify_regime(&p4.with_beta(1.0), &c).regime, Regime::Critical4dOk);
    let json = serde_json::to_value(classify_regime(&p3, &c)).unwrap();
    assert_eq!(json["regime"], "two_solution_3d");
    assert!(json["R0"].as_f64().unwrap() > 0.0);
}

#[test]
fn root_certificates() {
    let c = ConstantsTable::global();
    let p = spatial();
    let (r0, r1) = solve_r0_r1(&p, &c).unwrap();
    let h = |t: f64| normsolve::thresholds::h_eval(t, &p, &c);
    assert!(h(r0).abs() < 1e-9 * 0.5 * r1 * r1);
    assert!(h(r1).abs() < 1e-9 * 0.5 * r1 * r1);
    assert!(h(normsolve::thresholds::t_tilde(&p, &c)) > 0.0);
    assert!(solve_r0_r1(&p.with_beta(100.0), &c).is_err());
}

#[test]
fn planar_bracket_examples() {
    let c = ConstantsTable::global();
    for p in [
        Params { dim: 2, mu1: 1.0, mu2: 2.0, rho: 0.5, beta: 1.0, b1: 1.0, b2: 1.5 },
        Params { dim: 2, mu1: 2.0, mu2: 1.0, rho: 0.2, beta: 0.5, b1: 1.2, b2: 0.8 },
    ] {
        let (lo, hi) = constant_a_bracket(&p, &c).unwrap();
        assert!(lo <= hi);
        let a = estimate_constant_a(&p, &SolveConfig::new(Mode::RayleighQuotientA)).unwrap();
        assert!(a > 0.5 && a >= lo * (1.0 - 1e-2) && a <= hi * (1.0 + 1e-2), "{a} in [{lo}, {hi}]");
        let g = solve(&p, &SolveConfig::new(Mode::GlobalMin)).unwrap();
        assert!(g.converged && g.diagnostics.energy < 0.0);
        assert!(g.diagnostics.lambda1 > 0.0 && g.diagnostics.lambda2 > 0.0);
    }
    assert!(constant_a_bracket(&spatial(), &c).is_err());
}

#[test]
fn line_minimum_is_negative_and_subadditive() {
    let p = line();
    let cfg = SolveConfig::new(Mode::GlobalMin);
    let m = |b1: f64, b2: f64| {
        let r = solve(&p.with_masses(b1, b2), &cfg).unwrap();
        assert!(r.converged, "({b1}, {b2})");
        r.value
    };
    assert!(m(1.0, 1.0) < 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        let (b1, b2, d1, d2): (f64, f64, f64, f64) =
            (rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0));
        let whole = m((b1 * b1 + d1 * d1).sqrt(), (b2 * b2 + d2 * d2).sqrt());
        assert!(m(b1, b2) + m(d1, d2) >= whole - 1e-4);
    }
}

#[test]
fn local_minimum_beats_random_probes() {
    let c = ConstantsTable::global();
    let p = spatial();
    let g = solve(&p, &SolveConfig::new(Mode::LocalMin)).unwrap();
    assert!(g.converged);
    let d = g.diagnostics;
    assert!(d.energy < 0.0 && d.fiber_second > 0.0 && p.beta * d.cubic_coupling > 0.0);
    let (r0, _) = solve_r0_r1(&p, &c).unwrap();
    assert_eq!(check_3d_window_membership(&g.state, &p, &c).unwrap(), Membership::InsideBall);
    assert!(d.kinetic.sqrt() < r0);
    let grid = Arc::new(Grid::new(3, 60.0, 2048, Spacing::Graded { stretch: 4.0 }).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let mut trial = |_: ()| {
            let (a, w1, w2): (f64, f64, f64) = (rng.gen_range(0.0..1.0), rng.gen_range(0.5..4.0), rng.gen_range(0.5..4.0));
            Field::from_fn(grid.clone(), move |r| (-r * r / (w1 * w1)).exp() + a * (-r * r / (w2 * w2)).exp())
        };
        let (u, v) = (trial(()), trial(()));
        let s = State::normalized(u, v, p.b1, p.b2).unwrap();
        let ints = integrals(&p, &s);
        let fc = fiber_critical_points(&p, &s).unwrap();
        let t = fc.s.unwrap();
        let kin = (2.0 * t).exp() * ints.kinetic();
        assert!(kin.sqrt() < r0);
        let probe = fiber_from(3, &ints, p.beta, t).0;
        assert!(d.energy < probe, "{} ≥ {probe}", d.energy);
        // s < c < t < d when all four exist.
        if let (Some(zc), Some(zd)) = (fc.c, fc.d) {
            assert!(t < zc && zc < fc.t.unwrap() && fc.t.unwrap() < zd);
        }
    }
}

#[test]
fn spatial_branches_are_ordered() {
    let c = ConstantsTable::global();
    let p = spatial();
    let plus = solve(&p, &SolveConfig::new(Mode::LocalMin)).unwrap();
    let minus = solve(&p, &SolveConfig::new(Mode::MountainPass)).unwrap();
    assert!(plus.converged && minus.converged);
    assert!(plus.value < 0.0 && 0.0 < minus.value);
    assert!(minus.diagnostics.fiber_second < 0.0);
    // Only the lower envelope h is confined to (R₀, R₁); the excited state lies past R₀.
    assert_ne!(check_3d_window_membership(&minus.state, &p, &c).unwrap(), Membership::InsideBall);
    let far = plus.state.dilate_exact(5.0).unwrap();
    assert_eq!(check_3d_window_membership(&far, &p, &c).unwrap(), Membership::Outside);
    let cfg = SolveConfig::new(Mode::MountainPass);
    let first = solve_semitrivial(&p, &cfg, Support::FirstOnly).unwrap();
    let second = solve_semitrivial(&p, &cfg, Support::SecondOnly).unwrap();
    assert!(first.converged && second.converged);
    assert!(second.state.u.max_abs() == 0.0 && first.state.v.max_abs() == 0.0);
    assert!(minus.value < first.value.min(second.value));
}

#[test]
fn excited_level_falls_with_coupling() {
    let p = spatial();
    let cfg = SolveConfig::new(Mode::MountainPass);
    let levels: Vec<f64> = [0.0, 0.5 * p.beta, p.beta]
        .iter()
        .map(|&b| {
            let r = solve(&p.with_beta(b), &cfg).unwrap();
            assert!(r.converged, "β = {b}");
            r.value
        })
        .collect();
    for w in levels.windows(2) {
        assert!(w[1] <= w[0] + 1e-4, "{levels:?}");
    }
}

#[test]
fn critical_mountain_pass_sits_in_the_window() {
    let p = Params { dim: 4, mu1: 1.0, mu2: 2.0, rho: 3.0, beta: 1.0, b1: 1.0, b2: 1.0 };
    let r = solve(&p, &SolveConfig::new(Mode::MountainPass)).unwrap();
    assert!(r.converged);
    let level = BubbleParams::new(1.0, 2.0, 3.0).unwrap().level();
    assert!(0.0 < r.value && r.value < level, "{} vs {level}", r.value);
    assert!(r.diagnostics.fiber_second < 0.0);
}

#[test]
fn unbounded_planar_ray() {
    let c = ConstantsTable::global();
    let q = c.q_mass_sq.sqrt();
    let p = Params { dim: 2, mu1: 1.0, mu2: 1.0, rho: 1.0, beta: 0.0, b1: q, b2: q };
    assert_eq!(classify_regime(&p, &c).regime, Regime::Unbounded2d);
    let grid = Arc::new(Grid::new(2, 40.0, 2048, Spacing::Graded { stretch: 4.0 }).unwrap());
    let g = |w: f64| Field::from_fn(grid.clone(), move |r| (-r * r / (w * w)).exp());
    let s = State::normalized(g(1.0), g(1.0), p.b1, p.b2).unwrap();
    let ints = integrals(&p, &s);
    assert!(ints.quartic > 2.0 * ints.kinetic());
    let start = fiber_from(2, &ints, 0.0, 0.0).0;
    let mut t = 0.0;
    let mut last = start;
    while fiber_from(2, &ints, 0.0, t).0 > -10.0 * start.abs() {
        t += 0.25;
        let now = fiber_from(2, &ints, 0.0, t).0;
        assert!(now < last);
        last = now;
        assert!(t < 20.0);
    }
}

#[test]
fn reruns_are_identical() {
    let p = spatial();
    let cfg = SolveConfig { seed: 5, ..SolveConfig::new(Mode::LocalMin) };
    let a = solve(&p, &cfg).unwrap();
    let b = solve(&p, &cfg).unwrap();
    assert_eq!(a.state.u.values(), b.state.u.values());
    assert_eq!(a.state.v.values(), b.state.v.values());
    assert_eq!(serde_json::to_string(&a.summary(&p)).unwrap(), serde_json::to_string(&b.summary(&p)).unwrap());
    let other = solve(&p, &SolveConfig { seed: 6, ..cfg }).unwrap();
    assert!((other.value - a.value).abs() < 1e-6 * a.value.abs().max(1e-3));
    assert!(aligned_distance(&a.state, &other.state).unwrap() < 1e-4);
}

#[test]
fn ground_state_rotates_in_phase() {
    let p = spatial();
    let g = solve(&p, &SolveConfig::new(Mode::LocalMin)).unwrap();
    let d = g.diagnostics;
    let x0 = ComplexState::from_real(&g.state);
    let tr = evolve(&x0, &p, &EvolveConfig::for_state(1e-2, 2.0, d.lambda1, d.lambda2), Some(&g.state)).unwrap();
    assert!(!tr.blowup);
    assert!(tr.sup_distance() < 1e-4 * normsolve::state::h1_norm(&g.state));
    let charge: Vec<f64> = (0..tr.times.len()).map(|k| tr.charge(k)).collect();
    assert!(EvolutionTrace::max_relative_drift(&charge) < 1e-9);
    assert!((tr.phase_rate() + d.lambda1).abs() < 1e-3 * d.lambda1);
}

#[test]
fn dump_round_trip_of_a_solution() {
    let p = line();
    let r = solve(&p, &SolveConfig::new(Mode::GlobalMin)).unwrap();
    let mut buf = Vec::new();
    normsolve::dump::write_fields(&mut buf, r.state.grid(), &[r.state.u.values(), r.state.v.values()]).unwrap();
    let (grid, fields) = normsolve::dump::read_fields(buf.as_slice()).unwrap();
    assert!(grid.same_layout(r.state.grid()));
    assert_eq!(fields[0], r.state.u.values());
    assert_eq!(fields[1], r.state.v.values());
}
