mod common;

use common::{criss_cross, obs, random_lp, vertex_enumeration};
use proptest::prelude::*;
use qnet_core::fluid::{build_fluid_lp, plan, FluidConfig, LinearProgram, LpError, Relation};
use qnet_core::matrix::Matrix;
use qnet_core::netmodel::{ArrivalSpec, NetworkSpec, ServiceSpec};
use qnet_core::{Network, SimRng};

fn drain_queue(mu: f64) -> Network {
    NetworkSpec {
        topology: Matrix::from_rows(&[vec![1]]).unwrap(),
        rates: Matrix::from_rows(&[vec![mu]]).unwrap(),
        holding_costs: vec![1.0],
        pool_sizes: vec![1],
        routing: vec![vec![-1]],
        arrivals: vec![ArrivalSpec::Trace { times: vec![] }],
        services: vec![ServiceSpec::Exponential],
        init_queues: vec![0],
    }
    .validate()
    .unwrap()
}

/// Left Riemann sum of the drained level max(q0 − μ t, 0) on G cells.
fn triangle_sum(q0: f64, mu: f64, grid: usize, horizon: f64) -> f64 {
    let h = horizon / grid as f64;
    (0..grid).map(|g| h * (q0 - mu * h * g as f64).max(0.0)).sum()
}

/// Checks dual feasibility for `min c·x` with the solver's sign convention
/// (value = constant + Σ y_i b_i): y ≤ 0 on ≤ rows, y ≥ 0 on ≥ rows and
/// reduced costs c − Aᵀy ≥ 0.
fn dual_feasible(lp: &LinearProgram, y: &[f64]) -> bool {
    let tol = 1e-7;
    let signs = lp.constraints.iter().zip(y).all(|(c, &v)| match c.relation {
        Relation::Le => v <= tol,
        Relation::Ge => v >= -tol,
        Relation::Eq => true,
    });
    let reduced = (0..lp.num_vars()).all(|k| {
        let aty: f64 = lp.constraints.iter().zip(y).map(|(c, v)| c.coeffs[k] * v).sum();
        lp.objective[k] - aty >= -tol
    });
    signs && reduced
}

#[test]
fn twenty_random_lps_match_vertex_enumeration_and_duality() {
    let mut rng = SimRng::new(2024);
    for case in 0..20 {
        let n = 2 + case % 5;
        let lp = random_lp(&mut rng, n, 2 + case % 4);
        let sol = lp.solve().unwrap();
        let brute = vertex_enumeration(&lp).unwrap();
        assert!((sol.value - brute).abs() <= 1e-6, "case {case}: {} vs {brute}", sol.value);
        let dual: f64 = lp.constant + lp.constraints.iter().zip(&sol.duals).map(|(c, y)| c.rhs * y).sum::<f64>();
        assert!((sol.value - dual).abs() <= 1e-6, "case {case}: dual {dual}");
        assert!(dual_feasible(&lp, &sol.duals), "case {case}");
        assert!(lp.max_violation(&sol.x) <= 1e-8 * (1.0 + 3.0 * n as f64));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn simplex_is_optimal_feasible_and_monotone(seed in any::<u64>(), n in 2usize..=5, rows in 1usize..=5) {
        let mut rng = SimRng::new(seed);
        let lp = random_lp(&mut rng, n, rows);
        let sol = lp.solve().unwrap();
        let b_inf = lp.constraints.iter().map(|c| c.rhs.abs()).fold(0.0, f64::max);
        prop_assert!(lp.max_violation(&sol.x) <= 1e-8 * (1.0 + b_inf));
        prop_assert!((lp.evaluate(&sol.x) - sol.value).abs() <= 1e-8 * (1.0 + sol.value.abs()));
        let brute = vertex_enumeration(&lp).unwrap();
        prop_assert!((sol.value - brute).abs() <= 1e-6);
        for w in sol.trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
    }
}

#[test]
fn small_textbook_cases() {
    // maximise x1 + x2 subject to x1 + x2 ≤ 1
    let mut lp = LinearProgram::new(2);
    lp.objective = vec![-1.0, -1.0];
    lp.push(vec![1.0, 1.0], Relation::Le, 1.0);
    assert!((lp.solve().unwrap().value + 1.0).abs() < 1e-12);

    let mut lp = LinearProgram::new(1);
    lp.push(vec![1.0], Relation::Le, -1.0);
    assert_eq!(lp.solve().unwrap_err(), LpError::Infeasible);

    let mut lp = LinearProgram::new(1);
    lp.objective = vec![-1.0];
    lp.push(vec![1.0], Relation::Ge, 0.0);
    assert_eq!(lp.solve().unwrap_err(), LpError::Unbounded);
}

#[test]
fn fluid_drain_matches_triangle_sum() {
    let net = drain_queue(1.0);
    for &(q0, grid, horizon) in &[(5u32, 10usize, 10.0), (5, 50, 10.0), (7, 20, 14.0), (3, 7, 10.0), (12, 50, 30.0)] {
        let fl = build_fluid_lp(&net, &obs(&[q0]), grid, horizon);
        let sol = fl.lp.solve().unwrap();
        let want = triangle_sum(q0 as f64, 1.0, grid, horizon);
        assert!((sol.value - want).abs() <= 1e-9 * (1.0 + want), "{q0} {grid} {horizon}: {} vs {want}", sol.value);
    }
}

#[test]
fn grid_refinement_halves_the_gap() {
    let net = drain_queue(1.0);
    let exact = 12.5;
    let gap = |grid| {
        let fl = build_fluid_lp(&net, &obs(&[5]), grid, 10.0);
        fl.lp.solve().unwrap().value - exact
    };
    let (g1, g2) = (gap(20), gap(40));
    assert!(g1 > 0.0 && g2 > 0.0);
    assert!((g1 / g2 - 2.0).abs() < 0.05, "{g1} {g2}");
}

#[test]
fn idle_dynamics_grow_linearly() {
    let net = criss_cross();
    let q = [4u32, 2, 1];
    let fl = build_fluid_lp(&net, &obs(&q), 10, 20.0);
    let u = vec![0.0; fl.lp.num_vars()];
    let x = fl.levels(&u);
    let lam = [0.9, 0.0, 0.9];
    for (g, level) in x.iter().enumerate() {
        for i in 0..3 {
            // disabled arrivals contribute their nominal floor rate
            let rate = net.arrivals()[i].rate_at(0.0);
            assert!((rate - lam[i]).abs() < 1e-5);
            assert_eq!(level[i], {
                let mut v = q[i] as f64;
                for _ in 0..g {
                    v += fl.step * rate;
                }
                v
            });
        }
    }
}

#[test]
fn criss_cross_plan_is_an_optimal_vertex() {
    let net = criss_cross();
    let fl = build_fluid_lp(&net, &obs(&[5, 0, 5]), 4, 8.0);
    let sol = fl.lp.solve().unwrap();
    assert!(fl.lp.max_violation(&sol.x) < 1e-8);
    // the drained path from the solution reproduces the objective
    let x = fl.levels(&sol.x);
    let left: f64 = x[..4].iter().map(|l| fl.step * l.iter().sum::<f64>()).sum();
    assert!((left - sol.value).abs() < 1e-8);
    let p = plan(
        &net,
        &obs(&[5, 0, 5]),
        &FluidConfig {
            grid: 4,
            horizon: Some(8.0),
            resolve_every: 1000,
        },
    )
    .unwrap();
    assert_eq!(p.value, sol.value);

    // small enough grid for the enumeration oracle
    for grid in [1, 2] {
        let fl = build_fluid_lp(&net, &obs(&[5, 0, 5]), grid, 4.0);
        let sol = fl.lp.solve().unwrap();
        let brute = vertex_enumeration(&fl.lp).unwrap();
        assert!((sol.value - brute).abs() <= 1e-6, "grid {grid}: {} vs {brute}", sol.value);
    }
}
