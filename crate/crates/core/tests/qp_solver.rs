mod common;

use common::{feasible_sample, qp_oracle, random_qp, rng};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use qpik_core::qp::{kkt_residual, solve, ActiveConstraint, Multipliers, QpProblem, QpStatus, Side, DEFAULT_MAX_NWSR};
use rand::Rng;

#[test]
fn projection_onto_box() {
    let p = QpProblem::with_bounds(
        DMatrix::identity(2, 2),
        DVector::zeros(2),
        DVector::from_vec(vec![1.0, 1.0]),
        DVector::from_vec(vec![2.0, 2.0]),
    )
    .unwrap();
    let s = solve(&p, None, DEFAULT_MAX_NWSR).unwrap();
    assert_eq!(s.status, QpStatus::Solved);
    assert_eq!(s.a_star, DVector::from_vec(vec![1.0, 1.0]));
    assert_eq!(
        s.active_set,
        vec![
            ActiveConstraint { index: 0, side: Side::Lower },
            ActiveConstraint { index: 1, side: Side::Lower }
        ]
    );
}

#[test]
fn clipped_scalar_optimum() {
    let p = QpProblem::new(
        DMatrix::identity(1, 1),
        DVector::from_vec(vec![-3.0]),
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_vec(vec![-1.0]),
        DVector::from_vec(vec![1.0]),
        DVector::from_vec(vec![-10.0]),
        DVector::from_vec(vec![10.0]),
    )
    .unwrap();
    let s = solve(&p, None, DEFAULT_MAX_NWSR).unwrap();
    assert!((s.a_star[0] - 1.0).abs() < 1e-14);
    assert_eq!(s.nac(), 1);
}

#[test]
fn matches_enumeration_oracle() {
    let mut r = rng(20);
    for case in 0..50 {
        let n = r.random_range(1..=6);
        let m = r.random_range(0..=4);
        let p = random_qp(&mut r, n, m);
        let (x_o, f_o) = qp_oracle(&p).expect("generated problems are feasible");
        let s = solve(&p, None, DEFAULT_MAX_NWSR).unwrap();
        assert_eq!(s.status, QpStatus::Solved, "case {case}");
        assert!((&s.a_star - &x_o).amax() <= 1e-6, "case {case}: {} vs {}", s.a_star, x_o);
        assert!((s.objective - f_o).abs() <= 1e-8, "case {case}");
        assert!(s.kkt_residual <= 1e-8, "case {case}: {}", s.kkt_residual);
    }
}

#[test]
fn residual_at_oracle_solution_is_tiny() {
    let mut r = rng(21);
    for _ in 0..20 {
        let p = random_qp(&mut r, 4, 3);
        let s = solve(&p, None, DEFAULT_MAX_NWSR).unwrap();
        let (x_o, _) = qp_oracle(&p).unwrap();
        // Oracle point with the solver's multipliers: same optimum, so the
        // certificate must still hold.
        assert!(kkt_residual(&p, &x_o, &s.multipliers) <= 1e-8);
    }
}

#[test]
fn residual_ignores_duplicate_row_with_zero_multiplier() {
    let mut r = rng(22);
    let p = random_qp(&mut r, 3, 2);
    let s = solve(&p, None, DEFAULT_MAX_NWSR).unwrap();
    let base = kkt_residual(&p, &s.a_star, &s.multipliers);

    let mut a = p.a.clone().insert_row(2, 0.0);
    a.set_row(2, &p.a.row(0));
    let q = QpProblem::new(
        p.h.clone(),
        p.g.clone(),
        a,
        p.lba.clone().push(p.lba[0]),
        p.uba.clone().push(p.uba[0]),
        p.lb.clone(),
        p.ub.clone(),
    )
    .unwrap();
    let mult = Multipliers {
        bounds: s.multipliers.bounds.clone(),
        general: s.multipliers.general.clone().push(0.0),
    };
    assert_eq!(kkt_residual(&q, &s.a_star, &mult), base);
}

#[test]
fn objective_beats_feasible_samples() {
    let mut r = rng(23);
    let mut checked = 0;
    for _ in 0..1000 {
        let n = r.random_range(1..=5);
        let m = r.random_range(0..=3);
        let p = random_qp(&mut r, n, m);
        let s = solve(&p, None, DEFAULT_MAX_NWSR).unwrap();
        assert_eq!(s.status, QpStatus::Solved);
        for _ in 0..100 {
            let Some(x) = feasible_sample(&mut r, &p, 200) else { break };
            assert!(s.objective <= p.objective(&x) + 1e-12);
            checked += 1;
        }
    }
    assert!(checked > 10_000, "too few feasible samples: {checked}");
}

#[test]
fn solutions_are_feasible_within_tolerance() {
    let mut r = rng(24);
    for _ in 0..200 {
        let p = random_qp(&mut r, 6, 4);
        let s = solve(&p, None, DEFAULT_MAX_NWSR).unwrap();
        assert!(p.max_violation(&s.a_star) <= p.tolerance());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn deterministic(seed in any::<u64>(), n in 1usize..=6, m in 0usize..=4) {
        let p = random_qp(&mut rng(seed), n, m);
        let a = solve(&p, None, DEFAULT_MAX_NWSR).unwrap();
        let b = solve(&p, None, DEFAULT_MAX_NWSR).unwrap();
        prop_assert_eq!(&a, &b);
        let wa = solve(&p, Some(&a.active_set), DEFAULT_MAX_NWSR).unwrap();
        let wb = solve(&p, Some(&a.active_set), DEFAULT_MAX_NWSR).unwrap();
        prop_assert_eq!(wa, wb);
    }

    #[test]
    fn warm_resolve_of_same_problem(seed in any::<u64>(), n in 1usize..=6, m in 0usize..=4) {
        let p = random_qp(&mut rng(seed), n, m);
        let cold = solve(&p, None, DEFAULT_MAX_NWSR).unwrap();
        let warm = solve(&p, Some(&cold.active_set), DEFAULT_MAX_NWSR).unwrap();
        prop_assert!(warm.nwsr <= 1, "nwsr {}", warm.nwsr);
        prop_assert!((warm.objective - cold.objective).abs() <= 1e-8);
    }

    #[test]
    fn warm_from_neighbour_matches_cold(seed in any::<u64>(), n in 1usize..=6, m in 0usize..=4) {
        let mut r = rng(seed);
        let p = random_qp(&mut r, n, m);
        let mut q = p.clone();
        for v in q.g.iter_mut() {
            *v += r.random_range(-0.5..0.5);
        }
        let prev = solve(&p, None, DEFAULT_MAX_NWSR).unwrap();
        let cold = solve(&q, None, DEFAULT_MAX_NWSR).unwrap();
        let warm = solve(&q, Some(&prev.active_set), DEFAULT_MAX_NWSR).unwrap();
        prop_assert_eq!(cold.status, QpStatus::Solved);
        prop_assert_eq!(warm.status, QpStatus::Solved);
        prop_assert!((warm.objective - cold.objective).abs() <= 1e-8);
        prop_assert!(warm.kkt_residual <= 1e-8);
    }
}

#[test]
fn small_norm_rows_match_oracle() {
    // Linearized clearance rows carry a factor dt and are far smaller than
    // the Hessian entries.
    let mut r = rng(25);
    for case in 0..50 {
        let n = r.random_range(2..=6);
        let m = r.random_range(1..=4);
        let mut p = random_qp(&mut r, n, m);
        p.a *= 2e-3;
        p.lba *= 2e-3;
        p.uba *= 2e-3;
        let (x_o, f_o) = qp_oracle(&p).unwrap();
        let s = solve(&p, None, DEFAULT_MAX_NWSR).unwrap();
        assert_eq!(s.status, QpStatus::Solved, "case {case}");
        assert!((&s.a_star - &x_o).amax() <= 1e-6, "case {case}");
        assert!((s.objective - f_o).abs() <= 1e-8, "case {case}");
    }
}

#[test]
fn infeasible_systems_are_detected() {
    let mut r = rng(26);
    for _ in 0..50 {
        let n = r.random_range(1..=5);
        let mut p = random_qp(&mut r, n, 2);
        // Row 0 demands more than the bound box can deliver.
        let reach: f64 = (0..n).map(|j| p.a[(0, j)].abs() * p.lb[j].abs().max(p.ub[j].abs())).sum();
        p.lba[0] = reach + 0.1;
        p.uba[0] = f64::INFINITY;
        let s = solve(&p, None, DEFAULT_MAX_NWSR).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
    }
}
