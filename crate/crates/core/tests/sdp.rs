mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use switchbound::bound::{bound_maps, invariant_ellipsoid_problem, BoundOptions, Ceiling, LambdaChoice};
use switchbound::linalg::{max_eigenvalue, min_eigenvalue};
use switchbound::sdp::{
    default_lambda_grid, line_search_lambda, logspace, solve_fixed_lambda, LmiProblem, Sense, SolveOptions,
    SolveStatus,
};
use switchbound::AffineMap;

fn below(b: DMatrix<f64>) -> LmiProblem {
    let mut p = LmiProblem::new(b.nrows(), 1e-6).unwrap();
    p.add_affine_map("below", Sense::NegSemidef, move |x| Ok(x - &b))
        .unwrap();
    p
}

fn spd(entries: &[f64], q: usize) -> DMatrix<f64> {
    let b = DMatrix::from_row_slice(q, q, entries);
    &b * b.transpose() + DMatrix::identity(q, q) * 0.1
}

/// Largest `P` with `P ⪯ B` is `B` itself.
#[test]
fn matrix_upper_bound() {
    let b = m(2, 2, &[3.0, 1.0, 1.0, 2.0]);
    let r = solve_fixed_lambda(&below(b.clone()), &SolveOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.objective - 5.0).abs() < 1e-6, "{}", r.objective);
    assert!((&r.p - &b).amax() < 1e-5);
}

#[test]
fn scalar_interval_matches_closed_form() {
    // x ↦ a·x + b is invariant on |x − c| ≤ r iff r ≥ |ac + b − c| / (1 − |a|);
    // the S-procedure is lossless for a single quadratic constraint.
    for &(a, b, c) in &[(0.5, 1.0, 0.0), (-0.8, 0.3, 0.5), (0.2, -1.0, -1.0)] {
        let maps = vec![AffineMap::new(m(1, 1, &[a]), v(&[b])).unwrap()];
        let r = (a * c + b - c).abs() / (1.0 - f64::abs(a));
        let want = 1.0 / (r * r);
        let opts = BoundOptions {
            ceiling: Ceiling::Unbounded,
            verify: None,
            ..BoundOptions::default()
        };
        let got = bound_maps(&maps, &v(&[c]), &opts).unwrap();
        assert!(got.is_feasible());
        let p = got.solve.p[(0, 0)];
        assert!(p <= want * (1.0 + 1e-6), "a={a}: {p} > {want}");
        assert!(p >= want * (1.0 - 1e-3), "a={a}: {p} far below {want}");
    }
}

#[test]
fn infeasible_family() {
    // Expanding maps admit no bounded invariant ellipsoid for any multiplier.
    let maps = vec![AffineMap::new(rot(1.2, 0.2), v(&[0.1, 0.0])).unwrap()];
    let opts = BoundOptions {
        verify: None,
        ..BoundOptions::default()
    };
    let b = bound_maps(&maps, &v(&[0.0, 0.0]), &opts).unwrap();
    assert!(!b.is_feasible());
    assert!(b.ellipsoid.is_none());
    assert_eq!(b.trials.len(), 25);
    assert!(b.trials.iter().all(|t| t.status == SolveStatus::Infeasible));
    let why = b.solve.infeasibility.as_ref().unwrap();
    assert!(why.phase_one_value > 0.0);
    assert!(why.certified);
}

#[test]
fn contradictory_point_constraints() {
    // P ⪯ I and P ⪰ 2I.
    let mut p = LmiProblem::new(2, 1e-6).unwrap();
    p.add_affine_map("low", Sense::NegSemidef, |x| Ok(x - DMatrix::identity(2, 2)))
        .unwrap();
    p.add_affine_map("high", Sense::PosSemidef, |x| {
        Ok(x - DMatrix::identity(2, 2) * 2.0)
    })
    .unwrap();
    let r = solve_fixed_lambda(&p, &SolveOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Infeasible);
    assert!(r.infeasibility.unwrap().phase_one_value > 0.1);
}

#[test]
fn nonlinear_map_is_rejected() {
    let mut p = LmiProblem::new(2, 1e-6).unwrap();
    assert!(p
        .add_affine_map("square", Sense::NegSemidef, |x| Ok(x * x))
        .is_err());
}

#[test]
fn singleton_grid_equals_fixed_solve() {
    let maps = rotation_affine().affine_maps().unwrap();
    let c = v(&[-0.2, 0.13]);
    let opts = SolveOptions::default();
    let make = |l: f64| invariant_ellipsoid_problem(&maps, &c, l, None, opts.epsilon, Some(1e6));
    let fixed = solve_fixed_lambda(&make(3.0).unwrap(), &opts).unwrap();
    let searched = line_search_lambda(make, &[3.0], true, &opts).unwrap();
    assert_eq!(searched.lambda, 3.0);
    assert_eq!(searched.result, fixed);
    assert_eq!(searched.trials.len(), 1);
}

#[test]
fn search_keeps_the_best_trial() {
    let maps = rotation_affine().affine_maps().unwrap();
    let c = v(&[-0.2, 0.13]);
    let opts = SolveOptions::default();
    let make = |l: f64| invariant_ellipsoid_problem(&maps, &c, l, None, opts.epsilon, Some(1e6));
    let grid = default_lambda_grid();
    assert_eq!(grid, logspace(-2.0, 2.0, 25));
    let plain = line_search_lambda(make, &grid, false, &opts).unwrap();
    let refined = line_search_lambda(make, &grid, true, &opts).unwrap();
    let best_grid = plain
        .trials
        .iter()
        .filter(|t| t.status.is_feasible())
        .map(|t| t.objective)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(plain.result.objective, best_grid);
    assert!(refined.result.objective >= plain.result.objective);
    assert!(refined.trials.len() > plain.trials.len());
}

#[test]
fn lambda_grid_endpoints() {
    let g = default_lambda_grid();
    assert_eq!(g.len(), 25);
    assert!((g[0] - 0.01).abs() < 1e-15 && (g[24] - 100.0).abs() < 1e-12 && (g[12] - 1.0).abs() < 1e-14);
    assert!(g.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn fixed_lambda_option() {
    let maps = rotation_affine().affine_maps().unwrap();
    let opts = BoundOptions {
        lambda: LambdaChoice::Fixed(5.0),
        center: Some(v(&[-0.2, 0.13])),
        verify: None,
        ..BoundOptions::default()
    };
    let b = bound_maps(&maps, opts.center.as_ref().unwrap(), &opts).unwrap();
    assert_eq!(b.lambda, 5.0);
    assert!(b.trials.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn residuals_hold_on_recheck(entries in prop::collection::vec(-1.5..1.5f64, 9)) {
        let b = spd(&entries, 3);
        let problem = below(b);
        let opts = SolveOptions::default();
        let r = solve_fixed_lambda(&problem, &opts).unwrap();
        prop_assert!(r.status.is_feasible());
        // Recompute each residual from the returned P rather than trusting
        // the solver's own bookkeeping.
        let y = problem.entries_of(&r.p).unwrap();
        for (c, reported) in problem.constraints().iter().zip(&r.residuals) {
            let fresh = c.residual(&y);
            prop_assert!(c.satisfied(fresh, opts.feasibility_tolerance));
            prop_assert!((fresh - reported.value).abs() <= 1e-12 * fresh.abs().max(1.0));
        }
        prop_assert!(min_eigenvalue(&r.p) >= problem.psd_floor() - opts.feasibility_tolerance);
        prop_assert!(r.objective_history.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        prop_assert!((r.objective - r.p.trace()).abs() <= 1e-12 * r.objective.abs().max(1.0));
    }

    #[test]
    fn solutions_are_deterministic(entries in prop::collection::vec(-1.5..1.5f64, 4), lambda in 0.05..50.0f64) {
        let b = spd(&entries, 2);
        let a = &b * (0.6 / max_eigenvalue(&(&b * b.transpose())).sqrt());
        let maps = vec![AffineMap::new(a, v(&[0.3, -0.1])).unwrap()];
        let c = v(&[0.1, 0.0]);
        let problem = invariant_ellipsoid_problem(&maps, &c, lambda, None, 1e-6, Some(1e4)).unwrap();
        let opts = SolveOptions::default();
        prop_assert_eq!(solve_fixed_lambda(&problem, &opts).unwrap(), solve_fixed_lambda(&problem, &opts).unwrap());
    }

    #[test]
    fn invariance_blocks_are_negative_at_the_solution(lambda in 0.5..20.0f64) {
        let maps = rotation_affine().affine_maps().unwrap();
        let c = v(&[-0.2, 0.13]);
        let problem = invariant_ellipsoid_problem(&maps, &c, lambda, None, 1e-6, Some(1e6)).unwrap();
        let r = solve_fixed_lambda(&problem, &SolveOptions::default()).unwrap();
        if r.status.is_feasible() {
            for m in &maps {
                let block = switchbound::ellipsoid::s_proc_matrix(&m.a, &m.b, &r.p, &c, lambda).unwrap();
                prop_assert!(max_eigenvalue(&block) <= 1e-8);
            }
        }
    }
}

#[test]
fn unbounded_trace_is_reported() {
    // Centered on the fixed point, every radius is invariant.
    let maps = vec![AffineMap::new(m(1, 1, &[0.5]), v(&[1.0])).unwrap()];
    let opts = BoundOptions {
        ceiling: Ceiling::Unbounded,
        lambda: LambdaChoice::Fixed(1.0),
        verify: None,
        ..BoundOptions::default()
    };
    let err = bound_maps(&maps, &v(&[2.0]), &opts).unwrap_err();
    assert!(err.to_string().contains("unbounded"), "{err}");
    let capped = BoundOptions {
        ceiling: Ceiling::Auto,
        ..opts
    };
    assert!(bound_maps(&maps, &v(&[2.0]), &capped).unwrap().is_feasible());
}

#[test]
fn ceiling_caps_eigenvalues() {
    let maps = vec![AffineMap::new(DMatrix::zeros(2, 2), DVector::zeros(2)).unwrap()];
    let opts = BoundOptions {
        ceiling: Ceiling::Fixed(50.0),
        center: Some(DVector::zeros(2)),
        verify: None,
        ..BoundOptions::default()
    };
    let b = bound_maps(&maps, &DVector::zeros(2), &opts).unwrap();
    assert!(b.is_feasible());
    assert!(max_eigenvalue(&b.solve.p) <= 50.0 + 1e-6);
    assert!(b.solve.objective > 99.0);
}
