mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use switchbound::kron::{
    cov_step, duplication_matrix, elimination_matrix, kron, unvec, unvech, vec, vech, vech_len,
};
use switchbound::linalg::min_eigenvalue;
use switchbound::{lift, Mode, Reduction, SwitchedSystem};

/// Kronecker product by its definition, independent of the library.
fn kron_oracle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = b.shape();
    DMatrix::from_fn(a.nrows() * p, a.ncols() * q, |r, c| {
        a[(r / p, c / q)] * b[(r % p, c % q)]
    })
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let m = random_matrix(rng, n, n, scale);
    DMatrix::from_fn(n, n, |i, j| if i >= j { m[(i, j)] } else { m[(j, i)] })
}

fn single(a: DMatrix<f64>, q: DMatrix<f64>) -> SwitchedSystem {
    SwitchedSystem::new(vec![Mode::noisy(a, q).unwrap()]).unwrap()
}

#[test]
fn cov_step_examples() {
    let mode = Mode::noisy(a1(), q1()).unwrap();
    assert_eq!(cov_step(&mode, &DMatrix::zeros(2, 2)).unwrap(), q1());
    let got = cov_step(&mode, &DMatrix::identity(2, 2)).unwrap();
    assert!((got - m(2, 2, &[2.81, 0.0, 0.0, 3.81])).amax() < 1e-14);
    let identity = Mode::noisy(DMatrix::identity(2, 2), DMatrix::zeros(2, 2)).unwrap();
    let p = m(2, 2, &[3.0, -1.0, -1.0, 2.0]);
    assert_eq!(cov_step(&identity, &p).unwrap(), p);
    assert!(cov_step(&mode, &DMatrix::identity(3, 3)).is_err());
}

#[test]
fn vec_is_column_major() {
    let mat = m(2, 2, &[1.0, 3.0, 2.0, 4.0]);
    assert_eq!(vec(&mat), v(&[1.0, 2.0, 3.0, 4.0]));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let big = random_matrix(&mut rng, 5, 5, 1.0);
    assert_eq!(unvec(&vec(&big), 5).unwrap(), big);
    assert!(unvec(&v(&[1.0, 2.0, 3.0]), 2).is_err());
}

#[test]
fn vec_kronecker_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let a = random_matrix(&mut rng, 3, 3, 1.0);
        let b = random_matrix(&mut rng, 3, 3, 1.0);
        let x = random_matrix(&mut rng, 3, 3, 1.0);
        let lhs = vec(&(&a * &x * b.transpose()));
        let rhs = kron_oracle(&b, &a) * vec(&x);
        assert!((lhs - rhs).amax() < 1e-12);
        assert_eq!(kron(&a, &b), kron_oracle(&a, &b));
    }
}

#[test]
fn vech_examples() {
    let s = m(2, 2, &[1.0, 2.0, 2.0, 3.0]);
    assert_eq!(vech(&s).unwrap(), v(&[1.0, 2.0, 3.0]));
    assert_eq!(duplication_matrix(2) * v(&[1.0, 2.0, 3.0]), vec(&s));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s4 = random_symmetric(&mut rng, 4, 5.0);
    assert_eq!(unvech(&vech(&s4).unwrap(), 4).unwrap(), s4);
    assert!(vech(&m(2, 2, &[1.0, 2.0, 2.1, 3.0])).is_err());
    // Order is lower triangle, column by column.
    let s3 = m(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
    assert_eq!(vech(&s3).unwrap(), v(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
}

#[test]
fn duplication_and_elimination() {
    assert_eq!(duplication_matrix(1), DMatrix::from_element(1, 1, 1.0));
    assert_eq!(elimination_matrix(1), DMatrix::from_element(1, 1, 1.0));
    for n in 1..=5 {
        let d = duplication_matrix(n);
        let l = elimination_matrix(n);
        let k = vech_len(n);
        assert_eq!(d.shape(), (n * n, k));
        assert_eq!(l.shape(), (k, n * n));
        assert_eq!(&l * &d, DMatrix::identity(k, k));
        for col in d.column_iter() {
            let ones = col.iter().filter(|&&x| x == 1.0).count();
            assert!(ones == 1 || ones == 2);
            assert_eq!(col.iter().filter(|&&x| x != 0.0 && x != 1.0).count(), 0);
        }
    }
}

#[test]
fn reduced_matrix_matches_the_symbolic_pattern() {
    let a = m(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    let (a11, a12, a21, a22) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    #[rustfmt::skip]
    let pattern = m(3, 3, &[
        a11 * a11, 2.0 * a11 * a12, a12 * a12,
        a21 * a11, a21 * a12 + a11 * a22, a22 * a12,
        a21 * a21, 2.0 * a21 * a22, a22 * a22,
    ]);
    assert_eq!(
        pattern,
        m(3, 3, &[1.0, 4.0, 4.0, 3.0, 10.0, 8.0, 9.0, 24.0, 16.0])
    );
    // A = [[1,2],[3,4]] has spectral radius above one, so the gate is skipped.
    let sys =
        SwitchedSystem::new_allow_unstable(vec![Mode::noisy(a, DMatrix::identity(2, 2)).unwrap()]).unwrap();
    let ls = lift(&sys, Reduction::SymVech).unwrap();
    assert_eq!(ls.transition(0).unwrap(), &pattern);
}

#[test]
fn lift_special_cases() {
    for r in [Reduction::SymVech, Reduction::FullVec] {
        let ls = lift(&single(DMatrix::identity(3, 3) * 0.5, DMatrix::identity(3, 3)), r).unwrap();
        let k = r.lifted_dim(3);
        assert_eq!(ls.transition(0).unwrap(), &(DMatrix::identity(k, k) * 0.25));
    }
    let (a, b) = (0.5, -0.3);
    let ls = lift(&single(m(2, 2, &[a, 0.0, 0.0, b]), q1()), Reduction::SymVech).unwrap();
    assert_eq!(
        ls.transition(0).unwrap(),
        &DMatrix::from_diagonal(&v(&[a * a, a * b, b * b]))
    );
    assert_eq!(
        ls.lifted_step(0, &DVector::zeros(3)).unwrap(),
        vech(&q1()).unwrap()
    );
    assert!(ls.lifted_step(1, &DVector::zeros(3)).is_err());
}

#[test]
fn full_vec_lift_is_the_kronecker_product() {
    let ls = lift(&rotation_noisy(), Reduction::FullVec).unwrap();
    assert_eq!(ls.transition(0).unwrap(), &kron_oracle(&a1(), &a1()));
    assert_eq!(ls.maps()[1].b, vec(&q2()));
}

#[test]
fn lift_equivalence_on_the_rotation_systems() {
    for (sys, seed) in [(rotation_noisy(), 7u64), (erratic(), 8)] {
        let ls = lift(&sys, Reduction::SymVech).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let i = rng.random_range(0..sys.mode_count());
            let p = random_symmetric(&mut rng, 2, 10.0);
            let want = vech(&cov_step(&sys.modes()[i], &p).unwrap()).unwrap();
            let got = ls.lifted_step(i, &vech(&p).unwrap()).unwrap();
            assert!((got - want).amax() <= 1e-11);
        }
    }
}

fn symmetric_from(entries: &[f64], n: usize) -> DMatrix<f64> {
    let full = DMatrix::from_row_slice(n, n, &entries[..n * n]);
    (&full + full.transpose()) * 0.5
}

proptest! {
    #[test]
    fn lift_equivalence(
        a_entries in prop::collection::vec(-1.0..1.0f64, 9),
        q_entries in prop::collection::vec(-1.0..1.0f64, 9),
        p_entries in prop::collection::vec(-10.0..10.0f64, 9),
        n in 1usize..=3,
        full in any::<bool>(),
    ) {
        let a = DMatrix::from_row_slice(n, n, &a_entries[..n * n]);
        let b = DMatrix::from_row_slice(n, n, &q_entries[..n * n]);
        let q = &b * b.transpose();
        let p = symmetric_from(&p_entries, n);
        let sys = SwitchedSystem::new_allow_unstable(vec![Mode::noisy(a, q).unwrap()]).unwrap();
        let r = if full { Reduction::FullVec } else { Reduction::SymVech };
        let ls = lift(&sys, r).unwrap();
        let want = r.encode(&cov_step(&sys.modes()[0], &p).unwrap()).unwrap();
        let got = ls.lifted_step(0, &r.encode(&p).unwrap()).unwrap();
        prop_assert!((got - want).amax() <= 1e-11);
    }

    #[test]
    fn kronecker_eigenvalues_are_pairwise_products(entries in prop::collection::vec(-1.0..1.0f64, 9)) {
        let a = DMatrix::from_row_slice(3, 3, &entries);
        let ea = a.complex_eigenvalues();
        let ek = kron(&a, &a).complex_eigenvalues();
        let mut used = vec![false; ek.len()];
        for x in &ea {
            for y in &ea {
                let target = x * y;
                let hit = ek
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| !used[*k])
                    .min_by(|(_, u), (_, w)| (*u - target).norm().total_cmp(&(*w - target).norm()))
                    .map(|(k, u)| (k, (u - target).norm()))
                    .unwrap();
                prop_assert!(hit.1 <= 1e-9, "no eigenvalue of A⊗A near {target}");
                used[hit.0] = true;
            }
        }
    }

    #[test]
    fn iteration_from_zero_stays_semidefinite(seed in any::<u64>()) {
        let sys = erratic();
        let ls = lift(&sys, Reduction::SymVech).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes: Vec<usize> = (0..200).map(|_| rng.random_range(0..2)).collect();
        for p in ls.iterate(&DVector::zeros(3), modes).unwrap() {
            prop_assert!(min_eigenvalue(&unvech(&p, 2).unwrap()) >= -1e-9);
        }
    }
}

#[test]
fn stable_modes_have_stable_lifts() {
    for sys in [rotation_noisy(), erratic()] {
        for r in [Reduction::SymVech, Reduction::FullVec] {
            let ls = lift(&sys, r).unwrap();
            for (i, mode) in sys.modes().iter().enumerate() {
                let rho = switchbound::linalg::spectral_radius(ls.transition(i).unwrap());
                assert!((rho - mode.spectral_radius().powi(2)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn lifted_fixed_point_examples() {
    let q = m(2, 2, &[1.0, 0.3, 0.3, 2.0]);
    let ls = lift(&single(DMatrix::zeros(2, 2), q.clone()), Reduction::SymVech).unwrap();
    assert_eq!(ls.lifted_fixed_point(0).unwrap(), vech(&q).unwrap());

    for (theta, scale) in [(0.2, 1.0), (0.1, 2.5), (1.3, 0.4)] {
        let sys = single(rot(0.9, theta), DMatrix::identity(2, 2) * scale);
        let ls = lift(&sys, Reduction::SymVech).unwrap();
        let p = ls.decode(&ls.lifted_fixed_point(0).unwrap()).unwrap();
        assert!((p - DMatrix::identity(2, 2) * (scale / 0.19)).amax() < 1e-12);
    }

    for (i, (a, q)) in [(a1(), q1()), (a2(), q2())].into_iter().enumerate() {
        let ls = lift(&rotation_noisy(), Reduction::SymVech).unwrap();
        let star = ls.lifted_fixed_point(i).unwrap();
        let iterated = ls.iterate(&DVector::zeros(3), vec![i; 500]).unwrap();
        assert!((iterated.last().unwrap() - &star).amax() < 1e-8);
        let lyap = lyapunov_by_iteration(&a, &q, 2000);
        assert!((ls.decode(&star).unwrap() - lyap).amax() < 1e-9);
    }
}
