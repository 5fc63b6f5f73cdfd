//! Systems used across the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use switchbound::{Mode, SwitchedSystem};

pub fn rot(r: f64, theta: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]) * r
}

pub fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(xs)
}

pub fn m(rows: usize, cols: usize, xs: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, xs)
}

pub fn a1() -> DMatrix<f64> {
    rot(0.9, 0.2)
}

pub fn a2() -> DMatrix<f64> {
    rot(0.9, 0.1)
}

/// `w₁ = (A₁ − I)·[1, 0]`.
pub fn w1() -> DVector<f64> {
    (a1() - DMatrix::identity(2, 2)) * v(&[1.0, 0.0])
}

pub fn w2() -> DVector<f64> {
    v(&[0.104, -0.0899])
}

/// Two shifted planar rotations.
pub fn rotation_affine() -> SwitchedSystem {
    SwitchedSystem::new(vec![
        Mode::affine(a1(), w1()).unwrap(),
        Mode::affine(a2(), w2()).unwrap(),
    ])
    .unwrap()
}

pub fn q1() -> DMatrix<f64> {
    m(2, 2, &[2.0, 0.0, 0.0, 3.0])
}

pub fn q2() -> DMatrix<f64> {
    m(2, 2, &[4.0, 0.0, 0.0, 1.0])
}

/// The planar rotations driven by noise of covariance `Q₁`, `Q₂`.
pub fn rotation_noisy() -> SwitchedSystem {
    SwitchedSystem::new(vec![
        Mode::noisy(a1(), q1()).unwrap(),
        Mode::noisy(a2(), q2()).unwrap(),
    ])
    .unwrap()
}

/// Two stable modes whose switched covariance wanders widely.
pub fn erratic() -> SwitchedSystem {
    let i = DMatrix::identity(2, 2);
    SwitchedSystem::new(vec![
        Mode::noisy(m(2, 2, &[0.7, -0.7, 0.2, 0.7]), i.clone()).unwrap(),
        Mode::noisy(m(2, 2, &[0.6, -0.3, 0.1, 0.6]), i).unwrap(),
    ])
    .unwrap()
}

/// Steady state of `P ↦ A·P·Aᵀ + Q` by plain iteration.
pub fn lyapunov_by_iteration(a: &DMatrix<f64>, q: &DMatrix<f64>, steps: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(a.nrows(), a.nrows());
    for _ in 0..steps {
        p = a * &p * a.transpose() + q;
    }
    p
}

/// Sample covariance (normalized by the count, mean removed).
pub fn covariance(points: &[DVector<f64>]) -> DMatrix<f64> {
    let n = points[0].len();
    let count = points.len() as f64;
    let mean = points.iter().fold(DVector::zeros(n), |acc, p| acc + p) / count;
    let mut c = DMatrix::zeros(n, n);
    for p in points {
        let d = p - &mean;
        c += &d * d.transpose();
    }
    c / count
}

/// Entries of `got − want` normalized by `√(want_ii·want_jj)`.
pub fn normalized_error(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    let n = want.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let scale = (want[(i, i)] * want[(j, j)]).sqrt();
            worst = worst.max((got[(i, j)] - want[(i, j)]).abs() / scale);
        }
    }
    worst
}
