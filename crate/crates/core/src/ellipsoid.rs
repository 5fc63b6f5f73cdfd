//! Ellipsoids `{x : (x-c)ᵀP(x-c) ≤ 1}`, the S-procedure invariance block and
//! the initial-condition block, and a sampling check of invariance.
//!
//! For a mode `x⁺ = A·x + b` and multiplier `λ > 0` the invariance block is
//!
//! ```text
//! [ (1+λ)AᵀPA − λP            (1+λ)AᵀP(b−c) + λPc          ]
//! [ ((1+λ)AᵀP(b−c) + λPc)ᵀ    (1+λ)(b−c)ᵀP(b−c) − λcᵀPc − 1 ]
//! ```
//!
//! It is the matrix of the quadratic form `(1+λ)V(x⁺) − λV(x) − 1` in
//! `[x; 1]`, so a negative semidefinite block gives `V(x⁺) ≤ 1` whenever
//! `V(x) ≤ 1`. The same block is used unchanged over lifted covariance
//! coordinates.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dynamics::AffineMap;
use crate::error::{ensure_dim, invalid, Result};
use crate::linalg;

pub const DEFAULT_PSD_FLOOR: f64 = 1e-9;
pub const DEFAULT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    p: DMatrix<f64>,
    center: DVector<f64>,
}

impl Ellipsoid {
    pub fn new(p: DMatrix<f64>, center: DVector<f64>) -> Result<Self> {
        Self::with_floor(p, center, DEFAULT_PSD_FLOOR)
    }

    /// Requires `P = Pᵀ` to 1e-12 (relative to its largest entry) and
    /// `λmin(P) ≥ floor`.
    pub fn with_floor(p: DMatrix<f64>, center: DVector<f64>, floor: f64) -> Result<Self> {
        if !p.is_square() {
            return Err(invalid("shape matrix must be square"));
        }
        ensure_dim("center", center.len(), p.nrows())?;
        if !linalg::is_finite(&p) || center.iter().any(|v| !v.is_finite()) {
            return Err(invalid("ellipsoid has non-finite entries"));
        }
        let asym = linalg::asymmetry(&p);
        if asym > 1e-12 * p.amax().max(1.0) {
            return Err(invalid(format!(
                "shape matrix is not symmetric (asymmetry {asym:e})"
            )));
        }
        let p = linalg::symmetrize(&p);
        let low = linalg::min_eigenvalue(&p);
        if low < floor {
            return Err(invalid(format!(
                "shape matrix has eigenvalue {low:e} below the floor {floor:e}"
            )));
        }
        Ok(Self { p, center })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    /// `V(x) = (x−c)ᵀP(x−c)`.
    pub fn quadratic_form(&self, x: &DVector<f64>) -> Result<f64> {
        ensure_dim("point", x.len(), self.dim())?;
        let e = x - &self.center;
        Ok(e.dot(&(&self.p * &e)).max(0.0))
    }

    pub fn contains(&self, x: &DVector<f64>, slack: f64) -> bool {
        self.quadratic_form(x).is_ok_and(|v| v <= 1.0 + slack)
    }

    /// The same ellipsoid with `P` multiplied by `factor` (semi-axes divided
    /// by `√factor`).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::with_floor(&self.p * factor, self.center.clone(), 0.0)
    }

    /// Semi-axis lengths `1/√μ` for the eigenpairs `(μ, v)` of `P`, longest
    /// first, each with its unit direction.
    pub fn semi_axes(&self) -> Vec<(f64, DVector<f64>)> {
        let eig = nalgebra::SymmetricEigen::new(self.p.clone());
        let mut axes: Vec<_> = eig
            .eigenvalues
            .iter()
            .zip(eig.eigenvectors.column_iter())
            .map(|(&mu, v)| (1.0 / mu.sqrt(), v.into_owned()))
            .collect();
        axes.sort_by(|a, b| b.0.total_cmp(&a.0));
        axes
    }

    /// `c + P^{-1/2}·u`; lies on the boundary when `‖u‖ = 1`.
    pub fn boundary_map(&self) -> Result<DMatrix<f64>> {
        linalg::inv_sqrt_spd(&self.p)
    }
}

pub fn quadratic_form(e: &Ellipsoid, x: &DVector<f64>) -> Result<f64> {
    e.quadratic_form(x)
}

pub fn contains(e: &Ellipsoid, x: &DVector<f64>, slack: f64) -> bool {
    e.contains(x, slack)
}

/// The invariance block for one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SProcBlock {
    pub matrix: DMatrix<f64>,
    pub mode_index: usize,
    pub lambda: f64,
}

impl SProcBlock {
    pub fn max_eigenvalue(&self) -> f64 {
        linalg::max_eigenvalue(&self.matrix)
    }
}

/// Assembles the invariance block for arbitrary symmetric `p` (not
/// necessarily definite). The upper triangle is computed and mirrored, so the
/// result is exactly symmetric.
pub fn s_proc_matrix(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    p: &DMatrix<f64>,
    c: &DVector<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("multiplier must be positive, got {lambda}")));
    }
    let q = p.nrows();
    if !a.is_square() || a.nrows() != q || !p.is_square() {
        return Err(invalid("transition and shape matrices must be square and agree"));
    }
    ensure_dim("affine term", b.len(), q)?;
    ensure_dim("center", c.len(), q)?;

    let k = 1.0 + lambda;
    let r = b - c;
    let pa = p * a;
    let top = a.transpose() * &pa * k - p * lambda;
    let side = pa.transpose() * &r * k + p * c * lambda;
    let corner = k * r.dot(&(p * &r)) - lambda * c.dot(&(p * c)) - 1.0;

    let mut m = DMatrix::zeros(q + 1, q + 1);
    for i in 0..q {
        for j in i..q {
            m[(i, j)] = top[(i, j)];
            m[(j, i)] = top[(i, j)];
        }
        m[(i, q)] = side[i];
        m[(q, i)] = side[i];
    }
    m[(q, q)] = corner;
    Ok(m)
}

pub fn s_proc_block(a: &DMatrix<f64>, b: &DVector<f64>, e: &Ellipsoid, lambda: f64) -> Result<SProcBlock> {
    Ok(SProcBlock {
        matrix: s_proc_matrix(a, b, &e.p, &e.center, lambda)?,
        mode_index: 0,
        lambda,
    })
}

/// One block per mode, tagged with its index.
pub fn s_proc_blocks(maps: &[AffineMap], e: &Ellipsoid, lambda: f64) -> Result<Vec<SProcBlock>> {
    maps.iter()
        .enumerate()
        .map(|(i, m)| {
            let mut block = s_proc_block(&m.a, &m.b, e, lambda)?;
            block.mode_index = i;
            Ok(block)
        })
        .collect()
}

/// `[[1, (x0−c)ᵀp], [p(x0−c), p]]`, affine in `p`. For `p ≻ 0` its Schur
/// complement is `p − p·v·vᵀ·p`, so it is PSD exactly when
/// `(x0−c)ᵀp(x0−c) ≤ 1`, i.e. when `x0` lies in the ellipsoid.
///
/// The textbook form `[[1, vᵀ], [v, p]]` describes `vᵀp⁻¹v ≤ 1` and only
/// coincides with membership when `p = I`.
pub fn initial_condition_matrix(
    p: &DMatrix<f64>,
    c: &DVector<f64>,
    x0: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let q = p.nrows();
    ensure_dim("center", c.len(), q)?;
    ensure_dim("initial state", x0.len(), q)?;
    let pv = p * (x0 - c);
    let mut m = DMatrix::zeros(q + 1, q + 1);
    m[(0, 0)] = 1.0;
    for i in 0..q {
        m[(0, i + 1)] = pv[i];
        m[(i + 1, 0)] = pv[i];
        for j in i..q {
            m[(i + 1, j + 1)] = p[(i, j)];
            m[(j + 1, i + 1)] = p[(i, j)];
        }
    }
    Ok(m)
}

pub fn initial_condition_block(e: &Ellipsoid, x0: &DVector<f64>) -> Result<DMatrix<f64>> {
    initial_condition_matrix(&e.p, &e.center, x0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Number of boundary-shell samples; the same number of interior samples
    /// is drawn as well.
    pub samples: usize,
    pub seed: u64,
    pub slack: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: 0,
            slack: DEFAULT_SLACK,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub boundary_samples: usize,
    pub interior_samples: usize,
    /// Point/mode pairs checked.
    pub checks: usize,
    pub violations: usize,
    /// Largest `V(A·x + b)` seen over all checks.
    pub worst_value: f64,
}

impl InvarianceReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

const BATCH: usize = 1024;
// Streams 0 and 1 are used by the simulator.
const FIRST_VERIFY_STREAM: u64 = 2;

/// Samples points of `e` (a boundary shell `V ∈ [0.99, 1]` and the interior)
/// and checks that every mode maps each of them back into `e`.
pub fn verify_invariance(
    e: &Ellipsoid,
    maps: &[AffineMap],
    opts: &VerifyOptions,
) -> Result<InvarianceReport> {
    for m in maps {
        ensure_dim("mode", m.dim(), e.dim())?;
    }
    let root = e.boundary_map()?;
    let batches = opts.samples.div_ceil(BATCH);
    let partial: Vec<(usize, usize, f64)> = (0..batches)
        .into_par_iter()
        .map(|batch| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(FIRST_VERIFY_STREAM + batch as u64);
            let count = BATCH.min(opts.samples - batch * BATCH);
            let q = e.dim();
            let mut checks = 0;
            let mut violations = 0;
            let mut worst = f64::NEG_INFINITY;
            for k in 0..2 * count {
                let u = unit_direction(&mut rng, q);
                let radius = if k < count {
                    rng.random_range(0.99..=1.0f64).sqrt()
                } else {
                    rng.random::<f64>().powf(1.0 / q as f64)
                };
                let x = &e.center + &root * u * radius;
                for m in maps {
                    let v = e.quadratic_form(&m.apply(&x)).unwrap_or(f64::INFINITY);
                    checks += 1;
                    worst = worst.max(v);
                    if !(v <= 1.0 + opts.slack) {
                        violations += 1;
                    }
                }
            }
            (checks, violations, worst)
        })
        .collect();
    let (checks, violations, worst_value) = partial
        .into_iter()
        .fold((0, 0, f64::NEG_INFINITY), |(c, v, w), (c2, v2, w2)| {
            (c + c2, v + v2, w.max(w2))
        });
    Ok(InvarianceReport {
        boundary_samples: opts.samples,
        interior_samples: opts.samples,
        checks,
        violations,
        worst_value,
    })
}

fn unit_direction(rng: &mut ChaCha8Rng, q: usize) -> DVector<f64> {
    loop {
        let z = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = z.norm();
        if norm > 1e-12 {
            return z / norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn unit(q: usize) -> Ellipsoid {
        Ellipsoid::new(DMatrix::identity(q, q), DVector::zeros(q)).unwrap()
    }

    #[test]
    fn quadratic_form_cases() {
        let e = Ellipsoid::new(DMatrix::identity(2, 2), v(&[0.0, 0.0])).unwrap();
        assert_eq!(e.quadratic_form(&v(&[3.0, 4.0])).unwrap(), 25.0);
        assert_eq!(e.quadratic_form(&v(&[0.0, 0.0])).unwrap(), 0.0);
        let e = Ellipsoid::new(DMatrix::from_diagonal(&v(&[4.0, 1.0])), v(&[1.0, 0.0])).unwrap();
        assert_eq!(e.quadratic_form(&v(&[1.5, 0.0])).unwrap(), 1.0);
        assert!(e.quadratic_form(&v(&[1.0])).is_err());
    }

    #[test]
    fn slack_semantics() {
        let e = unit(2);
        let x = v(&[1.0 + 2e-9, 0.0]);
        assert!(!e.contains(&x, 1e-9));
        assert!(e.contains(&x, 1e-8));
        assert!(e.contains(&v(&[0.0, 0.0]), 0.0));
    }

    #[test]
    fn rejects_bad_shape() {
        assert!(Ellipsoid::new(DMatrix::from_diagonal(&v(&[1.0, 0.0])), v(&[0.0, 0.0])).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(Ellipsoid::new(asym, v(&[0.0, 0.0])).is_err());
        assert!(Ellipsoid::new(DMatrix::identity(2, 2), v(&[0.0])).is_err());
    }

    #[test]
    fn collapsing_map_block() {
        let lambda = 2.5;
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let e = Ellipsoid::new(p.clone(), DVector::zeros(2)).unwrap();
        let block = s_proc_block(&DMatrix::zeros(2, 2), &DVector::zeros(2), &e, lambda).unwrap();
        let mut want = DMatrix::zeros(3, 3);
        want.view_mut((0, 0), (2, 2)).copy_from(&(-&p * lambda));
        want[(2, 2)] = -1.0;
        assert!((block.matrix - want).amax() < 1e-15);
    }

    #[test]
    fn block_rejects_nonpositive_lambda() {
        let e = unit(2);
        assert!(s_proc_block(&DMatrix::zeros(2, 2), &DVector::zeros(2), &e, 0.0).is_err());
        assert!(s_proc_block(&DMatrix::zeros(2, 2), &DVector::zeros(2), &e, -1.0).is_err());
    }

    #[test]
    fn initial_block_cases() {
        let e = unit(2);
        let at_center = initial_condition_block(&e, &v(&[0.0, 0.0])).unwrap();
        assert_eq!(at_center, DMatrix::identity(3, 3));
        let edge = initial_condition_block(&e, &v(&[1.0, 0.0])).unwrap();
        assert!(linalg::min_eigenvalue(&edge).abs() < 1e-14);
        let outside = initial_condition_block(&e, &v(&[2.0, 0.0])).unwrap();
        assert!(linalg::min_eigenvalue(&outside) < 0.0);
    }

    #[test]
    fn trivial_system_is_invariant() {
        let maps = vec![
            AffineMap::new(DMatrix::zeros(2, 2), DVector::zeros(2)).unwrap(),
            AffineMap::new(DMatrix::zeros(2, 2), DVector::zeros(2)).unwrap(),
        ];
        let report = verify_invariance(
            &unit(2),
            &maps,
            &VerifyOptions {
                samples: 3000,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.passed());
        assert_eq!(report.checks, 2 * 2 * 3000);
    }

    #[test]
    fn translation_out_of_the_ball_is_caught() {
        let maps = vec![AffineMap::new(DMatrix::identity(2, 2) * 0.5, v(&[0.8, 0.0])).unwrap()];
        let report = verify_invariance(&unit(2), &maps, &VerifyOptions::default()).unwrap();
        assert!(report.violations > 0);
        assert!(report.worst_value > 1.0);
    }

    #[test]
    fn verification_is_deterministic() {
        let maps = vec![AffineMap::new(DMatrix::identity(3, 3) * 0.7, v(&[0.2, 0.0, 0.1])).unwrap()];
        let opts = VerifyOptions {
            samples: 2500,
            seed: 99,
            slack: 1e-9,
        };
        let a = verify_invariance(&unit(3), &maps, &opts).unwrap();
        let b = verify_invariance(&unit(3), &maps, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn semi_axes_are_inverse_root_eigenvalues() {
        let e = Ellipsoid::new(DMatrix::from_diagonal(&v(&[4.0, 1.0, 0.25])), DVector::zeros(3)).unwrap();
        let lengths: Vec<f64> = e.semi_axes().iter().map(|a| a.0).collect();
        assert_eq!(lengths, vec![2.0, 1.0, 0.5]);
    }
}
