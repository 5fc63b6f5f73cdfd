use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::kron::{unvech, vech, vech_len};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `F(P) ⪯ 0`
    NegSemidef,
    /// `F(P) ⪰ 0`
    PosSemidef,
}

/// `F(P) = constant + Σₖ yₖ·coefficients[k]` where `y = vech(P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiConstraint {
    pub label: String,
    pub sense: Sense,
    pub constant: DMatrix<f64>,
    pub coefficients: Vec<DMatrix<f64>>,
}

impl LmiConstraint {
    pub fn size(&self) -> usize {
        self.constant.nrows()
    }

    pub fn evaluate(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (yk, ck) in y.iter().zip(&self.coefficients) {
            if *yk != 0.0 {
                m += ck * *yk;
            }
        }
        m
    }

    /// Worst eigenvalue in the direction of the sense: the largest for
    /// `⪯ 0`, the smallest for `⪰ 0`.
    pub fn residual(&self, y: &DVector<f64>) -> f64 {
        let m = self.evaluate(y);
        match self.sense {
            Sense::NegSemidef => linalg::max_eigenvalue(&m),
            Sense::PosSemidef => linalg::min_eigenvalue(&m),
        }
    }

    pub fn satisfied(&self, value: f64, tol: f64) -> bool {
        match self.sense {
            Sense::NegSemidef => value <= tol,
            Sense::PosSemidef => value >= -tol,
        }
    }
}

/// Maximize `trace(P)` over symmetric `P` subject to matrix constraints
/// affine in `P`, `P ⪰ psd_floor·I` and optionally `P ⪯ eigen_ceiling·I`.
///
/// The free variables are the `q(q+1)/2` entries of `vech(P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    dim: usize,
    constraints: Vec<LmiConstraint>,
    objective: DVector<f64>,
    psd_floor: f64,
    eigen_ceiling: Option<f64>,
}

impl LmiProblem {
    pub fn new(dim: usize, psd_floor: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("problem dimension must be positive"));
        }
        if !(psd_floor >= 0.0) || !psd_floor.is_finite() {
            return Err(invalid(format!("psd floor must be nonnegative, got {psd_floor}")));
        }
        let mut objective = DVector::zeros(vech_len(dim));
        for i in 0..dim {
            objective[diag_index(dim, i)] = 1.0;
        }
        Ok(Self {
            dim,
            constraints: Vec::new(),
            objective,
            psd_floor,
            eigen_ceiling: None,
        })
    }

    pub fn with_eigen_ceiling(mut self, ceiling: f64) -> Result<Self> {
        if !(ceiling > self.psd_floor) || !ceiling.is_finite() {
            return Err(invalid(format!(
                "eigenvalue ceiling {ceiling} must exceed the floor {}",
                self.psd_floor
            )));
        }
        self.eigen_ceiling = Some(ceiling);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn free_entries(&self) -> usize {
        vech_len(self.dim)
    }

    pub fn constraints(&self) -> &[LmiConstraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &DVector<f64> {
        &self.objective
    }

    pub fn psd_floor(&self) -> f64 {
        self.psd_floor
    }

    pub fn eigen_ceiling(&self) -> Option<f64> {
        self.eigen_ceiling
    }

    pub fn add_constraint(&mut self, c: LmiConstraint) -> Result<()> {
        let s = c.size();
        if !c.constant.is_square() || s == 0 {
            return Err(invalid(format!("constraint '{}' must be square", c.label)));
        }
        if c.coefficients.len() != self.free_entries() {
            return Err(invalid(format!(
                "constraint '{}' has {} coefficients, expected {}",
                c.label,
                c.coefficients.len(),
                self.free_entries()
            )));
        }
        for m in std::iter::once(&c.constant).chain(&c.coefficients) {
            if m.nrows() != s || m.ncols() != s {
                return Err(invalid(format!("constraint '{}' mixes block sizes", c.label)));
            }
            if !linalg::is_finite(m) || linalg::asymmetry(m) > 1e-12 * m.amax().max(1.0) {
                return Err(invalid(format!(
                    "constraint '{}' is not a finite symmetric map",
                    c.label
                )));
            }
        }
        self.constraints.push(c);
        Ok(())
    }

    /// Adds `map(P) ⪯ 0` or `⪰ 0` for a map that must be affine in `P`.
    ///
    /// The map is sampled at zero and at each basis matrix, then probed at two
    /// random symmetric points; a mismatch beyond 1e-9 (relative) rejects it.
    pub fn add_affine_map<F>(&mut self, label: impl Into<String>, sense: Sense, map: F) -> Result<()>
    where
        F: Fn(&DMatrix<f64>) -> Result<DMatrix<f64>>,
    {
        let label = label.into();
        let n = self.free_entries();
        let constant = map(&DMatrix::zeros(self.dim, self.dim))?;
        let mut coefficients = Vec::with_capacity(n);
        for k in 0..n {
            let basis = self.shape_from(&DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 }));
            let value = map(&basis)?;
            if value.shape() != constant.shape() {
                return Err(invalid(format!("constraint '{label}' changes size with P")));
            }
            coefficients.push(value - &constant);
        }
        let c = LmiConstraint {
            label,
            sense,
            constant,
            coefficients,
        };

        let mut rng = ChaCha8Rng::seed_from_u64(0x11ea_7e57);
        for _ in 0..2 {
            let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let direct = map(&self.shape_from(&y))?;
            let assembled = c.evaluate(&y);
            let scale = direct.amax().max(c.constant.amax()).max(1.0);
            let err = (&direct - &assembled).amax();
            if err > 1e-9 * scale {
                return Err(invalid(format!(
                    "constraint '{}' is not affine in P (probe mismatch {err:e})",
                    c.label
                )));
            }
        }
        self.add_constraint(c)
    }

    pub fn shape_from(&self, y: &DVector<f64>) -> DMatrix<f64> {
        unvech(y, self.dim).expect("variable vector has vech length")
    }

    pub fn entries_of(&self, p: &DMatrix<f64>) -> Result<DVector<f64>> {
        vech(p)
    }

    pub fn objective_value(&self, y: &DVector<f64>) -> f64 {
        self.objective.dot(y)
    }
}

/// Position of `P[i][i]` inside `vech(P)`.
fn diag_index(q: usize, i: usize) -> usize {
    i * q - i * i.saturating_sub(1) / 2
}
