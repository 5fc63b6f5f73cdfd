//! Covariance propagation and its lifting to a switched affine system.
//!
//! For a noisy mode `(A, Q)` the state covariance evolves as
//! `P⁺ = A·P·Aᵀ + Q`. Vectorising column-major turns this into the affine map
//! `vec(P⁺) = (A⊗A)·vec(P) + vec(Q)`. Since `P` is symmetric only the
//! `d = n(n+1)/2` lower-triangular entries are independent; the reduced map is
//! `vech(P⁺) = L·(A⊗A)·D·vech(P) + vech(Q)` with the duplication matrix `D` and
//! elimination matrix `L`. `vech` is unscaled (no √2 on off-diagonals).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{AffineMap, Mode, SwitchedSystem, SystemKind, STABILITY_MARGIN};
use crate::error::{ensure_dim, invalid, Error, Result};
use crate::linalg;

/// Asymmetry accepted by [`vech`] before symmetrising.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

pub fn vech_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Inverse of [`vech_len`].
pub fn dim_from_vech_len(d: usize) -> Option<usize> {
    (0..=d).find(|&n| vech_len(n) == d)
}

/// Column-major stacking.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &DVector<f64>, n: usize) -> Result<DMatrix<f64>> {
    ensure_dim("vec length", v.len(), n * n)?;
    Ok(DMatrix::from_column_slice(n, n, v.as_slice()))
}

/// Lower-triangular entries of a symmetric matrix, column by column.
pub fn vech(s: &DMatrix<f64>) -> Result<DVector<f64>> {
    if !s.is_square() {
        return Err(invalid("vech needs a square matrix"));
    }
    let asym = linalg::asymmetry(s);
    if asym > SYMMETRY_TOLERANCE * s.amax().max(1.0) {
        return Err(invalid(format!("matrix is not symmetric (asymmetry {asym:e})")));
    }
    let s = linalg::symmetrize(s);
    let n = s.nrows();
    let mut out = Vec::with_capacity(vech_len(n));
    for j in 0..n {
        for i in j..n {
            out.push(s[(i, j)]);
        }
    }
    Ok(DVector::from_vec(out))
}

pub fn unvech(v: &DVector<f64>, n: usize) -> Result<DMatrix<f64>> {
    ensure_dim("vech length", v.len(), vech_len(n))?;
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    Ok(m)
}

/// Position of entry `(i, j)`, `i ≥ j`, inside `vech`.
fn vech_index(n: usize, i: usize, j: usize) -> usize {
    j * n - j * j.saturating_sub(1) / 2 + i - j
}

struct DupElim {
    duplication: DMatrix<f64>,
    elimination: DMatrix<f64>,
}

fn dup_elim(n: usize) -> Arc<DupElim> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<DupElim>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(n)
        .or_insert_with(|| {
            let d = vech_len(n);
            let mut duplication = DMatrix::zeros(n * n, d);
            let mut elimination = DMatrix::zeros(d, n * n);
            for j in 0..n {
                for i in 0..n {
                    let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
                    duplication[(j * n + i, vech_index(n, hi, lo))] = 1.0;
                }
                for i in j..n {
                    elimination[(vech_index(n, i, j), j * n + i)] = 1.0;
                }
            }
            Arc::new(DupElim {
                duplication,
                elimination,
            })
        })
        .clone()
}

/// `D` with `D·vech(S) = vec(S)` for symmetric `S`.
pub fn duplication_matrix(n: usize) -> DMatrix<f64> {
    dup_elim(n).duplication.clone()
}

/// `L` with `L·vec(S) = vech(S)`; a plain selection of lower-triangular
/// entries.
pub fn elimination_matrix(n: usize) -> DMatrix<f64> {
    dup_elim(n).elimination.clone()
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// One step of the covariance recursion `A·P·Aᵀ + Q`, symmetrised.
pub fn cov_step(mode: &Mode, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q = mode
        .noise_covariance()
        .ok_or_else(|| invalid("cov_step requires a noisy mode"))?;
    if p.nrows() != mode.dim() || p.ncols() != mode.dim() {
        return Err(invalid(format!(
            "covariance is {}x{}, expected {n}x{n}",
            p.nrows(),
            p.ncols(),
            n = mode.dim()
        )));
    }
    let a = mode.transition();
    let next = a * p * a.transpose() + q;
    Ok(linalg::symmetrize(&next))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reduction {
    /// `vec` coordinates, dimension `n²`.
    FullVec,
    /// `vech` coordinates, dimension `n(n+1)/2`.
    SymVech,
}

impl std::fmt::Display for Reduction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Reduction::FullVec => f.write_str("full-vec"),
            Reduction::SymVech => f.write_str("sym-vech"),
        }
    }
}

impl Reduction {
    pub fn lifted_dim(self, n: usize) -> usize {
        match self {
            Reduction::FullVec => n * n,
            Reduction::SymVech => vech_len(n),
        }
    }

    /// Coordinates of a symmetric matrix in this reduction.
    pub fn encode(self, p: &DMatrix<f64>) -> Result<DVector<f64>> {
        match self {
            Reduction::FullVec => Ok(vec(p)),
            Reduction::SymVech => vech(p),
        }
    }

    pub fn decode(self, v: &DVector<f64>, n: usize) -> Result<DMatrix<f64>> {
        match self {
            Reduction::FullVec => unvec(v, n),
            Reduction::SymVech => unvech(v, n),
        }
    }
}

/// A point of the lifted state space: the coordinates of a covariance matrix.
/// Positive semidefiniteness is not enforced here.
#[derive(Debug, Clone, PartialEq)]
pub struct CovPoint(pub DVector<f64>);

impl CovPoint {
    pub fn from_matrix(p: &DMatrix<f64>) -> Result<Self> {
        vech(p).map(CovPoint)
    }

    pub fn to_matrix(&self, n: usize) -> Result<DMatrix<f64>> {
        unvech(&self.0, n)
    }
}

/// The covariance recursion of a noisy switched system, written as a switched
/// affine system over vectorised covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSystem {
    maps: Vec<AffineMap>,
    source_radii: Vec<f64>,
    n: usize,
    reduction: Reduction,
}

pub fn lift(sys: &SwitchedSystem, reduction: Reduction) -> Result<LiftedSystem> {
    if sys.kind() != SystemKind::Noisy {
        return Err(invalid("lift requires a noisy system"));
    }
    let n = sys.dim();
    let de = dup_elim(n);
    let mut maps = Vec::with_capacity(sys.mode_count());
    for mode in sys.modes() {
        let a = mode.transition();
        let q = mode.noise_covariance().expect("noisy mode carries Q");
        let full = kron(a, a);
        let (acal, qcal) = match reduction {
            Reduction::FullVec => (full, vec(q)),
            Reduction::SymVech => (&de.elimination * full * &de.duplication, vech(q)?),
        };
        maps.push(AffineMap { a: acal, b: qcal });
    }
    let lifted = LiftedSystem {
        maps,
        source_radii: sys.modes().iter().map(Mode::spectral_radius).collect(),
        n,
        reduction,
    };
    lifted.check_equivalence(sys)?;
    Ok(lifted)
}

impl LiftedSystem {
    /// Compares one lifted step with [`cov_step`] on a fixed symmetric probe.
    fn check_equivalence(&self, sys: &SwitchedSystem) -> Result<()> {
        let n = self.n;
        let probe = DMatrix::from_fn(n, n, |i, j| {
            let (i, j) = (i.max(j) as f64, i.min(j) as f64);
            1.0 + 0.37 * i - 0.21 * j + 0.05 * i * j
        });
        let encoded = self.reduction.encode(&probe)?;
        for (i, mode) in sys.modes().iter().enumerate() {
            let direct = self.reduction.encode(&cov_step(mode, &probe)?)?;
            let lifted = self.maps[i].apply(&encoded);
            let err = (&direct - &lifted).amax();
            if err > 1e-9 * direct.amax().max(1.0) {
                return Err(Error::SolverFailure(format!(
                    "lifted mode {i} disagrees with the covariance recursion ({err:e})"
                )));
            }
        }
        Ok(())
    }

    pub fn maps(&self) -> &[AffineMap] {
        &self.maps
    }

    pub fn mode_count(&self) -> usize {
        self.maps.len()
    }

    /// Dimension of the original state.
    pub fn state_dim(&self) -> usize {
        self.n
    }

    /// Dimension of the lifted coordinates.
    pub fn dim(&self) -> usize {
        self.reduction.lifted_dim(self.n)
    }

    pub fn reduction(&self) -> Reduction {
        self.reduction
    }

    pub fn transition(&self, i: usize) -> Result<&DMatrix<f64>> {
        self.map(i).map(|m| &m.a)
    }

    fn map(&self, i: usize) -> Result<&AffineMap> {
        self.maps
            .get(i)
            .ok_or_else(|| invalid(format!("mode index {i} out of range ({} modes)", self.maps.len())))
    }

    /// `Acal_i·p + Qcal_i`.
    pub fn lifted_step(&self, i: usize, p: &DVector<f64>) -> Result<DVector<f64>> {
        let map = self.map(i)?;
        ensure_dim("lifted point", p.len(), self.dim())?;
        Ok(map.apply(p))
    }

    /// The fixed point `(I - Acal_i)⁻¹·Qcal_i` of lifted mode `i`, i.e. the
    /// coordinates of the steady-state covariance of mode `i` alone.
    pub fn lifted_fixed_point(&self, i: usize) -> Result<DVector<f64>> {
        let map = self.map(i)?;
        let fp = linalg::solve_shifted_identity(&map.a, &map.b)?;
        if self.source_radii[i] < 1.0 - STABILITY_MARGIN {
            let p = self.reduction.decode(&fp, self.n)?;
            let floor = linalg::min_eigenvalue(&p);
            if floor < -1e-9 * p.amax().max(1.0) {
                return Err(Error::SolverFailure(format!(
                    "steady-state covariance of mode {i} is not PSD (eigenvalue {floor:e})"
                )));
            }
        }
        Ok(fp)
    }

    pub fn encode(&self, p: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.reduction.encode(p)
    }

    pub fn decode(&self, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.reduction.decode(v, self.n)
    }

    /// Iterates the lifted recursion under `modes`, returning every point
    /// including `start`.
    pub fn iterate(
        &self,
        start: &DVector<f64>,
        modes: impl IntoIterator<Item = usize>,
    ) -> Result<Vec<DVector<f64>>> {
        ensure_dim("lifted point", start.len(), self.dim())?;
        let mut out = vec![start.clone()];
        let mut p = start.clone();
        for i in modes {
            p = self.map(i)?.apply(&p);
            out.push(p.clone());
        }
        Ok(out)
    }
}
