//! End-to-end bounding: choose a center, assemble the invariance LMIs, search
//! the multiplier, and check the result by sampling.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{AffineMap, SwitchPolicy, SwitchedSystem, SystemKind};
use crate::ellipsoid::{
    initial_condition_matrix, s_proc_matrix, verify_invariance, Ellipsoid, InvarianceReport, VerifyOptions,
};
use crate::error::{ensure_dim, invalid, Result};
use crate::kron::{lift, LiftedSystem, Reduction};
use crate::sdp::{
    affine_center_heuristic, center_heuristic, default_lambda_grid, line_search_lambda, solve_fixed_lambda,
    LambdaTrial, LmiProblem, Sense, SolveOptions, SolveResult,
};

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    Search { grid: Vec<f64>, refine: bool },
}

impl Default for LambdaChoice {
    fn default() -> Self {
        LambdaChoice::Search {
            grid: default_lambda_grid(),
            refine: true,
        }
    }
}

/// Upper bound on the eigenvalues of `P`.
///
/// Systems whose attractor is flat in some direction (for instance a
/// covariance recursion that preserves the trace) admit arbitrarily thin
/// invariant ellipsoids, so `trace(P)` is unbounded without a ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Ceiling {
    /// [`default_eigen_ceiling`] of the center.
    #[default]
    Auto,
    Fixed(f64),
    Unbounded,
}

/// `1e6 / max(1, ‖c‖²)`. Keeps the entries of the raw-coordinate blocks near
/// `1e6` at most, so their eigenvalues stay accurate to about `1e-10`.
pub fn default_eigen_ceiling(center: &DVector<f64>) -> f64 {
    1e6 / center.norm_squared().max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundOptions {
    pub lambda: LambdaChoice,
    pub solve: SolveOptions,
    /// Overrides the heuristic center.
    pub center: Option<DVector<f64>>,
    /// Point the ellipsoid must contain.
    pub x0: Option<DVector<f64>>,
    pub ceiling: Ceiling,
    /// Policy and sample count for the centroid of affine systems.
    pub centroid_policy: SwitchPolicy,
    pub centroid_samples: usize,
    pub reduction: Reduction,
    /// `None` skips the sampling check.
    pub verify: Option<VerifyOptions>,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            lambda: LambdaChoice::default(),
            solve: SolveOptions::default(),
            center: None,
            x0: None,
            ceiling: Ceiling::Auto,
            centroid_policy: SwitchPolicy::iid_uniform(0),
            centroid_samples: 100_000,
            reduction: Reduction::SymVech,
            verify: Some(VerifyOptions::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bound {
    pub maps: Vec<AffineMap>,
    pub center: DVector<f64>,
    pub lambda: f64,
    pub solve: SolveResult,
    pub trials: Vec<LambdaTrial>,
    /// Present when the solve produced a feasible shape matrix.
    pub ellipsoid: Option<Ellipsoid>,
    pub verification: Option<InvarianceReport>,
    pub eigen_ceiling: Option<f64>,
}

impl Bound {
    pub fn is_feasible(&self) -> bool {
        self.solve.status.is_feasible() && self.ellipsoid.is_some()
    }

    pub fn is_verified(&self) -> bool {
        self.verification.as_ref().is_some_and(InvarianceReport::passed)
    }
}

/// The fixed-multiplier problem: one `⪯ 0` invariance block per map, the
/// initial-condition block `⪰ 0` when `x0` is given, `P ⪰ εI`, and the
/// optional eigenvalue ceiling.
pub fn invariant_ellipsoid_problem(
    maps: &[AffineMap],
    center: &DVector<f64>,
    lambda: f64,
    x0: Option<&DVector<f64>>,
    epsilon: f64,
    ceiling: Option<f64>,
) -> Result<LmiProblem> {
    let q = center.len();
    if maps.is_empty() {
        return Err(invalid("no modes to bound"));
    }
    let mut problem = LmiProblem::new(q, epsilon)?;
    if let Some(c) = ceiling {
        problem = problem.with_eigen_ceiling(c)?;
    }
    for (i, m) in maps.iter().enumerate() {
        ensure_dim("mode", m.dim(), q)?;
        problem.add_affine_map(format!("invariance mode {i}"), Sense::NegSemidef, |p| {
            s_proc_matrix(&m.a, &m.b, p, center, lambda)
        })?;
    }
    if let Some(x0) = x0 {
        ensure_dim("initial state", x0.len(), q)?;
        problem.add_affine_map("initial condition", Sense::PosSemidef, |p| {
            initial_condition_matrix(p, center, x0)
        })?;
    }
    Ok(problem)
}

/// Bounds the switched affine system given by `maps` around `center`.
pub fn bound_maps(maps: &[AffineMap], center: &DVector<f64>, opts: &BoundOptions) -> Result<Bound> {
    let ceiling = match opts.ceiling {
        Ceiling::Auto => Some(default_eigen_ceiling(center)),
        Ceiling::Fixed(c) => Some(c),
        Ceiling::Unbounded => None,
    };
    let make = |lambda: f64| {
        invariant_ellipsoid_problem(
            maps,
            center,
            lambda,
            opts.x0.as_ref(),
            opts.solve.epsilon,
            ceiling,
        )
    };
    let (lambda, solve, trials) = match &opts.lambda {
        LambdaChoice::Fixed(l) => {
            let r = solve_fixed_lambda(&make(*l)?, &opts.solve)?;
            (*l, r, Vec::new())
        }
        LambdaChoice::Search { grid, refine } => {
            let r = line_search_lambda(make, grid, *refine, &opts.solve)?;
            (r.lambda, r.result, r.trials)
        }
    };
    let ellipsoid = if solve.status.is_feasible() {
        Some(Ellipsoid::new(solve.p.clone(), center.clone())?)
    } else {
        None
    };
    let verification = match (&ellipsoid, &opts.verify) {
        (Some(e), Some(v)) => Some(verify_invariance(e, maps, v)?),
        _ => None,
    };
    Ok(Bound {
        maps: maps.to_vec(),
        center: center.clone(),
        lambda,
        solve,
        trials,
        ellipsoid,
        verification,
        eigen_ceiling: ceiling,
    })
}

/// Invariant ellipsoid of an affine switched system. The center defaults to
/// the centroid of a simulated attractor sample.
pub fn bound_affine(sys: &SwitchedSystem, opts: &BoundOptions) -> Result<Bound> {
    if sys.kind() != SystemKind::Affine {
        return Err(invalid("bound_affine requires an affine system"));
    }
    let center = match &opts.center {
        Some(c) => c.clone(),
        None => affine_center_heuristic(sys, &opts.centroid_policy, opts.centroid_samples)?,
    };
    ensure_dim("center", center.len(), sys.dim())?;
    bound_maps(&sys.affine_maps()?, &center, opts)
}

/// Invariant ellipsoid of the lifted covariance recursion of a noisy system.
/// The center defaults to [`center_heuristic`].
pub fn bound_covariance(sys: &SwitchedSystem, opts: &BoundOptions) -> Result<(LiftedSystem, Bound)> {
    let ls = lift(sys, opts.reduction)?;
    let center = match &opts.center {
        Some(c) => c.clone(),
        None => center_heuristic(&ls)?,
    };
    ensure_dim("center", center.len(), ls.dim())?;
    let bound = bound_maps(ls.maps(), &center, opts)?;
    Ok((ls, bound))
}

/// A point that every closed invariant set of `ls` contains: the steady-state
/// covariance of mode 0.
pub fn lifted_anchor(ls: &LiftedSystem) -> Result<DVector<f64>> {
    ls.lifted_fixed_point(0)
}

/// Returns the `P` blocks of a bound as a row-major nested vector.
pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
