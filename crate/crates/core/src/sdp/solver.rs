//! Log-det barrier interior-point method for small LMI problems.
//!
//! Every constraint is brought to the form `G(y) = G₀ + Σₖ yₖGₖ ⪰ 0`. Phase one
//! minimizes a shift `s` with `G(y) + s·I ⪰ 0` for all constraints until `s`
//! turns negative, which yields a strictly feasible point, or until the
//! central-path bound proves that no such point exists. Phase two follows the
//! central path of `max cᵀy` with the barrier `−Σ log det G(y)`, multiplying
//! the barrier weight `t` by [`T_GROWTH`] after each centering step. On the
//! central path the objective is within `m/t` of the optimum, where `m` is the
//! total block size, and it increases monotonically with `t`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::problem::{LmiProblem, Sense};
use crate::error::{invalid, Error, Result};
use crate::linalg;

const T_GROWTH: f64 = 10.0;
const NEWTON_TOL: f64 = 1e-10;
const ARMIJO: f64 = 0.01;
/// Objective magnitude taken as evidence of an unbounded problem.
const UNBOUNDED: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Total Newton steps over both phases.
    pub max_iterations: usize,
    /// Allowed eigenvalue violation of each constraint in the result.
    pub feasibility_tolerance: f64,
    /// Stop once the duality-gap bound is below this fraction of
    /// `max(1, |objective|)`.
    pub stagnation_tolerance: f64,
    /// Floor `ε` in `P ⪰ ε·I` used by problem builders.
    pub epsilon: f64,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            feasibility_tolerance: 1e-8,
            stagnation_tolerance: 1e-9,
            epsilon: 1e-6,
            verbose: false,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.feasibility_tolerance)
            || !positive(self.stagnation_tolerance)
            || !positive(self.epsilon)
        {
            return Err(invalid("solver tolerances must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Strictly feasible and the duality-gap bound met the tolerance.
    Optimal,
    /// Strictly feasible, but the iteration budget ran out before the gap
    /// closed.
    Feasible,
    Infeasible,
    /// Phase one ran out of iterations without deciding feasibility.
    IterationLimit,
}

impl SolveStatus {
    pub fn is_feasible(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::IterationLimit => "iteration-limit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintResidual {
    pub label: String,
    pub sense: Sense,
    /// Largest eigenvalue for `⪯ 0`, smallest for `⪰ 0`.
    pub value: f64,
}

/// Why phase one could not find a strictly feasible point.
#[derive(Debug, Clone, PartialEq)]
pub struct Infeasibility {
    /// Smallest shift `s` reached with `G(y) + s·I ⪰ 0`; positive means every
    /// candidate violates some constraint by at least about this much.
    pub phase_one_value: f64,
    /// Constraints whose violation equals the shift at the final point.
    pub blocking: Vec<String>,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub p: DMatrix<f64>,
    pub objective: f64,
    pub residuals: Vec<ConstraintResidual>,
    /// Objective at each phase-two centering, in order.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub gap_bound: f64,
    pub infeasibility: Option<Infeasibility>,
}

struct Block {
    label: String,
    constant: DMatrix<f64>,
    coeffs: Vec<DMatrix<f64>>,
}

impl Block {
    fn size(&self) -> usize {
        self.constant.nrows()
    }

    fn evaluate(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (yk, gk) in y.iter().zip(&self.coeffs) {
            if *yk != 0.0 {
                m += gk * *yk;
            }
        }
        linalg::symmetrize(&m)
    }
}

fn standard_blocks(problem: &LmiProblem) -> Vec<Block> {
    let q = problem.dim();
    let n = problem.free_entries();
    let mut blocks: Vec<Block> = problem
        .constraints()
        .iter()
        .map(|c| {
            let sign = match c.sense {
                Sense::NegSemidef => -1.0,
                Sense::PosSemidef => 1.0,
            };
            Block {
                label: c.label.clone(),
                constant: &c.constant * sign,
                coeffs: c.coefficients.iter().map(|g| g * sign).collect(),
            }
        })
        .collect();
    let basis: Vec<DMatrix<f64>> = (0..n)
        .map(|k| problem.shape_from(&DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 })))
        .collect();
    blocks.push(Block {
        label: "psd floor".into(),
        constant: -DMatrix::identity(q, q) * problem.psd_floor(),
        coeffs: basis.clone(),
    });
    if let Some(ceiling) = problem.eigen_ceiling() {
        blocks.push(Block {
            label: "eigenvalue ceiling".into(),
            constant: DMatrix::identity(q, q) * ceiling,
            coeffs: basis.iter().map(|b| -b).collect(),
        });
    }
    blocks
}

/// Barrier state shared by both phases: maximize `cᵀz` subject to
/// `G_j(z) ⪰ 0`.
struct Barrier<'a> {
    blocks: &'a [Block],
    c: DVector<f64>,
    /// Phase one appends the shift `s` as the last variable, entering every
    /// block as `s·I`.
    shifted: bool,
}

struct Newton {
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl Barrier<'_> {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn block_value(&self, j: usize, z: &DVector<f64>) -> DMatrix<f64> {
        let b = &self.blocks[j];
        if self.shifted {
            let n = z.len() - 1;
            let y = z.rows(0, n).into_owned();
            let mut m = b.evaluate(&y);
            for i in 0..b.size() {
                m[(i, i)] += z[n];
            }
            m
        } else {
            b.evaluate(z)
        }
    }

    fn coefficient(&self, j: usize, k: usize) -> DMatrix<f64> {
        let b = &self.blocks[j];
        if self.shifted && k == b.coeffs.len() {
            DMatrix::identity(b.size(), b.size())
        } else {
            b.coeffs[k].clone()
        }
    }

    fn factor_all(&self, z: &DVector<f64>) -> Option<Vec<Cholesky<f64, Dyn>>> {
        (0..self.blocks.len())
            .map(|j| self.block_value(j, z).cholesky())
            .collect()
    }

    /// `−t·cᵀz − Σ log det G_j(z)`, or `None` outside the domain.
    fn value(&self, z: &DVector<f64>, t: f64) -> Option<f64> {
        let factors = self.factor_all(z)?;
        let logdet: f64 = factors
            .iter()
            .map(|f| 2.0 * f.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
            .sum();
        Some(-t * self.c.dot(z) - logdet)
    }

    fn newton(&self, t: f64, factors: &[Cholesky<f64, Dyn>]) -> Newton {
        let n = self.dim();
        let mut grad = -&self.c * t;
        let mut hess = DMatrix::zeros(n, n);
        for (j, f) in factors.iter().enumerate() {
            let inv = f.inverse();
            let w: Vec<DMatrix<f64>> = (0..n).map(|k| &inv * self.coefficient(j, k)).collect();
            for k in 0..n {
                grad[k] -= w[k].trace();
                for l in 0..=k {
                    // tr(W_k W_l)
                    let h = w[k].component_mul(&w[l].transpose()).sum();
                    hess[(k, l)] += h;
                    if k != l {
                        hess[(l, k)] += h;
                    }
                }
            }
        }
        Newton { grad, hess }
    }

    /// Damped Newton minimization of the barrier at weight `t`. Returns the
    /// number of steps taken; `stop` may end the loop early.
    fn center(
        &self,
        z: &mut DVector<f64>,
        t: f64,
        budget: usize,
        stop: &dyn Fn(&DVector<f64>) -> bool,
    ) -> Result<(usize, bool)> {
        let mut steps = 0;
        while steps < budget {
            if stop(z) {
                return Ok((steps, true));
            }
            let factors = self
                .factor_all(z)
                .ok_or_else(|| Error::SolverFailure("iterate left the interior".into()))?;
            let Newton { grad, hess } = self.newton(t, &factors);
            let dir = solve_spd(&hess, &(-&grad))?;
            let decrement = -grad.dot(&dir);
            steps += 1;
            if !(decrement.is_finite()) {
                return Err(Error::SolverFailure("non-finite Newton step".into()));
            }
            if decrement / 2.0 <= NEWTON_TOL {
                return Ok((steps, false));
            }
            let f0 = self.value(z, t).expect("current iterate is interior");
            let mut alpha = 1.0;
            loop {
                // Below this the decrease is lost in the rounding of f0.
                if alpha * decrement < 1e-15 * f0.abs().max(1.0) {
                    return Ok((steps, false));
                }
                let trial = &*z + &dir * alpha;
                if let Some(f1) = self.value(&trial, t) {
                    if f1 < f0 && f1 <= f0 - ARMIJO * alpha * decrement {
                        *z = trial;
                        break;
                    }
                }
                alpha *= 0.5;
            }
        }
        Ok((steps, false))
    }
}

fn solve_spd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Ok(ch.solve(rhs));
    }
    let scale = h.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut reg = 1e-14;
    while reg < 1e-4 {
        let shifted = h + DMatrix::identity(h.nrows(), h.ncols()) * (reg * scale);
        if let Some(ch) = shifted.cholesky() {
            return Ok(ch.solve(rhs));
        }
        reg *= 100.0;
    }
    Err(Error::SolverFailure(
        "Newton system is not positive definite".into(),
    ))
}

/// Solves one LMI problem: maximize `trace(P)` subject to its constraints.
pub fn solve_fixed_lambda(problem: &LmiProblem, opts: &SolveOptions) -> Result<SolveResult> {
    opts.validate()?;
    let blocks = standard_blocks(problem);
    let n = problem.free_entries();
    let q = problem.dim();
    let total_size: f64 = blocks.iter().map(|b| b.size() as f64).sum();
    let mut iterations = 0;

    // Phase one.
    let start_scale = match problem.eigen_ceiling() {
        Some(c) => (problem.psd_floor().max(1e-12) * c)
            .sqrt()
            .max(2.0 * problem.psd_floor()),
        None => 1.0f64.max(10.0 * problem.psd_floor()),
    };
    let y0 = problem
        .entries_of(&(DMatrix::identity(q, q) * start_scale))
        .expect("identity is symmetric");
    let worst = blocks
        .iter()
        .map(|b| linalg::min_eigenvalue(&b.evaluate(&y0)))
        .fold(f64::INFINITY, f64::min);
    let mut z = DVector::zeros(n + 1);
    z.rows_mut(0, n).copy_from(&y0);
    z[n] = (-worst).max(0.0) * 1.5 + 1.0;

    let mut c1 = DVector::zeros(n + 1);
    c1[n] = -1.0;
    let phase_one = Barrier {
        blocks: &blocks,
        c: c1,
        shifted: true,
    };
    let strictly_feasible = |z: &DVector<f64>| -> bool {
        z[n] < 0.0 && {
            let y = z.rows(0, n).into_owned();
            blocks.iter().all(|b| b.evaluate(&y).cholesky().is_some())
        }
    };
    let mut t = 1.0;
    let found = loop {
        let budget = opts.max_iterations.saturating_sub(iterations);
        if budget == 0 {
            let y = z.rows(0, n).into_owned();
            return Ok(unsolved(
                problem,
                &blocks,
                &y,
                z[n],
                false,
                SolveStatus::IterationLimit,
                iterations,
            ));
        }
        let (steps, hit) = phase_one.center(&mut z, t, budget, &strictly_feasible)?;
        iterations += steps;
        if hit {
            break true;
        }
        let gap = total_size / t;
        let s = z[n];
        if opts.verbose {
            eprintln!("phase one: t={t:.3e} shift={s:.6e} gap={gap:.3e}");
        }
        if s - gap > 0.0 {
            break false;
        }
        if gap < opts.feasibility_tolerance && s >= 0.0 {
            break false;
        }
        t *= T_GROWTH;
    };
    let mut y = z.rows(0, n).into_owned();
    if !found {
        let certified = z[n] - total_size / t > 0.0;
        return Ok(unsolved(
            problem,
            &blocks,
            &y,
            z[n],
            certified,
            SolveStatus::Infeasible,
            iterations,
        ));
    }

    // Phase two.
    let phase_two = Barrier {
        blocks: &blocks,
        c: problem.objective().clone(),
        shifted: false,
    };
    let never = |_: &DVector<f64>| false;
    let mut t = total_size / problem.objective_value(&y).abs().max(1.0);
    let mut history = Vec::new();
    let mut status = SolveStatus::Feasible;
    let mut gap = f64::INFINITY;
    loop {
        let budget = opts.max_iterations.saturating_sub(iterations);
        if budget == 0 {
            break;
        }
        let (steps, _) = phase_two.center(&mut y, t, budget, &never)?;
        iterations += steps;
        let obj = problem.objective_value(&y);
        if !(obj.abs() < UNBOUNDED) {
            return Err(Error::SolverFailure(format!(
                "objective {obj:e} appears unbounded; set an eigenvalue ceiling"
            )));
        }
        history.push(obj);
        gap = total_size / t;
        if opts.verbose {
            eprintln!("phase two: t={t:.3e} objective={obj:.10e} gap={gap:.3e}");
        }
        if gap <= opts.stagnation_tolerance * obj.abs().max(1.0) {
            status = SolveStatus::Optimal;
            break;
        }
        t *= T_GROWTH;
    }

    let residuals = residuals(problem, &y);
    let p = problem.shape_from(&y);
    let floor_ok = linalg::min_eigenvalue(&p) >= problem.psd_floor() - opts.feasibility_tolerance;
    let violated: Vec<&ConstraintResidual> = residuals
        .iter()
        .zip(problem.constraints())
        .filter(|(r, c)| !c.satisfied(r.value, opts.feasibility_tolerance))
        .map(|(r, _)| r)
        .collect();
    if !violated.is_empty() || !floor_ok {
        let detail: Vec<String> = violated
            .iter()
            .map(|r| format!("{} = {:e}", r.label, r.value))
            .collect();
        return Err(Error::SolverFailure(format!(
            "interior point fails the residual recheck: [{}]",
            detail.join(", ")
        )));
    }
    Ok(SolveResult {
        status,
        objective: problem.objective_value(&y),
        p,
        residuals,
        objective_history: history,
        iterations,
        gap_bound: gap,
        infeasibility: None,
    })
}

/// Fresh eigenvalue residuals of every problem constraint at `y`.
fn residuals(problem: &LmiProblem, y: &DVector<f64>) -> Vec<ConstraintResidual> {
    problem
        .constraints()
        .iter()
        .map(|c| ConstraintResidual {
            label: c.label.clone(),
            sense: c.sense,
            value: c.residual(y),
        })
        .collect()
}

fn unsolved(
    problem: &LmiProblem,
    blocks: &[Block],
    y: &DVector<f64>,
    shift: f64,
    certified: bool,
    status: SolveStatus,
    iterations: usize,
) -> SolveResult {
    let lows: Vec<f64> = blocks
        .iter()
        .map(|b| linalg::min_eigenvalue(&b.evaluate(y)))
        .collect();
    let worst = lows.iter().copied().fold(f64::INFINITY, f64::min);
    let band = 1e-3 * (1.0 + worst.abs());
    let blocking = blocks
        .iter()
        .zip(&lows)
        .filter(|(_, &low)| low <= worst + band)
        .map(|(b, _)| b.label.clone())
        .collect();
    SolveResult {
        status,
        p: problem.shape_from(y),
        objective: problem.objective_value(y),
        residuals: residuals(problem, y),
        objective_history: Vec::new(),
        iterations,
        gap_bound: f64::INFINITY,
        infeasibility: Some(Infeasibility {
            phase_one_value: shift,
            blocking,
            certified,
        }),
    }
}
