use rayon::prelude::*;

use super::problem::LmiProblem;
use super::solver::{solve_fixed_lambda, SolveOptions, SolveResult, SolveStatus};
use crate::error::{invalid, Result};

/// Golden-section refinement budget (extra solves).
pub const REFINE_SOLVES: usize = 10;

/// `count` points spaced evenly in log10 between `10^lo` and `10^hi`.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo)],
        _ => (0..count)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64))
            .collect(),
    }
}

/// 25 points log-spaced over `[1e-2, 1e2]`.
pub fn default_lambda_grid() -> Vec<f64> {
    logspace(-2.0, 2.0, 25)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaTrial {
    pub lambda: f64,
    pub status: SolveStatus,
    pub objective: f64,
    /// Phase-one shift for infeasible trials.
    pub phase_one_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchResult {
    /// Winning multiplier; when nothing is feasible, the trial that came
    /// closest to feasibility.
    pub lambda: f64,
    pub result: SolveResult,
    pub trials: Vec<LambdaTrial>,
}

fn trial_of(lambda: f64, r: &SolveResult) -> LambdaTrial {
    LambdaTrial {
        lambda,
        status: r.status,
        objective: r.objective,
        phase_one_value: r.infeasibility.as_ref().map(|i| i.phase_one_value),
    }
}

/// True when `a` should win over `b`: higher objective among feasible
/// results, ties to the smaller multiplier.
fn better(a: (f64, &SolveResult), b: (f64, &SolveResult)) -> bool {
    match (a.1.status.is_feasible(), b.1.status.is_feasible()) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => a.1.objective > b.1.objective || (a.1.objective == b.1.objective && a.0 < b.0),
        (false, false) => {
            let sa =
                a.1.infeasibility
                    .as_ref()
                    .map_or(f64::INFINITY, |i| i.phase_one_value);
            let sb =
                b.1.infeasibility
                    .as_ref()
                    .map_or(f64::INFINITY, |i| i.phase_one_value);
            sa < sb || (sa == sb && a.0 < b.0)
        }
    }
}

/// Solves the problem family at every grid point and keeps the feasible
/// multiplier with the largest objective. With `refine`, a golden-section
/// search in `log λ` over the grid cell around the winner follows.
pub fn line_search_lambda<F>(
    make_problem: F,
    grid: &[f64],
    refine: bool,
    opts: &SolveOptions,
) -> Result<LineSearchResult>
where
    F: Fn(f64) -> Result<LmiProblem> + Sync,
{
    if grid.is_empty() {
        return Err(invalid("lambda grid is empty"));
    }
    if let Some(bad) = grid.iter().find(|&&l| !(l > 0.0) || !l.is_finite()) {
        return Err(invalid(format!("lambda grid values must be positive, got {bad}")));
    }
    let solve = |lambda: f64| -> Result<SolveResult> { solve_fixed_lambda(&make_problem(lambda)?, opts) };

    let solved: Vec<SolveResult> = grid.par_iter().map(|&l| solve(l)).collect::<Result<_>>()?;
    let mut trials: Vec<LambdaTrial> = grid.iter().zip(&solved).map(|(&l, r)| trial_of(l, r)).collect();

    let mut best_index = 0;
    for i in 1..grid.len() {
        if better((grid[i], &solved[i]), (grid[best_index], &solved[best_index])) {
            best_index = i;
        }
    }
    let mut best = (grid[best_index], solved[best_index].clone());

    if refine && best.1.status.is_feasible() && grid.len() > 1 {
        let mut sorted: Vec<f64> = grid.to_vec();
        sorted.sort_by(f64::total_cmp);
        let pos = sorted.iter().position(|&l| l == best.0).unwrap_or(0);
        let lo = sorted[pos.saturating_sub(1)].ln();
        let hi = sorted[(pos + 1).min(sorted.len() - 1)].ln();
        if hi > lo {
            let score = |r: &SolveResult| {
                if r.status.is_feasible() {
                    r.objective
                } else {
                    f64::NEG_INFINITY
                }
            };
            let mut evaluate = |log_l: f64, best: &mut (f64, SolveResult)| -> Result<f64> {
                let l = log_l.exp();
                let r = solve(l)?;
                trials.push(trial_of(l, &r));
                let s = score(&r);
                if better((l, &r), (best.0, &best.1)) {
                    *best = (l, r);
                }
                Ok(s)
            };
            let ratio = (5f64.sqrt() - 1.0) / 2.0;
            let (mut a, mut b) = (lo, hi);
            let mut x1 = b - ratio * (b - a);
            let mut x2 = a + ratio * (b - a);
            let mut f1 = evaluate(x1, &mut best)?;
            let mut f2 = evaluate(x2, &mut best)?;
            for _ in 2..REFINE_SOLVES {
                if f1 >= f2 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - ratio * (b - a);
                    f1 = evaluate(x1, &mut best)?;
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + ratio * (b - a);
                    f2 = evaluate(x2, &mut best)?;
                }
            }
        }
    }

    Ok(LineSearchResult {
        lambda: best.0,
        result: best.1,
        trials,
    })
}
