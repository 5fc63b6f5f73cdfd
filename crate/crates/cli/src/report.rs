//! Bound report (JSON) written by `bound` and read by `verify` and
//! `ellipse-points`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use switchbound::bound::{rows, Bound};
use switchbound::sdp::Sense;
use switchbound::{Ellipsoid, Reduction};

use crate::config::KindName;
use crate::CliError;

pub const TOOL_NAME: &str = "switchbound";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tool {
    pub name: String,
    pub version: String,
}

impl Default for Tool {
    fn default() -> Self {
        Self {
            name: TOOL_NAME.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidReport {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub center: Vec<f64>,
}

impl EllipsoidReport {
    pub fn from_ellipsoid(e: &Ellipsoid) -> Self {
        Self {
            p: rows(e.shape()),
            center: e.center().iter().copied().collect(),
        }
    }

    pub fn to_ellipsoid(&self) -> Result<Ellipsoid, CliError> {
        let q = self.center.len();
        if q == 0 || self.p.len() != q || self.p.iter().any(|r| r.len() != q) {
            return Err(CliError::invalid(format!(
                "report ellipsoid: P must be {q}x{q} to match the center"
            )));
        }
        let p = DMatrix::from_fn(q, q, |i, j| self.p[i][j]);
        // A report is trusted for its shape only; positivity is rechecked.
        Ellipsoid::with_floor(p, DVector::from_row_slice(&self.center), 0.0)
            .map_err(|e| CliError::invalid(format!("report ellipsoid: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub constraint: String,
    /// `nsd` for `⪯ 0` blocks, `psd` for `⪰ 0` blocks.
    pub sense: String,
    /// Extreme eigenvalue in the violating direction; `≤ 0` means satisfied.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub lambda: f64,
    pub status: String,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    pub phase_one_value: f64,
    pub certified: bool,
    pub blocking: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    /// Boundary-shell samples; as many interior samples are drawn too.
    pub samples: usize,
    pub interior_samples: usize,
    pub checks: usize,
    pub violations: usize,
    pub worst_value: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub center_seconds: f64,
    pub solve_seconds: f64,
    pub verify_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub policy: u64,
    pub verification: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub tool: Tool,
    pub kind: KindName,
    /// State dimension of the original system.
    pub n: usize,
    /// `sym-vech` or `full-vec` for noisy systems, absent for affine ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduction: Option<String>,
    pub status: String,
    /// Absent when no feasible ellipsoid was found.
    pub ellipsoid: Option<EllipsoidReport>,
    pub lambda_star: f64,
    pub objective: f64,
    pub eigen_ceiling: Option<f64>,
    pub iterations: usize,
    pub gap_bound: f64,
    pub residuals: Vec<Residual>,
    pub lambda_trials: Vec<Trial>,
    pub infeasibility: Option<InfeasibilityReport>,
    pub verification: Option<Verification>,
    pub timings: Timings,
    pub seeds: Seeds,
    pub rng: String,
}

impl BoundReport {
    pub fn new(kind: KindName, n: usize, reduction: Option<Reduction>, bound: &Bound, seeds: Seeds) -> Self {
        let solve = &bound.solve;
        Self {
            tool: Tool::default(),
            kind,
            n,
            reduction: reduction.map(|r| r.to_string()),
            status: solve.status.to_string(),
            ellipsoid: bound.ellipsoid.as_ref().map(EllipsoidReport::from_ellipsoid),
            lambda_star: bound.lambda,
            objective: solve.objective,
            eigen_ceiling: bound.eigen_ceiling,
            iterations: solve.iterations,
            gap_bound: solve.gap_bound,
            residuals: solve
                .residuals
                .iter()
                .map(|r| Residual {
                    constraint: r.label.clone(),
                    sense: match r.sense {
                        Sense::NegSemidef => "nsd",
                        Sense::PosSemidef => "psd",
                    }
                    .to_string(),
                    value: r.value,
                })
                .collect(),
            lambda_trials: bound
                .trials
                .iter()
                .map(|t| Trial {
                    lambda: t.lambda,
                    status: t.status.to_string(),
                    objective: t.objective,
                })
                .collect(),
            infeasibility: solve.infeasibility.as_ref().map(|i| InfeasibilityReport {
                phase_one_value: i.phase_one_value,
                certified: i.certified,
                blocking: i.blocking.clone(),
            }),
            verification: bound.verification.as_ref().map(|v| Verification {
                samples: v.boundary_samples,
                interior_samples: v.interior_samples,
                checks: v.checks,
                violations: v.violations,
                worst_value: v.worst_value,
                seed: seeds.verification,
            }),
            timings: Timings::default(),
            seeds,
            rng: switchbound::dynamics::RNG_DESCRIPTION.to_string(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn reduction(&self) -> Result<Option<Reduction>, CliError> {
        match self.reduction.as_deref() {
            None => Ok(None),
            Some("sym-vech") => Ok(Some(Reduction::SymVech)),
            Some("full-vec") => Ok(Some(Reduction::FullVec)),
            Some(other) => Err(CliError::invalid(format!(
                "unknown reduction {other:?} in report"
            ))),
        }
    }

    pub fn ellipsoid(&self) -> Result<Ellipsoid, CliError> {
        self.ellipsoid
            .as_ref()
            .ok_or_else(|| CliError::invalid(format!("report has no ellipsoid (status {})", self.status)))?
            .to_ellipsoid()
    }
}
