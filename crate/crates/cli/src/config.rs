//! System configuration file (JSON).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use switchbound::dynamics::{PolicyVariant, SwitchPolicy};
use switchbound::sdp::SolveOptions;
use switchbound::{Mode, SwitchedSystem};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindName {
    Affine,
    Noisy,
}

impl std::fmt::Display for KindName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KindName::Affine => "affine",
            KindName::Noisy => "noisy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantName {
    IidUniform,
    IidWeighted,
    Periodic,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub variant: VariantName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            variant: VariantName::IidUniform,
            probabilities: None,
            sequence: None,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    /// Fixed multiplier; takes precedence over `lambda_grid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    /// Eigenvalue ceiling on the shape matrix; defaults to `1e6/max(1,‖c‖²)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: KindName,
    pub n: usize,
    pub modes: Vec<ModeConfig>,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Skip the spectral-radius gate (negative controls).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_unstable: bool,
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::invalid(format!("{what} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn vector(v: &[f64], n: usize, what: &str) -> Result<DVector<f64>, CliError> {
    if v.len() != n {
        return Err(CliError::invalid(format!(
            "{what} must have length {n}, got {}",
            v.len()
        )));
    }
    Ok(DVector::from_row_slice(v))
}

impl SystemConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))?;
        let cfg: SystemConfig =
            serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[cfg(test)]
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Shape checks that do not need the numerical system.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n == 0 {
            return Err(CliError::invalid("n must be positive"));
        }
        if self.modes.is_empty() {
            return Err(CliError::invalid("at least one mode is required"));
        }
        for (i, m) in self.modes.iter().enumerate() {
            matrix(&m.a, self.n, &format!("modes[{i}].A"))?;
            match self.kind {
                KindName::Affine => {
                    if m.q.is_some() {
                        return Err(CliError::invalid(format!(
                            "modes[{i}]: affine modes take w, not Q"
                        )));
                    }
                    let w =
                        m.w.as_ref()
                            .ok_or_else(|| CliError::invalid(format!("modes[{i}]: missing w")))?;
                    vector(w, self.n, &format!("modes[{i}].w"))?;
                }
                KindName::Noisy => {
                    if m.w.is_some() {
                        return Err(CliError::invalid(format!(
                            "modes[{i}]: noisy modes take Q, not w"
                        )));
                    }
                    let q =
                        m.q.as_ref()
                            .ok_or_else(|| CliError::invalid(format!("modes[{i}]: missing Q")))?;
                    matrix(q, self.n, &format!("modes[{i}].Q"))?;
                }
            }
        }
        if let Some(x0) = &self.x0 {
            vector(x0, self.n, "x0")?;
        }
        Ok(())
    }

    pub fn system(&self) -> Result<SwitchedSystem, CliError> {
        self.validate()?;
        let modes = self
            .modes
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let a = matrix(&m.a, self.n, "A")?;
                let mode = match self.kind {
                    KindName::Affine => {
                        Mode::affine(a, vector(m.w.as_deref().unwrap_or_default(), self.n, "w")?)
                    }
                    KindName::Noisy => {
                        Mode::noisy(a, matrix(m.q.as_deref().unwrap_or_default(), self.n, "Q")?)
                    }
                };
                mode.map_err(|e| CliError::invalid(format!("modes[{i}]: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let sys = if self.allow_unstable {
            SwitchedSystem::new_allow_unstable(modes)
        } else {
            SwitchedSystem::new(modes)
        }
        .map_err(CliError::from)?;
        if sys.is_degenerate() {
            eprintln!("warning: a single mode is a plain linear system; bounding it anyway");
        }
        Ok(sys)
    }

    /// Seed precedence: flag, then config, then `SWITCHBOUND_SEED`, then 0.
    pub fn resolve_seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        if let Some(s) = flag.or(self.policy.seed) {
            return Ok(s);
        }
        match std::env::var("SWITCHBOUND_SEED") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::invalid(format!("SWITCHBOUND_SEED is not a u64: {v:?}"))),
            Err(_) => Ok(0),
        }
    }

    pub fn policy(&self, seed: u64) -> Result<SwitchPolicy, CliError> {
        let p = &self.policy;
        let need_seq = || {
            p.sequence
                .clone()
                .ok_or_else(|| CliError::invalid("policy.sequence is required for this variant"))
        };
        let variant = match p.variant {
            VariantName::IidUniform => PolicyVariant::IidUniform,
            VariantName::IidWeighted => PolicyVariant::IidWeighted(
                p.probabilities
                    .clone()
                    .ok_or_else(|| CliError::invalid("policy.probabilities is required for iid-weighted"))?,
            ),
            VariantName::Periodic => PolicyVariant::Periodic(need_seq()?),
            VariantName::Scripted => PolicyVariant::Scripted(need_seq()?),
        };
        let policy = SwitchPolicy { variant, seed };
        policy.validate(self.modes.len()).map_err(CliError::from)?;
        Ok(policy)
    }

    pub fn solve_options(&self, verbose: bool) -> Result<SolveOptions, CliError> {
        let mut opts = SolveOptions {
            verbose,
            ..SolveOptions::default()
        };
        if let Some(e) = self.solver.epsilon {
            opts.epsilon = e;
        }
        if let Some(t) = self.solver.tolerance {
            opts.feasibility_tolerance = t;
        }
        if let Some(m) = self.solver.max_iterations {
            opts.max_iterations = m;
        }
        opts.validate().map_err(CliError::from)?;
        Ok(opts)
    }

    pub fn x0(&self) -> Option<DVector<f64>> {
        self.x0.as_ref().map(|v| DVector::from_row_slice(v))
    }

    pub fn center(&self) -> Option<DVector<f64>> {
        self.center.as_ref().map(|v| DVector::from_row_slice(v))
    }
}
