//! Default ellipsoid centers.

use nalgebra::DVector;

use crate::dynamics::{
    default_burn_in, fixed_point, sample_attractor, SwitchPolicy, SwitchedSystem, SystemKind,
};
use crate::error::{invalid, Result};
use crate::kron::LiftedSystem;
use crate::linalg;
use crate::STABILITY_MARGIN;

/// Weights `ωᵢ ∝ 1/(1 − ρ(Acal_i))`, normalized to sum to one.
pub fn center_weights(ls: &LiftedSystem) -> Result<Vec<f64>> {
    let mut raw = Vec::with_capacity(ls.mode_count());
    for i in 0..ls.mode_count() {
        let rho = linalg::spectral_radius(ls.transition(i)?);
        if rho >= 1.0 - STABILITY_MARGIN {
            return Err(invalid(format!(
                "lifted mode {i} has spectral radius {rho:.6}; center needs stable modes"
            )));
        }
        raw.push(1.0 / (1.0 - rho));
    }
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Weighted average of the lifted fixed points, slower modes weighing more.
pub fn center_heuristic(ls: &LiftedSystem) -> Result<DVector<f64>> {
    let weights = center_weights(ls)?;
    let mut c = DVector::zeros(ls.dim());
    for (i, w) in weights.iter().enumerate() {
        c += ls.lifted_fixed_point(i)? * *w;
    }
    Ok(c)
}

/// Centroid of `samples` simulated states (origin start, default burn-in).
/// Any interior point would do; the centroid is simply a convenient one.
///
/// A system with an unstable mode has no attractor to sample, and a divergent
/// simulation has no centroid; the mean of the mode fixed points is used
/// instead, so that the solver can still report infeasibility.
pub fn affine_center_heuristic(
    sys: &SwitchedSystem,
    policy: &SwitchPolicy,
    samples: usize,
) -> Result<DVector<f64>> {
    if sys.kind() != SystemKind::Affine {
        return Err(invalid("affine_center_heuristic requires an affine system"));
    }
    if samples < 2 {
        return Err(invalid("need at least two samples for a centroid"));
    }
    let stable = sys
        .modes()
        .iter()
        .all(|m| m.spectral_radius() < 1.0 - STABILITY_MARGIN);
    if stable {
        let c = sample_attractor(sys, samples, default_burn_in(samples), policy)?.centroid;
        if c.iter().all(|v| v.is_finite()) {
            return Ok(c);
        }
    }
    let mut mean = DVector::zeros(sys.dim());
    for m in sys.modes() {
        mean += fixed_point(m)?;
    }
    Ok(mean / sys.mode_count() as f64)
}
