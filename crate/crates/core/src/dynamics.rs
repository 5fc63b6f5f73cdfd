//! Switched affine and noisy switched linear systems, and their seeded
//! simulation.
//!
//! A switched system holds `m` modes sharing a state dimension `n`. At each
//! step one mode is selected by a [`SwitchPolicy`] and the state advances as
//! `x⁺ = A·x + w` (affine kind) or `x⁺ = A·x + L·z` with `L·Lᵀ = Q` and `z`
//! standard normal (noisy kind).
//!
//! All randomness flows from a single `u64` seed through [`RNG_DESCRIPTION`].
//! Switching decisions and noise draws use separate streams of the same
//! generator, so an affine and a noisy system driven by the same policy see the
//! same mode sequence.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_dim, invalid, Result};
use crate::linalg;

/// Identity of the pseudo-random generator, recorded in output metadata.
pub const RNG_DESCRIPTION: &str =
    "ChaCha8Rng (rand_chacha 0.9) seed_from_u64; stream 0 switching, stream 1 noise";

/// Modes must satisfy `ρ(A) < 1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Eigenvalue tolerance below zero accepted for a noise covariance.
pub const PSD_TOLERANCE: f64 = 1e-12;

const SWITCH_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemKind {
    Affine,
    Noisy,
}

impl std::fmt::Display for SystemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SystemKind::Affine => f.write_str("affine"),
            SystemKind::Noisy => f.write_str("noisy"),
        }
    }
}

/// An affine map `x ↦ a·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl AffineMap {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(invalid("transition matrix must be square"));
        }
        ensure_dim("affine term", b.len(), a.nrows())?;
        Ok(Self { a, b })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Forcing {
    Affine(DVector<f64>),
    Noise {
        covariance: DMatrix<f64>,
        factor: DMatrix<f64>,
    },
}

/// One branch of a switched system.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    a: DMatrix<f64>,
    forcing: Forcing,
}

impl Mode {
    pub fn affine(a: DMatrix<f64>, w: DVector<f64>) -> Result<Self> {
        check_transition(&a)?;
        ensure_dim("affine term", w.len(), a.nrows())?;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(invalid("affine term has non-finite entries"));
        }
        Ok(Self {
            a,
            forcing: Forcing::Affine(w),
        })
    }

    /// A noisy mode; the noise factor is computed here, so an indefinite `q`
    /// is rejected at construction.
    pub fn noisy(a: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        check_transition(&a)?;
        if q.nrows() != a.nrows() || q.ncols() != a.ncols() {
            return Err(invalid(format!(
                "noise covariance is {}x{}, expected {}x{}",
                q.nrows(),
                q.ncols(),
                a.nrows(),
                a.ncols()
            )));
        }
        if !linalg::is_finite(&q) {
            return Err(invalid("noise covariance has non-finite entries"));
        }
        let factor = linalg::psd_factor(&q, PSD_TOLERANCE)?;
        Ok(Self {
            a,
            forcing: Forcing::Noise {
                covariance: linalg::symmetrize(&q),
                factor,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn kind(&self) -> SystemKind {
        match self.forcing {
            Forcing::Affine(_) => SystemKind::Affine,
            Forcing::Noise { .. } => SystemKind::Noisy,
        }
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn affine_term(&self) -> Option<&DVector<f64>> {
        match &self.forcing {
            Forcing::Affine(w) => Some(w),
            Forcing::Noise { .. } => None,
        }
    }

    pub fn noise_covariance(&self) -> Option<&DMatrix<f64>> {
        match &self.forcing {
            Forcing::Noise { covariance, .. } => Some(covariance),
            Forcing::Affine(_) => None,
        }
    }

    /// `L` with `L·Lᵀ = Q`.
    pub fn noise_factor(&self) -> Option<&DMatrix<f64>> {
        match &self.forcing {
            Forcing::Noise { factor, .. } => Some(factor),
            Forcing::Affine(_) => None,
        }
    }

    pub fn spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&self.a)
    }

    pub fn affine_map(&self) -> Option<AffineMap> {
        self.affine_term().map(|w| AffineMap {
            a: self.a.clone(),
            b: w.clone(),
        })
    }
}

fn check_transition(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(invalid(format!(
            "transition matrix must be square and non-empty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !linalg::is_finite(a) {
        return Err(invalid("transition matrix has non-finite entries"));
    }
    Ok(())
}

/// Returns `A·x + w`.
pub fn step_affine(mode: &Mode, x: &DVector<f64>) -> Result<DVector<f64>> {
    let w = mode
        .affine_term()
        .ok_or_else(|| invalid("step_affine requires an affine mode"))?;
    ensure_dim("state", x.len(), mode.dim())?;
    Ok(&mode.a * x + w)
}

/// Seeded source of standard normal vectors.
#[derive(Debug, Clone)]
pub struct GaussianSource {
    rng: ChaCha8Rng,
}

impl GaussianSource {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(NOISE_STREAM);
        Self { rng }
    }

    pub fn standard_normal(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.rng.sample(StandardNormal))
    }
}

/// Returns `A·x + L·z` with `z` drawn from `noise`.
pub fn step_noisy(mode: &Mode, x: &DVector<f64>, noise: &mut GaussianSource) -> Result<DVector<f64>> {
    let factor = mode
        .noise_factor()
        .ok_or_else(|| invalid("step_noisy requires a noisy mode"))?;
    ensure_dim("state", x.len(), mode.dim())?;
    let z = noise.standard_normal(mode.dim());
    Ok(&mode.a * x + factor * z)
}

/// The unique `x*` with `x* = A·x* + w`.
pub fn fixed_point(mode: &Mode) -> Result<DVector<f64>> {
    let w = mode
        .affine_term()
        .ok_or_else(|| invalid("fixed_point requires an affine mode"))?;
    linalg::solve_shifted_identity(&mode.a, w)
}

/// An ordered collection of modes of one kind and dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedSystem {
    modes: Vec<Mode>,
    n: usize,
    kind: SystemKind,
}

impl SwitchedSystem {
    /// Builds a system and rejects any mode with `ρ(A) ≥ 1 - STABILITY_MARGIN`.
    pub fn new(modes: Vec<Mode>) -> Result<Self> {
        let sys = Self::new_allow_unstable(modes)?;
        for (i, m) in sys.modes.iter().enumerate() {
            let rho = m.spectral_radius();
            if rho >= 1.0 - STABILITY_MARGIN {
                return Err(invalid(format!(
                    "mode {i} has spectral radius {rho:.6} (must be < 1)"
                )));
            }
        }
        Ok(sys)
    }

    /// Like [`SwitchedSystem::new`] but without the stability gate.
    pub fn new_allow_unstable(modes: Vec<Mode>) -> Result<Self> {
        let first = modes
            .first()
            .ok_or_else(|| invalid("a switched system needs at least one mode"))?;
        let n = first.dim();
        let kind = first.kind();
        for (i, m) in modes.iter().enumerate() {
            if m.dim() != n {
                return Err(invalid(format!(
                    "mode {i} has dimension {}, expected {n}",
                    m.dim()
                )));
            }
            if m.kind() != kind {
                return Err(invalid(format!("mode {i} is {}, expected {kind}", m.kind())));
            }
        }
        Ok(Self { modes, n, kind })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    /// A single mode is a plain LTI system; accepted, but callers may warn.
    pub fn is_degenerate(&self) -> bool {
        self.modes.len() < 2
    }

    pub fn affine_maps(&self) -> Result<Vec<AffineMap>> {
        self.modes
            .iter()
            .map(|m| {
                m.affine_map()
                    .ok_or_else(|| invalid("affine maps are only defined for affine systems"))
            })
            .collect()
    }

    pub fn step(
        &self,
        mode_index: usize,
        x: &DVector<f64>,
        noise: &mut GaussianSource,
    ) -> Result<DVector<f64>> {
        let mode = self
            .modes
            .get(mode_index)
            .ok_or_else(|| invalid(format!("mode index {mode_index} out of range")))?;
        match self.kind {
            SystemKind::Affine => step_affine(mode, x),
            SystemKind::Noisy => step_noisy(mode, x, noise),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyVariant {
    IidUniform,
    IidWeighted(Vec<f64>),
    /// Repeats the sequence cyclically.
    Periodic(Vec<usize>),
    /// Plays the sequence once; running past its end is an error.
    Scripted(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchPolicy {
    pub variant: PolicyVariant,
    pub seed: u64,
}

impl SwitchPolicy {
    pub fn iid_uniform(seed: u64) -> Self {
        Self {
            variant: PolicyVariant::IidUniform,
            seed,
        }
    }

    pub fn scripted(sequence: Vec<usize>) -> Self {
        Self {
            variant: PolicyVariant::Scripted(sequence),
            seed: 0,
        }
    }

    /// A scripted policy that always selects `mode`.
    pub fn constant(mode: usize, steps: usize) -> Self {
        Self::scripted(vec![mode; steps])
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, mode_count: usize) -> Result<()> {
        match &self.variant {
            PolicyVariant::IidUniform => Ok(()),
            PolicyVariant::IidWeighted(p) => {
                ensure_dim("policy probabilities", p.len(), mode_count)?;
                if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                    return Err(invalid("policy probabilities must be finite and nonnegative"));
                }
                let total: f64 = p.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(invalid(format!(
                        "policy probabilities sum to {total}, expected 1"
                    )));
                }
                Ok(())
            }
            PolicyVariant::Periodic(seq) | PolicyVariant::Scripted(seq) => {
                if matches!(self.variant, PolicyVariant::Periodic(_)) && seq.is_empty() {
                    return Err(invalid("periodic policy needs a non-empty sequence"));
                }
                match seq.iter().find(|&&i| i >= mode_count) {
                    Some(i) => Err(invalid(format!(
                        "policy sequence refers to mode {i}, system has {mode_count}"
                    ))),
                    None => Ok(()),
                }
            }
        }
    }

    pub fn selector(&self, mode_count: usize) -> Result<ModeSelector> {
        self.validate(mode_count)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(SWITCH_STREAM);
        let weighted = match &self.variant {
            PolicyVariant::IidWeighted(p) => {
                Some(WeightedIndex::new(p).map_err(|e| invalid(format!("policy probabilities: {e}")))?)
            }
            _ => None,
        };
        Ok(ModeSelector {
            variant: self.variant.clone(),
            mode_count,
            rng,
            weighted,
            position: 0,
        })
    }
}

/// Stateful generator of mode indices for one policy.
#[derive(Debug, Clone)]
pub struct ModeSelector {
    variant: PolicyVariant,
    mode_count: usize,
    rng: ChaCha8Rng,
    weighted: Option<WeightedIndex<f64>>,
    position: usize,
}

impl ModeSelector {
    pub fn next_mode(&mut self) -> Result<usize> {
        let k = self.position;
        self.position += 1;
        match &self.variant {
            PolicyVariant::IidUniform => Ok(self.rng.random_range(0..self.mode_count)),
            PolicyVariant::IidWeighted(_) => {
                let dist = self.weighted.as_ref().expect("weighted index built with policy");
                Ok(dist.sample(&mut self.rng))
            }
            PolicyVariant::Periodic(seq) => Ok(seq[k % seq.len()]),
            PolicyVariant::Scripted(seq) => seq
                .get(k)
                .copied()
                .ok_or_else(|| invalid(format!("scripted policy exhausted after {} steps", seq.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<DVector<f64>>,
    pub mode_sequence: Vec<usize>,
    pub seed: u64,
}

/// Runs `steps` transitions from `x0` and records every state including `x0`.
pub fn simulate(
    sys: &SwitchedSystem,
    x0: &DVector<f64>,
    steps: usize,
    policy: &SwitchPolicy,
) -> Result<Trajectory> {
    ensure_dim("initial state", x0.len(), sys.dim())?;
    let mut selector = policy.selector(sys.mode_count())?;
    let mut noise = GaussianSource::new(policy.seed);
    let mut points = Vec::with_capacity(steps + 1);
    let mut mode_sequence = Vec::with_capacity(steps);
    points.push(x0.clone());
    let mut x = x0.clone();
    for _ in 0..steps {
        let i = selector.next_mode()?;
        x = sys.step(i, &x, &mut noise)?;
        mode_sequence.push(i);
        points.push(x.clone());
    }
    Ok(Trajectory {
        points,
        mode_sequence,
        seed: policy.seed,
    })
}

/// Burn-in used when none is given: 1% of `total`, at least 100, and always
/// leaving one point.
pub fn default_burn_in(total: usize) -> usize {
    (total / 100).max(100).min(total.saturating_sub(1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttractorSample {
    pub points: Vec<DVector<f64>>,
    pub centroid: DVector<f64>,
}

/// Simulates from the origin and keeps the last `total - burn_in` of the
/// `total` recorded states.
pub fn sample_attractor(
    sys: &SwitchedSystem,
    total: usize,
    burn_in: usize,
    policy: &SwitchPolicy,
) -> Result<AttractorSample> {
    sample_attractor_from(sys, &DVector::zeros(sys.dim()), total, burn_in, policy)
}

pub fn sample_attractor_from(
    sys: &SwitchedSystem,
    x0: &DVector<f64>,
    total: usize,
    burn_in: usize,
    policy: &SwitchPolicy,
) -> Result<AttractorSample> {
    if total <= burn_in {
        return Err(invalid(format!(
            "total ({total}) must exceed burn-in ({burn_in})"
        )));
    }
    let traj = simulate(sys, x0, total - 1, policy)?;
    let points: Vec<_> = traj.points.into_iter().skip(burn_in).collect();
    let centroid = centroid(&points);
    Ok(AttractorSample { points, centroid })
}

pub fn centroid(points: &[DVector<f64>]) -> DVector<f64> {
    let n = points.first().map_or(0, |p| p.len());
    let mut sum = DVector::zeros(n);
    for p in points {
        sum += p;
    }
    sum / points.len().max(1) as f64
}
