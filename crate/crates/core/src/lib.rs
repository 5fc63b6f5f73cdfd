//! Invariant ellipsoids for arbitrarily switching discrete-time affine
//! systems, and for the covariance dynamics of switching linear systems driven
//! by white Gaussian noise.
//!
//! The pieces:
//!
//! * [`dynamics`]: modes, switched systems, seeded simulation.
//! * [`kron`]: the covariance recursion and its exact lifting to a switched
//!   affine system in `vec`/`vech` coordinates.
//! * [`ellipsoid`]: ellipsoids, the S-procedure invariance block, the
//!   initial-condition block and sampling checks.
//! * [`sdp`]: a small interior-point LMI solver maximizing `trace(P)`, the
//!   multiplier line search and default centers.
//! * [`bound`]: the pipelines tying the above together.

pub mod bound;
pub mod dynamics;
pub mod ellipsoid;
pub mod error;
pub mod kron;
pub mod linalg;
pub mod sdp;

pub use dynamics::{
    fixed_point, sample_attractor, simulate, step_affine, step_noisy, AffineMap, Mode, SwitchPolicy,
    SwitchedSystem, SystemKind, Trajectory, STABILITY_MARGIN,
};
pub use ellipsoid::{Ellipsoid, SProcBlock};
pub use error::{Error, Result};
pub use kron::{lift, LiftedSystem, Reduction};
