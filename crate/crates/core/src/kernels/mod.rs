//! Small dense numerical solvers the optimizer stack sits on.
//!
//! Everything here is deterministic (no randomized pivoting or starts), sized
//! for matrices of a few dozen rows, and self-contained:
//!
//! * [`eig`] — dominant eigenpair of a Hermitian matrix (shifted power
//!   iteration with Rayleigh-quotient refinement) and the whitened
//!   matched-filter direction (σ²I + S)⁻¹a used by the combiner update;
//! * [`trlp`] — maximize a linear objective over linear rows ∩ box ∩ one
//!   Euclidean ball (the trust-region step of the linearized subproblems),
//!   by a primal-dual interior-point method;
//! * [`sdp`] — maximize tr(CW) over Hermitian PSD W under trace-affine
//!   rows, via the real symmetric embedding and a primal-dual
//!   interior-point method with Mehrotra correction.

pub mod eig;
pub mod sdp;
pub mod trlp;

use thiserror::Error;

/// Failure modes of the kernel routines.
#[derive(Debug, Error)]
pub enum KernelError {
    #[error("input vector is identically zero")]
    ZeroVector,
    #[error("matrix factorization failed (input not positive definite?)")]
    FactorizationFailed,
}
