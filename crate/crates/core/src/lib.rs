//! Simulation and optimization toolkit for a full-duplex multi-antenna link
//! assisted by a reconfigurable surface, where the transmit array, the receive
//! array and the surface elements can all be repositioned inside small planar
//! regions.
//!
//! The crate covers the whole pipeline:
//!
//! * [`scenario`] — physical configuration (geometry, path-loss model, power
//!   and noise budgets) with desk- and full-scale profiles;
//! * [`channel`] — multipath field-response channel synthesis from element
//!   positions, plus exact per-coordinate channel derivatives;
//! * [`metrics`] — SINRs, sum rate, half-duplex reference rate and constraint
//!   feasibility checks;
//! * [`kernels`] — the small dense numerical solvers everything sits on: a
//!   Hermitian SDP interior-point solver (via the real symmetric embedding),
//!   a dominant-eigenpair routine, and a trust-region LP solver;
//! * [`subproblems`] — the six block updates (transmit beamformer via
//!   SDR+SROCR, receive combiner, uplink power, surface phases, and the three
//!   position blocks via linearized trust-region steps);
//! * [`ao`] — the alternating-optimization driver with per-block acceptance
//!   guards and variant masks;
//! * [`harness`] — Monte-Carlo sweeps with paired seeds, CSV output and SVG
//!   plots;
//! * [`oracle`] — independent brute-force references (grid searches, finite
//!   differences, random search) used by the test suite and the `oracle`
//!   CLI subcommand.

pub mod ao;
pub mod channel;
pub mod harness;
pub mod kernels;
pub mod metrics;
pub mod oracle;
pub mod scenario;
pub mod subproblems;

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;

/// Complex scalar used throughout.
pub type C64 = Complex64;
/// Dense complex matrix.
pub type CMat = DMatrix<C64>;
/// Dense complex column vector.
pub type CVec = DVector<C64>;
/// Dense complex row vector.
pub type CRow = RowDVector<C64>;
/// Dense real vector.
pub type RVec = DVector<f64>;
/// Dense real matrix.
pub type RMat = DMatrix<f64>;
