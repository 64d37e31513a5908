//! Finite-horizon LQ-optimal feedback for linear descriptor systems
//! `d/dt E x = A x + B u` whose pencil has nilpotency index 1.
//!
//! The pipeline runs
//! [`descriptor`] (pencil check, spectral projectors) →
//! [`weierstrass`] (restricted operators, weight split) →
//! [`riccati`] (projected DRE, lift to the original coordinates) →
//! [`control`] / [`simulate`] (feedback, closed loop, optimality checks).
//! [`fem`] assembles a coupled parabolic-elliptic test problem and
//! [`oracle`] solves small instances by direct transcription.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod descriptor;
pub mod error;
pub mod fem;
pub mod grid;
pub mod linalg;
pub mod oracle;
pub mod parallel;
pub mod pipeline;
pub mod riccati;
pub mod scenarios;
pub mod simulate;
pub mod stiff;
pub mod weierstrass;

pub use error::{Error, Result};
