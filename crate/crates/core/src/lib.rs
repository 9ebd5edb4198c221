//! Single-measurement quantum state tomography for photons that carry
//! information in spatial and non-spatial degrees of freedom.
//!
//! A photon living in `d` spatial modes and `m` non-spatial modes (spin,
//! frequency bins, ...) is sent through a coupler unitary acting on `D·m`
//! lifted modes and imaged on a camera. Every camera pixel then realises one
//! element of a POVM on the `d·m` input space, and when that POVM is
//! informationally complete a single intensity image determines the full
//! density matrix.
//!
//! The crate is organised bottom-up:
//!
//! * [`modes`]: Laguerre-Gauss mode bases sampled on a pixel grid.
//! * [`state`]: density matrices, fidelity, partial trace and the projection
//!   onto unit-trace PSD matrices.
//! * [`coupler`]: Haar or file-loaded couplers, POVM lifting and the
//!   informational-completeness audit.
//! * [`forward`]: outcome probabilities, photon sampling and detector noise.
//! * [`solver`]: accelerated projected-gradient least squares.
//! * [`multiphoton`]: biphoton intensity statistics and coincidence POVMs.
//! * [`measurement`]: the linear measurement map the solver consumes.
//! * [`matrix_csv`]: the complex-matrix CSV format shared by every module.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupler;
pub mod error;
pub mod forward;
pub mod linalg;
pub mod matrix_csv;
pub mod measurement;
pub mod modes;
pub mod multiphoton;
pub mod seed;
pub mod solver;
pub mod state;

pub use error::{Error, Result};
pub use linalg::{CMat, C64};
