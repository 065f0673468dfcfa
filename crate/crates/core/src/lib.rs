//! Active learning of operating points for local LPV system identification.
//!
//! Local VARX models identified at fixed operating points are fused into a
//! GPR-LPV model: one Gaussian process per element of `A(θ)` and `B(θ)`, with
//! each GP's observation noise set from the local standard errors. The summed
//! posterior variance then selects where to run the next experiment.

pub mod active;
pub mod error;
pub mod geometry;
pub mod gpr_lpv;
pub mod io;
pub mod kernel_gpr;
pub mod plant;
mod serde_matrix;
pub mod varx;

pub use error::{Error, Result};
pub use geometry::{OperatingBox, OperatingPoint};
