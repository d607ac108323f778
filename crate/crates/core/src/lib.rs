//! Numerical core for recovering a spatially varying diffusion coefficient in
//! a time-fractional (subdiffusion) equation
//!
//! ```text
//!     ∂_t^α u − ∇·(q ∇u) = f   in Ω × (0, T],   u = 0 on ∂Ω,   u(0) = u₀
//! ```
//!
//! from noisy space-time observations.
//!
//! The state is discretized with continuous P1 finite elements on a uniform
//! mesh of the unit interval or unit square and backward-Euler convolution
//! quadrature in time. The coefficient is recovered by minimizing an output
//! least-squares functional with an H¹-seminorm penalty, using exact
//! discrete-adjoint gradients and a projected nonlinear conjugate gradient
//! method over nodal box constraints.
//!
//! The crate is `no_std` and only needs `alloc`. Elementary functions go
//! through [`libm`] so results do not depend on the platform math library.
#![cfg_attr(not(test), no_std)]
// Bounds checks on NaN are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod adjoint;
pub mod cq;
pub mod error;
pub mod fem;
pub mod inversion;
pub mod forward;
mod math;
pub mod mesh;
pub mod metrics;
pub mod mittag_leffler;
pub mod optimizer;
pub mod quadrature;
pub mod sparse;
pub mod synthdata;

pub use adjoint::{GradientField, GradientMetric, InverseProblem, MisfitRule, ObjectiveValue};
pub use cq::CqWeights;
pub use error::{Error, Result};
pub use fem::{CoefficientField, FemOperators};
pub use inversion::{InversionSettings, Reconstruction, Start};
pub use forward::{ForwardSolver, SourceMode, SourceSpec, StateTrajectory};
pub use mesh::{Dim, Mesh};
pub use metrics::ErrorReport;
pub use optimizer::{CgControls, InversionResult, Termination};
pub use synthdata::{ExampleId, ExampleSpec, ObservationData};
