//! Preconditioned Douglas-Rachford splitting for convex-concave saddle-point
//! problems with separable dual variables.
//!
//! The crate solves
//!
//! ```text
//! min_x max_y  F(x) + sum_i ( <K_i x, y_i> - G_i(y_i) )
//! ```
//!
//! with the deterministic (PDR, RPDR, PDRQ, RPDRQ) and stochastic
//! (SPDR, SRPDR, SPDRQ, SRPDRQ) members of the preconditioned
//! Douglas-Rachford family, plus PDHG/SPDHG baselines. The building blocks
//! are organised as:
//!
//! * [`spaces`]: block vectors, iteration states and weighted semi-norms.
//! * [`linops`]: the linear operator contract and the concrete operators
//!   (finite differences, symmetrized derivative, blur, data matrices).
//! * [`prox`]: resolvents and function evaluators.
//! * [`precond`]: feasible preconditioners for the implicit linear step.
//! * [`solvers`]: the iteration engines and the run loop.
//! * [`metrics`]: Bregman distance, restricted gap, primal error, PSNR.
//! * [`problems`]: TGV-KL deblurring, smoothed-hinge classification and a
//!   small quadratic test problem.
//! * [`cli`]: configuration-driven experiment runner behind `drsplit`.

pub mod cli;
pub mod error;
pub mod io;
pub mod linops;
pub mod metrics;
pub mod precond;
pub mod problems;
pub mod prox;
pub mod solvers;
pub mod spaces;

pub use error::{Error, Result};
pub use spaces::{BlockVector, DiagonalWeight, Layout, StateU, Variant, WeightBlock};
