//! Numerical laboratory for the effective Hamiltonian of one-dimensional
//! viscous Hamilton-Jacobi equations
//!
//! ```text
//! u_t = a(x) u_xx + H(x, u_x)
//! ```
//!
//! in sampled stationary environments. The corrector route ([`cell`],
//! [`theta`]) solves the scalar ODE `a f' + H(x, f) = λ` for bounded
//! solutions and inverts the map λ ↦ {means of stationary solutions}. The
//! [`parabolic`] module solves the evolution equation directly with a monotone
//! scheme, so the two routes can be compared ([`validate`]).

pub mod bridge;
pub mod cell;
pub mod cli;

pub mod config;
pub mod env;
pub mod error;
pub mod io;
pub mod par;
pub mod parabolic;
pub mod theta;
pub mod validate;

pub use error::{Error, Result};
