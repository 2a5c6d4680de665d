//! Variational solver for dissipative nonlinear wave equations.
//!
//! Solutions of `w'' = -grad W(w) - grad G(w') + f` are approximated by
//! minimizing exponentially weighted space-time functionals at a sequence of
//! regularization parameters `eps` driven to zero by continuation. The
//! library also computes the associated energy estimates, stationarity
//! identities and energy inequality as executable diagnostics against
//! independent reference solutions.

pub mod error;
pub mod reference;
pub mod solver;
pub mod source;
pub mod spatial;
pub mod timeweight;
pub mod trajectory;
pub mod variational;

pub use error::{Error, Result};
