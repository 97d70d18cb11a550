//! Stationary Fokker-Planck densities on boxes, sublevel-set measure
//! profiles of compact functions, and Lyapunov-type bounds on those measures.

pub mod bounds;
pub mod density;
pub mod error;
pub mod expr;
pub mod format;
pub mod grid;
pub mod levelset;
pub mod problem;
pub mod solver;
pub mod verifier;

pub use error::{Error, Result};
