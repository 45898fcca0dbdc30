//! Plane-based SLAM back-end built on summation matrices.
//!
//! Observed points are folded per pose and per plane into 4×4 summation
//! matrices; planes are then solved in closed form from their eigenvectors
//! and the trajectory is refined by damped Newton steps whose Hessian is
//! block diagonal over poses.

pub mod backend;
pub mod bench;
pub mod checks;
pub mod eigen;
pub mod error;
pub mod eval;
pub mod io;
pub mod kdtree;
pub mod plane;
pub mod se3;
pub mod synth;

pub use error::{Error, Result};
