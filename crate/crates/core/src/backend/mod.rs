//! The eigen-factor optimizer.
//!
//! Every iteration solves each plane in closed form, then treats the planes
//! as constants and takes one damped Newton step on all poses. Because each
//! factor's cost splits into per-pose terms once its plane is fixed, the
//! Hessian is block diagonal and the step costs `O(H)`.

mod factor;
mod optimizer;
mod probe;

pub use factor::{dq_dxi, local_gradient, local_hessian, EigenFactor, Mode};
pub use optimizer::{
    newton_step, optimize, GradientAndHessian, OptReport, OptimizerConfig, Problem, Status, TraceRecord,
};
pub use probe::{centered_hessian_error, centered_hessian_error_probe, exact_centered_hessian};
