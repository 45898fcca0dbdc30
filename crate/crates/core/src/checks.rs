//! Finite-difference self-checks of the analytic derivatives.

use nalgebra::{Matrix6, Vector3, Vector4, Vector6};
use serde::Serialize;

use crate::backend::{EigenFactor, Mode};
use crate::error::Result;
use crate::plane::QMatrix;
use crate::se3::{exp, GeneratorBasis, Pose, Twist};
use crate::synth::{generate, WorldSpec};

pub const GRADIENT_TOLERANCE: f64 = 1e-6;
pub const HESSIAN_TOLERANCE: f64 = 1e-5;
pub const CROSS_POSE_TOLERANCE: f64 = 1e-8;
pub const CENTERED_TOLERANCE: f64 = 1e-9;

const GRADIENT_STEP: f64 = 1e-5;
const HESSIAN_STEP: f64 = 1e-4;
const CROSS_STEP: f64 = 1e-3;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CheckReport {
    pub trials: usize,
    pub gradient: f64,
    pub hessian: f64,
    pub cross_pose: f64,
    pub centered: f64,
}

impl CheckReport {
    pub fn gradient_ok(&self) -> bool {
        self.gradient <= GRADIENT_TOLERANCE
    }

    pub fn hessian_ok(&self) -> bool {
        self.hessian <= HESSIAN_TOLERANCE
    }

    pub fn cross_pose_ok(&self) -> bool {
        self.cross_pose <= CROSS_POSE_TOLERANCE
    }

    pub fn centered_ok(&self) -> bool {
        self.centered <= CENTERED_TOLERANCE
    }

    pub fn passed(&self) -> bool {
        self.gradient_ok() && self.hessian_ok() && self.cross_pose_ok() && self.centered_ok()
    }
}

/// Applies `exp(ξₜ)` on the left of each moved pose, where `ξₜ` sums every
/// move on pose `t` into a single twist.
fn perturbed(traj: &[Pose], moves: &[(usize, usize, f64)]) -> Vec<Pose> {
    let mut twists = vec![Vector6::zeros(); traj.len()];
    for &(t, i, h) in moves {
        twists[t][i] += h;
    }
    traj.iter()
        .zip(&twists)
        .map(|(pose, xi)| {
            if *xi == Vector6::zeros() {
                *pose
            } else {
                exp(&Twist::new(*xi).expect("finite step")) * *pose
            }
        })
        .collect()
}

/// `πᵀ Q π` with `π` fixed, summed per pose as `ηᵀCη + n(ηᵀμ + d)²` in the
/// pose's local frame. `C` and `μ` are the scatter and mean of the pose's
/// points, so no term cancels against another and the finite differences
/// stay well above rounding noise.
fn frozen_cost(factor: &EigenFactor, traj: &[Pose], pi: &Vector4<f64>) -> f64 {
    factor
        .blocks()
        .iter()
        .map(|(t, s)| {
            let v = traj[*t].matrix().transpose() * pi;
            let eta = Vector3::new(v[0], v[1], v[2]);
            let q = QMatrix::from_matrix(*s.matrix());
            let r = eta.dot(&q.mean()) + v[3];
            eta.dot(&(q.scatter() * eta)) + q.count() * r * r
        })
        .sum()
}

fn true_cost(factor: &EigenFactor, traj: &[Pose]) -> Result<f64> {
    Ok(factor.evaluate(traj)?.lambda)
}

fn rel(diff: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Checks one estimated factor at `traj`; returns (gradient, hessian, cross-pose, centered) errors.
pub fn check_factor(factor: &EigenFactor, traj: &[Pose], basis: &GeneratorBasis) -> Result<[f64; 4]> {
    let pi = factor.current().expect("factor must be estimated").plane.as_vector();
    let grads = factor.gradient(Mode::Plain, basis)?;
    let grads_c = factor.gradient(Mode::Centered, basis)?;
    let blocks = factor.hessian_blocks(Mode::Plain, basis)?;

    let gscale = grads.iter().map(|(_, g)| g.amax()).fold(0.0, f64::max);
    let mut out = [0.0f64; 4];
    for ((t, g), (_, gc)) in grads.iter().zip(&grads_c) {
        let h = GRADIENT_STEP;
        let fd = Vector6::from_fn(|i, _| {
            let plus = true_cost(factor, &perturbed(traj, &[(*t, i, h)])).unwrap_or(f64::NAN);
            let minus = true_cost(factor, &perturbed(traj, &[(*t, i, -h)])).unwrap_or(f64::NAN);
            (plus - minus) / (2.0 * h)
        });
        out[0] = out[0].max(rel((g - fd).amax(), gscale));
        out[3] = out[3].max(rel((g - gc).amax(), gscale));
    }

    for (t, b) in &blocks {
        let h = HESSIAN_STEP;
        let c0 = frozen_cost(factor, traj, &pi);
        let f = |moves: &[(usize, usize, f64)]| frozen_cost(factor, &perturbed(traj, moves), &pi);
        let fd = Matrix6::from_fn(|i, j| {
            if i == j {
                (f(&[(*t, i, h)]) - 2.0 * c0 + f(&[(*t, i, -h)])) / (h * h)
            } else {
                (f(&[(*t, i, h), (*t, j, h)]) - f(&[(*t, i, h), (*t, j, -h)]) - f(&[(*t, i, -h), (*t, j, h)])
                    + f(&[(*t, i, -h), (*t, j, -h)]))
                    / (4.0 * h * h)
            }
        });
        out[1] = out[1].max(rel((b - fd).amax(), b.amax()));
    }

    let block_norm = blocks.iter().map(|(_, b)| b.norm()).fold(0.0, f64::max);
    for (a, (ta, _)) in blocks.iter().enumerate() {
        for (tb, _) in &blocks[a + 1..] {
            let h = CROSS_STEP;
            let f = |sa: f64, sb: f64, i: usize, j: usize| {
                frozen_cost(factor, &perturbed(traj, &[(*ta, i, sa * h), (*tb, j, sb * h)]), &pi)
            };
            for i in 0..6 {
                for j in 0..6 {
                    let mixed =
                        (f(1.0, 1.0, i, j) - f(1.0, -1.0, i, j) - f(-1.0, 1.0, i, j) + f(-1.0, -1.0, i, j)) / (4.0 * h * h);
                    out[2] = out[2].max(rel(mixed.abs(), block_norm));
                }
            }
        }
    }
    Ok(out)
}

/// Runs every check over `trials` random problem states.
pub fn check_derivatives(seed: u64, trials: usize, basis: &GeneratorBasis) -> Result<CheckReport> {
    let mut report = CheckReport { trials, ..Default::default() };
    for trial in 0..trials {
        let spec = WorldSpec { n_poses: 5, n_planes: 4, seed: seed.wrapping_add(trial as u64), ..Default::default() };
        let ds = generate(&spec)?;
        let traj = ds.initial_trajectory.clone();
        for mut factor in ds.factors()? {
            factor.estimate(&traj)?;
            let [g, h, c, z] = check_factor(&factor, &traj, basis)?;
            report.gradient = report.gradient.max(g);
            report.hessian = report.hessian.max(h);
            report.cross_pose = report.cross_pose.max(c);
            report.centered = report.centered.max(z);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_basis_passes() {
        let r = check_derivatives(1, 2, &GeneratorBasis::standard()).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn corrupted_generator_fails() {
        let mut g: [nalgebra::Matrix4<f64>; 6] = std::array::from_fn(|i| *GeneratorBasis::standard().get(i));
        g[4][(1, 3)] = 0.5;
        let r = check_derivatives(1, 1, &GeneratorBasis::from_matrices(g)).unwrap();
        assert!(!r.gradient_ok());
        assert!(!r.passed());
    }

    #[test]
    fn zero_trials_is_vacuous() {
        let r = check_derivatives(1, 0, &GeneratorBasis::standard()).unwrap();
        assert!(r.passed());
        assert_eq!(r.trials, 0);
    }
}
