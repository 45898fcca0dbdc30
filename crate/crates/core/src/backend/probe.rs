//! How well the block-diagonal centered Hessian approximates the exact one.
//!
//! With the centered plane `ᶜπ = (η, 0)` held fixed, the centered cost is
//! `ηᵀ Σ(T) η` where `Σ(T)` is the scatter of all points about their current
//! mean. The mean moves with every pose, so the exact Hessian has cross-pose
//! blocks that the block-diagonal approximation drops.

use nalgebra::{DMatrix, Matrix4, Vector3, Vector6};

use super::factor::{EigenFactor, Mode};
use super::optimizer::Problem;
use crate::error::{Error, Result};
use crate::plane::QMatrix;
use crate::se3::{exp, Pose, Twist};

const FD_STEP: f64 = 1e-4;

/// Per-factor data needed to evaluate the frozen-normal cost under pose perturbations.
struct FrozenFactor {
    eta: Vector3<f64>,
    q: Matrix4<f64>,
    /// (pose, S_t, T_t S_t T_tᵀ)
    blocks: Vec<(usize, Matrix4<f64>, Matrix4<f64>)>,
}

impl FrozenFactor {
    fn new(factor: &EigenFactor, problem: &Problem) -> Option<Self> {
        let eta = factor.current()?.plane.normal();
        let traj = problem.trajectory();
        let blocks: Vec<_> = factor
            .blocks()
            .iter()
            .map(|(t, s)| (*t, *s.matrix(), *s.transformed(&traj[*t]).matrix()))
            .collect();
        let q = blocks.iter().map(|b| b.2).sum();
        Some(Self { eta, q, blocks })
    }

    /// Cost with the given pose-local twists applied on the left.
    fn cost(&self, deltas: &[(usize, Vector6<f64>)], traj: &[Pose]) -> f64 {
        let mut q = self.q;
        for (t, s, ts) in &self.blocks {
            let xi: Vector6<f64> = deltas.iter().filter(|(p, _)| p == t).map(|(_, d)| d).sum();
            if xi != Vector6::zeros() {
                let pose = exp(&Twist::new(xi).expect("finite twist")) * traj[*t];
                let m = pose.matrix();
                q += m * s * m.transpose() - ts;
            }
        }
        let scatter = QMatrix::from_matrix(q).scatter();
        self.eta.dot(&(scatter * self.eta))
    }

    fn observes(&self, pose: usize) -> bool {
        self.blocks.iter().any(|b| b.0 == pose)
    }
}

fn unit(i: usize, h: f64) -> Vector6<f64> {
    let mut v = Vector6::zeros();
    v[i] = h;
    v
}

/// Dense `6H × 6H` Hessian of the frozen-normal centered cost, by second
/// central differences. Planes are taken from the problem's current estimate.
pub fn exact_centered_hessian(problem: &Problem) -> Result<DMatrix<f64>> {
    let frozen: Vec<FrozenFactor> = problem.factors().iter().filter_map(|f| FrozenFactor::new(f, problem)).collect();
    if frozen.is_empty() {
        return Err(Error::NotEstimated { factor: 0 });
    }
    let traj = problem.trajectory();
    let n = 6 * traj.len();
    let h = FD_STEP;
    let mut hess = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let (ta, ia, tb, ib) = (a / 6, a % 6, b / 6, b % 6);
            let mut v = 0.0;
            for f in frozen.iter().filter(|f| f.observes(ta) && f.observes(tb)) {
                let c = |sa: f64, sb: f64| f.cost(&[(ta, unit(ia, sa * h)), (tb, unit(ib, sb * h))], traj);
                v += if a == b {
                    let c0 = f.cost(&[], traj);
                    let cp = f.cost(&[(ta, unit(ia, h))], traj);
                    let cm = f.cost(&[(ta, unit(ia, -h))], traj);
                    (cp - 2.0 * c0 + cm) / (h * h)
                } else {
                    (c(1.0, 1.0) - c(1.0, -1.0) - c(-1.0, 1.0) + c(-1.0, -1.0)) / (4.0 * h * h)
                };
            }
            hess[(a, b)] = v;
            hess[(b, a)] = v;
        }
    }
    Ok(hess)
}

/// Relative Frobenius difference between the exact centered Hessian and the
/// block-diagonal analytic one, over all poses without gauge anchoring.
/// Re-estimates the planes at the problem's current trajectory first.
pub fn centered_hessian_error(problem: &Problem) -> Result<f64> {
    let mut problem = problem.clone();
    problem.estimate_planes()?;
    let exact = exact_centered_hessian(&problem)?;
    let mut approx = DMatrix::zeros(exact.nrows(), exact.ncols());
    for f in problem.factors().iter().filter(|f| f.current().is_some()) {
        for (t, b) in f.hessian_blocks(Mode::Centered, problem.basis())? {
            let mut view = approx.view_mut((6 * t, 6 * t), (6, 6));
            view += b;
        }
    }
    Ok((&exact - &approx).norm() / exact.norm())
}

/// Runs [`centered_hessian_error`] on a problem built for each pose count.
pub fn centered_hessian_error_probe(
    h_values: &[usize],
    mut make_problem: impl FnMut(usize) -> Result<Problem>,
) -> Result<Vec<(usize, f64)>> {
    h_values.iter().map(|&h| Ok((h, centered_hessian_error(&make_problem(h)?)?))).collect()
}
