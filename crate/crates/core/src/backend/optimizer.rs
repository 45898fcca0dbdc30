use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::factor::{EigenFactor, Mode};
use crate::error::{invalid, Error, Result};
use crate::se3::{retract, GeneratorBasis, Pose, Twist};

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub cost_tolerance: f64,
    pub lm_lambda0: f64,
    pub lm_up: f64,
    pub lm_down: f64,
    /// Newton step scale `α`.
    pub step_scale: f64,
    /// Damping increases allowed within one iteration.
    pub max_damping_raises: usize,
    pub mode: Mode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            cost_tolerance: 1e-2,
            lm_lambda0: 1e-3,
            lm_up: 10.0,
            lm_down: 3.0,
            step_scale: 1.0,
            max_damping_raises: 10,
            mode: Mode::Centered,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cost_tolerance", self.cost_tolerance),
            ("lm_lambda0", self.lm_lambda0),
            ("lm_up", self.lm_up),
            ("lm_down", self.lm_down),
            ("step_scale", self.step_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Joint gradient (one 6-vector per pose) and block-diagonal Hessian.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientAndHessian {
    pub grad: Vec<Vector6<f64>>,
    pub blocks: Vec<Matrix6<f64>>,
}

impl GradientAndHessian {
    pub fn zeros(poses: usize) -> Self {
        Self { grad: vec![Vector6::zeros(); poses], blocks: vec![Matrix6::zeros(); poses] }
    }

    /// The `6H` gradient with pose `t` occupying rows `6t..6t+6`.
    pub fn flat_gradient(&self) -> DVector<f64> {
        DVector::from_iterator(self.grad.len() * 6, self.grad.iter().flat_map(|g| g.iter().copied()))
    }

    pub fn dense_hessian(&self) -> DMatrix<f64> {
        let n = self.blocks.len() * 6;
        let mut h = DMatrix::zeros(n, n);
        for (t, b) in self.blocks.iter().enumerate() {
            h.view_mut((6 * t, 6 * t), (6, 6)).copy_from(b);
        }
        h
    }
}

/// `Δξₜ = −α (Bₜ + μI)⁻¹ gₜ`, solved block by block.
pub fn newton_step(gh: &GradientAndHessian, damping: f64, alpha: f64) -> Result<Vec<Twist>> {
    gh.blocks
        .iter()
        .zip(&gh.grad)
        .enumerate()
        .map(|(t, (b, g))| {
            let damped = b + Matrix6::identity() * damping;
            let chol = damped.cholesky().ok_or(Error::Factorization { pose: t })?;
            Twist::new(-chol.solve(g) * alpha).map_err(|_| Error::Factorization { pose: t })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub cost: f64,
    pub damping: f64,
    pub step_norm: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Status {
    Converged,
    MaxIterations,
    /// No damping within the allowed raises produced a cost decrease.
    DampingOverflow,
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct OptReport {
    pub trajectory: Vec<Pose>,
    pub trace: Vec<TraceRecord>,
    pub iterations: usize,
    pub status: Status,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Wall time of every completed iteration.
    pub iteration_times: Vec<Duration>,
}

impl OptReport {
    /// Costs of the initial state and every accepted step.
    pub fn accepted_costs(&self) -> Vec<f64> {
        self.trace.iter().filter(|r| r.accepted).map(|r| r.cost).collect()
    }
}

/// A trajectory, the plane factors observed along it, and the gauge anchor.
#[derive(Clone, Debug)]
pub struct Problem {
    trajectory: Vec<Pose>,
    factors: Vec<EigenFactor>,
    anchor: usize,
    pub config: OptimizerConfig,
    basis: GeneratorBasis,
}

impl Problem {
    pub fn new(trajectory: Vec<Pose>, factors: Vec<EigenFactor>, config: OptimizerConfig) -> Result<Self> {
        if trajectory.is_empty() {
            return Err(invalid("empty trajectory"));
        }
        config.validate()?;
        for f in &factors {
            if let Some(t) = f.max_pose_index().filter(|&t| t >= trajectory.len()) {
                return Err(invalid(format!(
                    "factor {} references pose {t} of a {}-pose trajectory",
                    f.id(),
                    trajectory.len()
                )));
            }
        }
        Ok(Self { trajectory, factors, anchor: 0, config, basis: GeneratorBasis::standard() })
    }

    pub fn with_anchor(mut self, anchor: usize) -> Result<Self> {
        if anchor >= self.trajectory.len() {
            return Err(invalid(format!("anchor {anchor} outside trajectory")));
        }
        self.anchor = anchor;
        Ok(self)
    }

    /// Replaces the generator basis used for analytic derivatives.
    pub fn with_basis(mut self, basis: GeneratorBasis) -> Self {
        self.basis = basis;
        self
    }

    pub fn trajectory(&self) -> &[Pose] {
        &self.trajectory
    }

    pub fn factors(&self) -> &[EigenFactor] {
        &self.factors
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn basis(&self) -> &GeneratorBasis {
        &self.basis
    }

    pub fn set_trajectory(&mut self, trajectory: Vec<Pose>) -> Result<()> {
        if trajectory.len() != self.trajectory.len() {
            return Err(invalid("trajectory length changed"));
        }
        self.trajectory = trajectory;
        self.factors.iter_mut().for_each(EigenFactor::invalidate);
        Ok(())
    }

    /// Total cost `Σ λ` at an arbitrary trajectory. Degenerate factors
    /// contribute nothing; `None` when every factor is degenerate.
    pub fn cost_at(&self, trajectory: &[Pose]) -> Option<f64> {
        let lambdas: Vec<Option<f64>> = self
            .factors
            .par_iter()
            .map(|f| f.evaluate(trajectory).ok().map(|e| e.lambda))
            .collect();
        sum_valid(&lambdas)
    }

    pub fn cost(&self) -> Option<f64> {
        self.cost_at(&self.trajectory)
    }

    /// Closed-form plane step for every factor at the current trajectory.
    /// Returns the total cost.
    pub fn estimate_planes(&mut self) -> Result<f64> {
        estimate_all(&mut self.factors, &self.trajectory)
            .ok_or_else(|| Error::DegeneratePlane("every factor is degenerate".into()))
    }

    /// Sums factor gradients and Hessian blocks, then pins the anchor pose.
    /// Factors without a current estimate are skipped.
    pub fn assemble(&self) -> GradientAndHessian {
        let (mode, basis) = (self.config.mode, &self.basis);
        let parts: Vec<_> = self
            .factors
            .par_iter()
            .filter_map(|f| Some((f.gradient(mode, basis).ok()?, f.hessian_blocks(mode, basis).ok()?)))
            .collect();
        let mut gh = GradientAndHessian::zeros(self.trajectory.len());
        for (grads, blocks) in parts {
            for (t, g) in grads {
                gh.grad[t] += g;
            }
            for (t, b) in blocks {
                gh.blocks[t] += b;
            }
        }
        gh.grad[self.anchor] = Vector6::zeros();
        gh.blocks[self.anchor] = Matrix6::identity();
        gh
    }

    pub fn optimize(&mut self) -> OptReport {
        optimize(self)
    }
}

fn estimate_all(factors: &mut [EigenFactor], trajectory: &[Pose]) -> Option<f64> {
    let lambdas: Vec<Option<f64>> =
        factors.par_iter_mut().map(|f| f.estimate(trajectory).ok().map(|e| e.lambda)).collect();
    sum_valid(&lambdas)
}

fn sum_valid(values: &[Option<f64>]) -> Option<f64> {
    values.iter().any(Option::is_some).then(|| values.iter().flatten().sum())
}

/// Alternating optimisation: closed-form planes, then a damped Newton step
/// on every pose at once, accepted only if the total cost does not increase.
///
/// Planes are estimated at each candidate trajectory while scoring it, and an
/// accepted candidate keeps those estimates for the next iteration.
pub fn optimize(problem: &mut Problem) -> OptReport {
    let config = problem.config.clone();
    let mut trace = Vec::new();
    let mut times = Vec::new();
    let mut damping = config.lm_lambda0;

    let report = |problem: &Problem, trace, times, iterations, status, initial, last| OptReport {
        trajectory: problem.trajectory.clone(),
        trace,
        iterations,
        status,
        initial_cost: initial,
        final_cost: last,
        iteration_times: times,
    };

    let mut cost = match problem.estimate_planes() {
        Ok(c) => c,
        Err(e) => {
            return report(problem, trace, times, 0, Status::Failed(e.to_string()), f64::NAN, f64::NAN);
        }
    };
    let initial = cost;
    trace.push(TraceRecord { iteration: 0, cost, damping, step_norm: 0.0, accepted: true });

    let mut scratch = problem.factors.clone();
    let mut status = Status::MaxIterations;
    let mut iterations = 0;
    for iteration in 1..=config.max_iters {
        let start = Instant::now();
        let gh = problem.assemble();
        if gh.grad.iter().all(|g| g.iter().all(|v| *v == 0.0)) {
            status = Status::Converged;
            break;
        }

        let mut raises = 0;
        let accepted = loop {
            if raises > config.max_damping_raises {
                break None;
            }
            let step = match newton_step(&gh, damping, config.step_scale) {
                Ok(step) => step,
                Err(_) => {
                    damping *= config.lm_up;
                    raises += 1;
                    continue;
                }
            };
            let candidate: Vec<Pose> =
                problem.trajectory.iter().zip(&step).map(|(p, xi)| retract(p, xi)).collect();
            let step_norm = step.iter().map(|xi| xi.as_vector().norm_squared()).sum::<f64>().sqrt();
            let new_cost = estimate_all(&mut scratch, &candidate).unwrap_or(f64::INFINITY);
            let ok = new_cost <= cost;
            trace.push(TraceRecord { iteration, cost: new_cost, damping, step_norm, accepted: ok });
            if ok {
                damping /= config.lm_down;
                break Some((candidate, new_cost));
            }
            damping *= config.lm_up;
            raises += 1;
        };

        let Some((candidate, new_cost)) = accepted else {
            status = Status::DampingOverflow;
            break;
        };
        problem.trajectory = candidate;
        std::mem::swap(&mut problem.factors, &mut scratch);
        iterations = iteration;
        times.push(start.elapsed());
        let decrease = cost - new_cost;
        cost = new_cost;
        if decrease <= config.cost_tolerance * (cost + decrease) {
            status = Status::Converged;
            break;
        }
    }
    report(problem, trace, times, iterations, status, initial, cost)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_spd(rng: &mut ChaCha8Rng) -> Matrix6<f64> {
        let m = Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0));
        m * m.transpose() + Matrix6::identity() * 0.5
    }

    #[test]
    fn newton_step_examples() {
        let gh = GradientAndHessian { grad: vec![Vector6::zeros(); 3], blocks: vec![Matrix6::identity(); 3] };
        for xi in newton_step(&gh, 0.0, 1.0).unwrap() {
            assert_eq!(xi, Twist::zero());
        }

        let gh = GradientAndHessian { grad: vec![Vector6::x()], blocks: vec![Matrix6::identity()] };
        assert_eq!(*newton_step(&gh, 0.0, 1.0).unwrap()[0].as_vector(), -Vector6::x());

        let gh = GradientAndHessian { grad: vec![Vector6::x()], blocks: vec![-Matrix6::identity()] };
        assert!(matches!(newton_step(&gh, 0.5, 1.0), Err(Error::Factorization { pose: 0 })));
        assert!(newton_step(&gh, 2.0, 1.0).is_ok());
    }

    #[test]
    fn block_solve_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let h = 5;
        let gh = GradientAndHessian {
            grad: (0..h).map(|_| Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect(),
            blocks: (0..h).map(|_| random_spd(&mut rng)).collect(),
        };
        let damping = 0.1;
        let step = newton_step(&gh, damping, 1.0).unwrap();
        let dense = gh.dense_hessian() + DMatrix::identity(6 * h, 6 * h) * damping;
        let oracle = -dense.lu().solve(&gh.flat_gradient()).unwrap();
        for (t, xi) in step.iter().enumerate() {
            assert_relative_eq!(*xi.as_vector(), oracle.fixed_rows::<6>(6 * t).into_owned(), epsilon = 1e-10);
        }
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let bad = OptimizerConfig { lm_up: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig { cost_tolerance: f64::NAN, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_problem_fails_cleanly() {
        let mut p = Problem::new(vec![Pose::identity(); 2], vec![], OptimizerConfig::default()).unwrap();
        let gh = p.assemble();
        assert_eq!(gh.grad, vec![Vector6::zeros(); 2]);
        assert_eq!(gh.blocks, vec![Matrix6::identity(), Matrix6::zeros()]);
        let report = p.optimize();
        assert!(matches!(report.status, Status::Failed(_)));
        assert!(Problem::new(vec![], vec![], OptimizerConfig::default()).is_err());
    }
}
