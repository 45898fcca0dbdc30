//! Optimizer behaviour on synthetic worlds.

use eigen_factors::backend::{Mode, OptimizerConfig, Status};
use eigen_factors::se3::{exp, GeneratorBasis, Pose, Twist};
use eigen_factors::synth::{generate, WorldSpec};
use nalgebra::{Matrix6, Vector6};

fn world(seed: u64) -> eigen_factors::synth::Dataset {
    generate(&WorldSpec { n_poses: 6, n_planes: 6, seed, ..Default::default() }).unwrap()
}

#[test]
fn assembled_blocks_match_per_factor_sums() {
    let ds = world(3);
    let mut problem = ds.problem(OptimizerConfig::default()).unwrap();
    problem.estimate_planes().unwrap();
    let gh = problem.assemble();
    let basis = GeneratorBasis::standard();

    let mut grad = vec![Vector6::zeros(); ds.n_poses()];
    let mut blocks = vec![Matrix6::zeros(); ds.n_poses()];
    for f in problem.factors() {
        for (t, g) in f.gradient(Mode::Centered, &basis).unwrap() {
            grad[t] += g;
        }
        for (t, b) in f.hessian_blocks(Mode::Centered, &basis).unwrap() {
            blocks[t] += b;
        }
    }
    assert_eq!(gh.grad[0], Vector6::zeros());
    assert_eq!(gh.blocks[0], Matrix6::identity());
    for t in 1..ds.n_poses() {
        assert!((gh.grad[t] - grad[t]).norm() <= 1e-12 * grad[t].norm().max(1.0));
        assert!((gh.blocks[t] - blocks[t]).norm() <= 1e-12 * blocks[t].norm().max(1.0));
    }
}

#[test]
fn accepted_costs_never_increase() {
    for seed in 0..5 {
        let report = world(seed).problem(OptimizerConfig::default()).unwrap().optimize();
        let costs = report.accepted_costs();
        assert!(costs.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: {costs:?}");
        assert!(report.final_cost <= report.initial_cost);
    }
}

#[test]
fn anchor_pose_is_never_moved() {
    let ds = world(1);
    for anchor in [0, 4] {
        let mut problem = ds.problem(OptimizerConfig::default()).unwrap().with_anchor(anchor).unwrap();
        let before = ds.initial_trajectory[anchor];
        let report = problem.optimize();
        assert_eq!(report.trajectory[anchor].matrix(), before.matrix());
    }
}

#[test]
fn global_rigid_motion_does_not_change_the_result() {
    let ds = world(2);
    let g = exp(&Twist::new(Vector6::new(0.3, -0.2, 0.5, 1.0, -2.0, 0.5)).unwrap());
    let moved: Vec<Pose> = ds.initial_trajectory.iter().map(|p| g * *p).collect();
    let config = OptimizerConfig { max_iters: 300, cost_tolerance: 1e-12, ..Default::default() };

    let a = ds.problem_from(ds.initial_trajectory.clone(), config.clone()).unwrap();
    let b = ds.problem_from(moved, config).unwrap();
    let (ca, cb) = (a.cost().unwrap(), b.cost().unwrap());
    assert!((ca - cb).abs() <= 1e-9 * ca);

    let (ra, rb) = (a.clone().optimize(), b.clone().optimize());
    assert!((ra.final_cost - rb.final_cost).abs() <= 1e-6 * ra.final_cost, "{} vs {}", ra.final_cost, rb.final_cost);
}

#[test]
fn single_pose_problem_is_already_optimal() {
    let ds = generate(&WorldSpec { n_poses: 1, n_planes: 4, seed: 5, ..Default::default() }).unwrap();
    let report = ds.problem(OptimizerConfig::default()).unwrap().optimize();
    assert_eq!(report.status, Status::Converged);
    assert_eq!(report.trajectory[0].matrix(), ds.initial_trajectory[0].matrix());
    assert_eq!(report.initial_cost, report.final_cost);
}

#[test]
fn plain_and_centered_modes_agree() {
    let ds = world(4);
    let run = |mode| ds.problem(OptimizerConfig { mode, ..Default::default() }).unwrap().optimize();
    let (c, p) = (run(Mode::Centered), run(Mode::Plain));
    assert_eq!(c.iterations, p.iterations);
    assert!((c.final_cost - p.final_cost).abs() <= 1e-8 * c.final_cost);
}
