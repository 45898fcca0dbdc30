//! Seeded synthetic plane worlds.
//!
//! Every plane is a square patch seen from every pose. Each random quantity
//! draws from its own ChaCha8 stream so that, for example, changing the
//! number of points does not move the planes or the trajectory.

use nalgebra::{Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::backend::{EigenFactor, OptimizerConfig, Problem};
use crate::error::{invalid, Result};
use crate::plane::{HomogeneousPoint, Plane, SummationMatrix};
use crate::se3::{exp, Pose, Twist};

const STEP_ROT_STD_DEG: f64 = 2.0;
const STEP_TRANS_STD: f64 = 0.2;

const STREAM_TRAJECTORY: u64 = 0;
const STREAM_PLANES: u64 = 1;
const STREAM_PERTURB: u64 = 2;
const STREAM_POINTS: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub n_poses: usize,
    pub n_planes: usize,
    pub points_per_plane: usize,
    /// Standard deviation of the offset along the plane normal, in meters.
    pub point_noise_sigma: f64,
    pub perturb_trans: f64,
    /// Degrees.
    pub perturb_rot: f64,
    pub seed: u64,
    pub scene_radius: f64,
    pub patch_half_side: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            n_poses: 10,
            n_planes: 10,
            points_per_plane: 50,
            point_noise_sigma: 0.04,
            perturb_trans: 0.05,
            perturb_rot: 5.0,
            seed: 0,
            scene_radius: 5.0,
            patch_half_side: 1.0,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_poses == 0 || self.n_planes == 0 || self.points_per_plane == 0 {
            return Err(invalid("pose, plane and point counts must be at least 1"));
        }
        let non_negative = [
            ("point_noise_sigma", self.point_noise_sigma),
            ("perturb_trans", self.perturb_trans),
            ("perturb_rot", self.perturb_rot),
            ("scene_radius", self.scene_radius),
            ("patch_half_side", self.patch_half_side),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabeledPoint {
    /// Coordinates in the observing pose's local frame.
    pub point: Vector3<f64>,
    pub plane: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: WorldSpec,
    pub gt_trajectory: Vec<Pose>,
    pub planes_gt: Vec<Plane>,
    /// One labeled cloud per pose.
    pub clouds: Vec<Vec<LabeledPoint>>,
    pub initial_trajectory: Vec<Pose>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn unit_vector(rng: &mut impl Rng) -> Vector3<f64> {
    let v: [f64; 3] = UnitSphere.sample(rng);
    Vector3::from(v).normalize()
}

/// Two unit vectors completing `n` to a right-handed orthonormal frame.
fn plane_axes(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = n.cross(&helper).normalize();
    (u, n.cross(&u))
}

pub fn generate(spec: &WorldSpec) -> Result<Dataset> {
    spec.validate()?;

    let mut rng = stream(spec.seed, STREAM_TRAJECTORY);
    let rot_std = STEP_ROT_STD_DEG.to_radians();
    let mut gt_trajectory = vec![Pose::identity()];
    for _ in 1..spec.n_poses {
        let xi = Vector6::from_fn(|i, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * if i < 3 { rot_std } else { STEP_TRANS_STD }
        });
        let last = gt_trajectory[gt_trajectory.len() - 1];
        gt_trajectory.push(last * exp(&Twist::new(xi)?));
    }

    let mut rng = stream(spec.seed, STREAM_PLANES);
    let planes_gt = (0..spec.n_planes)
        .map(|_| {
            let eta = unit_vector(&mut rng);
            let d = if spec.scene_radius > 0.0 {
                rng.random_range(-spec.scene_radius..=spec.scene_radius)
            } else {
                0.0
            };
            Plane::new(eta, d)
        })
        .collect::<Result<Vec<_>>>()?;

    let noise = Normal::new(0.0, spec.point_noise_sigma).map_err(|e| invalid(e.to_string()))?;
    let half = spec.patch_half_side;
    let inverses: Vec<Pose> = gt_trajectory.iter().map(Pose::inverse).collect();
    let mut clouds = vec![Vec::with_capacity(spec.n_planes * spec.points_per_plane); spec.n_poses];
    for (m, plane) in planes_gt.iter().enumerate() {
        let eta = plane.normal();
        let (u, v) = plane_axes(&eta);
        let center = -eta * plane.distance();
        for (t, cloud) in clouds.iter_mut().enumerate() {
            let mut rng = stream(spec.seed, STREAM_POINTS + (m * spec.n_poses + t) as u64);
            for _ in 0..spec.points_per_plane {
                let (a, b) = if half > 0.0 {
                    (rng.random_range(-half..=half), rng.random_range(-half..=half))
                } else {
                    (0.0, 0.0)
                };
                let global = center + u * a + v * b + eta * noise.sample(&mut rng);
                cloud.push(LabeledPoint { point: inverses[t].transform_point(&global), plane: m });
            }
        }
    }

    let initial_trajectory =
        perturb(&gt_trajectory, spec.perturb_trans, spec.perturb_rot, spec.seed)?;
    Ok(Dataset { spec: spec.clone(), gt_trajectory, planes_gt, clouds, initial_trajectory })
}

/// Left-multiplies every pose but the first by `exp(ξ)`, where the rotation
/// part of `ξ` has a random axis and angle exactly `rot_deg`, and the
/// translation part a random direction and norm exactly `trans`.
pub fn perturb(trajectory: &[Pose], trans: f64, rot_deg: f64, seed: u64) -> Result<Vec<Pose>> {
    perturb_with_twists(trajectory, trans, rot_deg, seed).map(|(traj, _)| traj)
}

/// [`perturb`], also returning the twist applied to each pose.
pub fn perturb_with_twists(
    trajectory: &[Pose],
    trans: f64,
    rot_deg: f64,
    seed: u64,
) -> Result<(Vec<Pose>, Vec<Twist>)> {
    if !(trans >= 0.0 && rot_deg >= 0.0 && trans.is_finite() && rot_deg.is_finite()) {
        return Err(invalid("perturbation magnitudes must be non-negative"));
    }
    let mut rng = stream(seed, STREAM_PERTURB);
    let mut twists = Vec::with_capacity(trajectory.len());
    let poses = trajectory
        .iter()
        .enumerate()
        .map(|(t, pose)| {
            let axis = unit_vector(&mut rng);
            let dir = unit_vector(&mut rng);
            let xi = if t == 0 {
                Twist::zero()
            } else {
                Twist::from_parts(axis * rot_deg.to_radians(), dir * trans)?
            };
            twists.push(xi);
            Ok(if t == 0 { *pose } else { exp(&xi) * *pose })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((poses, twists))
}

impl Dataset {
    pub fn n_poses(&self) -> usize {
        self.clouds.len()
    }

    pub fn n_planes(&self) -> usize {
        self.planes_gt.len()
    }

    /// One factor per plane, built from the summation matrix of each pose's points.
    pub fn factors(&self) -> Result<Vec<EigenFactor>> {
        let mut sums = vec![vec![SummationMatrix::zero(); self.n_poses()]; self.n_planes()];
        for (t, cloud) in self.clouds.iter().enumerate() {
            for p in cloud {
                let slot = sums
                    .get_mut(p.plane)
                    .ok_or_else(|| invalid(format!("point labeled with unknown plane {}", p.plane)))?;
                slot[t] = slot[t].with_point(&HomogeneousPoint::from_point(&p.point)?);
            }
        }
        sums.into_iter()
            .enumerate()
            .map(|(m, blocks)| EigenFactor::new(m, blocks.into_iter().enumerate()))
            .collect()
    }

    /// A problem starting from the perturbed trajectory.
    pub fn problem(&self, config: OptimizerConfig) -> Result<Problem> {
        self.problem_from(self.initial_trajectory.clone(), config)
    }

    pub fn problem_from(&self, trajectory: Vec<Pose>, config: OptimizerConfig) -> Result<Problem> {
        Problem::new(trajectory, self.factors()?, config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::log;

    #[test]
    fn zero_noise_points_lie_on_planes() {
        let ds = generate(&WorldSpec { point_noise_sigma: 0.0, seed: 3, ..Default::default() }).unwrap();
        for (t, cloud) in ds.clouds.iter().enumerate() {
            for p in cloud {
                let global = ds.gt_trajectory[t].transform_point(&p.point);
                assert!(ds.planes_gt[p.plane].signed_distance(&global).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = WorldSpec { seed: 7, ..Default::default() };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = generate(&WorldSpec { seed: 8, ..Default::default() }).unwrap();
        assert_ne!(generate(&spec).unwrap().planes_gt, other.planes_gt);
    }

    #[test]
    fn shapes_and_labels() {
        let spec = WorldSpec { n_poses: 4, n_planes: 3, points_per_plane: 7, ..Default::default() };
        let ds = generate(&spec).unwrap();
        assert_eq!(ds.gt_trajectory[0], Pose::identity());
        assert_eq!(ds.initial_trajectory[0], ds.gt_trajectory[0]);
        for cloud in &ds.clouds {
            assert_eq!(cloud.len(), 21);
            for m in 0..3 {
                assert_eq!(cloud.iter().filter(|p| p.plane == m).count(), 7);
            }
        }
        assert_eq!(ds.factors().unwrap().len(), 3);
    }

    #[test]
    fn noisy_points_within_four_sigma() {
        let spec = WorldSpec { seed: 11, ..Default::default() };
        let ds = generate(&spec).unwrap();
        for (t, cloud) in ds.clouds.iter().enumerate() {
            for p in cloud {
                let global = ds.gt_trajectory[t].transform_point(&p.point);
                let dist = ds.planes_gt[p.plane].signed_distance(&global).abs();
                assert!(dist <= 4.0 * spec.point_noise_sigma + 1e-9);
            }
        }
    }

    #[test]
    fn residual_variance_matches_sigma() {
        let spec = WorldSpec::default();
        let mut ratios = Vec::new();
        for seed in 0..4 {
            let ds = generate(&WorldSpec { seed, ..spec.clone() }).unwrap();
            for f in ds.factors().unwrap() {
                let lambda = f.evaluate(&ds.gt_trajectory).unwrap().lambda;
                ratios.push(lambda / (spec.n_poses * spec.points_per_plane) as f64);
            }
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let target = spec.point_noise_sigma.powi(2);
        assert!((mean / target - 1.0).abs() <= 0.25, "mean {mean} vs {target}");
    }

    #[test]
    fn zero_noise_optimum_is_zero() {
        let ds = generate(&WorldSpec { point_noise_sigma: 0.0, seed: 5, ..Default::default() }).unwrap();
        for f in ds.factors().unwrap() {
            assert!(f.evaluate(&ds.gt_trajectory).unwrap().lambda <= 1e-12);
        }
    }

    #[test]
    fn perturbation_magnitudes_are_exact() {
        let traj = generate(&WorldSpec::default()).unwrap().gt_trajectory;
        assert_eq!(perturb(&traj, 0.0, 0.0, 1).unwrap(), traj);

        let (perturbed, twists) = perturb_with_twists(&traj, 0.05, 5.0, 9).unwrap();
        assert_eq!(perturbed[0], traj[0]);
        for t in 1..traj.len() {
            assert!((twists[t].rotation().norm() - 5f64.to_radians()).abs() <= 1e-12);
            assert!((twists[t].translation().norm() - 0.05).abs() <= 1e-12);
            let applied = perturbed[t] * traj[t].inverse();
            assert!((applied.rotation_angle().to_degrees() - 5.0).abs() <= 1e-9);
            let back = log(&applied).unwrap();
            assert!((back.as_vector() - twists[t].as_vector()).norm() <= 1e-9);
        }
        assert!(perturb(&traj, -1.0, 0.0, 1).is_err());
    }

    #[test]
    fn rejects_invalid_spec() {
        assert!(generate(&WorldSpec { n_planes: 0, ..Default::default() }).is_err());
        assert!(generate(&WorldSpec { point_noise_sigma: -1.0, ..Default::default() }).is_err());
    }
}
