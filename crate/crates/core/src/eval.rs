//! Trajectory error and no-reference map quality.

use std::f64::consts::{E, PI};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::eigen_sym3;
use crate::error::{invalid, Error, Result};
use crate::kdtree::KdTree;
use crate::se3::Pose;
use crate::synth::Dataset;

pub const DEFAULT_RADIUS: f64 = 0.3;
/// Neighbourhoods smaller than this, the query point included, are skipped.
pub const MIN_NEIGHBORS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpeResult {
    pub rmse_trans: f64,
    /// Degrees.
    pub rmse_rot: f64,
    pub trans_errors: Vec<f64>,
    pub rot_errors: Vec<f64>,
}

/// Relative pose error over consecutive pairs.
pub fn rpe(reference: &[Pose], estimate: &[Pose]) -> Result<RpeResult> {
    if reference.len() != estimate.len() {
        return Err(invalid(format!(
            "trajectory lengths differ: {} vs {}",
            reference.len(),
            estimate.len()
        )));
    }
    if reference.len() < 2 {
        return Err(invalid("relative pose error needs at least two poses"));
    }
    let (trans_errors, rot_errors): (Vec<f64>, Vec<f64>) = reference
        .windows(2)
        .zip(estimate.windows(2))
        .map(|(r, e)| {
            let rel_ref = r[0].inverse() * r[1];
            let rel_est = e[0].inverse() * e[1];
            let err = rel_ref.inverse() * rel_est;
            (err.translation().norm(), err.rotation_angle().to_degrees())
        })
        .unzip();
    let rmse = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    Ok(RpeResult { rmse_trans: rmse(&trans_errors), rmse_rot: rmse(&rot_errors), trans_errors, rot_errors })
}

/// All local points mapped into the global frame by `trajectory`.
pub fn aggregate_map(dataset: &Dataset, trajectory: &[Pose]) -> Result<Vec<Vector3<f64>>> {
    if trajectory.len() != dataset.clouds.len() {
        return Err(invalid(format!(
            "trajectory has {} poses, dataset has {}",
            trajectory.len(),
            dataset.clouds.len()
        )));
    }
    Ok(dataset
        .clouds
        .iter()
        .zip(trajectory)
        .flat_map(|(cloud, pose)| cloud.iter().map(|p| pose.transform_point(&p.point)))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub valid_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapMetrics {
    /// Nats.
    pub mme: f64,
    /// Meters.
    pub mpv: f64,
    pub neighborhood_radius: f64,
    /// Fraction of points with at least [`MIN_NEIGHBORS`] neighbours.
    pub valid_point_fraction: f64,
}

/// Population covariance of the neighbourhood, or `None` if it is too small.
fn local_covariance(cloud: &[Vector3<f64>], neighbors: &[usize]) -> Option<Matrix3<f64>> {
    if neighbors.len() < MIN_NEIGHBORS {
        return None;
    }
    let n = neighbors.len() as f64;
    let mean = neighbors.iter().map(|&i| cloud[i]).sum::<Vector3<f64>>() / n;
    let cov = neighbors.iter().fold(Matrix3::zeros(), |acc, &i| {
        let d = cloud[i] - mean;
        acc + d * d.transpose()
    }) / n;
    Some(cov)
}

fn covariances(cloud: &[Vector3<f64>], radius: f64) -> Result<Vec<Option<Matrix3<f64>>>> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid(format!("radius must be positive, got {radius}")));
    }
    if cloud.is_empty() {
        return Err(Error::MetricUndefined("empty cloud".into()));
    }
    let tree = KdTree::new(cloud);
    Ok(cloud.par_iter().map(|p| local_covariance(cloud, &tree.within_radius(p, radius))).collect())
}

fn entropy(cov: &Matrix3<f64>) -> Option<f64> {
    let det = cov.determinant();
    (det > 0.0).then(|| 0.5 * ((2.0 * PI * E).powi(3) * det).ln())
}

fn plane_deviation(cov: &Matrix3<f64>) -> Option<f64> {
    eigen_sym3(cov).ok().map(|e| e.values[0].max(0.0).sqrt())
}

fn mean_valid(values: impl Iterator<Item = Option<f64>>, total: usize, name: &str) -> Result<MetricValue> {
    let (sum, count) = values.flatten().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        return Err(Error::MetricUndefined(format!("{name}: no point has a valid neighbourhood")));
    }
    Ok(MetricValue { value: sum / count as f64, valid_fraction: count as f64 / total as f64 })
}

/// Mean map entropy: the mean over points of `½ ln((2πe)³ det Σ)`.
pub fn mme(cloud: &[Vector3<f64>], radius: f64) -> Result<MetricValue> {
    let covs = covariances(cloud, radius)?;
    mean_valid(covs.iter().map(|c| c.as_ref().and_then(entropy)), cloud.len(), "MME")
}

/// Mean plane variance: the mean over points of the smallest local standard deviation.
pub fn mpv(cloud: &[Vector3<f64>], radius: f64) -> Result<MetricValue> {
    let covs = covariances(cloud, radius)?;
    mean_valid(covs.iter().map(|c| c.as_ref().and_then(plane_deviation)), cloud.len(), "MPV")
}

/// Both map metrics from a single neighbourhood search.
pub fn map_metrics(cloud: &[Vector3<f64>], radius: f64) -> Result<MapMetrics> {
    let covs = covariances(cloud, radius)?;
    let mme = mean_valid(covs.iter().map(|c| c.as_ref().and_then(entropy)), cloud.len(), "MME")?;
    let mpv = mean_valid(covs.iter().map(|c| c.as_ref().and_then(plane_deviation)), cloud.len(), "MPV")?;
    Ok(MapMetrics {
        mme: mme.value,
        mpv: mpv.value,
        neighborhood_radius: radius,
        valid_point_fraction: mpv.valid_fraction,
    })
}
