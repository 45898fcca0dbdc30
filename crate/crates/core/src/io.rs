//! File formats: the dataset document, trajectory text files and CSV outputs.
//!
//! Dataset files are JSON. Numbers are written in shortest round-trip form
//! and parsed with correct rounding, so a save/load cycle is bitwise exact.
//!
//! Trajectory files hold one pose per line, `idx tx ty tz qx qy qz qw`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::backend::TraceRecord;
use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::se3::Pose;
use crate::synth::{Dataset, LabeledPoint, WorldSpec};

pub const DATASET_FORMAT: &str = "eigen-factors-dataset";
pub const DATASET_VERSION: u32 = 1;
const QUATERNION_TOLERANCE: f64 = 1e-9;

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format: String,
    version: u32,
    spec: WorldSpec,
    /// Row-major 4×4 matrices.
    gt_trajectory: Vec<[[f64; 4]; 4]>,
    initial_trajectory: Vec<[[f64; 4]; 4]>,
    /// `[nx, ny, nz, d]`.
    planes_gt: Vec<[f64; 4]>,
    /// `(pose, plane, x, y, z)` in the pose's local frame.
    points: Vec<(usize, usize, f64, f64, f64)>,
}

fn pose_rows(p: &Pose) -> [[f64; 4]; 4] {
    let m = p.matrix();
    std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
}

fn pose_from_rows(rows: &[[f64; 4]; 4]) -> Result<Pose> {
    Pose::from_matrix(Matrix4::from_fn(|r, c| rows[r][c]))
}

fn parse_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), message: message.into() }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

pub fn dataset_to_string(ds: &Dataset) -> String {
    let file = DatasetFile {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        spec: ds.spec.clone(),
        gt_trajectory: ds.gt_trajectory.iter().map(pose_rows).collect(),
        initial_trajectory: ds.initial_trajectory.iter().map(pose_rows).collect(),
        planes_gt: ds.planes_gt.iter().map(|p| p.as_vector().into()).collect(),
        points: ds
            .clouds
            .iter()
            .enumerate()
            .flat_map(|(t, cloud)| cloud.iter().map(move |p| (t, p.plane, p.point.x, p.point.y, p.point.z)))
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("dataset serialises");
    text.push('\n');
    text
}

/// Parses a dataset document; `path` only labels errors.
pub fn dataset_from_str(text: &str, path: &Path) -> Result<Dataset> {
    let file: DatasetFile = serde_json::from_str(text).map_err(|e| parse_error(path, e.to_string()))?;
    if file.format != DATASET_FORMAT || file.version != DATASET_VERSION {
        return Err(parse_error(path, format!("unsupported format {} v{}", file.format, file.version)));
    }
    let wrap = |e: Error| parse_error(path, e.to_string());
    let poses = |rows: &[[[f64; 4]; 4]]| rows.iter().map(pose_from_rows).collect::<Result<Vec<_>>>().map_err(wrap);
    let gt_trajectory = poses(&file.gt_trajectory)?;
    let initial_trajectory = poses(&file.initial_trajectory)?;
    if gt_trajectory.len() != initial_trajectory.len() || gt_trajectory.is_empty() {
        return Err(parse_error(path, "trajectories are empty or differ in length"));
    }
    let planes_gt = file
        .planes_gt
        .iter()
        .map(|v| Plane::new(Vector3::new(v[0], v[1], v[2]), v[3]))
        .collect::<Result<Vec<_>>>()
        .map_err(wrap)?;
    let mut clouds = vec![Vec::new(); gt_trajectory.len()];
    for (k, &(t, plane, x, y, z)) in file.points.iter().enumerate() {
        if t >= clouds.len() || plane >= planes_gt.len() {
            return Err(parse_error(path, format!("point {k} references pose {t} / plane {plane}")));
        }
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(parse_error(path, format!("point {k} is not finite")));
        }
        clouds[t].push(LabeledPoint { point: Vector3::new(x, y, z), plane });
    }
    Ok(Dataset { spec: file.spec, gt_trajectory, planes_gt, clouds, initial_trajectory })
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    fs::write(path, dataset_to_string(ds)).map_err(io_error(path))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    dataset_from_str(&text, path)
}

pub fn trajectory_to_string(traj: &[Pose]) -> String {
    let mut out = String::new();
    for (i, pose) in traj.iter().enumerate() {
        let t = pose.translation();
        let rot = Rotation3::from_matrix_unchecked(pose.rotation());
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        writeln!(out, "{i} {} {} {} {} {} {} {}", t.x, t.y, t.z, q.i, q.j, q.k, q.w).unwrap();
    }
    out
}

/// Parses a trajectory file; `path` only labels errors.
pub fn trajectory_from_str(text: &str, path: &Path) -> Result<Vec<Pose>> {
    let mut traj = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = |msg: String| parse_error(path, format!("line {}: {msg}", lineno + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(at(format!("expected 8 fields, found {}", fields.len())));
        }
        let idx: usize = fields[0].parse().map_err(|_| at(format!("bad index {:?}", fields[0])))?;
        if idx != traj.len() {
            return Err(at(format!("expected index {}, found {idx}", traj.len())));
        }
        let v = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| at("non-numeric or non-finite value".into()))?;
        let q = Quaternion::new(v[6], v[3], v[4], v[5]);
        if (q.norm() - 1.0).abs() > QUATERNION_TOLERANCE {
            return Err(at(format!("quaternion norm {} is not 1", q.norm())));
        }
        let rot = UnitQuaternion::new_normalize(q).to_rotation_matrix();
        let pose = Pose::from_parts(*rot.matrix(), Vector3::new(v[0], v[1], v[2])).map_err(|e| at(e.to_string()))?;
        traj.push(pose);
    }
    Ok(traj)
}

pub fn write_trajectory(path: &Path, traj: &[Pose]) -> Result<()> {
    fs::write(path, trajectory_to_string(traj)).map_err(io_error(path))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<Pose>> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    trajectory_from_str(&text, path)
}

pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::from("iter,cost,damping,step_norm,accepted\n");
    for r in trace {
        writeln!(out, "{},{},{},{},{}", r.iteration, r.cost, r.damping, r.step_norm, u8::from(r.accepted)).unwrap();
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_error(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate;

    #[test]
    fn dataset_round_trip_is_bitwise() {
        let ds = generate(&WorldSpec { n_poses: 4, n_planes: 3, points_per_plane: 20, seed: 9, ..Default::default() })
            .unwrap();
        let text = dataset_to_string(&ds);
        let back = dataset_from_str(&text, Path::new("mem")).unwrap();
        assert_eq!(back, ds);
        for (a, b) in back.clouds.iter().flatten().zip(ds.clouds.iter().flatten()) {
            for k in 0..3 {
                assert_eq!(a.point[k].to_bits(), b.point[k].to_bits());
            }
        }
        assert_eq!(dataset_to_string(&back), text);
    }

    #[test]
    fn dataset_rejects_bad_documents() {
        assert!(matches!(dataset_from_str("{", Path::new("x")), Err(Error::Parse { .. })));
        let ds = generate(&WorldSpec { n_poses: 2, n_planes: 1, points_per_plane: 3, ..Default::default() }).unwrap();
        let text = dataset_to_string(&ds).replace(DATASET_FORMAT, "other");
        assert!(dataset_from_str(&text, Path::new("x")).is_err());
    }

    #[test]
    fn trajectory_round_trip() {
        let ds = generate(&WorldSpec::default()).unwrap();
        let text = trajectory_to_string(&ds.initial_trajectory);
        assert_eq!(text.lines().count(), ds.initial_trajectory.len());
        let back = trajectory_from_str(&text, Path::new("t")).unwrap();
        for (a, b) in back.iter().zip(&ds.initial_trajectory) {
            assert!((a.matrix() - b.matrix()).amax() <= 1e-12);
        }
        for line in text.lines() {
            let v: Vec<f64> = line.split(' ').skip(4).map(|f| f.parse().unwrap()).collect();
            assert!((v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn trajectory_parse_errors() {
        let p = Path::new("t");
        assert!(trajectory_from_str("0 0 0 0 0 0 0", p).is_err());
        assert!(trajectory_from_str("0 0 0 0 0 0 0 2", p).is_err());
        assert!(trajectory_from_str("1 0 0 0 0 0 0 1", p).is_err());
        assert!(trajectory_from_str("0 0 0 x 0 0 0 1", p).is_err());
        assert_eq!(trajectory_from_str("0 1 2 3 0 0 0 1\n", p).unwrap()[0].translation(), Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_dataset(Path::new("/nonexistent/ds.json")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/ds.json"));
    }

    #[test]
    fn trace_csv_layout() {
        let trace = [TraceRecord { iteration: 0, cost: 1.5, damping: 1e-3, step_norm: 0.0, accepted: true }];
        assert_eq!(trace_csv(&trace), "iter,cost,damping,step_norm,accepted\n0,1.5,0.001,0,1\n");
    }
}
