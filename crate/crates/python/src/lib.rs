//! Python bindings. Matrices cross the boundary as nested lists.

use eigen_factors::backend::{Mode, OptimizerConfig, Status};
use eigen_factors::checks::check_derivatives as run_checks;
use eigen_factors::eval;
use eigen_factors::io;
use eigen_factors::plane::plane_estimate_centered;
use eigen_factors::se3::{self, GeneratorBasis, Pose, Twist};
use eigen_factors::synth::{self, WorldSpec};
use nalgebra::{Matrix4, Vector3};
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Rows = [[f64; 4]; 4];

fn to_py(e: eigen_factors::Error) -> PyErr {
    use eigen_factors::Error;
    match e {
        Error::Io { .. } | Error::Parse { .. } => PyIOError::new_err(e.to_string()),
        Error::InvalidArgument(_) => PyValueError::new_err(e.to_string()),
        _ => PyArithmeticError::new_err(e.to_string()),
    }
}

fn rows(p: &Pose) -> Rows {
    let m = p.matrix();
    std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
}

fn pose(rows: &Rows) -> PyResult<Pose> {
    Pose::from_matrix(Matrix4::from_fn(|r, c| rows[r][c])).map_err(to_py)
}

fn poses(list: &[Rows]) -> PyResult<Vec<Pose>> {
    list.iter().map(pose).collect()
}

/// `exp` of a twist `[θx, θy, θz, ρx, ρy, ρz]` as a 4×4 matrix.
#[pyfunction]
fn exp(xi: [f64; 6]) -> PyResult<Rows> {
    Ok(rows(&se3::exp(&Twist::from_slice(&xi).map_err(to_py)?)))
}

#[pyfunction]
fn log(matrix: Rows) -> PyResult<[f64; 6]> {
    let xi = se3::log(&pose(&matrix)?).map_err(to_py)?;
    Ok((*xi.as_vector()).into())
}

/// Least-squares plane through points: `(normal, d, sum of squared distances)`.
#[pyfunction]
fn fit_plane(points: Vec<[f64; 3]>) -> PyResult<([f64; 3], f64, f64)> {
    let pts: Vec<Vector3<f64>> = points.iter().map(|p| Vector3::from(*p)).collect();
    let (plane, cost) = plane_estimate_centered(&pts).map_err(to_py)?;
    Ok((plane.normal().into(), plane.distance(), cost))
}

/// `(rmse_trans, rmse_rot_degrees)` over consecutive pose pairs.
#[pyfunction]
fn rpe(reference: Vec<Rows>, estimate: Vec<Rows>) -> PyResult<(f64, f64)> {
    let r = eval::rpe(&poses(&reference)?, &poses(&estimate)?).map_err(to_py)?;
    Ok((r.rmse_trans, r.rmse_rot))
}

/// `(mme, mpv, valid_point_fraction)` of a point cloud.
#[pyfunction]
#[pyo3(signature = (points, radius = eval::DEFAULT_RADIUS))]
fn map_metrics(points: Vec<[f64; 3]>, radius: f64) -> PyResult<(f64, f64, f64)> {
    let pts: Vec<Vector3<f64>> = points.iter().map(|p| Vector3::from(*p)).collect();
    let m = eval::map_metrics(&pts, radius).map_err(to_py)?;
    Ok((m.mme, m.mpv, m.valid_point_fraction))
}

/// Maximum relative errors of the four derivative checks, keyed by name.
#[pyfunction]
#[pyo3(signature = (seed = 0, trials = 10))]
fn check_derivatives<'py>(py: Python<'py>, seed: u64, trials: usize) -> PyResult<Bound<'py, PyDict>> {
    let r = run_checks(seed, trials, &GeneratorBasis::standard()).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("gradient", r.gradient)?;
    d.set_item("hessian", r.hessian)?;
    d.set_item("cross_pose", r.cross_pose)?;
    d.set_item("centered", r.centered)?;
    d.set_item("passed", r.passed())?;
    Ok(d)
}

/// A synthetic plane world with its ground-truth and perturbed trajectories.
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: synth::Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (
        n_poses = 10, n_planes = 10, points_per_plane = 50, sigma = 0.04,
        perturb_trans = 0.05, perturb_rot = 5.0, seed = 0,
    ))]
    fn generate(
        n_poses: usize,
        n_planes: usize,
        points_per_plane: usize,
        sigma: f64,
        perturb_trans: f64,
        perturb_rot: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let spec = WorldSpec {
            n_poses,
            n_planes,
            points_per_plane,
            point_noise_sigma: sigma,
            perturb_trans,
            perturb_rot,
            seed,
            ..Default::default()
        };
        Ok(Self { inner: synth::generate(&spec).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: io::dataset_from_str(text, std::path::Path::new("<string>")).map_err(to_py)? })
    }

    fn to_json(&self) -> String {
        io::dataset_to_string(&self.inner)
    }

    #[getter]
    fn n_poses(&self) -> usize {
        self.inner.n_poses()
    }

    #[getter]
    fn n_planes(&self) -> usize {
        self.inner.n_planes()
    }

    #[getter]
    fn gt_trajectory(&self) -> Vec<Rows> {
        self.inner.gt_trajectory.iter().map(rows).collect()
    }

    #[getter]
    fn initial_trajectory(&self) -> Vec<Rows> {
        self.inner.initial_trajectory.iter().map(rows).collect()
    }

    /// Sum of closed-form plane costs at `trajectory` (defaults to the initial one).
    #[pyo3(signature = (trajectory = None))]
    fn cost(&self, trajectory: Option<Vec<Rows>>) -> PyResult<f64> {
        let traj = match trajectory {
            Some(t) => poses(&t)?,
            None => self.inner.initial_trajectory.clone(),
        };
        let problem = self.inner.problem_from(traj, OptimizerConfig::default()).map_err(to_py)?;
        problem.cost().ok_or_else(|| PyArithmeticError::new_err("every plane is degenerate"))
    }

    /// Global point cloud of the dataset seen through `trajectory`.
    fn aggregate(&self, trajectory: Vec<Rows>) -> PyResult<Vec<[f64; 3]>> {
        let cloud = eval::aggregate_map(&self.inner, &poses(&trajectory)?).map_err(to_py)?;
        Ok(cloud.iter().map(|p| (*p).into()).collect())
    }

    /// Refines the initial trajectory. Returns a dict with `trajectory`,
    /// `status`, `iterations`, `initial_cost`, `final_cost` and `costs`
    /// (the accepted-step cost sequence).
    #[pyo3(signature = (mode = "centered", max_iters = 50, tol = 1e-2))]
    fn optimize<'py>(&self, py: Python<'py>, mode: &str, max_iters: usize, tol: f64) -> PyResult<Bound<'py, PyDict>> {
        let mode = match mode {
            "centered" => Mode::Centered,
            "plain" => Mode::Plain,
            other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
        };
        let config = OptimizerConfig { max_iters, cost_tolerance: tol, mode, ..Default::default() };
        let mut problem = self.inner.problem(config).map_err(to_py)?;
        let report = py.detach(|| problem.optimize());
        let status = match &report.status {
            Status::Converged => "converged".to_string(),
            Status::MaxIterations => "max_iterations".to_string(),
            Status::DampingOverflow => "damping_overflow".to_string(),
            Status::Failed(msg) => return Err(PyArithmeticError::new_err(msg.clone())),
        };
        let d = PyDict::new(py);
        d.set_item("trajectory", report.trajectory.iter().map(rows).collect::<Vec<_>>())?;
        d.set_item("status", status)?;
        d.set_item("iterations", report.iterations)?;
        d.set_item("initial_cost", report.initial_cost)?;
        d.set_item("final_cost", report.final_cost)?;
        d.set_item("costs", report.accepted_costs())?;
        Ok(d)
    }
}

#[pymodule]
fn eigen_factors_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(exp, m)?)?;
    m.add_function(wrap_pyfunction!(log, m)?)?;
    m.add_function(wrap_pyfunction!(fit_plane, m)?)?;
    m.add_function(wrap_pyfunction!(rpe, m)?)?;
    m.add_function(wrap_pyfunction!(map_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(check_derivatives, m)?)?;
    Ok(())
}
