//! Planes, summation matrices and closed-form plane estimation.
//!
//! A pose's observations of one plane are folded into a 4×4 summation
//! matrix `S = Σ p̃ p̃ᵀ` once. Moving the pose only conjugates `S`, so the
//! point-to-plane error of every point can be re-evaluated in constant time
//! from `Q = Σₜ Tₜ Sₜ Tₜᵀ`.
//!
//! The plane returned by [`plane_from_q`] is the exact minimiser of `πᵀQπ`
//! subject to a unit normal. It is computed from the eigendecomposition of
//! `Q` conjugated by the centering translation, where the distance component
//! of the minimum eigenvector vanishes, so the cost it reports is the true
//! sum of squared point-to-plane distances in any reference frame.

use std::ops::Add;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use crate::eigen::eigen_sym3;
use crate::error::{invalid, Error, Result};
use crate::se3::Pose;

const UNIT_NORMAL_TOLERANCE: f64 = 1e-12;
const DEGENERATE_NORMAL: f64 = 1e-8;
const EIGEN_GAP_TOLERANCE: f64 = 1e-12;
const SIGN_TIE: f64 = 1e-12;

/// A 3D point in homogeneous coordinates, `(x, y, z, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomogeneousPoint(Vector4<f64>);

impl HomogeneousPoint {
    pub fn new(p: Vector4<f64>) -> Result<Self> {
        if p.w != 1.0 {
            return Err(invalid(format!("homogeneous point must end in 1, got {}", p.w)));
        }
        Self::from_point(&p.xyz())
    }

    pub fn from_point(p: &Vector3<f64>) -> Result<Self> {
        if p.iter().all(|v| v.is_finite()) {
            Ok(Self(p.push(1.0)))
        } else {
            Err(invalid("non-finite point"))
        }
    }

    pub fn as_vector(&self) -> &Vector4<f64> {
        &self.0
    }
}

/// Plane `ηᵀp + d = 0` with unit normal `η`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    eta: Vector3<f64>,
    d: f64,
}

impl Plane {
    pub fn new(eta: Vector3<f64>, d: f64) -> Result<Self> {
        if !(eta.iter().all(|v| v.is_finite()) && d.is_finite()) {
            return Err(invalid("non-finite plane"));
        }
        let norm = eta.norm();
        if (norm - 1.0).abs() > UNIT_NORMAL_TOLERANCE {
            return Err(invalid(format!("plane normal has norm {norm}")));
        }
        Ok(Self { eta, d })
    }

    /// Scales `[η; d]` so that the normal has unit length.
    pub fn from_vector(v: &Vector4<f64>) -> Result<Self> {
        let n = v.xyz().norm();
        if n.is_nan() || n < DEGENERATE_NORMAL {
            return Err(Error::DegeneratePlane(format!("normal part has norm {n:e}")));
        }
        Self::new(v.xyz() / n, v.w / n)
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.eta
    }

    pub fn distance(&self) -> f64 {
        self.d
    }

    /// `[η; d]`.
    pub fn as_vector(&self) -> Vector4<f64> {
        self.eta.push(self.d)
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.eta.dot(p) + self.d
    }

    /// Expresses the plane in the frame that `pose` maps points into:
    /// `π' = T⁻ᵀ π`.
    pub fn transformed(&self, pose: &Pose) -> Plane {
        let v = pose.inverse().matrix().transpose() * self.as_vector();
        Plane { eta: v.xyz(), d: v.w }
    }

    /// Deterministic sign: `d ≥ 0`; for planes through the origin the first
    /// non-negligible normal component is made positive.
    pub fn canonical(self) -> Plane {
        let flip = if self.d.abs() >= SIGN_TIE {
            self.d < 0.0
        } else {
            self.eta
                .iter()
                .find(|c| c.abs() >= SIGN_TIE)
                .is_some_and(|c| *c < 0.0)
        };
        if flip {
            Plane { eta: -self.eta, d: -self.d }
        } else {
            self
        }
    }
}

/// `S = Σ p̃ p̃ᵀ` over the points one pose observed on one plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SummationMatrix {
    s: Matrix4<f64>,
    count: usize,
}

impl SummationMatrix {
    pub fn zero() -> Self {
        Self { s: Matrix4::zeros(), count: 0 }
    }

    pub fn accumulate<'a>(points: impl IntoIterator<Item = &'a HomogeneousPoint>) -> Self {
        points.into_iter().fold(Self::zero(), |acc, p| acc.with_point(p))
    }

    /// Accumulates raw 3D points, rejecting non-finite ones.
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Result<Self> {
        points.into_iter().try_fold(Self::zero(), |acc, p| {
            Ok(acc.with_point(&HomogeneousPoint::from_point(p)?))
        })
    }

    pub fn with_point(mut self, p: &HomogeneousPoint) -> Self {
        let v = p.as_vector();
        for c in 0..4 {
            for r in 0..4 {
                self.s[(r, c)] += v[r] * v[c];
            }
        }
        self.count += 1;
        self
    }

    /// `T S Tᵀ`, kept exactly symmetric.
    pub fn transformed(&self, pose: &Pose) -> Self {
        Self { s: conjugate(pose.matrix(), &self.s), count: self.count }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.s
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

impl Add for SummationMatrix {
    type Output = SummationMatrix;

    fn add(self, rhs: Self) -> Self {
        Self { s: self.s + rhs.s, count: self.count + rhs.count }
    }
}

/// `A M Aᵀ` symmetrised.
pub(crate) fn conjugate(a: &Matrix4<f64>, m: &Matrix4<f64>) -> Matrix4<f64> {
    let r = a * m * a.transpose();
    (r + r.transpose()) * 0.5
}

/// `Q = Σₜ Tₜ Sₜ Tₜᵀ` in the global frame, with block structure
/// `[Q_p q; qᵀ N]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QMatrix(Matrix4<f64>);

impl QMatrix {
    pub fn from_matrix(m: Matrix4<f64>) -> Self {
        Self(m)
    }

    /// Sums the transformed blocks of a dense trajectory.
    pub fn assemble(trajectory: &[Pose], blocks: &[SummationMatrix]) -> Result<Self> {
        if trajectory.len() != blocks.len() {
            return Err(invalid(format!(
                "{} poses but {} summation blocks",
                trajectory.len(),
                blocks.len()
            )));
        }
        Ok(Self(
            trajectory
                .iter()
                .zip(blocks)
                .fold(Matrix4::zeros(), |acc, (t, s)| acc + s.transformed(t).s),
        ))
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    /// Upper-left 3×3 block `Q_p`.
    pub fn point_block(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// Sum of all points in the global frame, `q = N μ`.
    pub fn point_sum(&self) -> Vector3<f64> {
        self.0.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn count(&self) -> f64 {
        self.0[(3, 3)]
    }

    pub fn mean(&self) -> Vector3<f64> {
        self.point_sum() / self.count()
    }

    /// `N Σ_p = Q_p − q qᵀ / N`.
    pub fn scatter(&self) -> Matrix3<f64> {
        let q = self.point_sum();
        let s = self.point_block() - q * q.transpose() / self.count();
        (s + s.transpose()) * 0.5
    }
}

impl Add for QMatrix {
    type Output = QMatrix;

    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

/// Free-function form of [`SummationMatrix::accumulate`].
pub fn s_accumulate(points: &[HomogeneousPoint]) -> SummationMatrix {
    SummationMatrix::accumulate(points)
}

pub fn s_transform(s: &SummationMatrix, pose: &Pose) -> SummationMatrix {
    s.transformed(pose)
}

pub fn q_assemble(trajectory: &[Pose], blocks: &[SummationMatrix]) -> Result<QMatrix> {
    QMatrix::assemble(trajectory, blocks)
}

/// The centering translation and the conjugated matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Centered {
    /// `[I −μ; 0 1]`.
    pub tc: Pose,
    /// `Tc Q Tcᵀ = [N Σ_p 0; 0 N]`.
    pub qc: QMatrix,
}

pub fn center_transform(q: &QMatrix) -> Result<Centered> {
    let n = q.count();
    if n.is_nan() || n < 1.0 {
        return Err(invalid(format!("centering needs at least one point, N = {n}")));
    }
    let tc = Pose::from_translation(-q.mean());
    let mut qc = Matrix4::zeros();
    qc.fixed_view_mut::<3, 3>(0, 0).copy_from(&q.scatter());
    qc[(3, 3)] = n;
    Ok(Centered { tc, qc: QMatrix(qc) })
}

/// Closed-form plane and its cost `λ_π = Σ (ηᵀp + d)²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneEstimate {
    pub plane: Plane,
    pub lambda: f64,
    /// The smallest eigenvalue is not simple; the cost is still valid but the
    /// plane is not unique.
    pub ill_conditioned: bool,
}

/// Plane minimising `πᵀQπ` subject to a unit normal, found from the
/// scatter of `Q` about its mean.
pub fn plane_from_q(q: &QMatrix) -> Result<PlaneEstimate> {
    if q.count() < 1.0 {
        return Err(Error::DegeneratePlane("no points observed".into()));
    }
    let centered = center_transform(q)?;

    // The centered matrix is block diagonal, `[Σ_p 0; 0 N]`. Its eigenvectors
    // are the in-plane directions `(η, 0)` of the scatter block and the
    // homogeneous axis, which describes no finite plane, so the 3×3 block is
    // all that needs decomposing.
    let scatter = centered.qc.matrix().fixed_view::<3, 3>(0, 0).into_owned();
    let eig = eigen_sym3(&scatter)?;
    let eta = eig.vector(0);
    let k = 1.0 / eta.norm();
    let lambda = (k * k * eig.values[0]).max(0.0);
    let centered_plane = (eta * k).push(0.0);
    let global = centered.tc.matrix().transpose() * centered_plane;
    let plane = Plane::from_vector(&global)?.canonical();

    let gap_floor = EIGEN_GAP_TOLERANCE * centered.qc.matrix().trace().abs().max(f64::MIN_POSITIVE);
    let ill_conditioned = eig.values[1] - eig.values[0] <= gap_floor;
    Ok(PlaneEstimate { plane, lambda, ill_conditioned })
}

/// Least-squares plane through explicit points by the centered scatter.
/// Returns the plane and the point-by-point sum of squared distances.
pub fn plane_estimate_centered(points: &[Vector3<f64>]) -> Result<(Plane, f64)> {
    if points.len() < 3 {
        return Err(Error::DegeneratePlane(format!("{} points cannot span a plane", points.len())));
    }
    let mean = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let scatter = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let c = p - mean;
        acc + c * c.transpose()
    });
    let eig = eigen_sym3(&scatter)?;
    if eig.values[1] <= EIGEN_GAP_TOLERANCE * scatter.trace() {
        return Err(Error::DegeneratePlane("points are collinear".into()));
    }
    let eta = eig.vector(0);
    let plane = Plane::new(eta / eta.norm(), -eta.dot(&mean) / eta.norm())?.canonical();
    let sse = points.iter().map(|p| plane.signed_distance(p).powi(2)).sum();
    Ok((plane, sse))
}
