//! Rigid-body transforms and their tangent space.
//!
//! Twists are ordered rotation first, `[θ₁, θ₂, θ₃, ρ₁, ρ₂, ρ₃]`, with θ in
//! radians and ρ in meters. Perturbations are applied on the left:
//! `retract(T, ξ) = exp(ξ)·T`.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4, Vector6};

use crate::error::{invalid, Error, Result};

/// Below this rotation angle the closed forms switch to Taylor expansions.
const SMALL_ANGLE: f64 = 1e-6;

/// Rotations this close to pi have no unique logarithm.
const LOG_PI_MARGIN: f64 = 1e-6;

const POSE_TOLERANCE: f64 = 1e-9;

/// Tangent coordinates of SE(3), rotation first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist(Vector6<f64>);

impl Twist {
    pub fn new(xi: Vector6<f64>) -> Result<Self> {
        if xi.iter().all(|v| v.is_finite()) {
            Ok(Self(xi))
        } else {
            Err(invalid(format!("non-finite twist {:?}", xi.as_slice())))
        }
    }

    pub fn from_slice(xi: &[f64]) -> Result<Self> {
        if xi.len() != 6 {
            return Err(invalid(format!("twist needs 6 entries, got {}", xi.len())));
        }
        Self::new(Vector6::from_column_slice(xi))
    }

    pub fn from_parts(rotation: Vector3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let mut xi = Vector6::zeros();
        xi.fixed_rows_mut::<3>(0).copy_from(&rotation);
        xi.fixed_rows_mut::<3>(3).copy_from(&translation);
        Self::new(xi)
    }

    pub fn zero() -> Self {
        Self(Vector6::zeros())
    }

    /// Unit twist along coordinate `i` (0-based), scaled by `step`.
    pub fn axis(i: usize, step: f64) -> Self {
        let mut xi = Vector6::zeros();
        xi[i] = step;
        Self(xi)
    }

    pub fn rotation(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn as_vector(&self) -> &Vector6<f64> {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// A rigid-body transform mapping local points into the global frame.
#[derive(Clone, Copy, PartialEq)]
pub struct Pose(Matrix4<f64>);

impl Pose {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    /// Validates orthonormality, unit determinant and the homogeneous row.
    pub fn from_matrix(m: Matrix4<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(invalid("pose matrix has non-finite entries"));
        }
        if m[(3, 0)] != 0.0 || m[(3, 1)] != 0.0 || m[(3, 2)] != 0.0 || m[(3, 3)] != 1.0 {
            return Err(invalid("pose bottom row must be exactly [0, 0, 0, 1]"));
        }
        let r = m.fixed_view::<3, 3>(0, 0).into_owned();
        let ortho = (r.transpose() * r - Matrix3::identity()).norm();
        if ortho > POSE_TOLERANCE {
            return Err(invalid(format!("rotation block not orthonormal (error {ortho:e})")));
        }
        let det = r.determinant();
        if (det - 1.0).abs() > POSE_TOLERANCE {
            return Err(invalid(format!("rotation determinant {det} is not +1")));
        }
        Ok(Self(m))
    }

    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self::from_matrix(m)
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation().transpose();
        let t = -(rt * self.translation());
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        Self(m)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    pub fn transform_homogeneous(&self, p: &Vector4<f64>) -> Vector4<f64> {
        self.0 * p
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        let r = self.rotation();
        let s = vee3(&(r - r.transpose())).norm() * 0.5;
        let c = (r.trace() - 1.0) * 0.5;
        s.atan2(c)
    }
}

impl fmt::Debug for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pose{:?}", self.0.transpose().as_slice())
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        Pose(self.0 * rhs.0)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        Pose(self.0 * rhs.0)
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn vee3(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// The se(3) matrix of a twist: skew rotation block, translation in the last column.
pub fn hat(xi: &Twist) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&xi.rotation()));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&xi.translation());
    m
}

/// Matrix exponential of `hat(xi)` in closed form (Rodrigues plus the left Jacobian).
pub fn exp(xi: &Twist) -> Pose {
    let w = xi.rotation();
    let angle = w.norm();
    let k = skew(&w);
    let k2 = k * k;
    let (a, b, c) = if angle < SMALL_ANGLE {
        let a2 = angle * angle;
        (1.0 - a2 / 6.0, 0.5 - a2 / 24.0, 1.0 / 6.0 - a2 / 120.0)
    } else {
        let (s, co) = angle.sin_cos();
        let a2 = angle * angle;
        (s / angle, (1.0 - co) / a2, (angle - s) / (a2 * angle))
    };
    let r = Matrix3::identity() + k * a + k2 * b;
    let v = Matrix3::identity() + k * b + k2 * c;
    let t = v * xi.translation();
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    Pose(m)
}

/// Inverse of [`exp`] on rotations with angle below `pi - 1e-6`.
pub fn log(pose: &Pose) -> Result<Twist> {
    let r = pose.rotation();
    let axis2 = vee3(&(r - r.transpose()));
    let angle = pose.rotation_angle();
    if angle >= std::f64::consts::PI - LOG_PI_MARGIN {
        return Err(Error::LogDomain { angle });
    }
    let (w, v_inv_coeff) = if angle < SMALL_ANGLE {
        let a2 = angle * angle;
        (axis2 * (0.5 + a2 / 12.0), 1.0 / 12.0 + a2 / 720.0)
    } else {
        let (s, c) = angle.sin_cos();
        let w = axis2 * (angle / (2.0 * s));
        let coeff = (1.0 - angle * s / (2.0 * (1.0 - c))) / (angle * angle);
        (w, coeff)
    };
    let k = skew(&w);
    let v_inv = Matrix3::identity() - k * 0.5 + k * k * v_inv_coeff;
    Twist::from_parts(w, v_inv * pose.translation())
}

/// `exp(xi) · pose`.
pub fn retract(pose: &Pose, xi: &Twist) -> Pose {
    &exp(xi) * pose
}

/// The six se(3) generators `G₁…G₆`, with `hat(ξ) = Σ Gᵢ ξᵢ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorBasis([Matrix4<f64>; 6]);

impl GeneratorBasis {
    pub fn standard() -> Self {
        Self(std::array::from_fn(|i| hat(&Twist::axis(i, 1.0))))
    }

    /// Builds a basis from arbitrary matrices; used to inject faults into
    /// derivative checks.
    pub fn from_matrices(g: [Matrix4<f64>; 6]) -> Self {
        Self(g)
    }

    /// Generator for 0-based coordinate `i`.
    pub fn get(&self, i: usize) -> &Matrix4<f64> {
        &self.0[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Matrix4<f64>> {
        self.0.iter()
    }

    /// Conjugates every generator, `A·Gᵢ·A⁻¹`.
    pub fn conjugated(&self, a: &Matrix4<f64>, a_inv: &Matrix4<f64>) -> Self {
        Self(std::array::from_fn(|i| a * self.0[i] * a_inv))
    }
}

impl Default for GeneratorBasis {
    fn default() -> Self {
        Self::standard()
    }
}

fn check_index(i: usize) -> Result<usize> {
    if (1..=6).contains(&i) {
        Ok(i - 1)
    } else {
        Err(invalid(format!("generator index {i} outside 1..=6")))
    }
}

/// First derivative of `exp` at zero along coordinate `i` (1-based): `Gᵢ`.
pub fn dexp_at_zero(i: usize) -> Result<Matrix4<f64>> {
    let i = check_index(i)?;
    Ok(hat(&Twist::axis(i, 1.0)))
}

/// Second derivative of `exp` at zero along coordinates `i` and `j` (1-based):
/// `½(GᵢGⱼ + GⱼGᵢ)`.
pub fn d2exp_at_zero(i: usize, j: usize) -> Result<Matrix4<f64>> {
    let gi = dexp_at_zero(i)?;
    let gj = dexp_at_zero(j)?;
    Ok((gi * gj + gj * gi) * 0.5)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    /// Truncated power series of the matrix exponential.
    fn exp_series(m: &Matrix4<f64>, terms: usize) -> Matrix4<f64> {
        let mut sum = Matrix4::identity();
        let mut term = Matrix4::identity();
        for k in 1..terms {
            term = term * m / k as f64;
            sum += term;
        }
        sum
    }

    fn twist(v: [f64; 6]) -> Twist {
        Twist::from_slice(&v).unwrap()
    }

    #[test]
    fn hat_places_entries() {
        assert_eq!(hat(&Twist::zero()), Matrix4::zeros());

        let m = hat(&twist([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        let mut expected = Matrix4::zeros();
        expected[(1, 2)] = -1.0;
        expected[(2, 1)] = 1.0;
        assert_eq!(m, expected);

        let m = hat(&twist([0.0, 0.0, 0.0, 1.0, 2.0, 3.0]));
        assert_eq!(m.fixed_view::<3, 3>(0, 0).into_owned(), Matrix3::zeros());
        assert_eq!(m.fixed_view::<3, 1>(0, 3).into_owned(), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(m.row(3).into_owned(), nalgebra::RowVector4::zeros());
    }

    #[test]
    fn twist_rejects_non_finite() {
        assert!(Twist::from_slice(&[0.0, f64::NAN, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(Twist::from_slice(&[0.0, 0.0, 0.0, f64::INFINITY, 0.0, 0.0]).is_err());
        assert!(Twist::from_slice(&[0.0; 5]).is_err());
    }

    #[test]
    fn exp_examples() {
        assert_eq!(exp(&Twist::zero()), Pose::identity());

        let p = exp(&twist([0.0, 0.0, 0.0, 0.3, -1.5, 2.25]));
        assert_eq!(p.rotation(), Matrix3::identity());
        assert_eq!(p.translation(), Vector3::new(0.3, -1.5, 2.25));

        let p = exp(&twist([0.0, 0.0, FRAC_PI_2, 0.0, 0.0, 0.0]));
        let oracle = exp_series(&hat(&twist([0.0, 0.0, FRAC_PI_2, 0.0, 0.0, 0.0])), 30);
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(p.rotation(), expected, epsilon = 1e-15);
        assert_relative_eq!(*p.matrix(), oracle, epsilon = 1e-14);
        assert_relative_eq!(p.translation(), Vector3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn exp_matches_series_on_generic_twists() {
        for xi in [
            [0.1, -0.2, 0.3, 0.4, 0.5, -0.6],
            [1.2, 0.7, -2.0, -3.0, 1.0, 0.25],
            [2e-7, -1e-7, 3e-7, 1.0, 2.0, 3.0],
        ] {
            let xi = twist(xi);
            assert_relative_eq!(*exp(&xi).matrix(), exp_series(&hat(&xi), 40), epsilon = 1e-13);
        }
    }

    #[test]
    fn log_examples() {
        assert_eq!(log(&Pose::identity()).unwrap(), Twist::zero());
        let t = log(&Pose::from_translation(Vector3::new(1.0, 2.0, 3.0))).unwrap();
        assert_eq!(t, twist([0.0, 0.0, 0.0, 1.0, 2.0, 3.0]));

        let xi = twist([0.1, -0.2, 0.3, 0.4, 0.5, -0.6]);
        let back = log(&exp(&xi)).unwrap();
        assert_relative_eq!(*back.as_vector(), *xi.as_vector(), epsilon = 1e-9);
    }

    #[test]
    fn log_rejects_half_turn() {
        let p = exp(&twist([std::f64::consts::PI, 0.0, 0.0, 0.0, 0.0, 0.0]));
        assert!(matches!(log(&p), Err(Error::LogDomain { .. })));
    }

    #[test]
    fn generators_match_finite_differences() {
        let h = 1e-6;
        for i in 1..=6 {
            let g = dexp_at_zero(i).unwrap();
            let plus = exp(&Twist::axis(i - 1, h));
            let minus = exp(&Twist::axis(i - 1, -h));
            let fd = (plus.matrix() - minus.matrix()) / (2.0 * h);
            for (a, b) in g.iter().zip(fd.iter()) {
                assert!((a - b).abs() < 1e-9, "generator {i}: {a} vs {b}");
            }
        }
        assert!(dexp_at_zero(0).is_err());
        assert!(dexp_at_zero(7).is_err());
    }

    #[test]
    fn second_derivatives_match_finite_differences() {
        let h = 1e-4;
        let e = |i: usize, j: usize, si: f64, sj: f64| {
            let mut v = Vector6::zeros();
            v[i] += si * h;
            v[j] += sj * h;
            *exp(&Twist::new(v).unwrap()).matrix()
        };
        for i in 1..=6 {
            for j in 1..=6 {
                let d2 = d2exp_at_zero(i, j).unwrap();
                assert_eq!(d2, d2exp_at_zero(j, i).unwrap());
                let (a, b) = (i - 1, j - 1);
                let fd = (e(a, b, 1.0, 1.0) - e(a, b, 1.0, -1.0) - e(a, b, -1.0, 1.0)
                    + e(a, b, -1.0, -1.0))
                    / (4.0 * h * h);
                for (x, y) in d2.iter().zip(fd.iter()) {
                    assert!((x - y).abs() < 1e-6, "({i},{j}): {x} vs {y}");
                }
            }
            let g = dexp_at_zero(i).unwrap();
            assert_eq!(d2exp_at_zero(i, i).unwrap(), g * g);
        }
        assert!(d2exp_at_zero(1, 9).is_err());
    }

    #[test]
    fn retract_conditions() {
        let t = exp(&twist([0.3, 0.1, -0.4, 1.0, -2.0, 0.5]));
        assert_eq!(retract(&t, &Twist::zero()), t);
        let xi = twist([-0.2, 0.5, 0.1, 0.3, 0.3, -0.9]);
        assert_eq!(retract(&Pose::identity(), &xi), exp(&xi));
    }

    #[test]
    fn pose_validation() {
        let mut m = Matrix4::identity();
        m[(3, 0)] = 1e-30;
        assert!(Pose::from_matrix(m).is_err());
        let mut m = Matrix4::identity();
        m[(0, 0)] = -1.0;
        assert!(Pose::from_matrix(m).is_err(), "reflection accepted");
        let mut m = Matrix4::identity();
        m[(0, 1)] = 1e-6;
        assert!(Pose::from_matrix(m).is_err());
    }

    fn arb_twist(rot: f64, trans: f64) -> impl Strategy<Value = Twist> {
        (
            prop::array::uniform3(-rot..rot),
            prop::array::uniform3(-trans..trans),
        )
            .prop_map(|(r, t)| {
                Twist::from_parts(Vector3::from(r), Vector3::from(t)).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn exp_is_a_valid_pose(xi in arb_twist(std::f64::consts::PI, std::f64::consts::PI)) {
            prop_assert!(Pose::from_matrix(*exp(&xi).matrix()).is_ok());
        }
    }

    proptest! {
        #[test]
        fn exp_log_round_trip(xi in arb_twist(1.7, 5.0)) {
            prop_assume!(xi.rotation().norm() < std::f64::consts::PI - 1e-3);
            let p = exp(&xi);
            let back = exp(&log(&p).unwrap());
            prop_assert!((back.matrix() - p.matrix()).norm() < 1e-9);
        }

        #[test]
        fn retract_round_trip(a in arb_twist(1.0, 3.0), b in arb_twist(1.0, 3.0)) {
            let t = exp(&a);
            let moved = retract(&t, &b);
            let recovered = log(&(moved * t.inverse())).unwrap();
            prop_assert!((recovered.as_vector() - b.as_vector()).norm() < 1e-9);
        }

        #[test]
        fn hat_is_linear(a in arb_twist(3.0, 3.0), b in arb_twist(3.0, 3.0), s in -2.0f64..2.0) {
            let combo = Twist::new(a.as_vector() * s + b.as_vector()).unwrap();
            let lhs = hat(&combo);
            let rhs = hat(&a) * s + hat(&b);
            prop_assert_eq!(lhs, rhs);
            let basis = GeneratorBasis::standard();
            let sum = basis.iter().enumerate().fold(Matrix4::zeros(), |acc, (i, g)| acc + g * a.as_vector()[i]);
            prop_assert_eq!(sum, hat(&a));
        }
    }
}
