use nalgebra::{Matrix4, Matrix6, Vector4, Vector6};

use crate::error::{invalid, Error, Result};
use crate::plane::{center_transform, conjugate, plane_from_q, Centered, PlaneEstimate, QMatrix, SummationMatrix};
use crate::se3::{GeneratorBasis, Pose};

/// Frame in which derivatives are contracted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Conjugate by the centering translation so the plane has `d = 0`.
    #[default]
    Centered,
    /// Use the global frame directly.
    Plain,
}

/// `∂Q̂/∂ξᵢ = Gᵢ Q + Q Gᵢᵀ`.
pub fn dq_dxi(q_t: &Matrix4<f64>, generator: &Matrix4<f64>) -> Matrix4<f64> {
    generator * q_t + q_t * generator.transpose()
}

/// Gradient of `πᵀ Exp(ξ) Q Exp(ξ)ᵀ π` at `ξ = 0`: `2 (Gᵢᵀπ)ᵀ(Qπ)`.
pub fn local_gradient(basis: &GeneratorBasis, q_t: &Matrix4<f64>, pi: &Vector4<f64>) -> Vector6<f64> {
    let w = q_t * pi;
    Vector6::from_fn(|i, _| 2.0 * (basis.get(i).transpose() * pi).dot(&w))
}

/// Hessian of `πᵀ Exp(ξ) Q Exp(ξ)ᵀ π` at `ξ = 0` with `π` held fixed.
///
/// Entry `(i, j)` is `πᵀ(Bᵢⱼ + Bᵢⱼᵀ)π` with
/// `Bᵢⱼ = ½(GᵢGⱼ + GⱼGᵢ) Q + Gᵢ Q Gⱼᵀ`, contracted here with vectors:
/// `aᵢᵀGⱼw + aⱼᵀGᵢw + 2 aᵢᵀQaⱼ` where `aᵢ = Gᵢᵀπ` and `w = Qπ`.
pub fn local_hessian(basis: &GeneratorBasis, q_t: &Matrix4<f64>, pi: &Vector4<f64>) -> Matrix6<f64> {
    let w = q_t * pi;
    let a: [Vector4<f64>; 6] = std::array::from_fn(|i| basis.get(i).transpose() * pi);
    let gw: [Vector4<f64>; 6] = std::array::from_fn(|i| basis.get(i) * w);
    let qa: [Vector4<f64>; 6] = std::array::from_fn(|i| q_t * a[i]);
    let mut h = Matrix6::zeros();
    for i in 0..6 {
        for j in i..6 {
            let v = a[i].dot(&gw[j]) + a[j].dot(&gw[i]) + 2.0 * a[i].dot(&qa[j]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

#[derive(Clone, Debug)]
struct Estimate {
    q: QMatrix,
    plane: PlaneEstimate,
    centering: Centered,
    /// `Tₜ Sₜ Tₜᵀ` for each observing pose, in block order.
    transformed: Vec<Matrix4<f64>>,
}

/// One plane landmark: the summation matrices of the poses that observed it
/// and, after [`EigenFactor::estimate`], its closed-form plane and cost.
#[derive(Clone, Debug)]
pub struct EigenFactor {
    id: usize,
    blocks: Vec<(usize, SummationMatrix)>,
    estimate: Option<Estimate>,
}

impl EigenFactor {
    /// Blocks are keyed by pose index; duplicates are rejected and empty
    /// blocks dropped.
    pub fn new(id: usize, blocks: impl IntoIterator<Item = (usize, SummationMatrix)>) -> Result<Self> {
        let mut blocks: Vec<_> = blocks.into_iter().filter(|(_, s)| s.count() > 0).collect();
        blocks.sort_by_key(|(t, _)| *t);
        if blocks.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(invalid(format!("factor {id} has two blocks for one pose")));
        }
        Ok(Self { id, blocks, estimate: None })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn blocks(&self) -> &[(usize, SummationMatrix)] {
        &self.blocks
    }

    pub fn observes(&self, pose: usize) -> bool {
        self.blocks.binary_search_by_key(&pose, |(t, _)| *t).is_ok()
    }

    pub fn max_pose_index(&self) -> Option<usize> {
        self.blocks.last().map(|(t, _)| *t)
    }

    pub fn point_count(&self) -> usize {
        self.blocks.iter().map(|(_, s)| s.count()).sum()
    }

    /// `Q = Σ Tₜ Sₜ Tₜᵀ` at the given trajectory.
    pub fn q_at(&self, trajectory: &[Pose]) -> QMatrix {
        QMatrix::from_matrix(
            self.blocks
                .iter()
                .fold(Matrix4::zeros(), |acc, (t, s)| acc + s.transformed(&trajectory[*t]).matrix()),
        )
    }

    /// Closed-form plane and cost at `trajectory`, without caching.
    pub fn evaluate(&self, trajectory: &[Pose]) -> Result<PlaneEstimate> {
        plane_from_q(&self.q_at(trajectory))
    }

    /// Recomputes `Q`, the plane and `λ`, and caches them for derivatives.
    pub fn estimate(&mut self, trajectory: &[Pose]) -> Result<PlaneEstimate> {
        self.estimate = None;
        let transformed: Vec<_> = self
            .blocks
            .iter()
            .map(|(t, s)| *s.transformed(&trajectory[*t]).matrix())
            .collect();
        let q = QMatrix::from_matrix(transformed.iter().sum());
        let plane = plane_from_q(&q)?;
        let centering = center_transform(&q)?;
        self.estimate = Some(Estimate { q, plane, centering, transformed });
        Ok(plane)
    }

    pub fn invalidate(&mut self) {
        self.estimate = None;
    }

    pub fn current(&self) -> Option<&PlaneEstimate> {
        self.estimate.as_ref().map(|e| &e.plane)
    }

    pub fn q(&self) -> Option<&QMatrix> {
        self.estimate.as_ref().map(|e| &e.q)
    }

    fn estimate_ref(&self) -> Result<&Estimate> {
        self.estimate.as_ref().ok_or(Error::NotEstimated { factor: self.id })
    }

    /// Per-observing-pose contraction inputs for the requested frame.
    fn frame(&self, mode: Mode, basis: &GeneratorBasis) -> Result<Frame<'_>> {
        let est = self.estimate_ref()?;
        let pi = est.plane.plane.as_vector();
        Ok(match mode {
            Mode::Plain => Frame { est, basis: basis.clone(), pi, conjugator: None },
            Mode::Centered => {
                let tc = est.centering.tc;
                let tc_inv = tc.inverse();
                // ᶜπ = Tc⁻ᵀ π
                let pi_c = tc_inv.matrix().transpose() * pi;
                Frame {
                    est,
                    basis: basis.conjugated(tc.matrix(), tc_inv.matrix()),
                    pi: pi_c,
                    conjugator: Some(*tc.matrix()),
                }
            }
        })
    }

    /// Sparse gradient: one 6-vector per observing pose.
    pub fn gradient(&self, mode: Mode, basis: &GeneratorBasis) -> Result<Vec<(usize, Vector6<f64>)>> {
        let frame = self.frame(mode, basis)?;
        Ok(self
            .blocks
            .iter()
            .enumerate()
            .map(|(k, (t, _))| (*t, local_gradient(&frame.basis, &frame.block(k), &frame.pi)))
            .collect())
    }

    /// Diagonal Hessian blocks, one per observing pose. Cross-pose blocks are
    /// identically zero.
    pub fn hessian_blocks(&self, mode: Mode, basis: &GeneratorBasis) -> Result<Vec<(usize, Matrix6<f64>)>> {
        let frame = self.frame(mode, basis)?;
        Ok(self
            .blocks
            .iter()
            .enumerate()
            .map(|(k, (t, _))| (*t, local_hessian(&frame.basis, &frame.block(k), &frame.pi)))
            .collect())
    }

    pub fn hessian_block(&self, pose: usize, mode: Mode, basis: &GeneratorBasis) -> Result<Matrix6<f64>> {
        Ok(self
            .hessian_blocks(mode, basis)?
            .into_iter()
            .find(|(t, _)| *t == pose)
            .map_or_else(Matrix6::zeros, |(_, h)| h))
    }
}

struct Frame<'a> {
    est: &'a Estimate,
    basis: GeneratorBasis,
    pi: Vector4<f64>,
    conjugator: Option<Matrix4<f64>>,
}

impl Frame<'_> {
    fn block(&self, k: usize) -> Matrix4<f64> {
        let q_t = &self.est.transformed[k];
        match &self.conjugator {
            Some(tc) => conjugate(tc, q_t),
            None => *q_t,
        }
    }
}
