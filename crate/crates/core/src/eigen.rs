//! Cyclic Jacobi eigensolver for small symmetric matrices.

use nalgebra::{Matrix3, Matrix4, SMatrix, SVector};

use crate::error::{invalid, Result};

const MAX_SWEEPS: usize = 50;
const OFF_DIAGONAL_TOLERANCE: f64 = 1e-13;
const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Eigenvalues in ascending order with matching unit eigenvectors as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricEigen<const D: usize> {
    pub values: SVector<f64, D>,
    pub vectors: SMatrix<f64, D, D>,
}

impl<const D: usize> SymmetricEigen<D> {
    pub fn vector(&self, i: usize) -> SVector<f64, D> {
        self.vectors.column(i).into_owned()
    }
}

pub fn eigen_sym4(a: &Matrix4<f64>) -> Result<SymmetricEigen<4>> {
    jacobi_eigen(a)
}

pub fn eigen_sym3(a: &Matrix3<f64>) -> Result<SymmetricEigen<3>> {
    jacobi_eigen(a)
}

fn off_diagonal_norm<const D: usize>(a: &SMatrix<f64, D, D>) -> f64 {
    let mut sum = 0.0;
    for p in 0..D {
        for q in (p + 1)..D {
            sum += 2.0 * a[(p, q)] * a[(p, q)];
        }
    }
    sum.sqrt()
}

/// Eigen-decomposes a symmetric matrix by cyclic Jacobi rotations.
///
/// The input must be symmetric to within `1e-9` of its largest entry; the
/// symmetric part is what gets decomposed. Each eigenvector is signed so
/// that its largest-magnitude component is positive.
pub fn jacobi_eigen<const D: usize>(a: &SMatrix<f64, D, D>) -> Result<SymmetricEigen<D>> {
    if !a.iter().all(|v| v.is_finite()) {
        return Err(invalid("eigen-decomposition of a non-finite matrix"));
    }
    let scale = a.amax();
    let asym = (a - a.transpose()).amax();
    if asym > SYMMETRY_TOLERANCE * scale.max(1.0) {
        return Err(invalid(format!("matrix is not symmetric (max asymmetry {asym:e})")));
    }

    let mut m = (a + a.transpose()) * 0.5;
    let mut v = SMatrix::<f64, D, D>::identity();
    let threshold = OFF_DIAGONAL_TOLERANCE * m.norm();

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&m) <= threshold {
            break;
        }
        for p in 0..D {
            for q in (p + 1)..D {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..D {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..D {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;

                for k in 0..D {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: [usize; D] = std::array::from_fn(|i| i);
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));

    let mut values = SVector::<f64, D>::zeros();
    let mut vectors = SMatrix::<f64, D, D>::zeros();
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = m[(src, src)];
        let mut col = v.column(src).into_owned();
        let lead = col.iamax();
        if col[lead] < 0.0 {
            col = -col;
        }
        vectors.set_column(dst, &col);
    }
    Ok(SymmetricEigen { values, vectors })
}
