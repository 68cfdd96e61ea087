//! The cofactor test-function matrix of the isotropic system.
//!
//! With `a` the coefficient array (`a(i, j) = a^{ij}`), the matrix `A` has
//! entry `(r, c) = a^{cr}`, i.e. `A = a^T`, and `B` is `A` with its first row
//! and column removed. The minors `B^{ij}` are the unsigned minors of `A`
//! obtained by deleting row `i` and column `j`; with that convention
//!
//! ```text
//! T^{ji} = (-1)^{i+j} det B^{ji} / det B
//! ```
//!
//! solves the cancellation system
//!
//! ```text
//! sum_i a^{ij} T^{li} = 0                       (j != l)
//! sum_i (a^{ij} T^{ji} - a^{i1} T^{1i}) = 0     (j = 2..n)
//! ```
//!
//! with `T^{11} = 1`, and `sum_l a^{l1} T^{1l} = det A / det B`.

use serde::Serialize;

use super::ModelError;
use crate::densecore::SquareMatrix;

/// Relative threshold below which `det B` is treated as zero.
const SINGULAR_B_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CofactorBundle {
    pub a_mat: SquareMatrix,
    pub b_mat: SquareMatrix,
    pub det_a: f64,
    pub det_b: f64,
    /// `t[(j, i)] = T^{ji}`.
    pub t: SquareMatrix,
}

/// `(A, B)` for the coefficient array `a`. For `n = 1`, `B` is the empty
/// matrix (determinant 1).
pub fn assemble_a_b(a: &SquareMatrix) -> (SquareMatrix, SquareMatrix) {
    let big = a.transpose();
    let small = if big.order() >= 1 {
        big.submatrix(0, 0).expect("order >= 1")
    } else {
        SquareMatrix::zeros(0)
    };
    (big, small)
}

pub fn test_matrix(a: &SquareMatrix) -> Result<CofactorBundle, ModelError> {
    let n = a.order();
    if n == 0 {
        return Err(ModelError::NoEquations);
    }
    let (a_mat, b_mat) = assemble_a_b(a);
    let det_a = a_mat.determinant();
    let det_b = b_mat.determinant();
    let scale = a.max_abs().powi(n as i32 - 1);
    if det_b.abs() <= SINGULAR_B_TOL * scale || det_b == 0.0 {
        return Err(ModelError::SingularB { det: det_b, scale });
    }
    let mut t = SquareMatrix::zeros(n);
    if n == 1 {
        t[(0, 0)] = 1.0;
    } else {
        for j in 0..n {
            for i in 0..n {
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                t[(j, i)] = sign * a_mat.minor_det(j, i)? / det_b;
            }
        }
        // exact by construction; pin against round-off
        t[(0, 0)] = 1.0;
    }
    Ok(CofactorBundle { a_mat, b_mat, det_a, det_b, t })
}

/// `sum_l a^{lj} T^{jl}`; independent of `j` for the cofactor solution.
pub fn pairing_sum(a: &SquareMatrix, t: &SquareMatrix, j: usize) -> f64 {
    (0..a.order()).map(|l| a[(l, j)] * t[(j, l)]).sum()
}

/// Max absolute residual over both equation families of the cancellation
/// system, divided by `max|a| * max|T|`.
pub fn cancellation_residual(a: &SquareMatrix, t: &SquareMatrix) -> f64 {
    let n = a.order();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for l in 0..n {
            if j != l {
                let r: f64 = (0..n).map(|i| a[(i, j)] * t[(l, i)]).sum();
                worst = worst.max(r.abs());
            }
        }
    }
    let first = pairing_sum(a, t, 0);
    for j in 1..n {
        worst = worst.max((pairing_sum(a, t, j) - first).abs());
    }
    let scale = a.max_abs() * t.max_abs();
    if scale > 0.0 {
        worst / scale
    } else {
        worst
    }
}
