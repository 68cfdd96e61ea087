//! Pointwise block matrices of the anisotropic system and the weight
//! bundle `(E, V, F, M)` of the structural assumption.
//!
//! `M_pq` has entry `(r, c) = a^{cr}_{pq}` and `L_pq = det M_pq`. The weights
//! `E` are obtained from the linear systems `M_pq E = f_pq H` (one per
//! `(p, q)`), which is the identity `sum_l a^{li}_{pq} E^{lj} = f_pq h^{ij}`.

use serde::Serialize;

use super::{AnisotropicSpec, ModelError};
use crate::densecore::SquareMatrix;

const SINGULAR_BLOCK_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointBlockBundle {
    pub m: usize,
    /// `M_pq` at index `p * m + q`.
    pub blocks: Vec<SquareMatrix>,
    /// `L_pq = det M_pq`.
    pub dets: Vec<f64>,
    /// Signed cofactor matrices of each block, by position: entry `(r, c)`
    /// is `(-1)^{r+c}` times the minor deleting row `r` and column `c`.
    pub cofactors: Vec<SquareMatrix>,
}

impl PointBlockBundle {
    pub fn block(&self, p: usize, q: usize) -> &SquareMatrix {
        &self.blocks[p * self.m + q]
    }

    pub fn det(&self, p: usize, q: usize) -> f64 {
        self.dets[p * self.m + q]
    }

    pub fn cofactor(&self, p: usize, q: usize) -> &SquareMatrix {
        &self.cofactors[p * self.m + q]
    }
}

pub fn point_blocks(spec: &AnisotropicSpec, x: &[f64]) -> Result<PointBlockBundle, ModelError> {
    let m = spec.m();
    let mut blocks = Vec::with_capacity(m * m);
    let mut dets = Vec::with_capacity(m * m);
    let mut cofactors = Vec::with_capacity(m * m);
    for p in 0..m {
        for q in 0..m {
            let block = spec.a_pq_at(x, p, q)?.transpose();
            dets.push(block.determinant());
            cofactors.push(block.cofactor_matrix());
            blocks.push(block);
        }
    }
    Ok(PointBlockBundle { m, blocks, dets, cofactors })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionHData {
    /// The weight matrix from block `(1, 1)`, entry `(i, j) = E^{ij}`.
    pub e: SquareMatrix,
    /// `f_pq` at index `p * m + q`.
    pub f_pq: Vec<f64>,
    pub v: SquareMatrix,
    pub f_mat: SquareMatrix,
    pub m_big: SquareMatrix,
    /// Max entrywise deviation between the per-block candidates for `E`.
    /// Blocks that vanish together with their `f_pq` contribute no candidate.
    pub independence_residual: f64,
    /// Normalized residual of `sum_l a^{li}_pq E^{lj} = h^{ij} sum_l a^{l1}_pq E^{l1}`
    /// over all `(p, q)` using the returned `E`.
    pub identity_residual: f64,
}

pub fn solve_e(spec: &AnisotropicSpec, x: &[f64]) -> Result<AssumptionHData, ModelError> {
    let weights = spec.weights().ok_or(ModelError::MissingWeights)?;
    let (n, m) = (spec.n(), spec.m());
    let h = weights.h_at(x)?;
    let f = weights.f_at(x)?;
    let bundle = point_blocks(spec, x)?;

    let mut candidates = Vec::with_capacity(m * m);
    for p in 0..m {
        for q in 0..m {
            let block = bundle.block(p, q);
            let det = bundle.det(p, q);
            if block.max_abs() == 0.0 && f[p * m + q] == 0.0 {
                // vacuous identity 0 = 0, places no constraint on E
                continue;
            }
            let scale = block.max_abs().powi(n as i32);
            if det == 0.0 || det.abs() <= SINGULAR_BLOCK_TOL * scale {
                return Err(ModelError::SingularBlock { p, q, det });
            }
            let lu = block.lu();
            let mut e = SquareMatrix::zeros(n);
            for j in 0..n {
                let rhs: Vec<f64> = (0..n).map(|i| f[p * m + q] * h[(i, j)]).collect();
                for (i, v) in lu.solve(&rhs).into_iter().enumerate() {
                    e[(i, j)] = v;
                }
            }
            candidates.push(e);
        }
    }
    let Some(e) = candidates.first().cloned() else {
        return Err(ModelError::SingularBlock { p: 0, q: 0, det: 0.0 });
    };
    let independence_residual = candidates
        .iter()
        .flat_map(|c| c.entries().iter().zip(e.entries()).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);

    let mut worst: f64 = 0.0;
    let mut a_scale: f64 = 0.0;
    for p in 0..m {
        for q in 0..m {
            let block = bundle.block(p, q);
            a_scale = a_scale.max(block.max_abs());
            // block(i, l) = a^{li}_pq
            let lead: f64 = (0..n).map(|l| block[(0, l)] * e[(l, 0)]).sum();
            for i in 0..n {
                for j in 0..n {
                    let lhs: f64 = (0..n).map(|l| block[(i, l)] * e[(l, j)]).sum();
                    worst = worst.max((lhs - h[(i, j)] * lead).abs());
                }
            }
        }
    }
    let scale = a_scale * e.max_abs() * h.max_abs().max(1.0);
    let identity_residual = if scale > 0.0 { worst / scale } else { worst };

    let (v, f_mat, m_big) = build_vfm(spec, &e, x)?;
    Ok(AssumptionHData { e, f_pq: f, v, f_mat, m_big, independence_residual, identity_residual })
}

/// `V` (the weight matrix `h`), `F_pq = sum_l a^{l1}_pq E^{l1}` and the block
/// matrix `M` of order `nm` whose `(i, j)` block is `h^{ij} F`.
pub fn build_vfm(
    spec: &AnisotropicSpec,
    e: &SquareMatrix,
    x: &[f64],
) -> Result<(SquareMatrix, SquareMatrix, SquareMatrix), ModelError> {
    let weights = spec.weights().ok_or(ModelError::MissingWeights)?;
    let (n, m) = (spec.n(), spec.m());
    let v = weights.h_at(x)?;
    let mut f_mat = SquareMatrix::zeros(m);
    for p in 0..m {
        for q in 0..m {
            let mut s = 0.0;
            for l in 0..n {
                s += spec.field(l, 0, p, q).evaluate(x)? * e[(l, 0)];
            }
            f_mat[(p, q)] = s;
        }
    }
    let m_big = SquareMatrix::from_fn(n * m, |r, c| v[(r / m, c / m)] * f_mat[(r % m, c % m)]);
    Ok((v, f_mat, m_big))
}

/// Which cofactor the weight formula `E^{ij} = (f_pq / L_pq) sum_l h^{lj} v^{li}_pq`
/// reads for `v^{li}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CofactorIndexOrder {
    /// The cofactor at position `(l, i)` of `M_pq`.
    ByPosition,
    /// The cofactor at the position holding the entry `a^{li}_pq`, i.e. `(i, l)`.
    ByEntry,
}

/// `E` from the closed cofactor formula for block `(p, q)`.
pub fn cofactor_formula_e(
    bundle: &PointBlockBundle,
    h: &SquareMatrix,
    f_pq: f64,
    p: usize,
    q: usize,
    order: CofactorIndexOrder,
) -> SquareMatrix {
    let cof = bundle.cofactor(p, q);
    let det = bundle.det(p, q);
    let n = cof.order();
    SquareMatrix::from_fn(n, |i, j| {
        let s: f64 = (0..n)
            .map(|l| {
                let v = match order {
                    CofactorIndexOrder::ByPosition => cof[(l, i)],
                    CofactorIndexOrder::ByEntry => cof[(i, l)],
                };
                h[(l, j)] * v
            })
            .sum();
        f_pq / det * s
    })
}
