//! Sparse storage and linear solvers for the assembled systems.
//!
//! BiCGStab with right Jacobi preconditioning handles the general
//! (nonsymmetric) case; dense LU is the oracle path for small orders. Every
//! reduction runs sequentially in index order, so results are bit-identical
//! across runs.

use serde::Serialize;
use thiserror::Error;

use crate::densecore::{LinalgError, SquareMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("BiCGStab broke down after {iterations} iterations (relative residual {residual:e})")]
    Breakdown { iterations: usize, residual: f64, best: Vec<f64> },
    #[error("BiCGStab reached {iterations} iterations with relative residual {residual:e}")]
    MaxIterations { iterations: usize, residual: f64, best: Vec<f64> },
    #[error(transparent)]
    Singular(#[from] LinalgError),
    #[error("dimension mismatch: matrix order {expected}, vector length {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Compressed sparse row matrix with strictly increasing columns per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    order: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Sorts the triplets by `(row, col)` and sums duplicates in input order.
    pub fn from_triplets(order: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; order + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < order && c < order, "triplet ({r}, {c}) outside order {order}");
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..order {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { order, row_ptr, col_idx, values }
    }

    pub fn from_dense(a: &SquareMatrix) -> Self {
        let n = a.order();
        let triplets = (0..n)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .filter_map(|(r, c)| (a[(r, c)] != 0.0).then(|| (r, c, a[(r, c)])))
            .collect();
        Self::from_triplets(n, triplets)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.order).map(|r| self.get(r, r)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate().take(self.order) {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *out = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.order];
        self.matvec(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> SquareMatrix {
        let mut out = SquareMatrix::zeros(self.order);
        for r in 0..self.order {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                out[(r, *c)] = *v;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.order {
            let (cols, vals) = self.row(r);
            triplets.extend(cols.iter().zip(vals).map(|(c, v)| (*c, r, *v)));
        }
        Self::from_triplets(self.order, triplets)
    }

    /// `||b - A x||_2 / ||b||_2`, or the absolute residual when `b = 0`.
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let ax = self.mul_vec(x);
        let r = norm(&ax.iter().zip(b).map(|(a, b)| b - a).collect::<Vec<_>>());
        let nb = norm(b);
        if nb > 0.0 {
            r / nb
        } else {
            r
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    DenseLu,
    Bicgstab,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveStats {
    pub path: SolverPath,
    pub iterations: usize,
    /// True relative residual of the returned solution.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    /// `None` means `10 * order`.
    pub maxit: Option<usize>,
    /// Largest order routed to dense LU by [`solve_auto`].
    pub dense_limit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-10, maxit: None, dense_limit: 2000 }
    }
}

impl SolverConfig {
    pub fn maxit_for(&self, order: usize) -> usize {
        self.maxit.unwrap_or(10 * order).max(1)
    }
}

/// BiCGStab on `A M^{-1} u = b`, `x = M^{-1} u` with `M = diag(A)` (unit
/// entries where the diagonal vanishes). Initial guess 0, shadow residual
/// `b`. When the recursive residual converges but the true one does not, the
/// iteration restarts from the current iterate.
pub fn solve_bicgstab(a: &CsrMatrix, b: &[f64], tol: f64, maxit: usize) -> Result<(Vec<f64>, SolveStats), SolverError> {
    let n = a.order();
    if b.len() != n {
        return Err(SolverError::DimensionMismatch { expected: n, found: b.len() });
    }
    let stats = |iterations, residual| SolveStats { path: SolverPath::Bicgstab, iterations, residual };
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], stats(0, 0.0)));
    }
    if (0..n).any(|r| a.row(r).1.iter().all(|v| *v == 0.0)) {
        return Err(SolverError::Breakdown { iterations: 0, residual: 1.0, best: vec![0.0; n] });
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let precond = |v: &[f64], out: &mut Vec<f64>| {
        out.clear();
        out.extend(v.iter().zip(&inv_diag).map(|(x, d)| x * d));
    };

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut shadow = b.to_vec();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p_hat = Vec::with_capacity(n);
    let mut s_hat = Vec::with_capacity(n);
    let mut t = vec![0.0; n];
    let mut best = (1.0, x.clone());
    let mut since_restart = 0usize;

    let failure = |best: (f64, Vec<f64>), iterations: usize, broke: bool| {
        let residual = a.relative_residual(&best.1, b);
        if broke {
            SolverError::Breakdown { iterations, residual, best: best.1 }
        } else {
            SolverError::MaxIterations { iterations, residual, best: best.1 }
        }
    };

    for it in 1..=maxit {
        let rho_new = dot(&shadow, &r);
        if rho_new.abs() <= 1e-300 || rho_new.abs() <= f64::EPSILON * 1e-10 * norm(&shadow) * norm(&r) {
            if since_restart == 0 {
                return Err(failure(best, it, true));
            }
            restart(a, b, &x, &mut r, &mut shadow, &mut p, &mut v);
            (rho, alpha, omega) = (1.0, 1.0, 1.0);
            since_restart = 0;
            continue;
        }
        since_restart += 1;
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        precond(&p, &mut p_hat);
        a.matvec(&p_hat, &mut v);
        let denom = dot(&shadow, &v);
        if denom == 0.0 || !denom.is_finite() {
            return Err(failure(best, it, true));
        }
        alpha = rho / denom;
        let s: Vec<f64> = r.iter().zip(&v).map(|(r, v)| r - alpha * v).collect();
        let s_rel = norm(&s) / b_norm;
        if s_rel <= tol {
            for k in 0..n {
                x[k] += alpha * p_hat[k];
            }
            let true_rel = a.relative_residual(&x, b);
            if true_rel <= tol {
                return Ok((x, stats(it, true_rel)));
            }
            restart(a, b, &x, &mut r, &mut shadow, &mut p, &mut v);
            (rho, alpha, omega) = (1.0, 1.0, 1.0);
            since_restart = 0;
            continue;
        }
        precond(&s, &mut s_hat);
        a.matvec(&s_hat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(failure(best, it, true));
        }
        omega = dot(&t, &s) / tt;
        for k in 0..n {
            x[k] += alpha * p_hat[k] + omega * s_hat[k];
            r[k] = s[k] - omega * t[k];
        }
        let r_rel = norm(&r) / b_norm;
        if !r_rel.is_finite() {
            return Err(failure(best, it, true));
        }
        if r_rel < best.0 {
            best = (r_rel, x.clone());
        }
        if r_rel <= tol {
            let true_rel = a.relative_residual(&x, b);
            if true_rel <= tol {
                return Ok((x, stats(it, true_rel)));
            }
            restart(a, b, &x, &mut r, &mut shadow, &mut p, &mut v);
            (rho, alpha, omega) = (1.0, 1.0, 1.0);
            since_restart = 0;
            continue;
        }
        if omega == 0.0 {
            return Err(failure(best, it, true));
        }
    }
    Err(failure(best, maxit, false))
}

fn restart(
    a: &CsrMatrix,
    b: &[f64],
    x: &[f64],
    r: &mut [f64],
    shadow: &mut [f64],
    p: &mut [f64],
    v: &mut [f64],
) {
    let ax = a.mul_vec(x);
    for k in 0..r.len() {
        r[k] = b[k] - ax[k];
        shadow[k] = r[k];
        p[k] = 0.0;
        v[k] = 0.0;
    }
}

/// Partial-pivoting LU solve.
pub fn solve_dense_lu(a: &SquareMatrix, b: &[f64]) -> Result<Vec<f64>, SolverError> {
    if b.len() != a.order() {
        return Err(SolverError::DimensionMismatch { expected: a.order(), found: b.len() });
    }
    Ok(a.solve(b)?)
}

/// Dense LU up to `config.dense_limit`, BiCGStab above it.
pub fn solve_auto(a: &CsrMatrix, b: &[f64], config: &SolverConfig) -> Result<(Vec<f64>, SolveStats), SolverError> {
    let n = a.order();
    if n <= config.dense_limit {
        let x = solve_dense_lu(&a.to_dense(), b)?;
        let residual = a.relative_residual(&x, b);
        Ok((x, SolveStats { path: SolverPath::DenseLu, iterations: 0, residual }))
    } else {
        solve_bicgstab(a, b, config.tol, config.maxit_for(n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poisson_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn triplets_are_sorted_and_merged() {
        let a = CsrMatrix::from_triplets(3, vec![(2, 0, 1.0), (0, 2, 2.0), (0, 0, 1.0), (0, 2, 0.5), (1, 1, 3.0)]);
        assert_eq!(a.row_ptr(), &[0, 2, 3, 4]);
        assert_eq!(a.col_idx(), &[0, 2, 1, 0]);
        assert_eq!(a.values(), &[1.0, 2.5, 3.0, 1.0]);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.mul_vec(&[1.0, 1.0, 1.0]), vec![3.5, 3.0, 1.0]);
        assert_eq!(CsrMatrix::from_dense(&a.to_dense()), a);
        assert_eq!(a.transpose().get(2, 0), 2.5);
    }

    #[test]
    fn identity_converges_in_one_step() {
        let a = CsrMatrix::from_dense(&SquareMatrix::identity(5));
        let b = [1.0, -2.0, 3.0, 0.5, 7.0];
        let (x, stats) = solve_bicgstab(&a, &b, 1e-12, 10).unwrap();
        assert_eq!(x, b.to_vec());
        assert_eq!(stats.iterations, 1);
    }

    #[test]
    fn poisson_matches_dense_lu() {
        let a = poisson_1d(100);
        let b = vec![1.0; 100];
        let (x, _) = solve_bicgstab(&a, &b, 1e-12, 1000).unwrap();
        let y = solve_dense_lu(&a.to_dense(), &b).unwrap();
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let dev = x.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(dev / scale < 1e-8, "{dev}");
    }

    #[test]
    fn zero_row_breaks_down() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 1, 1.0)]);
        assert!(matches!(solve_bicgstab(&a, &[1.0, 1.0], 1e-10, 10), Err(SolverError::Breakdown { .. })));
    }

    #[test]
    fn dense_lu_examples() {
        let a = SquareMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
        let x = solve_dense_lu(&a, &[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        let h = SquareMatrix::from_fn(6, |i, j| 1.0 / (i + j + 1) as f64);
        let b = h.mul_vec(&[1.0; 6]);
        let x = solve_dense_lu(&h, &b).unwrap();
        let r = CsrMatrix::from_dense(&h).relative_residual(&x, &b);
        assert!(r <= 1e-8);
        assert!(matches!(solve_dense_lu(&SquareMatrix::zeros(3), &[1.0; 3]), Err(SolverError::Singular(_))));
    }

    #[test]
    fn auto_routes_by_order() {
        let small = poisson_1d(10);
        let (_, stats) = solve_auto(&small, &[1.0; 10], &SolverConfig::default()).unwrap();
        assert_eq!(stats.path, SolverPath::DenseLu);
        let cfg = SolverConfig { dense_limit: 5, ..SolverConfig::default() };
        let (_, stats) = solve_auto(&small, &[1.0; 10], &cfg).unwrap();
        assert_eq!(stats.path, SolverPath::Bicgstab);
        assert!(stats.residual <= 1e-10);
    }

    #[test]
    fn max_iterations_returns_best_iterate() {
        let a = poisson_1d(200);
        match solve_bicgstab(&a, &[1.0; 200], 1e-14, 3) {
            Err(SolverError::MaxIterations { iterations, best, residual }) => {
                assert_eq!(iterations, 3);
                assert_eq!(best.len(), 200);
                assert!(residual <= 1.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
