//! Small dense linear algebra: determinants, minors, symmetrization,
//! symmetric eigenvalues (cyclic Jacobi) and sampled uniform
//! positive-definiteness certificates.

use std::ops::{Index, IndexMut};

use serde::Serialize;
use thiserror::Error;

use crate::sampling::SampleSet;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("index ({row}, {col}) out of range for order {order}")]
    IndexOutOfRange { row: usize, col: usize, order: usize },
    #[error("matrix is not symmetric (max asymmetry {deviation:e})")]
    NotSymmetric { deviation: f64 },
    #[error("matrix is numerically singular (pivot {pivot:e} at step {step})")]
    Singular { step: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("minor of an order-{0} matrix is undefined")]
    MinorOfScalar(usize),
    #[error("Jacobi rotations did not converge after {0} sweeps")]
    NoConvergence(usize),
}

/// Row-major square matrix. Order 0 is allowed and has determinant 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SquareMatrix {
    order: usize,
    entries: Vec<f64>,
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.entries[r * self.order + c]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.entries[r * self.order + c]
    }
}

/// LU factors with partial pivoting, `P A = L U` stored compactly.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: SquareMatrix,
    perm: Vec<usize>,
    sign: f64,
}

impl LuFactors {
    pub fn determinant(&self) -> f64 {
        (0..self.lu.order).fold(self.sign, |acc, i| acc * self.lu[(i, i)])
    }

    /// Fails if a pivot is below `rel_tol * max|A|`.
    pub fn check_pivots(&self, scale: f64, rel_tol: f64) -> Result<(), LinalgError> {
        for i in 0..self.lu.order {
            let pivot = self.lu[(i, i)];
            if pivot.abs() <= rel_tol * scale || pivot == 0.0 {
                return Err(LinalgError::Singular { step: i, pivot });
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.order;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lu[(i, k)] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.lu[(i, k)] * x[k];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }
}

impl SquareMatrix {
    pub fn zeros(order: usize) -> Self {
        Self { order, entries: vec![0.0; order * order] }
    }

    pub fn identity(order: usize) -> Self {
        Self::from_fn(order, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    pub fn from_fn(order: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = Vec::with_capacity(order * order);
        for r in 0..order {
            for c in 0..order {
                entries.push(f(r, c));
            }
        }
        Self { order, entries }
    }

    /// Panics if the rows are ragged.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let order = rows.len();
        let mut entries = Vec::with_capacity(order * order);
        for row in rows {
            assert_eq!(row.as_ref().len(), order, "rows must form a square array");
            entries.extend_from_slice(row.as_ref());
        }
        Self { order, entries }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self::from_fn(values.len(), |r, c| if r == c { values[r] } else { 0.0 })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.order.max(1)).take(self.order).map(<[f64]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.order, |r, c| self[(c, r)])
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { order: self.order, entries: self.entries.iter().map(|v| v * s).collect() }
    }

    pub fn mul(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.order, other.order);
        Self::from_fn(self.order, |r, c| (0..self.order).map(|k| self[(r, k)] * other[(k, c)]).sum())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.order).map(|r| (0..self.order).map(|c| self[(r, c)] * x[c]).sum()).collect()
    }

    /// Kronecker product `self (x) other`.
    pub fn kron(&self, other: &SquareMatrix) -> SquareMatrix {
        let (n, m) = (self.order, other.order);
        Self::from_fn(n * m, |r, c| self[(r / m, c / m)] * other[(r % m, c % m)])
    }

    pub fn asymmetry(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for r in 0..self.order {
            for c in r + 1..self.order {
                dev = dev.max((self[(r, c)] - self[(c, r)]).abs());
            }
        }
        dev
    }

    /// `(M + M^T) / 2`.
    pub fn symmetrize(&self) -> SquareMatrix {
        Self::from_fn(self.order, |r, c| 0.5 * (self[(r, c)] + self[(c, r)]))
    }

    /// The matrix with `row` and `col` deleted.
    pub fn submatrix(&self, row: usize, col: usize) -> Result<SquareMatrix, LinalgError> {
        if row >= self.order || col >= self.order {
            return Err(LinalgError::IndexOutOfRange { row, col, order: self.order });
        }
        let n = self.order - 1;
        Ok(Self::from_fn(n, |r, c| {
            let rr = if r < row { r } else { r + 1 };
            let cc = if c < col { c } else { c + 1 };
            self[(rr, cc)]
        }))
    }

    pub fn lu(&self) -> LuFactors {
        let n = self.order;
        let mut lu = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for r in k + 1..n {
                if lu[(r, k)].abs() > best {
                    best = lu[(r, k)].abs();
                    p = r;
                }
            }
            if p != k {
                for c in 0..n {
                    lu.entries.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            if pivot == 0.0 {
                continue;
            }
            for r in k + 1..n {
                let factor = lu[(r, k)] / pivot;
                lu[(r, k)] = factor;
                if factor != 0.0 {
                    for c in k + 1..n {
                        let v = lu[(k, c)];
                        lu[(r, c)] -= factor * v;
                    }
                }
            }
        }
        LuFactors { lu, perm, sign }
    }

    /// Determinant via LU with partial pivoting. Singular input gives ~0.
    pub fn determinant(&self) -> f64 {
        match self.order {
            0 => 1.0,
            1 => self.entries[0],
            2 => self.entries[0] * self.entries[3] - self.entries[1] * self.entries[2],
            _ => self.lu().determinant(),
        }
    }

    /// Unsigned minor: determinant with `row` and `col` deleted.
    pub fn minor_det(&self, row: usize, col: usize) -> Result<f64, LinalgError> {
        if self.order < 2 {
            return Err(LinalgError::MinorOfScalar(self.order));
        }
        Ok(self.submatrix(row, col)?.determinant())
    }

    /// Signed cofactors `(-1)^{r+c} minor(r, c)`; order 1 gives `[1]`.
    pub fn cofactor_matrix(&self) -> SquareMatrix {
        if self.order == 1 {
            return SquareMatrix::identity(1);
        }
        Self::from_fn(self.order, |r, c| {
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            sign * self.minor_det(r, c).expect("indices in range")
        })
    }

    /// Solves `A x = b` with relative pivot tolerance `1e-14`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.order {
            return Err(LinalgError::DimensionMismatch { expected: self.order, found: b.len() });
        }
        let lu = self.lu();
        lu.check_pivots(self.max_abs(), 1e-14)?;
        Ok(lu.solve(b))
    }

    /// Eigenvalues of a symmetric matrix in ascending order, by cyclic Jacobi
    /// rotations in row order until every off-diagonal entry is below
    /// `1e-13 * max|S|`.
    pub fn eigenvalues_sym(&self) -> Result<Vec<f64>, LinalgError> {
        let scale = self.max_abs();
        let deviation = self.asymmetry();
        if deviation > 1e-12 * scale.max(1.0) {
            return Err(LinalgError::NotSymmetric { deviation });
        }
        let n = self.order;
        if scale == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut a = self.symmetrize();
        let threshold = 1e-13 * scale;
        const MAX_SWEEPS: usize = 100;
        let mut converged = false;
        for _ in 0..MAX_SWEEPS {
            let off = (0..n)
                .flat_map(|r| (r + 1..n).map(move |c| (r, c)))
                .fold(0.0f64, |m, (r, c)| m.max(a[(r, c)].abs()));
            if off < threshold {
                converged = true;
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq.abs() < threshold * 1e-3 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        if !converged {
            return Err(LinalgError::NoConvergence(MAX_SWEEPS));
        }
        let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        eig.sort_by(f64::total_cmp);
        Ok(eig)
    }

    pub fn min_eigenvalue_sym(&self) -> Result<f64, LinalgError> {
        Ok(self.eigenvalues_sym()?.first().copied().unwrap_or(f64::INFINITY))
    }
}

/// Outcome of a sampled uniform positive-definiteness test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PDReport {
    /// Smallest eigenvalue of the symmetrized field over the samples.
    pub min_lambda: f64,
    pub worst_point: Vec<f64>,
    pub pass: bool,
    pub margin: f64,
}

/// Default certification margin.
pub const DEFAULT_MARGIN: f64 = 1e-9;

/// Failure while sampling a matrix field.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("at point {point:?}: {message}")]
pub struct SampleError {
    pub point: Vec<f64>,
    pub message: String,
}

/// `min_x lambda_min(sym(field(x)))` over the sample set; passes iff that
/// minimum is at least `margin`. Ties keep the first sample in order.
pub fn sampled_uniform_pd<F, E>(field: F, samples: &SampleSet, margin: f64) -> Result<PDReport, SampleError>
where
    F: Fn(&[f64]) -> Result<SquareMatrix, E>,
    E: std::fmt::Display,
{
    let mut min_lambda = f64::INFINITY;
    let mut worst_point = Vec::new();
    let mut order = None;
    for x in samples.points() {
        let err = |message: String| SampleError { point: x.to_vec(), message };
        let mat = field(x).map_err(|e| err(e.to_string()))?;
        match order {
            None => order = Some(mat.order()),
            Some(o) if o != mat.order() => {
                return Err(err(format!("field changed order from {o} to {}", mat.order())));
            }
            _ => {}
        }
        let lambda = mat.symmetrize().min_eigenvalue_sym().map_err(|e| err(e.to_string()))?;
        if lambda < min_lambda || worst_point.is_empty() {
            min_lambda = lambda;
            worst_point = x.to_vec();
        }
    }
    if worst_point.is_empty() {
        return Err(SampleError { point: Vec::new(), message: "empty sample set".into() });
    }
    Ok(PDReport { min_lambda, worst_point, pass: min_lambda >= margin, margin })
}
