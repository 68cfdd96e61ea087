//! Problem data and the algebraic objects built from it.
//!
//! Two kinds of principal part are supported:
//!
//! * isotropic, `-div(a^{ij} grad y^j)` with scalar `a^{ij}`;
//! * anisotropic, `-d_q(a^{ij}_{pq} d_p y^j)` with `a^{ij}_{pq} = a^{ij}_{qp}`.
//!
//! Indices are zero-based throughout; row 0 is the conventional index 1.

mod blocks;
mod cofactor;
mod family;

pub use blocks::{
    build_vfm, cofactor_formula_e, point_blocks, solve_e, AssumptionHData, CofactorIndexOrder, PointBlockBundle,
};
pub use cofactor::{assemble_a_b, pairing_sum, cancellation_residual, test_matrix, CofactorBundle};
pub use family::{determinant_expr, product_family_build, ProductFamily};

use thiserror::Error;

use crate::densecore::{LinalgError, SquareMatrix};
use crate::exprlang::{CoefficientField, EvalError, ParseError};
use crate::sampling::BoxDomain;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{what}: expected {expected}, found {found}")]
    Shape { what: String, expected: usize, found: usize },
    #[error("{what} has dimension {found} but the domain has dimension {expected}")]
    FieldDimension { what: String, expected: usize, found: usize },
    #[error("theta = {theta} must exceed the space dimension {m}")]
    ThetaTooSmall { theta: f64, m: usize },
    #[error("nu = {0} must be positive")]
    NuNotPositive(f64),
    #[error("{what} must be symmetric: entries ({i}, {j}) and ({j}, {i}) differ")]
    NotSymmetric { what: String, i: usize, j: usize },
    #[error("the weight h^11 must be the constant 1")]
    LeadingWeightNotOne,
    #[error("det B = {det:e} is numerically zero (scale {scale:e})")]
    SingularB { det: f64, scale: f64 },
    #[error("block ({p}, {q}) is singular: L_pq = {det:e}")]
    SingularBlock { p: usize, q: usize, det: f64 },
    #[error("no weights (h, f_pq) were supplied")]
    MissingWeights,
    #[error("at least one equation is required")]
    NoEquations,
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn check_dim(what: impl FnOnce() -> String, field: &CoefficientField, m: usize) -> Result<(), ModelError> {
    if field.dim() != m {
        return Err(ModelError::FieldDimension { what: what(), expected: m, found: field.dim() });
    }
    Ok(())
}

fn check_len(what: impl FnOnce() -> String, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected != found {
        return Err(ModelError::Shape { what: what(), expected, found });
    }
    Ok(())
}

/// Lower-order data: `C^{ij}` (m-vectors), `D^i` (n-vectors), right-hand
/// sides `f^i`, boundary data `g^i`, and the well-posedness parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerOrderData {
    n: usize,
    m: usize,
    c: Vec<Vec<Vec<CoefficientField>>>,
    d: Vec<Vec<CoefficientField>>,
    f: Vec<CoefficientField>,
    g: Vec<CoefficientField>,
    theta: f64,
    nu: f64,
}

impl LowerOrderData {
    /// `c[i][j][p]`, `d[i][k]` (k-th component of `D^i`), `f[i]`, `g[i]`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        m: usize,
        c: Vec<Vec<Vec<CoefficientField>>>,
        d: Vec<Vec<CoefficientField>>,
        f: Vec<CoefficientField>,
        g: Vec<CoefficientField>,
        theta: f64,
        nu: f64,
    ) -> Result<Self, ModelError> {
        check_len(|| "C rows".into(), n, c.len())?;
        for (i, row) in c.iter().enumerate() {
            check_len(|| format!("C[{i}] columns"), n, row.len())?;
            for (j, v) in row.iter().enumerate() {
                check_len(|| format!("C[{i}][{j}] components"), m, v.len())?;
                for (p, fld) in v.iter().enumerate() {
                    check_dim(|| format!("C[{i}][{j}][{p}]"), fld, m)?;
                }
            }
        }
        check_len(|| "D rows".into(), n, d.len())?;
        for (i, row) in d.iter().enumerate() {
            check_len(|| format!("D[{i}] components"), n, row.len())?;
            for (k, fld) in row.iter().enumerate() {
                check_dim(|| format!("D[{i}][{k}]"), fld, m)?;
            }
        }
        check_len(|| "f".into(), n, f.len())?;
        check_len(|| "g".into(), n, g.len())?;
        for (i, fld) in f.iter().enumerate() {
            check_dim(|| format!("f[{i}]"), fld, m)?;
        }
        for (i, fld) in g.iter().enumerate() {
            check_dim(|| format!("g[{i}]"), fld, m)?;
        }
        if !(theta > m as f64) || !theta.is_finite() {
            return Err(ModelError::ThetaTooSmall { theta, m });
        }
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(ModelError::NuNotPositive(nu));
        }
        Ok(Self { n, m, c, d, f, g, theta, nu })
    }

    /// All lower-order fields zero, `theta = 2m`, `nu = 1`.
    pub fn zero(n: usize, m: usize) -> Self {
        let z = CoefficientField::constant(0.0, m);
        Self {
            n,
            m,
            c: vec![vec![vec![z.clone(); m]; n]; n],
            d: vec![vec![z.clone(); n]; n],
            f: vec![z.clone(); n],
            g: vec![z; n],
            theta: 2.0 * m as f64,
            nu: 1.0,
        }
    }

    pub fn with_f(mut self, f: Vec<CoefficientField>) -> Result<Self, ModelError> {
        self.f = f;
        self.revalidate()
    }

    pub fn with_g(mut self, g: Vec<CoefficientField>) -> Result<Self, ModelError> {
        self.g = g;
        self.revalidate()
    }

    pub fn with_c(mut self, c: Vec<Vec<Vec<CoefficientField>>>) -> Result<Self, ModelError> {
        self.c = c;
        self.revalidate()
    }

    pub fn with_d(mut self, d: Vec<Vec<CoefficientField>>) -> Result<Self, ModelError> {
        self.d = d;
        self.revalidate()
    }

    pub fn with_theta(mut self, theta: f64) -> Result<Self, ModelError> {
        self.theta = theta;
        self.revalidate()
    }

    pub fn with_nu(mut self, nu: f64) -> Result<Self, ModelError> {
        self.nu = nu;
        self.revalidate()
    }

    fn revalidate(self) -> Result<Self, ModelError> {
        Self::new(self.n, self.m, self.c, self.d, self.f, self.g, self.theta, self.nu)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn c(&self) -> &[Vec<Vec<CoefficientField>>] {
        &self.c
    }

    pub fn d(&self) -> &[Vec<CoefficientField>] {
        &self.d
    }

    pub fn f(&self) -> &[CoefficientField] {
        &self.f
    }

    pub fn g(&self) -> &[CoefficientField] {
        &self.g
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn has_convection(&self) -> bool {
        !self.c.iter().flatten().flatten().all(CoefficientField::is_zero_constant)
    }

    /// `Dmat(i, k) = D^i_k` at `x`.
    pub fn d_matrix_at(&self, x: &[f64]) -> Result<SquareMatrix, EvalError> {
        let mut out = SquareMatrix::zeros(self.n);
        for i in 0..self.n {
            for k in 0..self.n {
                out[(i, k)] = self.d[i][k].evaluate(x)?;
            }
        }
        Ok(out)
    }

    /// `C[i][j][p]` flattened as `(i * n + j) * m + p`.
    pub fn c_at(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let (n, m) = (self.n, self.m);
        for i in 0..n {
            for j in 0..n {
                for p in 0..m {
                    out[(i * n + j) * m + p] = self.c[i][j][p].evaluate(x)?;
                }
            }
        }
        Ok(())
    }
}

/// System with scalar coupling coefficients `a^{ij}`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotropicSpec {
    a: Vec<Vec<CoefficientField>>,
    lower: LowerOrderData,
    domain: BoxDomain,
}

impl IsotropicSpec {
    pub fn new(a: Vec<Vec<CoefficientField>>, lower: LowerOrderData, domain: BoxDomain) -> Result<Self, ModelError> {
        let n = a.len();
        let m = domain.dim();
        if n == 0 {
            return Err(ModelError::NoEquations);
        }
        for (i, row) in a.iter().enumerate() {
            check_len(|| format!("a[{i}] columns"), n, row.len())?;
            for (j, fld) in row.iter().enumerate() {
                check_dim(|| format!("a[{i}][{j}]"), fld, m)?;
            }
        }
        check_len(|| "lower-order equations".into(), n, lower.n)?;
        check_len(|| "lower-order dimension".into(), m, lower.m)?;
        Ok(Self { a, lower, domain })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn m(&self) -> usize {
        self.domain.dim()
    }

    pub fn a(&self) -> &[Vec<CoefficientField>] {
        &self.a
    }

    pub fn lower(&self) -> &LowerOrderData {
        &self.lower
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn with_lower(mut self, lower: LowerOrderData) -> Result<Self, ModelError> {
        self.lower = lower;
        Self::new(self.a, self.lower, self.domain)
    }

    /// The coefficient array at `x`, entry `(i, j) = a^{ij}(x)`.
    pub fn a_at(&self, x: &[f64]) -> Result<SquareMatrix, EvalError> {
        let n = self.n();
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = self.a[i][j].evaluate(x)?;
            }
        }
        Ok(out)
    }
}

/// Index of the unordered pair `{p, q}` in upper-triangular storage.
fn pq_index(m: usize, p: usize, q: usize) -> usize {
    let (p, q) = if p <= q { (p, q) } else { (q, p) };
    p * m - p * (p + 1) / 2 + q
}

/// Weights of the structural assumption: symmetric `h^{ij}` with `h^{11} = 1`,
/// and `f_pq`.
#[derive(Debug, Clone, PartialEq)]
pub struct HWeights {
    n: usize,
    // upper triangle, row-major, (0,0) is the constant 1
    h: Vec<CoefficientField>,
    f_pq: Vec<Vec<CoefficientField>>,
}

impl HWeights {
    /// `h` is the full `n x n` grid; it must be textually symmetric with a
    /// constant-1 leading entry. `f_pq` is `m x m`.
    pub fn new(h: Vec<Vec<CoefficientField>>, f_pq: Vec<Vec<CoefficientField>>) -> Result<Self, ModelError> {
        let n = h.len();
        for (i, row) in h.iter().enumerate() {
            check_len(|| format!("h[{i}] columns"), n, row.len())?;
        }
        if n == 0 {
            return Err(ModelError::NoEquations);
        }
        if h[0][0].as_constant() != Some(1.0) {
            return Err(ModelError::LeadingWeightNotOne);
        }
        let mut upper = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                if h[i][j].canonical() != h[j][i].canonical() {
                    return Err(ModelError::NotSymmetric { what: "h".into(), i, j });
                }
                upper.push(h[i][j].clone());
            }
        }
        let m = f_pq.len();
        for (p, row) in f_pq.iter().enumerate() {
            check_len(|| format!("f_pq[{p}] columns"), m, row.len())?;
        }
        Ok(Self { n, h: upper, f_pq })
    }

    pub fn h_field(&self, i: usize, j: usize) -> &CoefficientField {
        &self.h[pq_index(self.n, i, j)]
    }

    pub fn f_field(&self, p: usize, q: usize) -> &CoefficientField {
        &self.f_pq[p][q]
    }

    pub fn h_at(&self, x: &[f64]) -> Result<SquareMatrix, EvalError> {
        let mut out = SquareMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out[(i, j)] = self.h_field(i, j).evaluate(x)?;
            }
        }
        Ok(out)
    }

    pub fn f_at(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.f_pq.iter().flatten().map(|f| f.evaluate(x)).collect()
    }

    fn fields(&self) -> impl Iterator<Item = &CoefficientField> {
        self.h.iter().chain(self.f_pq.iter().flatten())
    }
}

/// System with matrix-valued coupling coefficients `a^{ij}_{pq}`.
/// Only `p <= q` is stored; `(q, p)` reads the same field.
#[derive(Debug, Clone, PartialEq)]
pub struct AnisotropicSpec {
    n: usize,
    a: Vec<CoefficientField>,
    lower: LowerOrderData,
    domain: BoxDomain,
    weights: Option<HWeights>,
    family: Option<ProductFamily>,
}

impl AnisotropicSpec {
    /// `field(i, j, p, q)` is called for `p <= q` only.
    pub fn new(
        n: usize,
        lower: LowerOrderData,
        domain: BoxDomain,
        mut field: impl FnMut(usize, usize, usize, usize) -> CoefficientField,
    ) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::NoEquations);
        }
        let m = domain.dim();
        let per = m * (m + 1) / 2;
        let mut a = Vec::with_capacity(n * n * per);
        for i in 0..n {
            for j in 0..n {
                for p in 0..m {
                    for q in p..m {
                        let fld = field(i, j, p, q);
                        check_dim(|| format!("a[{i}][{j}][{p}][{q}]"), &fld, m)?;
                        a.push(fld);
                    }
                }
            }
        }
        check_len(|| "lower-order equations".into(), n, lower.n)?;
        check_len(|| "lower-order dimension".into(), m, lower.m)?;
        Ok(Self { n, a, lower, domain, weights: None, family: None })
    }

    /// From a full `n x n x m x m` grid that must be symmetric in `(p, q)`.
    pub fn from_full_grid(
        grid: Vec<Vec<Vec<Vec<CoefficientField>>>>,
        lower: LowerOrderData,
        domain: BoxDomain,
    ) -> Result<Self, ModelError> {
        let n = grid.len();
        let m = domain.dim();
        for (i, row) in grid.iter().enumerate() {
            check_len(|| format!("a_pq[{i}] columns"), n, row.len())?;
            for (j, blk) in row.iter().enumerate() {
                check_len(|| format!("a_pq[{i}][{j}] rows"), m, blk.len())?;
                for (p, r) in blk.iter().enumerate() {
                    check_len(|| format!("a_pq[{i}][{j}][{p}] columns"), m, r.len())?;
                }
                for p in 0..m {
                    for q in p + 1..m {
                        if blk[p][q].canonical() != blk[q][p].canonical() {
                            return Err(ModelError::NotSymmetric { what: format!("a_pq[{i}][{j}]"), i: p, j: q });
                        }
                    }
                }
            }
        }
        Self::new(n, lower, domain, |i, j, p, q| grid[i][j][p][q].clone())
    }

    /// The isotropic system viewed as `a^{ij}_{pq} = a^{ij} delta_pq`.
    pub fn from_isotropic(spec: &IsotropicSpec) -> Result<Self, ModelError> {
        let m = spec.m();
        let zero = CoefficientField::constant(0.0, m);
        Self::new(spec.n(), spec.lower.clone(), spec.domain.clone(), |i, j, p, q| {
            if p == q {
                spec.a[i][j].clone()
            } else {
                zero.clone()
            }
        })
    }

    pub fn with_weights(mut self, weights: HWeights) -> Result<Self, ModelError> {
        check_len(|| "h order".into(), self.n, weights.n)?;
        check_len(|| "f_pq order".into(), self.m(), weights.f_pq.len())?;
        for fld in weights.fields() {
            check_dim(|| "weight field".into(), fld, self.m())?;
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn with_lower(mut self, lower: LowerOrderData) -> Result<Self, ModelError> {
        check_len(|| "lower-order equations".into(), self.n, lower.n)?;
        check_len(|| "lower-order dimension".into(), self.m(), lower.m)?;
        self.lower = lower;
        Ok(self)
    }

    pub(crate) fn with_family(mut self, family: ProductFamily) -> Self {
        self.family = Some(family);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.domain.dim()
    }

    pub fn lower(&self) -> &LowerOrderData {
        &self.lower
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn weights(&self) -> Option<&HWeights> {
        self.weights.as_ref()
    }

    /// The product-family inputs, when the spec was built by [`product_family_build`].
    pub fn family(&self) -> Option<&ProductFamily> {
        self.family.as_ref()
    }

    pub fn field(&self, i: usize, j: usize, p: usize, q: usize) -> &CoefficientField {
        let m = self.m();
        let per = m * (m + 1) / 2;
        &self.a[(i * self.n + j) * per + pq_index(m, p, q)]
    }

    /// Values `a^{ij}_{pq}(x)` flattened as `((i * n + j) * m + p) * m + q`.
    pub fn principal_at(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let (n, m) = (self.n, self.m());
        let per = m * (m + 1) / 2;
        let mut packed = [0.0; 6];
        for i in 0..n {
            for j in 0..n {
                let base = (i * n + j) * per;
                for (k, v) in packed.iter_mut().enumerate().take(per) {
                    *v = self.a[base + k].evaluate(x)?;
                }
                for p in 0..m {
                    for q in 0..m {
                        out[((i * n + j) * m + p) * m + q] = packed[pq_index(m, p, q)];
                    }
                }
            }
        }
        Ok(())
    }

    /// The block `(p, q)` of coefficients, entry `(i, j) = a^{ij}_{pq}(x)`.
    pub fn a_pq_at(&self, x: &[f64], p: usize, q: usize) -> Result<SquareMatrix, EvalError> {
        let n = self.n;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = self.field(i, j, p, q).evaluate(x)?;
            }
        }
        Ok(out)
    }

    /// Quadratic-form matrix of order `nm`, `Q[(i,p),(j,q)] = a^{ij}_{pq}`.
    pub fn form_matrix_at(&self, x: &[f64]) -> Result<SquareMatrix, EvalError> {
        let (n, m) = (self.n, self.m());
        let mut vals = vec![0.0; n * n * m * m];
        self.principal_at(x, &mut vals)?;
        Ok(SquareMatrix::from_fn(n * m, |r, c| {
            let (i, p, j, q) = (r / m, r % m, c / m, c % m);
            vals[((i * n + j) * m + p) * m + q]
        }))
    }
}

/// Either kind of system.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemSpec {
    Isotropic(IsotropicSpec),
    Anisotropic(AnisotropicSpec),
}

impl SystemSpec {
    pub fn n(&self) -> usize {
        match self {
            SystemSpec::Isotropic(s) => s.n(),
            SystemSpec::Anisotropic(s) => s.n(),
        }
    }

    pub fn m(&self) -> usize {
        self.domain().dim()
    }

    pub fn domain(&self) -> &BoxDomain {
        match self {
            SystemSpec::Isotropic(s) => s.domain(),
            SystemSpec::Anisotropic(s) => s.domain(),
        }
    }

    pub fn lower(&self) -> &LowerOrderData {
        match self {
            SystemSpec::Isotropic(s) => s.lower(),
            SystemSpec::Anisotropic(s) => s.lower(),
        }
    }

    pub fn with_lower(self, lower: LowerOrderData) -> Result<Self, ModelError> {
        Ok(match self {
            SystemSpec::Isotropic(s) => SystemSpec::Isotropic(s.with_lower(lower)?),
            SystemSpec::Anisotropic(s) => SystemSpec::Anisotropic(s.with_lower(lower)?),
        })
    }

    /// `a^{ij}_{pq}(x)` in the layout of [`AnisotropicSpec::principal_at`];
    /// isotropic systems use `a^{ij} delta_pq`.
    pub fn principal_at(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        match self {
            SystemSpec::Anisotropic(s) => s.principal_at(x, out),
            SystemSpec::Isotropic(s) => {
                let (n, m) = (s.n(), s.m());
                for i in 0..n {
                    for j in 0..n {
                        let v = s.a[i][j].evaluate(x)?;
                        for p in 0..m {
                            for q in 0..m {
                                out[((i * n + j) * m + p) * m + q] = if p == q { v } else { 0.0 };
                            }
                        }
                    }
                }
                Ok(())
            }
        }
    }
}

impl From<IsotropicSpec> for SystemSpec {
    fn from(s: IsotropicSpec) -> Self {
        SystemSpec::Isotropic(s)
    }
}

impl From<AnisotropicSpec> for SystemSpec {
    fn from(s: AnisotropicSpec) -> Self {
        SystemSpec::Anisotropic(s)
    }
}
