//! Desk-scale audits of discrete solutions: sup norms, refinement stability,
//! manufactured-solution convergence and exact homogeneity of the solve.

use serde::Serialize;

use crate::exprlang::{fd_gradient, CoefficientField, EvalError, Expr};
use crate::femgrid::{
    apply_dirichlet, assemble, assemble_with_load, build_mesh, reference_quadrature, shape_functions,
    solve_system, DiscreteSolution, FemError, Load, Mesh,
};
use crate::krylov::{SolveStats, SolverConfig};
use crate::sysmodel::{ModelError, SystemSpec};

/// Quadrature points per axis for error integrals.
pub const ERROR_QUAD_ORDER: usize = 4;
/// Central-difference step for derivatives of exact fields.
pub const EXACT_FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AuditError {
    #[error("need at least two increasing levels, got {0:?}")]
    Levels(Vec<usize>),
    #[error("{expected} exact fields required, got {found}")]
    ExactCount { expected: usize, found: usize },
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Nodal maxima of the Euclidean norm `|y(P)|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupNorms {
    pub sup_interior: f64,
    pub sup_boundary: f64,
    pub argmax: Vec<f64>,
}

pub fn sup_norms(sol: &DiscreteSolution) -> SupNorms {
    let mesh = &sol.mesh;
    let mut out = SupNorms { sup_interior: 0.0, sup_boundary: 0.0, argmax: mesh.node(0).to_vec() };
    for p in 0..mesh.node_count() {
        let norm = sol.node_vector(p).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > out.sup_interior {
            out.sup_interior = norm;
            out.argmax = mesh.node(p).to_vec();
        }
        if mesh.is_boundary(p) {
            out.sup_boundary = out.sup_boundary.max(norm);
        }
    }
    out
}

/// Runs `visit(x, w, values, grads)` at every quadrature point, where
/// `values[i]` and `grads[i * m + k]` are the discrete solution and its gradient.
fn for_each_point(
    sol: &DiscreteSolution,
    order: usize,
    mut visit: impl FnMut(&[f64], f64, &[f64], &[f64]) -> Result<(), EvalError>,
) -> Result<(), EvalError> {
    let mesh = &sol.mesh;
    let (n, m) = (sol.n, mesh.dim());
    let k = mesh.nodes_per_element();
    let (pts, wts) = reference_quadrature(m, order);
    let h: Vec<f64> = (0..m).map(|a| mesh.h(a)).collect();
    let jac: f64 = h.iter().product();
    let mut phi = vec![0.0; k];
    let mut grad = vec![0.0; k * m];
    let mut vals = vec![0.0; n];
    let mut grads = vec![0.0; n * m];
    let mut x = vec![0.0; m];
    for e in 0..mesh.element_count() {
        let ids = mesh.element_nodes(e);
        let origin = mesh.node(ids[0]);
        for (xi, w) in pts.iter().zip(&wts) {
            shape_functions(xi, &h, &mut phi, &mut grad);
            for a in 0..m {
                x[a] = origin[a] + xi[a] * h[a];
            }
            vals.iter_mut().for_each(|v| *v = 0.0);
            grads.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..n {
                for (a, &node) in ids.iter().enumerate() {
                    let y = sol.value(i, node);
                    vals[i] += y * phi[a];
                    for q in 0..m {
                        grads[i * m + q] += y * grad[a * m + q];
                    }
                }
            }
            visit(&x, w * jac, &vals, &grads)?;
        }
    }
    Ok(())
}

/// `(sum_i int |grad y_h^i|^2)^(1/2)`, exact for Q1 with two points per axis.
pub fn h1_seminorm(sol: &DiscreteSolution) -> f64 {
    let mut acc = 0.0;
    for_each_point(sol, 2, |_, w, _, g| {
        acc += w * g.iter().map(|v| v * v).sum::<f64>();
        Ok(())
    })
    .expect("no fallible evaluation");
    acc.sqrt()
}

/// `(L2 error, H1 seminorm error)` against exact fields, with exact
/// gradients by central differences.
pub fn solution_errors(sol: &DiscreteSolution, exact: &[CoefficientField]) -> Result<(f64, f64), EvalError> {
    let domain = sol.mesh.domain().clone();
    let m = domain.dim();
    let (mut l2, mut h1) = (0.0, 0.0);
    for_each_point(sol, ERROR_QUAD_ORDER, |x, w, vals, grads| {
        for (i, u) in exact.iter().enumerate() {
            let d = vals[i] - u.evaluate(x)?;
            l2 += w * d * d;
            let g = fd_gradient(&|y: &[f64]| u.evaluate(y), x, domain.lo(), domain.hi(), EXACT_FD_STEP)?;
            for q in 0..m {
                let d = grads[i * m + q] - g[q];
                h1 += w * d * d;
            }
        }
        Ok(())
    })?;
    Ok((l2.sqrt(), h1.sqrt()))
}

/// Load that makes the exact fields solve the weak form: for each equation
/// `i`, flux `sum_j a^{ij}_pq d_p u^j` against `d_q phi` and source
/// `sum_j C^{ij} . grad u^j + D^i . u` against `phi`.
pub struct ManufacturedLoad<'a> {
    spec: &'a SystemSpec,
    exact: &'a [CoefficientField],
}

impl<'a> ManufacturedLoad<'a> {
    pub fn new(spec: &'a SystemSpec, exact: &'a [CoefficientField]) -> Self {
        Self { spec, exact }
    }
}

impl Load for ManufacturedLoad<'_> {
    fn eval(&self, x: &[f64], source: &mut [f64], flux: &mut [f64]) -> Result<(), EvalError> {
        let (n, m) = (self.spec.n(), self.spec.m());
        let domain = self.spec.domain();
        let lower = self.spec.lower();
        let mut u = Vec::with_capacity(n);
        let mut du = Vec::with_capacity(n * m);
        for e in self.exact {
            u.push(e.evaluate(x)?);
            du.extend(fd_gradient(&|y: &[f64]| e.evaluate(y), x, domain.lo(), domain.hi(), EXACT_FD_STEP)?);
        }
        let mut a = vec![0.0; n * n * m * m];
        self.spec.principal_at(x, &mut a)?;
        let mut c = vec![0.0; n * n * m];
        lower.c_at(x, &mut c)?;
        let d = lower.d_matrix_at(x)?;
        for i in 0..n {
            let mut s = 0.0;
            for q in 0..m {
                let mut f = 0.0;
                for j in 0..n {
                    for p in 0..m {
                        f += a[((i * n + j) * m + p) * m + q] * du[j * m + p];
                    }
                }
                flux[i * m + q] = f;
            }
            for j in 0..n {
                for p in 0..m {
                    s += c[(i * n + j) * m + p] * du[j * m + p];
                }
                s += d[(i, j)] * u[j];
            }
            source[i] = s;
        }
        Ok(())
    }
}

/// One row of a study table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRow {
    pub level: usize,
    pub h: f64,
    pub cells: usize,
    pub sup_interior: Option<f64>,
    pub sup_boundary: Option<f64>,
    pub h1_seminorm: Option<f64>,
    pub l2_error: Option<f64>,
    pub h1_error: Option<f64>,
    pub rate_l2: Option<f64>,
    pub rate_h1: Option<f64>,
    pub solver: Option<SolveStats>,
    pub error: Option<String>,
}

impl LevelRow {
    fn new(level: usize, mesh: &Mesh) -> Self {
        Self {
            level,
            h: mesh.max_h(),
            cells: mesh.cells()[0],
            sup_interior: None,
            sup_boundary: None,
            h1_seminorm: None,
            l2_error: None,
            h1_error: None,
            rate_l2: None,
            rate_h1: None,
            solver: None,
            error: None,
        }
    }

    fn fill(&mut self, sol: &DiscreteSolution) {
        let sup = sup_norms(sol);
        self.sup_interior = Some(sup.sup_interior);
        self.sup_boundary = Some(sup.sup_boundary);
        self.h1_seminorm = Some(h1_seminorm(sol));
        self.solver = Some(sol.stats);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub levels: Vec<LevelRow>,
    /// `|sup(L) - sup(L-1)| / sup(L)` over the last two levels.
    pub relative_change: Option<f64>,
}

pub const CSV_COLUMNS: [&str; 8] = ["level", "h", "cells", "sup_interior", "L2_error", "H1_error", "rate_L2", "rate_H1"];

/// Fixed 17-significant-digit rendering used by every report.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl AuditReport {
    fn from_rows(mut levels: Vec<LevelRow>) -> Self {
        for k in 1..levels.len() {
            let (prev, cur) = (&levels[k - 1], &levels[k]);
            let rate = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).ln() / (prev.h / cur.h).ln()),
                _ => None,
            };
            let (r2, r1) = (rate(prev.l2_error, cur.l2_error), rate(prev.h1_error, cur.h1_error));
            levels[k].rate_l2 = r2;
            levels[k].rate_h1 = r1;
        }
        let relative_change = match levels.as_slice() {
            [.., a, b] => match (a.sup_interior, b.sup_interior) {
                (Some(a), Some(b)) if b != 0.0 => Some((b - a).abs() / b.abs()),
                (Some(a), Some(b)) if a == b => Some(0.0),
                _ => None,
            },
            _ => None,
        };
        Self { levels, relative_change }
    }

    pub fn finest(&self) -> Option<&LevelRow> {
        self.levels.last()
    }

    pub fn all_solved(&self) -> bool {
        self.levels.iter().all(|r| r.error.is_none())
    }

    /// The study table with the columns of [`CSV_COLUMNS`]; absent values
    /// are empty cells.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).expect("in-memory write");
        let opt = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
        for r in &self.levels {
            w.write_record([
                r.level.to_string(),
                format_f64(r.h),
                r.cells.to_string(),
                opt(r.sup_interior),
                opt(r.l2_error),
                opt(r.h1_error),
                opt(r.rate_l2),
                opt(r.rate_h1),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }
}

/// Shared knobs of the studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyOptions {
    pub quad_order: usize,
    pub solver: SolverConfig,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self { quad_order: 2, solver: SolverConfig::default() }
    }
}

fn check_levels(levels: &[usize]) -> Result<(), AuditError> {
    if levels.len() < 2 || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AuditError::Levels(levels.to_vec()));
    }
    Ok(())
}

fn mesh_for(spec: &SystemSpec, cells: usize) -> Result<Mesh, FemError> {
    build_mesh(spec.domain(), &vec![cells; spec.m()])
}

/// Solves at each level (cells per axis). Solver failures are recorded in
/// the row, not propagated.
pub fn refinement_study(spec: &SystemSpec, levels: &[usize], opts: &StudyOptions) -> Result<AuditReport, AuditError> {
    check_levels(levels)?;
    let mut rows = Vec::with_capacity(levels.len());
    for (k, &cells) in levels.iter().enumerate() {
        let mesh = mesh_for(spec, cells)?;
        let mut row = LevelRow::new(k, &mesh);
        let solved = assemble(spec, &mesh, opts.quad_order)
            .and_then(|sys| apply_dirichlet(&sys, spec.lower().g(), &mesh))
            .and_then(|sys| solve_system(&sys, &mesh, &opts.solver));
        match solved {
            Ok(sol) => row.fill(&sol),
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    Ok(AuditReport::from_rows(rows))
}

/// Solves with the load and boundary data manufactured from `exact`.
pub fn manufactured_solve(
    spec: &SystemSpec,
    exact: &[CoefficientField],
    mesh: &Mesh,
    opts: &StudyOptions,
) -> Result<DiscreteSolution, AuditError> {
    if exact.len() != spec.n() {
        return Err(AuditError::ExactCount { expected: spec.n(), found: exact.len() });
    }
    let load = ManufacturedLoad::new(spec, exact);
    let sys = assemble_with_load(spec, mesh, opts.quad_order, &load)?;
    let sys = apply_dirichlet(&sys, exact, mesh)?;
    Ok(solve_system(&sys, mesh, &opts.solver)?)
}

/// L2 and H1-seminorm errors per level and observed rates
/// `log(e_{k-1}/e_k) / log(h_{k-1}/h_k)`.
pub fn manufactured_convergence(
    spec: &SystemSpec,
    exact: &[CoefficientField],
    levels: &[usize],
    opts: &StudyOptions,
) -> Result<AuditReport, AuditError> {
    check_levels(levels)?;
    let mut rows = Vec::with_capacity(levels.len());
    for (k, &cells) in levels.iter().enumerate() {
        let mesh = mesh_for(spec, cells)?;
        let mut row = LevelRow::new(k, &mesh);
        match manufactured_solve(spec, exact, &mesh, opts) {
            Ok(sol) => {
                row.fill(&sol);
                let (l2, h1) = solution_errors(&sol, exact)?;
                row.l2_error = Some(l2);
                row.h1_error = Some(h1);
            }
            Err(AuditError::Fem(e)) => row.error = Some(e.to_string()),
            Err(e) => return Err(e),
        }
        rows.push(row);
    }
    Ok(AuditReport::from_rows(rows))
}

fn scale_fields(fields: &[CoefficientField], alpha: f64) -> Result<Vec<CoefficientField>, AuditError> {
    fields
        .iter()
        .map(|f| {
            CoefficientField::from_expr(Expr::mul(Expr::num(alpha), f.tree().clone()), f.dim())
                .map_err(|e| AuditError::Model(e.into()))
        })
        .collect()
}

/// `max |solve(alpha f, alpha g) - alpha solve(f, g)|` over all nodal values.
pub fn linearity_check(spec: &SystemSpec, alpha: f64, mesh: &Mesh, opts: &StudyOptions) -> Result<f64, AuditError> {
    let lower = spec.lower();
    let scaled_lower = lower.clone().with_f(scale_fields(lower.f(), alpha)?)?.with_g(scale_fields(lower.g(), alpha)?)?;
    let scaled = spec.clone().with_lower(scaled_lower)?;
    let solve = |s: &SystemSpec| -> Result<DiscreteSolution, AuditError> {
        let sys = assemble(s, mesh, opts.quad_order)?;
        let sys = apply_dirichlet(&sys, s.lower().g(), mesh)?;
        Ok(solve_system(&sys, mesh, &opts.solver)?)
    };
    let base = solve(spec)?;
    let other = solve(&scaled)?;
    Ok(base.values.iter().zip(&other.values).fold(0.0, |m, (y, ya)| m.max((ya - alpha * y).abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::femgrid::solve;
    use crate::sampling::BoxDomain;
    use crate::sysmodel::{IsotropicSpec, LowerOrderData};

    fn cf(s: &str) -> CoefficientField {
        CoefficientField::parse(s, 2).unwrap()
    }

    fn laplace(n: usize, f: &[&str], g: &[&str]) -> SystemSpec {
        let d = BoxDomain::unit(2).unwrap();
        let a = (0..n).map(|i| (0..n).map(|j| cf(if i == j { "1" } else { "0" })).collect()).collect();
        let lower = LowerOrderData::zero(n, 2)
            .with_f(f.iter().map(|s| cf(s)).collect())
            .unwrap()
            .with_g(g.iter().map(|s| cf(s)).collect())
            .unwrap();
        IsotropicSpec::new(a, lower, d).unwrap().into()
    }

    fn solved(spec: &SystemSpec, cells: usize) -> DiscreteSolution {
        let mesh = build_mesh(spec.domain(), &[cells, cells]).unwrap();
        solve(spec, &mesh, 2, &SolverConfig::default()).unwrap()
    }

    #[test]
    fn sup_norm_examples() {
        let s = sup_norms(&solved(&laplace(1, &["0"], &["0"]), 4));
        assert_eq!((s.sup_interior, s.sup_boundary), (0.0, 0.0));
        let s = sup_norms(&solved(&laplace(1, &["0"], &["x1"]), 4));
        assert_eq!(s.sup_interior, 1.0);
        assert_eq!(s.argmax[0], 1.0);
        let s = sup_norms(&solved(&laplace(2, &["0", "0"], &["x1", "x2"]), 4));
        assert_eq!(s.sup_interior, 2f64.sqrt());
        assert_eq!(s.argmax, vec![1.0, 1.0]);
    }

    #[test]
    fn h1_seminorm_of_linear_field() {
        // |grad (x1 + 2 x2)|^2 = 5 on the unit square
        let sol = solved(&laplace(1, &["0"], &["x1 + 2*x2"]), 4);
        assert!((h1_seminorm(&sol) - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn refinement_of_exact_data() {
        let report = refinement_study(&laplace(1, &["0"], &["x1"]), &[4, 8], &StudyOptions::default()).unwrap();
        assert_eq!(report.relative_change, Some(0.0));
        assert!(report.levels.iter().all(|r| r.sup_interior == Some(1.0)));
        let csv = report.to_csv();
        assert!(csv.starts_with("level,h,cells,sup_interior,L2_error,H1_error,rate_L2,rate_H1\n"));
        assert_eq!(csv.lines().count(), 3);
        assert!(refinement_study(&laplace(1, &["0"], &["x1"]), &[8, 4], &StudyOptions::default()).is_err());
    }

    #[test]
    fn manufactured_linear_solution_is_exact() {
        let spec = laplace(1, &["0"], &["0"]);
        let exact = [cf("1 + x1 - 0.5*x2")];
        let report = manufactured_convergence(&spec, &exact, &[2, 4], &StudyOptions::default()).unwrap();
        for row in &report.levels {
            assert!(row.l2_error.unwrap() <= 1e-10, "{row:?}");
        }
    }

    #[test]
    fn linearity_examples() {
        let spec = laplace(1, &["1 + x1*x2"], &["sin(x1)"]);
        let mesh = build_mesh(spec.domain(), &[6, 6]).unwrap();
        let opts = StudyOptions::default();
        assert_eq!(linearity_check(&spec, 1.0, &mesh, &opts).unwrap(), 0.0);
        assert!(linearity_check(&spec, 2.0, &mesh, &opts).unwrap() <= 1e-12);
        assert!(linearity_check(&spec, 0.0, &mesh, &opts).unwrap() <= 1e-12);
    }
}
