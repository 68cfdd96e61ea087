//! Uniform tensor meshes on boxes and Galerkin assembly of the weak form with
//! multilinear (Q1) elements.
//!
//! Nodes are numbered lexicographically with `x1` fastest. Unknown `(i, P)`
//! (component `i`, node `P`) has global index `i * nodes + P`. Within an
//! element, local node `a` has offset bits `a_k = (a >> k) & 1` per axis.

use serde::Serialize;
use thiserror::Error;

use crate::exprlang::{CoefficientField, EvalError};
use crate::krylov::{solve_auto, CsrMatrix, SolveStats, SolverConfig, SolverError};
use crate::sampling::{gauss_legendre, BoxDomain};
use crate::sysmodel::SystemSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FemError {
    #[error("mesh needs at least 2 cells per axis, axis {axis} has {cells}")]
    TooFewCells { axis: usize, cells: usize },
    #[error("meshes support dimension 1 or 2, got {0}")]
    UnsupportedDimension(usize),
    #[error("{0} cell counts given for a {1}-dimensional domain")]
    CellsLength(usize, usize),
    #[error("spec has dimension {spec} but the mesh has dimension {mesh}")]
    DimensionMismatch { spec: usize, mesh: usize },
    #[error("element {element}: {source}")]
    Eval {
        element: usize,
        #[source]
        source: EvalError,
    },
    #[error("boundary data: {0}")]
    Boundary(EvalError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    domain: BoxDomain,
    cells: Vec<usize>,
    h: Vec<f64>,
    coords: Vec<Vec<f64>>,
    boundary: Vec<usize>,
    is_boundary: Vec<bool>,
}

pub fn build_mesh(domain: &BoxDomain, cells: &[usize]) -> Result<Mesh, FemError> {
    let m = domain.dim();
    if !(1..=2).contains(&m) {
        return Err(FemError::UnsupportedDimension(m));
    }
    if cells.len() != m {
        return Err(FemError::CellsLength(cells.len(), m));
    }
    if let Some((axis, &c)) = cells.iter().enumerate().find(|(_, &c)| c < 2) {
        return Err(FemError::TooFewCells { axis, cells: c });
    }
    let h: Vec<f64> = (0..m).map(|k| domain.width(k) / cells[k] as f64).collect();
    let per_axis: Vec<usize> = cells.iter().map(|c| c + 1).collect();
    let count: usize = per_axis.iter().product();
    let mut coords = Vec::with_capacity(count);
    let mut is_boundary = Vec::with_capacity(count);
    for p in 0..count {
        let mut rest = p;
        let mut x = Vec::with_capacity(m);
        let mut on_face = false;
        for k in 0..m {
            let idx = rest % per_axis[k];
            rest /= per_axis[k];
            // exact face coordinates
            x.push(if idx == cells[k] { domain.hi()[k] } else { domain.lo()[k] + idx as f64 * h[k] });
            on_face |= idx == 0 || idx == cells[k];
        }
        coords.push(x);
        is_boundary.push(on_face);
    }
    let boundary = (0..count).filter(|&p| is_boundary[p]).collect();
    Ok(Mesh { domain: domain.clone(), cells: cells.to_vec(), h, coords, boundary, is_boundary })
}

impl Mesh {
    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Cell width along `axis`.
    pub fn h(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    pub fn max_h(&self) -> f64 {
        self.h.iter().copied().fold(0.0, f64::max)
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn node(&self, p: usize) -> &[f64] {
        &self.coords[p]
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary
    }

    pub fn is_boundary(&self, p: usize) -> bool {
        self.is_boundary[p]
    }

    pub fn element_count(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn nodes_per_element(&self) -> usize {
        1 << self.dim()
    }

    /// Lower-corner coordinates of element `e`.
    pub fn element_origin(&self, e: usize) -> Vec<f64> {
        self.coords[self.element_nodes(e)[0]].clone()
    }

    /// Global node indices of element `e` in local order.
    pub fn element_nodes(&self, e: usize) -> Vec<usize> {
        let m = self.dim();
        let mut corner = Vec::with_capacity(m);
        let mut rest = e;
        for k in 0..m {
            corner.push(rest % self.cells[k]);
            rest /= self.cells[k];
        }
        (0..1usize << m)
            .map(|a| {
                let mut idx = 0;
                let mut stride = 1;
                for k in 0..m {
                    idx += (corner[k] + ((a >> k) & 1)) * stride;
                    stride *= self.cells[k] + 1;
                }
                idx
            })
            .collect()
    }
}

/// Q1 shape values and physical gradients at reference point `xi` in
/// `[0,1]^m` on a cell with widths `h`. `grads[a * m + k] = d phi_a / d x_k`.
pub fn shape_functions(xi: &[f64], h: &[f64], values: &mut [f64], grads: &mut [f64]) {
    let m = xi.len();
    for a in 0..1usize << m {
        let mut v = 1.0;
        for k in 0..m {
            v *= if (a >> k) & 1 == 1 { xi[k] } else { 1.0 - xi[k] };
        }
        values[a] = v;
        for k in 0..m {
            let mut g = if (a >> k) & 1 == 1 { 1.0 } else { -1.0 } / h[k];
            for l in 0..m {
                if l != k {
                    g *= if (a >> l) & 1 == 1 { xi[l] } else { 1.0 - xi[l] };
                }
            }
            grads[a * m + k] = g;
        }
    }
}

/// Tensor Gauss rule on `[0,1]^m`: reference points and weights.
pub fn reference_quadrature(m: usize, order: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (nodes, weights) = gauss_legendre(order);
    let count = order.pow(m as u32);
    let mut pts = Vec::with_capacity(count);
    let mut wts = Vec::with_capacity(count);
    for idx in 0..count {
        let mut rest = idx;
        let mut xi = Vec::with_capacity(m);
        let mut w = 1.0;
        for _ in 0..m {
            let k = rest % order;
            rest /= order;
            xi.push(0.5 * (nodes[k] + 1.0));
            w *= 0.5 * weights[k];
        }
        pts.push(xi);
        wts.push(w);
    }
    (pts, wts)
}

/// Assembled linear system of order `n * nodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSystem {
    pub n: usize,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Prescribed values on constrained unknowns, 0 elsewhere.
    pub lift: Vec<f64>,
    /// Unconstrained unknowns, increasing.
    pub free: Vec<usize>,
}

impl AssembledSystem {
    pub fn order(&self) -> usize {
        self.rhs.len()
    }
}

/// Values of the load at a point: `source[i]` pairs with `phi`, `flux[i * m + q]`
/// with `d_q phi`.
pub trait Load {
    fn eval(&self, x: &[f64], source: &mut [f64], flux: &mut [f64]) -> Result<(), EvalError>;

    fn has_flux(&self) -> bool {
        true
    }
}

/// The spec's right-hand sides `f^i`, no flux.
pub struct FieldLoad<'a>(pub &'a [CoefficientField]);

impl Load for FieldLoad<'_> {
    fn eval(&self, x: &[f64], source: &mut [f64], _flux: &mut [f64]) -> Result<(), EvalError> {
        for (s, f) in source.iter_mut().zip(self.0) {
            *s = f.evaluate(x)?;
        }
        Ok(())
    }

    fn has_flux(&self) -> bool {
        false
    }
}

/// Assembly with the spec's own right-hand side `f`.
pub fn assemble(spec: &SystemSpec, mesh: &Mesh, quad_order: usize) -> Result<AssembledSystem, FemError> {
    assemble_with_load(spec, mesh, quad_order, &FieldLoad(spec.lower().f()))
}

/// Galerkin assembly; rhs entry `(i, P) = int source^i phi_P + flux^i . grad phi_P`.
pub fn assemble_with_load(
    spec: &SystemSpec,
    mesh: &Mesh,
    quad_order: usize,
    load: &dyn Load,
) -> Result<AssembledSystem, FemError> {
    let (n, m) = (spec.n(), spec.m());
    if mesh.dim() != m {
        return Err(FemError::DimensionMismatch { spec: m, mesh: mesh.dim() });
    }
    let lower = spec.lower();
    let convection = lower.has_convection();
    let reaction = !lower.d().iter().flatten().all(CoefficientField::is_zero_constant);
    let nodes = mesh.node_count();
    let k = mesh.nodes_per_element();
    let local = n * k;
    let (ref_pts, ref_wts) = reference_quadrature(m, quad_order);
    let jac: f64 = (0..m).map(|a| mesh.h(a)).product();

    let mut triplets = Vec::with_capacity(mesh.element_count() * local * local);
    let mut rhs = vec![0.0; n * nodes];
    let mut a_buf = vec![0.0; n * n * m * m];
    let mut c_buf = vec![0.0; n * n * m];
    let mut d_buf = vec![0.0; n * n];
    let mut src = vec![0.0; n];
    let mut flux = vec![0.0; n * m];
    let mut phi = vec![0.0; k];
    let mut grad = vec![0.0; k * m];
    let mut ke = vec![0.0; local * local];
    let mut fe = vec![0.0; local];
    let mut x = vec![0.0; m];

    for e in 0..mesh.element_count() {
        let ids = mesh.element_nodes(e);
        let origin = mesh.node(ids[0]).to_vec();
        ke.iter_mut().for_each(|v| *v = 0.0);
        fe.iter_mut().for_each(|v| *v = 0.0);
        for (xi, w_ref) in ref_pts.iter().zip(&ref_wts) {
            for a in 0..m {
                x[a] = origin[a] + xi[a] * mesh.h(a);
            }
            let w = w_ref * jac;
            let wrap = |source| FemError::Eval { element: e, source };
            spec.principal_at(&x, &mut a_buf).map_err(wrap)?;
            if convection {
                lower.c_at(&x, &mut c_buf).map_err(wrap)?;
            }
            if reaction {
                let d = lower.d_matrix_at(&x).map_err(wrap)?;
                d_buf.copy_from_slice(d.entries());
            }
            load.eval(&x, &mut src, &mut flux).map_err(wrap)?;
            shape_functions(xi, &mesh.h, &mut phi, &mut grad);

            for i in 0..n {
                for pl in 0..k {
                    let row = i * k + pl;
                    let mut f = src[i] * phi[pl];
                    if load.has_flux() {
                        for q in 0..m {
                            f += flux[i * m + q] * grad[pl * m + q];
                        }
                    }
                    fe[row] += w * f;
                    for j in 0..n {
                        let a_ij = &a_buf[(i * n + j) * m * m..(i * n + j + 1) * m * m];
                        for ql in 0..k {
                            let mut v = 0.0;
                            for p in 0..m {
                                let gq = grad[ql * m + p];
                                for q in 0..m {
                                    v += a_ij[p * m + q] * gq * grad[pl * m + q];
                                }
                            }
                            if convection {
                                for p in 0..m {
                                    v += c_buf[(i * n + j) * m + p] * grad[ql * m + p] * phi[pl];
                                }
                            }
                            if reaction {
                                v += d_buf[i * n + j] * phi[ql] * phi[pl];
                            }
                            ke[row * local + j * k + ql] += w * v;
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for pl in 0..k {
                let row = i * nodes + ids[pl];
                rhs[row] += fe[i * k + pl];
                for j in 0..n {
                    for ql in 0..k {
                        triplets.push((row, j * nodes + ids[ql], ke[(i * k + pl) * local + j * k + ql]));
                    }
                }
            }
        }
    }
    let order = n * nodes;
    Ok(AssembledSystem {
        n,
        matrix: CsrMatrix::from_triplets(order, triplets),
        rhs,
        lift: vec![0.0; order],
        free: (0..order).collect(),
    })
}

/// Nodal interpolant of `g` on the boundary, laid out like the unknowns.
pub fn boundary_values(g: &[CoefficientField], mesh: &Mesh) -> Result<Vec<f64>, FemError> {
    let nodes = mesh.node_count();
    let mut out = vec![0.0; g.len() * nodes];
    for (i, gi) in g.iter().enumerate() {
        for &p in mesh.boundary_nodes() {
            out[i * nodes + p] = gi.evaluate(mesh.node(p)).map_err(FemError::Boundary)?;
        }
    }
    Ok(out)
}

/// Fixes boundary unknowns to the nodal interpolant of `g`: constrained rows
/// become identity rows with the prescribed value as rhs, and constrained
/// columns move to the rhs of the free rows.
pub fn apply_dirichlet(sys: &AssembledSystem, g: &[CoefficientField], mesh: &Mesh) -> Result<AssembledSystem, FemError> {
    let values = boundary_values(g, mesh)?;
    Ok(apply_dirichlet_values(sys, &values, mesh))
}

pub fn apply_dirichlet_values(sys: &AssembledSystem, values: &[f64], mesh: &Mesh) -> AssembledSystem {
    let nodes = mesh.node_count();
    let order = sys.order();
    let constrained: Vec<bool> = (0..order).map(|r| mesh.is_boundary(r % nodes)).collect();
    let mut lift = vec![0.0; order];
    for r in 0..order {
        if constrained[r] {
            lift[r] = values[r];
        }
    }
    let mut triplets = Vec::with_capacity(sys.matrix.nnz());
    let mut rhs = sys.rhs.clone();
    for r in 0..order {
        if constrained[r] {
            triplets.push((r, r, 1.0));
            rhs[r] = lift[r];
            continue;
        }
        let (cols, vals) = sys.matrix.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            if constrained[c] {
                rhs[r] -= v * lift[c];
            } else {
                triplets.push((r, c, v));
            }
        }
    }
    AssembledSystem {
        n: sys.n,
        matrix: CsrMatrix::from_triplets(order, triplets),
        rhs,
        lift,
        free: (0..order).filter(|&r| !constrained[r]).collect(),
    }
}

/// Nodal values of all components, `values[i * nodes + P]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteSolution {
    pub n: usize,
    pub values: Vec<f64>,
    #[serde(skip)]
    pub mesh: Mesh,
    pub stats: SolveStats,
}

impl DiscreteSolution {
    pub fn value(&self, i: usize, p: usize) -> f64 {
        self.values[i * self.mesh.node_count() + p]
    }

    /// `(y^1(P), ..., y^n(P))`.
    pub fn node_vector(&self, p: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i, p)).collect()
    }
}

/// Solves a Dirichlet-constrained system; boundary unknowns are reset to the
/// prescribed values exactly.
pub fn solve_system(sys: &AssembledSystem, mesh: &Mesh, config: &SolverConfig) -> Result<DiscreteSolution, FemError> {
    let (mut values, stats) = solve_auto(&sys.matrix, &sys.rhs, config)?;
    let nodes = mesh.node_count();
    for (r, v) in values.iter_mut().enumerate() {
        if mesh.is_boundary(r % nodes) {
            *v = sys.lift[r];
        }
    }
    Ok(DiscreteSolution { n: sys.n, values, mesh: mesh.clone(), stats })
}

/// Assemble, constrain with the spec's `g`, and solve.
pub fn solve(spec: &SystemSpec, mesh: &Mesh, quad_order: usize, config: &SolverConfig) -> Result<DiscreteSolution, FemError> {
    let sys = assemble(spec, mesh, quad_order)?;
    let sys = apply_dirichlet(&sys, spec.lower().g(), mesh)?;
    solve_system(&sys, mesh, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::{IsotropicSpec, LowerOrderData};

    fn cf(s: &str, m: usize) -> CoefficientField {
        CoefficientField::parse(s, m).unwrap()
    }

    fn laplace(m: usize, g: &str) -> SystemSpec {
        let d = BoxDomain::unit(m).unwrap();
        let lower = LowerOrderData::zero(1, m).with_g(vec![cf(g, m)]).unwrap();
        IsotropicSpec::new(vec![vec![cf("1", m)]], lower, d).unwrap().into()
    }

    #[test]
    fn mesh_examples() {
        let mesh = build_mesh(&BoxDomain::unit(1).unwrap(), &[4]).unwrap();
        assert_eq!(mesh.node_count(), 5);
        assert_eq!(mesh.boundary_nodes(), &[0, 4]);
        let mesh = build_mesh(&BoxDomain::unit(2).unwrap(), &[2, 2]).unwrap();
        assert_eq!(mesh.node_count(), 9);
        assert_eq!(mesh.boundary_nodes().len(), 8);
        assert_eq!(mesh.element_nodes(3), vec![4, 5, 7, 8]);
        assert!(matches!(
            build_mesh(&BoxDomain::unit(2).unwrap(), &[1, 2]),
            Err(FemError::TooFewCells { axis: 0, cells: 1 })
        ));
    }

    #[test]
    fn one_dimensional_stiffness_row() {
        let mesh = build_mesh(&BoxDomain::unit(1).unwrap(), &[2]).unwrap();
        let sys = assemble(&laplace(1, "0"), &mesh, 2).unwrap();
        let row: Vec<f64> = (0..3).map(|c| sys.matrix.get(1, c)).collect();
        for (got, want) in row.iter().zip([-2.0, 4.0, -2.0]) {
            assert!((got - want).abs() < 1e-14, "{row:?}");
        }
    }

    #[test]
    fn single_cell_q1_stiffness() {
        // on [0,2]^2 with 2x2 cells each cell is a unit square, and corner
        // node 0 touches a single element
        let big = BoxDomain::new(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        let spec: SystemSpec =
            IsotropicSpec::new(vec![vec![cf("1", 2)]], LowerOrderData::zero(1, 2), big.clone()).unwrap().into();
        let mesh = build_mesh(&big, &[2, 2]).unwrap();
        let sys = assemble(&spec, &mesh, 2).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-15;
        assert!(close(sys.matrix.get(0, 0), 2.0 / 3.0));
        assert!(close(sys.matrix.get(0, 1), -1.0 / 6.0));
        assert!(close(sys.matrix.get(0, 3), -1.0 / 6.0));
        assert!(close(sys.matrix.get(0, 4), -1.0 / 3.0));
    }

    #[test]
    fn linear_data_is_reproduced_exactly() {
        let mesh = build_mesh(&BoxDomain::unit(1).unwrap(), &[8]).unwrap();
        let sol = solve(&laplace(1, "x1"), &mesh, 2, &SolverConfig::default()).unwrap();
        for p in 0..mesh.node_count() {
            assert!((sol.value(0, p) - mesh.node(p)[0]).abs() < 1e-14);
        }
        let mesh = build_mesh(&BoxDomain::unit(2).unwrap(), &[6, 6]).unwrap();
        let sol = solve(&laplace(2, "x1"), &mesh, 2, &SolverConfig::default()).unwrap();
        for p in 0..mesh.node_count() {
            assert!((sol.value(0, p) - mesh.node(p)[0]).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_boundary_data_leaves_free_rhs() {
        let mesh = build_mesh(&BoxDomain::unit(2).unwrap(), &[4, 4]).unwrap();
        let d = BoxDomain::unit(2).unwrap();
        let lower = LowerOrderData::zero(1, 2).with_f(vec![cf("1 + x1", 2)]).unwrap();
        let spec: SystemSpec = IsotropicSpec::new(vec![vec![cf("1", 2)]], lower, d).unwrap().into();
        let raw = assemble(&spec, &mesh, 2).unwrap();
        let sys = apply_dirichlet(&raw, spec.lower().g(), &mesh).unwrap();
        for &r in &sys.free {
            assert_eq!(sys.rhs[r], raw.rhs[r]);
        }
        for &p in mesh.boundary_nodes() {
            assert_eq!(sys.rhs[p], 0.0);
            assert_eq!(sys.matrix.row(p), (&[p][..], &[1.0][..]));
        }
    }

    #[test]
    fn decoupled_system_is_block_diagonal() {
        let d = BoxDomain::unit(2).unwrap();
        let a = vec![vec![cf("1", 2), cf("0", 2)], vec![cf("0", 2), cf("1", 2)]];
        let spec: SystemSpec = IsotropicSpec::new(a, LowerOrderData::zero(2, 2), d.clone()).unwrap().into();
        let mesh = build_mesh(&d, &[3, 3]).unwrap();
        let sys = assemble(&spec, &mesh, 2).unwrap();
        let nodes = mesh.node_count();
        for r in 0..nodes {
            for c in 0..nodes {
                assert_eq!(sys.matrix.get(r, c), sys.matrix.get(r + nodes, c + nodes));
                assert_eq!(sys.matrix.get(r, c + nodes), 0.0);
            }
        }
    }
}
