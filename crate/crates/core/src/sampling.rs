//! Box domains, sample sets and Gauss-Legendre rules.
//!
//! Every pointwise certificate in this crate is a minimum or maximum over a
//! finite [`SampleSet`]. That is a desk-scale surrogate for "for all x in the
//! domain" and is reported as such.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("domain dimension must be 1, 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("lower and upper corners have different lengths ({lo} vs {hi})")]
    CornerMismatch { lo: usize, hi: usize },
    #[error("degenerate box along axis {axis}: [{lo}, {hi}]")]
    Degenerate { axis: usize, lo: f64, hi: f64 },
}

/// Axis-aligned box `[lo_0, hi_0] x ... x [lo_{m-1}, hi_{m-1}]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, DomainError> {
        if lo.len() != hi.len() {
            return Err(DomainError::CornerMismatch { lo: lo.len(), hi: hi.len() });
        }
        if lo.is_empty() || lo.len() > 3 {
            return Err(DomainError::BadDimension(lo.len()));
        }
        for (axis, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(DomainError::Degenerate { axis, lo: l, hi: h });
            }
        }
        Ok(Self { lo, hi })
    }

    /// The unit cube `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Result<Self, DomainError> {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim()).map(|k| self.width(k).powi(2)).sum::<f64>().sqrt()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.width(k)).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&l, &h))| v >= l - tol && v <= h + tol)
    }
}

/// A finite set of points in a [`BoxDomain`], stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    domain: BoxDomain,
    coords: Vec<f64>,
}

impl SampleSet {
    /// Points must lie in the domain; out-of-box points are dropped.
    pub fn from_points(domain: BoxDomain, points: &[Vec<f64>]) -> Self {
        let dim = domain.dim();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points.iter().filter(|p| domain.contains(p, 0.0)) {
            coords.extend_from_slice(p);
        }
        Self { domain, coords }
    }

    /// Uniform tensor lattice with `per_axis` points per axis, endpoints included.
    pub fn lattice(domain: &BoxDomain, per_axis: usize) -> Self {
        let per_axis = per_axis.max(1);
        let axes: Vec<Vec<f64>> = (0..domain.dim())
            .map(|k| {
                if per_axis == 1 {
                    vec![0.5 * (domain.lo[k] + domain.hi[k])]
                } else {
                    (0..per_axis)
                        .map(|i| domain.lo[k] + domain.width(k) * i as f64 / (per_axis - 1) as f64)
                        .collect()
                }
            })
            .collect();
        Self { domain: domain.clone(), coords: tensor_points(&axes) }
    }

    /// Tensor Gauss points of a uniform mesh with `cells[k]` cells along axis `k`.
    pub fn gauss_points(domain: &BoxDomain, cells: &[usize], order: usize) -> Self {
        let (nodes, _) = gauss_legendre(order);
        let axes: Vec<Vec<f64>> = (0..domain.dim())
            .map(|k| {
                let nc = cells.get(k).copied().unwrap_or(1).max(1);
                let h = domain.width(k) / nc as f64;
                let mut pts = Vec::with_capacity(nc * nodes.len());
                for c in 0..nc {
                    let x0 = domain.lo[k] + h * c as f64;
                    pts.extend(nodes.iter().map(|&t| x0 + 0.5 * h * (t + 1.0)));
                }
                pts
            })
            .collect();
        Self { domain: domain.clone(), coords: tensor_points(&axes) }
    }

    /// Gauss points (2 per axis) of the given mesh plus the 17^m lattice.
    pub fn default_for(domain: &BoxDomain, cells: &[usize]) -> Self {
        Self::gauss_points(domain, cells, 2).union(&Self::lattice(domain, 17))
    }

    pub fn union(mut self, other: &SampleSet) -> Self {
        debug_assert_eq!(self.domain, other.domain);
        self.coords.extend_from_slice(&other.coords);
        self
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim())
    }
}

fn tensor_points(axes: &[Vec<f64>]) -> Vec<f64> {
    let dim = axes.len();
    let total: usize = axes.iter().map(Vec::len).product();
    let mut coords = Vec::with_capacity(total * dim);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        for k in 0..dim {
            coords.push(axes[k][idx[k]]);
        }
        // first axis fastest
        for k in 0..dim {
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    coords
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let order = order.max(1);
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(order, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=order {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = order as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor Gauss-Legendre rule on a box: `(points, weights)`, weights summing to the volume.
pub fn box_quadrature(domain: &BoxDomain, order: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (t, w) = gauss_legendre(order);
    let dim = domain.dim();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let total = t.len().pow(dim as u32);
    for flat in 0..total {
        let mut rem = flat;
        let mut x = Vec::with_capacity(dim);
        let mut weight = 1.0;
        for k in 0..dim {
            let i = rem % t.len();
            rem /= t.len();
            let half = 0.5 * domain.width(k);
            x.push(domain.lo[k] + half * (t[i] + 1.0));
            weight *= w[i] * half;
        }
        points.push(x);
        weights.push(weight);
    }
    (points, weights)
}
