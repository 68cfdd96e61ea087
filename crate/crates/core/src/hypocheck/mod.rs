//! Sampled verdicts for the hypotheses of the boundedness results, collected
//! into a [`HypothesisReport`].
//!
//! Every verdict is a statement about the sample set used, never a proof:
//! positive definiteness is certified at the samples, and `W^{1,inf}`
//! membership means "finite and below the cap at sampled resolution".

mod structural;

pub use structural::{check_assumption_h, check_product_family, AssumptionHOutcome};

use serde::Serialize;

use crate::densecore::{sampled_uniform_pd, PDReport, SampleError, SquareMatrix, DEFAULT_MARGIN};
use crate::exprlang::{default_fd_step, estimate_w1inf, DomainErrorKind, EvalError};
use crate::sampling::{box_quadrature, BoxDomain, SampleSet};
use crate::sysmodel::{AnisotropicSpec, IsotropicSpec, LowerOrderData, SystemSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    pub margin: f64,
    /// `None` uses `1e-5` times the domain diameter.
    pub fd_step: Option<f64>,
    pub w1inf_cap: f64,
    /// Gauss points per axis for `L^theta` norms.
    pub quad_order: usize,
    pub independence_tol: f64,
    /// Lattice points per axis for the default sample set.
    pub sample_grid: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            fd_step: None,
            w1inf_cap: 1e6,
            quad_order: 8,
            independence_tol: 1e-10,
            sample_grid: 17,
        }
    }
}

impl CheckOptions {
    pub fn fd_step_for(&self, samples: &SampleSet) -> f64 {
        self.fd_step.unwrap_or_else(|| default_fd_step(samples))
    }

    pub fn samples_for(&self, domain: &BoxDomain) -> SampleSet {
        SampleSet::lattice(domain, self.sample_grid.max(2))
    }
}

/// One verdict. `value` is compared against `threshold` in the direction the
/// check documents; `worst_point` is where the verdict is decided (the domain
/// center for checks that are not pointwise).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub required: bool,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    pub worst_point: Vec<f64>,
    pub notes: Vec<String>,
}

impl CheckRecord {
    fn new(name: &str, pass: bool, value: f64, threshold: f64, worst_point: Vec<f64>) -> Self {
        Self {
            name: name.to_string(),
            required: true,
            pass,
            value: finite_or_max(value),
            threshold: finite_or_max(threshold),
            worst_point,
            notes: Vec::new(),
        }
    }

    fn failed(name: &str, worst_point: Vec<f64>, note: impl Into<String>) -> Self {
        let mut rec = Self::new(name, false, 0.0, 0.0, worst_point);
        rec.notes.push(note.into());
        rec
    }

    fn from_pd(name: &str, report: &PDReport) -> Self {
        Self::new(name, report.pass, report.min_lambda, report.margin, report.worst_point.clone())
    }

    fn from_sample_error(name: &str, err: &SampleError, fallback: &[f64]) -> Self {
        let point = if err.point.is_empty() { fallback.to_vec() } else { err.point.clone() };
        Self::failed(name, point, err.message.clone())
    }

    pub fn optional(mut self) -> Self {
        self.required = false;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

fn finite_or_max(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else if v.is_infinite() {
        f64::MAX.copysign(v)
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TheoremPath {
    Isotropic,
    Anisotropic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub path: TheoremPath,
    pub checks: Vec<CheckRecord>,
    pub overall: bool,
}

impl HypothesisReport {
    fn assemble(path: TheoremPath, checks: Vec<CheckRecord>) -> Self {
        let overall = checks.iter().filter(|c| c.required).all(|c| c.pass);
        Self { path, checks, overall }
    }

    pub fn get(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Names of the required checks that failed, in report order.
    pub fn failing(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| c.required && !c.pass).map(|c| c.name.as_str()).collect()
    }
}

pub fn check_ellipticity_iso(spec: &IsotropicSpec, samples: &SampleSet, margin: f64) -> Result<PDReport, SampleError> {
    sampled_uniform_pd(|x| spec.a_at(x), samples, margin)
}

pub fn check_ellipticity_aniso(
    spec: &AnisotropicSpec,
    samples: &SampleSet,
    margin: f64,
) -> Result<PDReport, SampleError> {
    sampled_uniform_pd(|x| spec.form_matrix_at(x), samples, margin)
}

/// `(int_domain |f|^theta)^(1/theta)` by tensor Gauss-Legendre quadrature.
pub fn lebesgue_norm<F>(f: F, domain: &BoxDomain, theta: f64, order: usize) -> Result<f64, EvalError>
where
    F: Fn(&[f64]) -> Result<f64, EvalError>,
{
    let (points, weights) = box_quadrature(domain, order);
    let mut acc = 0.0;
    for (x, w) in points.iter().zip(&weights) {
        acc += w * f(x)?.abs().powf(theta);
    }
    Ok(acc.powf(1.0 / theta))
}

/// Right-hand constant of the lower-order coercivity inequality,
/// `nu rho^((m+theta)/(m-theta)) (sum |C^{ij}|_{L^theta})^(2 theta/(theta-m))`.
/// Zero when the convection sum vanishes, infinite when `rho <= 0` and it does not.
pub fn coercivity_rhs(nu: f64, rho: f64, c_sum: f64, m: usize, theta: f64) -> f64 {
    if c_sum == 0.0 {
        return 0.0;
    }
    if !(rho > 0.0) {
        return f64::INFINITY;
    }
    let m = m as f64;
    nu * rho.powf((m + theta) / (m - theta)) * c_sum.powf(2.0 * theta / (theta - m))
}

/// `sum_{ij} |C^{ij}|_{L^theta}` with the Euclidean norm of each vector field.
pub fn convection_norm_sum(lower: &LowerOrderData, domain: &BoxDomain, order: usize) -> Result<f64, EvalError> {
    let mut sum = 0.0;
    for row in lower.c() {
        for cij in row {
            if cij.iter().all(|c| c.is_zero_constant()) {
                continue;
            }
            let norm = |x: &[f64]| -> Result<f64, EvalError> {
                let mut s = 0.0;
                for c in cij {
                    let v = c.evaluate(x)?;
                    s += v * v;
                }
                Ok(s.sqrt())
            };
            sum += lebesgue_norm(norm, domain, lower.theta(), order)?;
        }
    }
    Ok(sum)
}

/// Lower-order coercivity: `min_x lambda_min(sym(Dmat(x)))` against the
/// convection-dependent constant, with `Dmat(i, k) = D^i_k`.
pub fn check_lower_order_coercivity(
    lower: &LowerOrderData,
    rho: f64,
    samples: &SampleSet,
    quad_order: usize,
) -> CheckRecord {
    const NAME: &str = "lower_order_coercivity";
    let domain = samples.domain();
    let center = domain.center();
    let c_sum = match convection_norm_sum(lower, domain, quad_order) {
        Ok(v) => v,
        Err(e) => return CheckRecord::failed(NAME, e.point.clone(), e.to_string()),
    };
    let rhs = coercivity_rhs(lower.nu(), rho, c_sum, lower.m(), lower.theta());
    let lhs = match sampled_uniform_pd(|x| lower.d_matrix_at(x), samples, f64::NEG_INFINITY) {
        Ok(r) => r,
        Err(e) => return CheckRecord::from_sample_error(NAME, &e, &center),
    };
    let pass = lhs.min_lambda >= rhs;
    let mut rec = CheckRecord::new(NAME, pass, lhs.min_lambda, rhs, lhs.worst_point);
    rec.notes.push(format!(
        "nu = {}, theta = {}, rho = {}, sum of convection norms = {}",
        lower.nu(),
        lower.theta(),
        rho,
        c_sum
    ));
    if c_sum > 0.0 {
        rec.notes.push("the exponent on rho is negative for theta > m, so small rho inflates the bound".into());
        if !(rho > 0.0) {
            rec.notes.push("rho is not positive: the bound is infinite".into());
        }
    }
    rec
}

/// Ratios `det B^{ij} / det B` where `B^{ij}` deletes row `i` and column `j`
/// of `A = a^T`. For `n = 1` the single ratio is 1.
pub fn minor_ratios(a: &SquareMatrix) -> Option<SquareMatrix> {
    let n = a.order();
    if n == 1 {
        return Some(SquareMatrix::identity(1));
    }
    let big = a.transpose();
    let det_b = big.submatrix(0, 0).ok()?.determinant();
    if det_b == 0.0 {
        return None;
    }
    Some(SquareMatrix::from_fn(n, |i, j| big.minor_det(i, j).expect("n >= 2") / det_b))
}

/// Sampled `W^{1,inf}` surrogate for every minor ratio. `value` is the
/// largest of the sup and sup-gradient estimates over all ratios.
pub fn check_minor_ratio_w1inf(spec: &IsotropicSpec, samples: &SampleSet, fd_step: f64, cap: f64) -> CheckRecord {
    const NAME: &str = "minor_ratio_w1inf";
    let n = spec.n();
    let center = spec.domain().center();
    let mut sup_abs: f64 = 0.0;
    let mut sup_grad: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let ratio = |x: &[f64]| -> Result<f64, EvalError> {
                let r = minor_ratios(&spec.a_at(x)?)
                    .ok_or(EvalError { kind: DomainErrorKind::DivisionByZero, point: x.to_vec() })?;
                Ok(r[(i, j)])
            };
            match estimate_w1inf(ratio, samples, fd_step) {
                Ok(est) => {
                    sup_abs = sup_abs.max(est.sup_abs);
                    sup_grad = sup_grad.max(est.sup_grad);
                }
                Err(e) => {
                    return CheckRecord::failed(NAME, e.point.clone(), format!("ratio ({i}, {j}): {e}; det B vanishes"))
                }
            }
        }
    }
    let value = sup_abs.max(sup_grad);
    let pass = value.is_finite() && value <= cap;
    CheckRecord::new(NAME, pass, value, cap, center)
        .with_note(format!("sup |ratio| = {sup_abs}, sup |grad ratio| = {sup_grad}"))
        .with_note("finite at sampled resolution; not a proof of membership")
}

fn coefficients_bounded(spec: &SystemSpec, samples: &SampleSet, cap: f64) -> CheckRecord {
    const NAME: &str = "coefficients_bounded";
    let (n, m) = (spec.n(), spec.m());
    let lower = spec.lower();
    let mut principal = vec![0.0; n * n * m * m];
    let mut conv = vec![0.0; n * n * m];
    let mut sup: f64 = 0.0;
    let mut at = spec.domain().center();
    for x in samples.points() {
        let mut step = || -> Result<f64, EvalError> {
            spec.principal_at(x, &mut principal)?;
            lower.c_at(x, &mut conv)?;
            let d = lower.d_matrix_at(x)?;
            Ok(principal.iter().chain(&conv).chain(d.entries()).fold(0.0f64, |a, v| a.max(v.abs())))
        };
        match step() {
            Ok(v) if v > sup => {
                sup = v;
                at = x.to_vec();
            }
            Ok(_) => {}
            Err(e) => return CheckRecord::failed(NAME, e.point.clone(), e.to_string()),
        }
    }
    CheckRecord::new(NAME, sup <= cap, sup, cap, at).with_note("sup over samples of every principal, C and D entry")
}

fn data_bounded(lower: &LowerOrderData, samples: &SampleSet, cap: f64, center: &[f64]) -> CheckRecord {
    const NAME: &str = "data_bounded";
    let mut sup: f64 = 0.0;
    let mut at = center.to_vec();
    for x in samples.points() {
        for fld in lower.f().iter().chain(lower.g()) {
            match fld.evaluate(x) {
                Ok(v) if v.abs() > sup => {
                    sup = v.abs();
                    at = x.to_vec();
                }
                Ok(_) => {}
                Err(e) => return CheckRecord::failed(NAME, e.point.clone(), e.to_string()),
            }
        }
    }
    CheckRecord::new(NAME, sup <= cap, sup, cap, at).with_note("sup over samples of f and g")
}

fn theta_record(lower: &LowerOrderData, center: &[f64]) -> CheckRecord {
    let (theta, m) = (lower.theta(), lower.m() as f64);
    CheckRecord::new("theta_exceeds_dimension", theta > m, theta, m, center.to_vec())
}

/// Runs every check applicable to the spec kind over the default samples.
pub fn full_report(spec: &SystemSpec, opts: &CheckOptions) -> HypothesisReport {
    let samples = opts.samples_for(spec.domain());
    full_report_with_samples(spec, &samples, opts)
}

/// As [`full_report`] with an explicit sample set. Individual failures are
/// recorded, never propagated.
pub fn full_report_with_samples(spec: &SystemSpec, samples: &SampleSet, opts: &CheckOptions) -> HypothesisReport {
    let center = spec.domain().center();
    let lower = spec.lower();
    let fd_step = opts.fd_step_for(samples);
    let mut checks = vec![
        coefficients_bounded(spec, samples, opts.w1inf_cap),
        data_bounded(lower, samples, opts.w1inf_cap, &center),
        theta_record(lower, &center),
    ];
    let ellipticity = match spec {
        SystemSpec::Isotropic(s) => check_ellipticity_iso(s, samples, opts.margin),
        SystemSpec::Anisotropic(s) => check_ellipticity_aniso(s, samples, opts.margin),
    };
    let rho = match &ellipticity {
        Ok(r) => {
            checks.push(CheckRecord::from_pd("ellipticity", r));
            r.min_lambda
        }
        Err(e) => {
            checks.push(CheckRecord::from_sample_error("ellipticity", e, &center));
            f64::NAN
        }
    };
    checks.push(check_lower_order_coercivity(lower, rho, samples, opts.quad_order));
    let path = match spec {
        SystemSpec::Isotropic(s) => {
            checks.push(check_minor_ratio_w1inf(s, samples, fd_step, opts.w1inf_cap));
            TheoremPath::Isotropic
        }
        SystemSpec::Anisotropic(s) => {
            checks.extend(check_assumption_h(s, samples, opts).records);
            if let Some(family) = s.family() {
                checks.extend(check_product_family(family, samples, opts.margin));
            }
            TheoremPath::Anisotropic
        }
    };
    HypothesisReport::assemble(path, checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::CoefficientField;
    use crate::sysmodel::{product_family_build, LowerOrderData};

    fn cf(s: &str) -> CoefficientField {
        CoefficientField::parse(s, 2).unwrap()
    }

    fn grid(rows: &[&[&str]]) -> Vec<Vec<CoefficientField>> {
        rows.iter().map(|r| r.iter().map(|s| cf(s)).collect()).collect()
    }

    fn iso(rows: &[&[&str]]) -> IsotropicSpec {
        let d = BoxDomain::unit(2).unwrap();
        IsotropicSpec::new(grid(rows), LowerOrderData::zero(rows.len(), 2), d).unwrap()
    }

    fn samples() -> SampleSet {
        SampleSet::lattice(&BoxDomain::unit(2).unwrap(), 5)
    }

    #[test]
    fn isotropic_ellipticity_examples() {
        let r = check_ellipticity_iso(&iso(&[&["2", "1"], &["1", "2"]]), &samples(), 1e-9).unwrap();
        assert!(r.pass);
        assert!((r.min_lambda - 1.0).abs() < 1e-14);
        let r = check_ellipticity_iso(&iso(&[&["1", "0"], &["0", "1"]]), &samples(), 1e-9).unwrap();
        assert_eq!(r.min_lambda, 1.0);
        let r = check_ellipticity_iso(&iso(&[&["1", "3"], &["3", "1"]]), &samples(), 1e-9).unwrap();
        assert!(!r.pass);
        assert!((r.min_lambda + 2.0).abs() < 1e-14);
    }

    #[test]
    fn worst_point_is_the_failing_sample() {
        let spec = iso(&[&["1", "0"], &["0", "1 - 2*x1*x2"]]);
        let r = check_ellipticity_iso(&spec, &samples(), 1e-9).unwrap();
        assert!(!r.pass);
        assert_eq!(r.worst_point, vec![1.0, 1.0]);
    }

    #[test]
    fn coercivity_rhs_cases() {
        assert_eq!(coercivity_rhs(1.0, 0.5, 0.0, 2, 4.0), 0.0);
        assert_eq!(coercivity_rhs(1.0, -1.0, 1.0, 2, 4.0), f64::INFINITY);
        // rho^(6/-2) * 2^(8/2) = 0.125 * 16
        let v = coercivity_rhs(1.0, 2.0, 2.0, 2, 4.0);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn lower_order_coercivity_examples() {
        let z = cf("0");
        let one = cf("1");
        let minus = cf("-1");
        let d_plus = vec![vec![one.clone(), z.clone()], vec![z.clone(), one.clone()]];
        let d_minus = vec![vec![minus.clone(), z.clone()], vec![z.clone(), minus]];
        let lower = LowerOrderData::zero(2, 2).with_d(d_plus).unwrap();
        let rec = check_lower_order_coercivity(&lower, 1.0, &samples(), 8);
        assert!(rec.pass);
        assert_eq!((rec.value, rec.threshold), (1.0, 0.0));
        let lower = LowerOrderData::zero(2, 2).with_d(d_minus).unwrap();
        let rec = check_lower_order_coercivity(&lower, 1.0, &samples(), 8);
        assert!(!rec.pass);
        assert_eq!(rec.value, -1.0);
    }

    #[test]
    fn constant_convection_norm() {
        let d = BoxDomain::new(vec![0.0, 0.0], vec![2.0, 0.5]).unwrap();
        let c = vec![vec![vec![cf("0.6"), cf("-0.8")]]];
        let lower = LowerOrderData::zero(1, 2).with_c(c).unwrap().with_theta(3.0).unwrap();
        let got = convection_norm_sum(&lower, &d, 8).unwrap();
        assert!((got - 1.0f64.powf(1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn minor_ratio_examples() {
        let r = minor_ratios(&SquareMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]])).unwrap();
        assert_eq!(r, SquareMatrix::from_rows(&[[1.0, 0.5], [0.5, 1.0]]));
        let s = samples();
        let rec = check_minor_ratio_w1inf(&iso(&[&["2", "1"], &["1", "2"]]), &s, 1e-5, 1e6);
        assert!(rec.pass);
        assert_eq!(rec.value, 1.0);
        let rec = check_minor_ratio_w1inf(&iso(&[&["2", "x1"], &["0", "2"]]), &s, 1e-5, 1e6);
        assert!(rec.pass);
        assert!(rec.notes[0].contains("sup |grad ratio| = 0.5"), "{:?}", rec.notes);
        let rec = check_minor_ratio_w1inf(&iso(&[&["2", "1"], &["1", "x1"]]), &s, 1e-5, 1e6);
        assert!(!rec.pass);
        assert_eq!(rec.worst_point[0], 0.0);
    }

    #[test]
    fn isotropic_full_report() {
        let spec: SystemSpec = iso(&[&["2", "1"], &["1", "2"]]).into();
        let report = full_report(&spec, &CheckOptions::default());
        assert!(report.overall, "{:?}", report.failing());
        assert_eq!(report.path, TheoremPath::Isotropic);

        let spec: SystemSpec = iso(&[&["1", "3"], &["3", "1"]]).into();
        let report = full_report(&spec, &CheckOptions::default());
        assert!(!report.overall);
        assert!(report.failing().contains(&"ellipticity"));
    }

    #[test]
    fn product_family_full_report() {
        let d = BoxDomain::unit(2).unwrap();
        let spec = product_family_build(
            grid(&[&["1", "0.5"], &["0", "1"]]),
            grid(&[&["2", "1"], &["1", "2"]]),
            LowerOrderData::zero(2, 2),
            d,
        )
        .unwrap();
        let report = full_report(&spec.into(), &CheckOptions::default());
        assert!(report.overall, "{:?}", report.failing());
        assert!((report.get("ellipticity").unwrap().value - 0.75).abs() < 1e-12);
        let mut names: Vec<_> = report.checks.iter().map(|c| c.name.clone()).collect();
        let before = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), before);
    }
}
