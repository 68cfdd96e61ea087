//! Checks of the structural weight assumption for anisotropic systems and of
//! the assertions attached to the product family `a^{ij}_pq = b^{ij} g_pq`.

use super::{CheckOptions, CheckRecord};
use crate::densecore::{sampled_uniform_pd, PDReport, SquareMatrix};
use crate::exprlang::{estimate_w1inf, CoefficientField, DomainErrorKind, EvalError};
use crate::sampling::SampleSet;
use crate::sysmodel::{point_blocks, solve_e, AnisotropicSpec, ModelError, ProductFamily};

/// The weight-assumption records plus the underlying certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionHOutcome {
    pub records: Vec<CheckRecord>,
    pub v: Option<PDReport>,
    pub f: Option<PDReport>,
    pub m: Option<PDReport>,
    /// Max over samples of the per-block disagreement of `E`, relative to
    /// `max(1, max|E|)`.
    pub independence_residual: f64,
    pub identity_residual: f64,
}

impl AssumptionHOutcome {
    pub fn pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }
}

const H_CHECKS: [&str; 7] = [
    "block_determinants_nonzero",
    "h1_v_positive_definite",
    "h2_e_independent",
    "h2_e_w1inf",
    "h_weights_w1inf",
    "h3_f_positive_definite",
    "h4_m_positive_definite",
];

fn as_eval_error(e: ModelError, x: &[f64]) -> EvalError {
    match e {
        ModelError::Eval(inner) => inner,
        _ => EvalError { kind: DomainErrorKind::NonFinite("singular block"), point: x.to_vec() },
    }
}

/// Evaluates the weight assumption at every sample. Without weights every
/// record fails as not applicable.
pub fn check_assumption_h(spec: &AnisotropicSpec, samples: &SampleSet, opts: &CheckOptions) -> AssumptionHOutcome {
    let center = spec.domain().center();
    let mut out = AssumptionHOutcome {
        records: Vec::new(),
        v: None,
        f: None,
        m: None,
        independence_residual: f64::NAN,
        identity_residual: f64::NAN,
    };
    let Some(weights) = spec.weights() else {
        out.records = H_CHECKS
            .iter()
            .map(|name| CheckRecord::failed(name, center.clone(), "not applicable: no weights h, f_pq supplied"))
            .collect();
        return out;
    };

    // nonzero block determinants gate everything built from E
    let mut min_det = f64::INFINITY;
    let mut det_at = center.clone();
    let mut singular: Option<(Vec<f64>, String)> = None;
    for x in samples.points() {
        let bundle = match point_blocks(spec, x) {
            Ok(b) => b,
            Err(e) => {
                det_at = x.to_vec();
                min_det = f64::NAN;
                singular = Some((x.to_vec(), e.to_string()));
                break;
            }
        };
        for d in &bundle.dets {
            if d.abs() < min_det {
                min_det = d.abs();
                det_at = x.to_vec();
            }
        }
        if singular.is_none() {
            if let Err(e) = solve_e(spec, x) {
                singular = Some((x.to_vec(), e.to_string()));
            }
        }
    }
    let mut det_record = CheckRecord::new(H_CHECKS[0], min_det > 0.0, min_det, 0.0, det_at)
        .with_note("min over samples and blocks of |L_pq|");
    if min_det == 0.0 && singular.is_none() {
        det_record.notes.push("some blocks vanish identically together with f_pq; E is taken from the others".into());
    }
    out.records.push(det_record);

    out.records.push(match sampled_uniform_pd(|x| weights.h_at(x), samples, opts.margin) {
        Ok(r) => {
            let rec = CheckRecord::from_pd(H_CHECKS[1], &r);
            out.v = Some(r);
            rec
        }
        Err(e) => CheckRecord::from_sample_error(H_CHECKS[1], &e, &center),
    });

    let fd_step = opts.fd_step_for(samples);
    if let Some((x, msg)) = singular {
        for name in &H_CHECKS[2..4] {
            out.records.push(CheckRecord::failed(name, x.clone(), format!("not evaluated: {msg}")));
        }
        out.records.push(weights_w1inf(spec, samples, fd_step, opts.w1inf_cap));
        for name in &H_CHECKS[5..] {
            out.records.push(CheckRecord::failed(name, x.clone(), format!("not evaluated: {msg}")));
        }
        return out;
    }

    let mut indep: f64 = 0.0;
    let mut ident: f64 = 0.0;
    let mut indep_at = center.clone();
    for x in samples.points() {
        let data = solve_e(spec, x).expect("nonsingular at every sample");
        let rel = data.independence_residual / data.e.max_abs().max(1.0);
        if rel > indep {
            indep = rel;
            indep_at = x.to_vec();
        }
        ident = ident.max(data.identity_residual);
    }
    out.independence_residual = indep;
    out.identity_residual = ident;
    out.records.push(
        CheckRecord::new(H_CHECKS[2], indep <= opts.independence_tol, indep, opts.independence_tol, indep_at)
            .with_note(format!("normalized identity residual = {ident}")),
    );

    let n = spec.n();
    let mut sup_abs: f64 = 0.0;
    let mut sup_grad: f64 = 0.0;
    let mut e_failure = None;
    'outer: for i in 0..n {
        for j in 0..n {
            let entry = |x: &[f64]| -> Result<f64, EvalError> {
                solve_e(spec, x).map(|d| d.e[(i, j)]).map_err(|e| as_eval_error(e, x))
            };
            match estimate_w1inf(entry, samples, fd_step) {
                Ok(est) => {
                    sup_abs = sup_abs.max(est.sup_abs);
                    sup_grad = sup_grad.max(est.sup_grad);
                }
                Err(e) => {
                    e_failure = Some(e);
                    break 'outer;
                }
            }
        }
    }
    out.records.push(match e_failure {
        Some(e) => CheckRecord::failed(H_CHECKS[3], e.point.clone(), e.to_string()),
        None => {
            let value = sup_abs.max(sup_grad);
            CheckRecord::new(H_CHECKS[3], value <= opts.w1inf_cap, value, opts.w1inf_cap, center.clone())
                .with_note(format!("sup |E| = {sup_abs}, sup |grad E| = {sup_grad}"))
                .with_note("finite at sampled resolution; not a proof of membership")
        }
    });

    out.records.push(weights_w1inf(spec, samples, fd_step, opts.w1inf_cap));

    let f_report = sampled_uniform_pd(|x| solve_e(spec, x).map(|d| d.f_mat), samples, opts.margin);
    out.records.push(match f_report {
        Ok(r) => {
            let rec = CheckRecord::from_pd(H_CHECKS[5], &r);
            out.f = Some(r);
            rec
        }
        Err(e) => CheckRecord::from_sample_error(H_CHECKS[5], &e, &center),
    });
    let m_report = sampled_uniform_pd(|x| solve_e(spec, x).map(|d| d.m_big), samples, opts.margin);
    out.records.push(match m_report {
        Ok(r) => {
            let rec = CheckRecord::from_pd(H_CHECKS[6], &r);
            out.m = Some(r);
            rec
        }
        Err(e) => CheckRecord::from_sample_error(H_CHECKS[6], &e, &center),
    });
    out
}

fn weights_w1inf(spec: &AnisotropicSpec, samples: &SampleSet, fd_step: f64, cap: f64) -> CheckRecord {
    let center = spec.domain().center();
    let weights = spec.weights().expect("caller checked");
    let (n, m) = (spec.n(), spec.m());
    let fields = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| weights.h_field(i, j))
        .chain((0..m).flat_map(|p| (0..m).map(move |q| (p, q))).map(|(p, q)| weights.f_field(p, q)));
    let mut value: f64 = 0.0;
    for fld in fields {
        match fld.estimate_w1inf(samples, fd_step) {
            Ok(est) => value = value.max(est.sup_abs).max(est.sup_grad),
            Err(e) => return CheckRecord::failed(H_CHECKS[4], e.point.clone(), e.to_string()),
        }
    }
    CheckRecord::new(H_CHECKS[4], value <= cap, value, cap, center)
        .with_note("max of sup and sup-gradient estimates over h^{ij} and f_pq")
}

fn eval_grid(grid: &[Vec<CoefficientField>], x: &[f64]) -> Result<SquareMatrix, EvalError> {
    let k = grid.len();
    let mut out = SquareMatrix::zeros(k);
    for (r, row) in grid.iter().enumerate() {
        for (c, fld) in row.iter().enumerate() {
            out[(r, c)] = fld.evaluate(x)?;
        }
    }
    debug_assert_eq!(out.order(), k);
    Ok(out)
}

/// `K = sym(b) (x) G`, the quadratic-form matrix of the product family.
pub fn family_k_matrix(b: &SquareMatrix, g: &SquareMatrix) -> SquareMatrix {
    b.symmetrize().kron(g)
}

/// The product-family assertions, each reported on its own and marked
/// optional: they are sufficient conditions for the weight assumption, which
/// is checked directly elsewhere.
pub fn check_product_family(family: &ProductFamily, samples: &SampleSet, margin: f64) -> Vec<CheckRecord> {
    let center = samples.domain().center();
    let n = family.b.len();
    let mut b_vals = Vec::with_capacity(samples.len());
    let mut g_vals = Vec::with_capacity(samples.len());
    for x in samples.points() {
        let pair = eval_grid(&family.b, x).and_then(|b| Ok((b, eval_grid(&family.g, x)?)));
        match pair {
            Ok((b, g)) => {
                b_vals.push(b);
                g_vals.push(g);
            }
            Err(e) => {
                return [
                    "family_structure",
                    "family_lower_block_det",
                    "family_diagonal_bound",
                    "family_g_positive_definite",
                    "family_g_entries_positive",
                    "family_k_positive_definite",
                ]
                .iter()
                .map(|name| CheckRecord::failed(name, e.point.clone(), e.to_string()).optional())
                .collect();
            }
        }
    }
    let points: Vec<&[f64]> = samples.points().collect();
    let mut records = Vec::new();

    // b^{11} != 0 and b^{i1} = 0 below it
    let mut worst_col: f64 = 0.0;
    let mut col_at = center.clone();
    let mut min_lead = f64::INFINITY;
    let mut lead_at = center.clone();
    for (b, x) in b_vals.iter().zip(&points) {
        for i in 1..n {
            if b[(i, 0)].abs() > worst_col {
                worst_col = b[(i, 0)].abs();
                col_at = x.to_vec();
            }
        }
        if b[(0, 0)].abs() < min_lead {
            min_lead = b[(0, 0)].abs();
            lead_at = x.to_vec();
        }
    }
    let structure_ok = worst_col == 0.0 && min_lead > 0.0;
    let at = if worst_col != 0.0 { col_at } else { lead_at };
    records.push(
        CheckRecord::new("family_structure", structure_ok, worst_col, 0.0, at)
            .with_note(format!("max |b^(i1)|, i >= 2, = {worst_col}; min |b^(11)| = {min_lead}"))
            .optional(),
    );

    let mut min_det = f64::INFINITY;
    let mut det_at = center.clone();
    for (b, x) in b_vals.iter().zip(&points) {
        let lower = b.submatrix(0, 0).expect("n >= 1");
        let d = lower.determinant();
        if d < min_det {
            min_det = d;
            det_at = x.to_vec();
        }
    }
    records.push(
        CheckRecord::new("family_lower_block_det", min_det >= margin, min_det, margin, det_at)
            .with_note("min over samples of det of b with first row and column removed")
            .optional(),
    );

    let mut rho_star = f64::INFINITY;
    let mut rho_at = center.clone();
    let mut max_off = f64::NEG_INFINITY;
    let mut off_at = center.clone();
    for (b, x) in b_vals.iter().zip(&points) {
        for i in 0..n {
            if b[(i, i)] < rho_star {
                rho_star = b[(i, i)];
                rho_at = x.to_vec();
            }
            for j in 0..n {
                if i != j && b[(i, j)] > max_off {
                    max_off = b[(i, j)];
                    off_at = x.to_vec();
                }
            }
        }
    }
    let bound = n as f64 * rho_star;
    let diag_ok = rho_star >= margin && (n == 1 || max_off <= bound);
    let diag_at = if rho_star < margin { rho_at } else { off_at };
    let mut diag_record = CheckRecord::new("family_diagonal_bound", diag_ok, rho_star, margin, diag_at)
        .with_note(format!("rho_* = min b^(ii) = {rho_star}; max off-diagonal b^(ij) = {max_off} against n rho_* = {bound}"))
        .optional();

    let g_pd = sampled_uniform_pd(|x| eval_grid(&family.g, x), samples, margin);
    records.push(match &g_pd {
        Ok(r) => CheckRecord::from_pd("family_g_positive_definite", r).optional(),
        Err(e) => CheckRecord::from_sample_error("family_g_positive_definite", e, &center).optional(),
    });

    let mut min_g = f64::INFINITY;
    let mut g_at = center.clone();
    for (g, x) in g_vals.iter().zip(&points) {
        for v in g.entries() {
            if *v < min_g {
                min_g = *v;
                g_at = x.to_vec();
            }
        }
    }
    records.push(CheckRecord::new("family_g_entries_positive", min_g > 0.0, min_g, 0.0, g_at).optional());

    let k_pd = sampled_uniform_pd(
        |x| -> Result<SquareMatrix, EvalError> {
            Ok(family_k_matrix(&eval_grid(&family.b, x)?, &eval_grid(&family.g, x)?))
        },
        samples,
        margin,
    );
    let mut k_record = match &k_pd {
        Ok(r) => CheckRecord::from_pd("family_k_positive_definite", r).optional(),
        Err(e) => CheckRecord::from_sample_error("family_k_positive_definite", e, &center).optional(),
    };
    if diag_ok && !k_record.pass {
        let note = format!(
            "counterexample: the diagonal bound holds but K is not positive definite at {:?}",
            k_record.worst_point
        );
        diag_record.notes.push(note.clone());
        k_record.notes.push(note);
    }
    records.insert(2, diag_record);
    records.push(k_record);
    records
}
