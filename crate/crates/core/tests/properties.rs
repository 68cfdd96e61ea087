mod common;

use common::*;
use coupled_wmp::auditor::h1_seminorm;
use coupled_wmp::densecore::SquareMatrix;
use coupled_wmp::exprlang::{BinOp, CoefficientField, Expr, Func};
use coupled_wmp::femgrid::{apply_dirichlet, assemble, build_mesh, solve};
use coupled_wmp::hypocheck::{check_assumption_h, check_ellipticity_iso, full_report, CheckOptions};
use coupled_wmp::krylov::{solve_bicgstab, SolverConfig};
use coupled_wmp::sampling::{BoxDomain, SampleSet};
use coupled_wmp::sysmodel::{pairing_sum, product_family_build, solve_e, test_matrix, IsotropicSpec, LowerOrderData};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn leaf(dim: usize) -> impl Strategy<Value = Expr> {
    prop_oneof![(-40i32..40).prop_map(|k| Expr::num(k as f64 / 8.0)), (0..dim).prop_map(Expr::Var)]
}

fn tree(dim: usize) -> impl Strategy<Value = Expr> {
    leaf(dim).prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (inner.clone(), inner.clone(), 0..4usize).prop_map(|(l, r, k)| {
                let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][k];
                Expr::bin(op, l, r)
            }),
            (inner.clone(), 0u32..4).prop_map(|(b, e)| Expr::Pow(Box::new(b), Box::new(Expr::num(e as f64)))),
            (inner.clone(), 0..8usize).prop_map(|(a, k)| Expr::Call(Func::ALL[k], vec![a])),
            (inner.clone(), inner, any::<bool>())
                .prop_map(|(a, b, hi)| Expr::Call(if hi { Func::Max } else { Func::Min }, vec![a, b])),
        ]
    })
}

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, dim)
}

fn same(a: &Result<f64, coupled_wmp::exprlang::EvalError>, b: &Result<f64, coupled_wmp::exprlang::EvalError>) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => x.to_bits() == y.to_bits(),
        (Err(_), Err(_)) => true,
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonical_text_reparses_equivalently(t in tree(3), pts in prop::collection::vec(point(3), 100)) {
        let field = CoefficientField::from_expr(t, 3).unwrap();
        let again = CoefficientField::parse(&field.canonical(), 3).unwrap();
        for x in &pts {
            prop_assert!(same(&field.evaluate(x), &again.evaluate(x)), "{} at {:?}", field.canonical(), x);
        }
    }

    #[test]
    fn evaluation_is_pure(t in tree(2), x in point(2)) {
        let field = CoefficientField::from_expr(t, 2).unwrap();
        prop_assert!(same(&field.evaluate(&x), &field.evaluate(&x)));
    }

    #[test]
    fn w1inf_estimate_is_subadditive(a in -3.0f64..3.0, b in -3.0f64..3.0, w in 0.5f64..4.0) {
        let domain = BoxDomain::unit(2).unwrap();
        let samples = SampleSet::lattice(&domain, 7);
        let f = cf(&format!("{a:e}*sin({w:e}*x1) + x2*x2"), 2);
        let g = cf(&format!("{b:e}*x1*x2 - cos(x2)"), 2);
        let sum = CoefficientField::from_expr(Expr::add(f.tree().clone(), g.tree().clone()), 2).unwrap();
        let h = 1e-5;
        let (ef, eg, es) = (
            f.estimate_w1inf(&samples, h).unwrap(),
            g.estimate_w1inf(&samples, h).unwrap(),
            sum.estimate_w1inf(&samples, h).unwrap(),
        );
        prop_assert!(es.sup_abs <= ef.sup_abs + eg.sup_abs + 1e-12);
        prop_assert!(es.sup_grad <= (ef.sup_grad + eg.sup_grad) * (1.0 + 1e-9) + 1e-9);
    }
}

fn square(order: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, order), order)
}

fn sized_square() -> impl Strategy<Value = Mat> {
    (1usize..=6).prop_flat_map(square)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn determinant_matches_laplace_expansion(m in sized_square(), row in 0usize..6) {
        let mat = SquareMatrix::from_rows(&m);
        let n = m.len();
        let r = row % n;
        let det = mat.determinant();
        let expansion: f64 = if n == 1 {
            m[0][0]
        } else {
            (0..n)
                .map(|c| {
                    let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
                    sign * m[r][c] * mat.minor_det(r, c).unwrap()
                })
                .sum()
        };
        let scale = det.abs().max(det_cofactor(&m).abs()).max(1.0);
        prop_assert!((det - expansion).abs() <= 1e-10 * scale);
        prop_assert!((det - det_cofactor(&m)).abs() <= 1e-10 * scale);
    }

    #[test]
    fn min_eigenvalue_bounds_rayleigh_quotients(m in sized_square(), xs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 20)) {
        let s = SquareMatrix::from_rows(&m).symmetrize();
        let n = m.len();
        let lam = s.min_eigenvalue_sym().unwrap();
        prop_assert!((lam - min_eig_bisection(&s.rows())).abs() <= 1e-9 * (1.0 + lam.abs()));
        for x in &xs {
            let x = &x[..n];
            let xx: f64 = x.iter().map(|v| v * v).sum();
            if xx < 1e-12 {
                continue;
            }
            let sx = s.mul_vec(x);
            let q: f64 = x.iter().zip(&sx).map(|(a, b)| a * b).sum::<f64>() / xx;
            prop_assert!(lam <= q + 1e-12 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn symmetric_part_determinant_is_smaller(seed in any::<u64>(), order in 2usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_pd_sym_part(&mut rng, order, 0.05);
        let mat = SquareMatrix::from_rows(&m);
        let det = mat.determinant();
        prop_assert!(mat.symmetrize().determinant() <= det + 1e-10 * det.abs());
    }
}

fn random_iso(seed: u64, n: usize) -> IsotropicSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = random_pd_sym_part(&mut rng, n, 0.3);
    let a = (0..n)
        .map(|i| (0..n).map(|j| cf(&format!("({:e}) + 0.05*sin({}*x1 - x2)", base[i][j], i + 2 * j + 1), 2)).collect())
        .collect();
    IsotropicSpec::new(a, LowerOrderData::zero(n, 2), BoxDomain::unit(2).unwrap()).unwrap()
}

fn scaled_iso(spec: &IsotropicSpec, s: f64) -> IsotropicSpec {
    let a = spec
        .a()
        .iter()
        .map(|row| row.iter().map(|f| CoefficientField::from_expr(Expr::mul(Expr::num(s), f.tree().clone()), 2).unwrap()).collect())
        .collect();
    IsotropicSpec::new(a, spec.lower().clone(), spec.domain().clone()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn pairing_sum_is_bounded_below(seed in any::<u64>(), n in 2usize..=5) {
        let spec = random_iso(seed, n);
        let samples = SampleSet::lattice(spec.domain(), 5);
        let rho = check_ellipticity_iso(&spec, &samples, 1e-9).unwrap().min_lambda;
        for x in samples.points() {
            let a = spec.a_at(x).unwrap();
            let bundle = test_matrix(&a).unwrap();
            let pairing = pairing_sum(&a, &bundle.t, 0);
            prop_assert!(pairing >= rho.powi(n as i32) / bundle.det_b - 1e-9);
        }
    }

    #[test]
    fn enlarging_samples_never_raises_rho(seed in any::<u64>(), n in 2usize..=4) {
        let spec = random_iso(seed, n);
        let small = SampleSet::lattice(spec.domain(), 3);
        let big = small.clone().union(&SampleSet::lattice(spec.domain(), 6));
        let r_small = check_ellipticity_iso(&spec, &small, 1e-9).unwrap().min_lambda;
        let r_big = check_ellipticity_iso(&spec, &big, 1e-9).unwrap().min_lambda;
        prop_assert!(r_big <= r_small);
    }

    #[test]
    fn rho_scales_with_coefficients(seed in any::<u64>(), n in 2usize..=4, k in 0usize..4) {
        let s = [0.25, 0.5, 2.0, 4.0][k];
        let spec = random_iso(seed, n);
        let samples = SampleSet::lattice(spec.domain(), 4);
        let scaled = scaled_iso(&spec, s);
        let r = check_ellipticity_iso(&spec, &samples, 1e-9).unwrap().min_lambda;
        let rs = check_ellipticity_iso(&scaled, &samples, 1e-9).unwrap().min_lambda;
        prop_assert!((rs - s * r).abs() <= 1e-12 * rs.abs());
        let opts = CheckOptions { sample_grid: 4, ..CheckOptions::default() };
        let before = full_report(&spec.clone().into(), &opts);
        let after = full_report(&scaled.into(), &opts);
        for (x, y) in before.checks.iter().zip(&after.checks) {
            if x.name != "coefficients_bounded" && x.name != "minor_ratio_w1inf" {
                prop_assert_eq!(x.pass, y.pass, "{}", x.name);
            }
        }
    }

    #[test]
    fn product_family_e_leading_entry_sign(d in prop::collection::vec(0.5f64..2.0, 3), off in prop::collection::vec(-1.5f64..1.5, 4), flip in any::<bool>()) {
        // n = 3 with b^{21} = b^{31} = 0; E^{11} > 0 iff the lower-right 2x2 minor of b is positive
        let b22 = if flip { -d[1] } else { d[1] };
        let b = [[d[0], off[0], off[1]], [0.0, b22, off[2]], [0.0, off[3], d[2]]];
        let minor = b[1][1] * b[2][2] - b[1][2] * b[2][1];
        prop_assume!(minor.abs() > 1e-3);
        let rows: Vec<Vec<CoefficientField>> = b.iter().map(|r| r.iter().map(|v| cf(&format!("{v:e}"), 2)).collect()).collect();
        let spec = product_family_build(rows, grid(&[&["2", "1"], &["1", "3"]], 2), LowerOrderData::zero(3, 2), BoxDomain::unit(2).unwrap()).unwrap();
        let data = solve_e(&spec, &[0.5, 0.5]).unwrap();
        prop_assert!(data.independence_residual <= 1e-10 * data.e.max_abs().max(1.0));
        prop_assert!(data.identity_residual <= 1e-10);
        prop_assert_eq!(data.e[(0, 0)] > 0.0, minor > 0.0);
        let opts = CheckOptions { sample_grid: 3, ..CheckOptions::default() };
        let h = check_assumption_h(&spec, &SampleSet::lattice(spec.domain(), 3), &opts);
        prop_assert!(h.independence_residual <= 1e-10);
    }
}

fn laplace_like(f: [&str; 2], g: [&str; 2], d: [&str; 4], a12: &str) -> coupled_wmp::sysmodel::SystemSpec {
    let lower = LowerOrderData::zero(2, 2)
        .with_f(vec![cf(f[0], 2), cf(f[1], 2)])
        .unwrap()
        .with_g(vec![cf(g[0], 2), cf(g[1], 2)])
        .unwrap()
        .with_d(grid(&[&[d[0], d[1]], &[d[2], d[3]]], 2))
        .unwrap();
    IsotropicSpec::new(grid(&[&["2", a12], &[a12, "1 + x1*x1"]], 2), lower, BoxDomain::unit(2).unwrap()).unwrap().into()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn assembly_is_linear_in_data(cells in 2usize..7, c in -2.0f64..2.0) {
        let f = [format!("{c:e}*x1 + sin(x2)"), "1".to_string()];
        let g = ["cos(x1) - x2".to_string(), "x1".to_string()];
        let twice = |v: &[String; 2]| [format!("2*({})", v[0]), format!("2*({})", v[1])];
        let (f2, g2) = (twice(&f), twice(&g));
        let one = laplace_like([&f[0], &f[1]], [&g[0], &g[1]], ["1", "0", "0", "1"], "0.5");
        let two = laplace_like([&f2[0], &f2[1]], [&g2[0], &g2[1]], ["1", "0", "0", "1"], "0.5");
        let mesh = build_mesh(one.domain(), &[cells, cells + 1]).unwrap();
        let s1 = apply_dirichlet(&assemble(&one, &mesh, 2).unwrap(), one.lower().g(), &mesh).unwrap();
        let s2 = apply_dirichlet(&assemble(&two, &mesh, 2).unwrap(), two.lower().g(), &mesh).unwrap();
        prop_assert_eq!(s1.matrix.values(), s2.matrix.values());
        let doubled = |v: &[f64]| v.iter().map(|x| 2.0 * x).collect::<Vec<_>>();
        prop_assert_eq!(&s2.rhs, &doubled(&s1.rhs));
        prop_assert_eq!(&s2.lift, &doubled(&s1.lift));
    }

    #[test]
    fn symmetric_coefficients_give_symmetric_free_block(cells in 2usize..7, d in -1.0f64..1.0) {
        let dd = format!("{d:e}");
        let spec = laplace_like(["0", "0"], ["0", "0"], ["1", &dd, &dd, "2"], "0.25*x2");
        let mesh = build_mesh(spec.domain(), &[cells, cells]).unwrap();
        let sys = assemble(&spec, &mesh, 2).unwrap();
        let dense = sys.matrix.to_dense();
        let scale = dense.max_abs();
        prop_assert!(dense.asymmetry() <= 1e-12 * scale);
    }

    #[test]
    fn scalar_laplacian_is_an_m_matrix(cells in 2usize..10, one_d in any::<bool>()) {
        let m = if one_d { 1 } else { 2 };
        let spec: coupled_wmp::sysmodel::SystemSpec =
            IsotropicSpec::new(grid(&[&["1"]], m), LowerOrderData::zero(1, m), BoxDomain::unit(m).unwrap()).unwrap().into();
        let mesh = build_mesh(spec.domain(), &vec![cells; m]).unwrap();
        let sys = assemble(&spec, &mesh, 2).unwrap();
        let a = sys.matrix.to_dense();
        let interior: Vec<usize> = (0..mesh.node_count()).filter(|&p| !mesh.is_boundary(p)).collect();
        for &r in &interior {
            let mut off = 0.0;
            for &c in &interior {
                if r != c {
                    prop_assert!(a[(r, c)] <= 1e-15);
                    off += a[(r, c)].abs();
                }
            }
            prop_assert!(a[(r, r)] >= off - 1e-12);
        }
    }

    #[test]
    fn bicgstab_is_deterministic(cells in 3usize..9) {
        let spec = laplace_like(["1", "1"], ["x2", "x1"], ["1", "0", "0", "1"], "0.5");
        let mesh = build_mesh(spec.domain(), &[cells, cells]).unwrap();
        let sys = apply_dirichlet(&assemble(&spec, &mesh, 2).unwrap(), spec.lower().g(), &mesh).unwrap();
        let (x1, s1) = solve_bicgstab(&sys.matrix, &sys.rhs, 1e-10, 1000).unwrap();
        let (x2, s2) = solve_bicgstab(&sys.matrix, &sys.rhs, 1e-10, 1000).unwrap();
        prop_assert_eq!(x1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), x2.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(s1, s2);
    }

    #[test]
    fn h1_seminorm_shrinks_with_boundary_data(alpha in 0.0f64..1.0) {
        let make = |s: f64| -> coupled_wmp::sysmodel::SystemSpec {
            let g = cf(&format!("({s:e})*(sin(3*x1) + x2)"), 2);
            IsotropicSpec::new(grid(&[&["1"]], 2), LowerOrderData::zero(1, 2).with_g(vec![g]).unwrap(), BoxDomain::unit(2).unwrap())
                .unwrap()
                .into()
        };
        let mesh = build_mesh(&BoxDomain::unit(2).unwrap(), &[8, 8]).unwrap();
        let cfg = SolverConfig::default();
        let full = h1_seminorm(&solve(&make(1.0), &mesh, 2, &cfg).unwrap());
        let part = h1_seminorm(&solve(&make(alpha), &mesh, 2, &cfg).unwrap());
        prop_assert!(part <= full * (1.0 + 1e-12));
        prop_assert!((part - alpha * full).abs() <= 1e-10 * full);
    }
}

#[test]
fn nodal_interpolant_residual_decays_quadratically() {
    // u = sin(pi x1) sin(pi x2), -lap u = 2 pi^2 u
    let pi = std::f64::consts::PI;
    let f = cf(&format!("2*{pi:e}*{pi:e}*sin({pi:e}*x1)*sin({pi:e}*x2)"), 2);
    let spec: coupled_wmp::sysmodel::SystemSpec =
        IsotropicSpec::new(grid(&[&["1"]], 2), LowerOrderData::zero(1, 2).with_f(vec![f]).unwrap(), BoxDomain::unit(2).unwrap())
            .unwrap()
            .into();
    let mut errs = Vec::new();
    for cells in [8, 16, 32] {
        let mesh = build_mesh(spec.domain(), &[cells, cells]).unwrap();
        let sys = assemble(&spec, &mesh, 3).unwrap();
        let u: Vec<f64> = (0..mesh.node_count()).map(|p| (pi * mesh.node(p)[0]).sin() * (pi * mesh.node(p)[1]).sin()).collect();
        let au = sys.matrix.mul_vec(&u);
        let h2 = mesh.h(0) * mesh.h(1);
        let worst = (0..mesh.node_count()).filter(|&r| !mesh.is_boundary(r)).map(|r| (au[r] - sys.rhs[r]).abs() / h2).fold(0.0, f64::max);
        errs.push(worst);
    }
    for w in errs.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!(rate >= 1.8, "{errs:?}");
    }
}

#[test]
fn failing_checks_point_inside_the_domain() {
    let domain = BoxDomain::new(vec![-1.0, 2.0], vec![0.5, 3.0]).unwrap();
    let a = grid(&[&["1", "2 + x1"], &["2", "x2 - 2.5"]], 2);
    let lower = LowerOrderData::zero(2, 2).with_d(grid(&[&["-1", "0"], &["0", "1"]], 2)).unwrap();
    let spec: coupled_wmp::sysmodel::SystemSpec = IsotropicSpec::new(a, lower, domain.clone()).unwrap().into();
    let report = full_report(&spec, &CheckOptions { sample_grid: 5, ..CheckOptions::default() });
    assert!(!report.overall);
    for c in report.checks.iter().filter(|c| !c.pass) {
        assert!(domain.contains(&c.worst_point, 1e-12), "{} at {:?}", c.name, c.worst_point);
    }
}
