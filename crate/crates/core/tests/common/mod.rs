//! Independent reference implementations. Nothing here calls into the crate's
//! linear algebra.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

/// Gaussian elimination with partial pivoting on a copy.
pub fn gauss_solve(a: &Mat, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Mat = a.iter().zip(b).map(|(row, &v)| row.iter().copied().chain([v]).collect()).collect();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
        m.swap(k, piv);
        assert!(m[k][k] != 0.0, "oracle hit a singular matrix");
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..=n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

/// Laplace expansion along the first row.
pub fn det_cofactor(a: &Mat) -> f64 {
    let n = a.len();
    match n {
        0 => 1.0,
        1 => a[0][0],
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        _ => (0..n)
            .map(|c| {
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                sign * a[0][c] * det_cofactor(&delete(a, 0, c))
            })
            .sum(),
    }
}

pub fn delete(a: &Mat, row: usize, col: usize) -> Mat {
    a.iter()
        .enumerate()
        .filter(|(r, _)| *r != row)
        .map(|(_, v)| v.iter().enumerate().filter(|(c, _)| *c != col).map(|(_, x)| *x).collect())
        .collect()
}

pub fn transpose(a: &Mat) -> Mat {
    (0..a[0].len()).map(|c| a.iter().map(|r| r[c]).collect()).collect()
}

pub fn sym(a: &Mat) -> Mat {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| 0.5 * (a[i][j] + a[j][i])).collect()).collect()
}

/// Number of eigenvalues of the symmetric `a` below `sigma`, from the signs
/// of the LDL^T pivots of `a - sigma I` (Sylvester inertia).
fn count_below(a: &Mat, sigma: f64) -> usize {
    let n = a.len();
    let mut m: Mat = a.clone();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] -= sigma;
    }
    let mut count = 0;
    for k in 0..n {
        let mut d = m[k][k];
        if d == 0.0 {
            d = -1e-300;
        }
        if d < 0.0 {
            count += 1;
        }
        for i in k + 1..n {
            let f = m[i][k] / d;
            for j in k + 1..n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    count
}

/// Smallest eigenvalue of a symmetric matrix by bisection on the inertia.
pub fn min_eig_bisection(a: &Mat) -> f64 {
    let bound = a.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max) + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(a, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * bound {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Solves the cancellation system for `T` directly: unknowns `T^{li}` with
/// `T^{11} = 1`, equations `sum_i a^{ij} T^{li} = 0` (`j != l`) and
/// `sum_i a^{ij} T^{ji} = sum_i a^{i1} T^{1i}` (`j >= 2`). `t[l][i] = T^{li}`.
pub fn cancellation_solve(a: &Mat) -> Mat {
    let n = a.len();
    let idx = |l: usize, i: usize| l * n + i - 1; // skips (0, 0)
    let unknowns = n * n - 1;
    let mut rows: Mat = Vec::new();
    let mut rhs = Vec::new();
    let mut push = |coef: Vec<(usize, usize, f64)>| {
        let mut row = vec![0.0; unknowns];
        let mut b = 0.0;
        for (l, i, v) in coef {
            if l == 0 && i == 0 {
                b -= v;
            } else {
                row[idx(l, i)] += v;
            }
        }
        rows.push(row);
        rhs.push(b);
    };
    for l in 0..n {
        for j in 0..n {
            if j != l {
                push((0..n).map(|i| (l, i, a[i][j])).collect());
            }
        }
    }
    for j in 1..n {
        let mut coef: Vec<(usize, usize, f64)> = (0..n).map(|i| (j, i, a[i][j])).collect();
        coef.extend((0..n).map(|i| (0, i, -a[i][0])));
        push(coef);
    }
    let sol = gauss_solve(&rows, &rhs);
    (0..n).map(|l| (0..n).map(|i| if l == 0 && i == 0 { 1.0 } else { sol[idx(l, i)] }).collect()).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// A random matrix `S + K` with `S` symmetric, `lambda_min(S) >= floor`
/// (by Gershgorin), and `K` skew.
pub fn random_pd_sym_part(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Mat {
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = rng.gen_range(-1.0..1.0);
            s[i][j] = v;
            s[j][i] = v;
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| f64::abs(s[i][j])).sum();
        s[i][i] = off + floor + rng.gen_range(0.0..1.0);
    }
    let mut m = s;
    for i in 0..n {
        for j in i + 1..n {
            let k = rng.gen_range(-2.0..2.0);
            m[i][j] += k;
            m[j][i] -= k;
        }
    }
    m
}

pub fn cf(src: &str, m: usize) -> coupled_wmp::exprlang::CoefficientField {
    coupled_wmp::exprlang::CoefficientField::parse(src, m).unwrap()
}

pub fn grid(rows: &[&[&str]], m: usize) -> Vec<Vec<coupled_wmp::exprlang::CoefficientField>> {
    rows.iter().map(|r| r.iter().map(|s| cf(s, m)).collect()).collect()
}

/// Absolute path of a bundled config.
pub fn config_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}
