//! The coefficient expression language.
//!
//! Every coefficient of a system (principal part, lower-order terms, data,
//! weights) is a [`CoefficientField`]: a parsed expression in the space
//! variables `x1..x_m`. Fields are immutable and cheap to clone, so they can be
//! shared freely across threads.

mod parser;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::sampling::SampleSet;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("`{name}` at byte {offset} takes {expected} argument(s), got {found}")]
    Arity { name: String, expected: usize, found: usize, offset: usize },
    #[error("field dimension must be 1, 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("empty expression")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainErrorKind {
    DivisionByZero,
    LogOfNonPositive(f64),
    SqrtOfNegative(f64),
    NonFinite(&'static str),
    WrongPointLength { expected: usize, found: usize },
}

impl fmt::Display for DomainErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainErrorKind::DivisionByZero => write!(f, "division by zero"),
            DomainErrorKind::LogOfNonPositive(v) => write!(f, "log of non-positive value {v}"),
            DomainErrorKind::SqrtOfNegative(v) => write!(f, "sqrt of negative value {v}"),
            DomainErrorKind::NonFinite(op) => write!(f, "non-finite result in `{op}`"),
            DomainErrorKind::WrongPointLength { expected, found } => {
                write!(f, "point has {found} coordinates, field expects {expected}")
            }
        }
    }
}

/// Evaluation failure, reported with the offending point.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} at point {point:?}")]
pub struct EvalError {
    pub kind: DomainErrorKind,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Tanh,
    Min,
    Max,
}

impl Func {
    pub const ALL: [Func; 10] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Abs,
        Func::Tanh,
        Func::Min,
        Func::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Expression tree. Variables are zero-based (`Var(0)` is `x1`).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn add(lhs: Expr, rhs: Expr) -> Expr {
        Expr::bin(BinOp::Add, lhs, rhs)
    }

    pub fn sub(lhs: Expr, rhs: Expr) -> Expr {
        Expr::bin(BinOp::Sub, lhs, rhs)
    }

    pub fn mul(lhs: Expr, rhs: Expr) -> Expr {
        Expr::bin(BinOp::Mul, lhs, rhs)
    }

    pub fn div(lhs: Expr, rhs: Expr) -> Expr {
        Expr::bin(BinOp::Div, lhs, rhs)
    }

    pub fn pow(base: Expr, exponent: Expr) -> Expr {
        Expr::Pow(Box::new(base), Box::new(exponent))
    }

    pub fn is_zero_constant(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    /// Largest variable index referenced, plus one.
    pub fn min_dim(&self) -> usize {
        match self {
            Expr::Num(_) => 0,
            Expr::Var(k) => k + 1,
            Expr::Neg(e) => e.min_dim(),
            Expr::Bin(_, l, r) | Expr::Pow(l, r) => l.min_dim().max(r.min_dim()),
            Expr::Call(_, args) => args.iter().map(Expr::min_dim).max().unwrap_or(0),
        }
    }

    fn eval(&self, x: &[f64]) -> Result<f64, DomainErrorKind> {
        let v = match self {
            Expr::Num(v) => return Ok(*v),
            Expr::Var(k) => return Ok(x[*k]),
            Expr::Neg(e) => return Ok(-e.eval(x)?),
            Expr::Bin(op, l, r) => {
                let (a, b) = (l.eval(x)?, r.eval(x)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(DomainErrorKind::DivisionByZero);
                        }
                        a / b
                    }
                }
            }
            Expr::Pow(b, e) => b.eval(x)?.powf(e.eval(x)?),
            Expr::Call(func, args) => {
                let a = args[0].eval(x)?;
                match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(DomainErrorKind::LogOfNonPositive(a));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(DomainErrorKind::SqrtOfNegative(a));
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                    Func::Tanh => a.tanh(),
                    Func::Min => a.min(args[1].eval(x)?),
                    Func::Max => a.max(args[1].eval(x)?),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(DomainErrorKind::NonFinite(self.op_name()))
        }
    }

    fn op_name(&self) -> &'static str {
        match self {
            Expr::Num(_) => "number",
            Expr::Var(_) => "variable",
            Expr::Neg(_) => "-",
            Expr::Bin(op, ..) => op.symbol(),
            Expr::Pow(..) => "^",
            Expr::Call(f, _) => f.name(),
        }
    }
}

/// Canonical, fully parenthesized text. Re-parsing it yields an
/// evaluation-equivalent tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if v.is_sign_negative() => write!(f, "(-{:?})", v.abs()),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(k) => write!(f, "x{}", k + 1),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Pow(b, e) => write!(f, "({b}^{e})"),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// A scalar function of the space point, defined by a parsed expression.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    source: Arc<str>,
    tree: Arc<Expr>,
    dim: usize,
}

impl PartialEq for CoefficientField {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.tree == other.tree
    }
}

impl CoefficientField {
    pub fn parse(text: &str, dim: usize) -> Result<Self, ParseError> {
        parse_expression(text, dim)
    }

    /// Wraps a programmatically built tree; the source becomes its canonical text.
    pub fn from_expr(tree: Expr, dim: usize) -> Result<Self, ParseError> {
        if !(1..=3).contains(&dim) {
            return Err(ParseError::BadDimension(dim));
        }
        if tree.min_dim() > dim {
            return Err(ParseError::UnknownIdentifier { name: format!("x{}", tree.min_dim()), offset: 0 });
        }
        Ok(Self { source: tree.to_string().into(), tree: Arc::new(tree), dim })
    }

    pub fn constant(value: f64, dim: usize) -> Self {
        Self::from_expr(Expr::Num(value), dim).expect("dimension checked by caller")
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn tree(&self) -> &Expr {
        &self.tree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn canonical(&self) -> String {
        self.tree.to_string()
    }

    pub fn is_zero_constant(&self) -> bool {
        self.tree.is_zero_constant()
    }

    pub fn as_constant(&self) -> Option<f64> {
        match *self.tree {
            Expr::Num(v) => Some(v),
            _ => None,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64, EvalError> {
        evaluate(self, x)
    }

    pub fn estimate_w1inf(&self, samples: &SampleSet, fd_step: f64) -> Result<W1InfEstimate, EvalError> {
        estimate_w1inf(|x| self.evaluate(x), samples, fd_step)
    }
}

pub fn parse_expression(text: &str, dim: usize) -> Result<CoefficientField, ParseError> {
    let tree = parser::parse(text, dim)?;
    Ok(CoefficientField { source: text.into(), tree: Arc::new(tree), dim })
}

pub fn evaluate(field: &CoefficientField, x: &[f64]) -> Result<f64, EvalError> {
    if x.len() != field.dim {
        return Err(EvalError {
            kind: DomainErrorKind::WrongPointLength { expected: field.dim, found: x.len() },
            point: x.to_vec(),
        });
    }
    field.tree.eval(x).map_err(|kind| EvalError { kind, point: x.to_vec() })
}

/// Sampled surrogate for the `W^{1,inf}` norm pieces of a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W1InfEstimate {
    pub sup_abs: f64,
    pub sup_grad: f64,
}

/// Default finite-difference step: `1e-5` times the domain diameter.
pub fn default_fd_step(samples: &SampleSet) -> f64 {
    1e-5 * samples.domain().diameter()
}

/// Second-order finite-difference gradient that never leaves the domain box:
/// central where both neighbours fit, otherwise the three-point one-sided
/// stencil.
pub fn fd_gradient<F>(f: &F, x: &[f64], lo: &[f64], hi: &[f64], step: f64) -> Result<Vec<f64>, EvalError>
where
    F: Fn(&[f64]) -> Result<f64, EvalError>,
{
    let mut grad = Vec::with_capacity(x.len());
    let mut y = x.to_vec();
    let at = |y: &mut Vec<f64>, k: usize, offset: f64| {
        y[k] = x[k] + offset;
        let v = f(y);
        y[k] = x[k];
        v
    };
    for k in 0..x.len() {
        let d = if x[k] - step >= lo[k] && x[k] + step <= hi[k] {
            (at(&mut y, k, step)? - at(&mut y, k, -step)?) / (2.0 * step)
        } else if x[k] + 2.0 * step <= hi[k] {
            let f0 = f(x)?;
            (-3.0 * f0 + 4.0 * at(&mut y, k, step)? - at(&mut y, k, 2.0 * step)?) / (2.0 * step)
        } else {
            let f0 = f(x)?;
            (3.0 * f0 - 4.0 * at(&mut y, k, -step)? + at(&mut y, k, -2.0 * step)?) / (2.0 * step)
        };
        grad.push(d);
    }
    Ok(grad)
}

/// `sup |f|` and `sup |grad f|` over the sample set. This is a sampling
/// surrogate, not a proof of `W^{1,inf}` membership.
pub fn estimate_w1inf<F>(f: F, samples: &SampleSet, fd_step: f64) -> Result<W1InfEstimate, EvalError>
where
    F: Fn(&[f64]) -> Result<f64, EvalError>,
{
    let domain = samples.domain();
    let mut est = W1InfEstimate { sup_abs: 0.0, sup_grad: 0.0 };
    for x in samples.points() {
        est.sup_abs = est.sup_abs.max(f(x)?.abs());
        let g = fd_gradient(&f, x, domain.lo(), domain.hi(), fd_step)?;
        est.sup_grad = est.sup_grad.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    Ok(est)
}
