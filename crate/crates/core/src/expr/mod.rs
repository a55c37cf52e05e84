//! Scalar expressions over indexed state variables.
//!
//! Expressions are parsed once into an immutable [`Expr`] tree and then
//! evaluated with plain floats, first-order duals (gradients) or
//! second-order duals (Hessians). Variables are referenced by index; the
//! names are only needed while parsing and printing.

mod dual;
mod parser;
mod symbolic;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use dual::{Dual, Dual2, Scalar, MAX_VARS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("{kind} in `{expr}`")]
    Domain { kind: DomainKind, expr: String },
    #[error("expression references variable {index} but the point has {len} entries")]
    Dimension { index: usize, len: usize },
    #[error("differentiation supports at most {MAX_VARS} variables, got {0}")]
    TooManyVariables(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    SqrtOfNegative,
    LogOfNonPositive,
    DivisionByZero,
    NonPositivePowerBase,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainKind::SqrtOfNegative => "square root of a negative number",
            DomainKind::LogOfNonPositive => "logarithm of a non-positive number",
            DomainKind::DivisionByZero => "division by zero",
            DomainKind::NonPositivePowerBase => "real power of a non-positive base",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

/// Expression tree. Powers are split by exponent kind: `PowI` for constant
/// integer exponents (any base), `PowF` for constant real exponents and
/// `Pow` for variable exponents (both need a positive base).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    PowI(Box<Expr>, i32),
    PowF(Box<Expr>, f64),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Parses `text` with `vars` naming variables `0..vars.len()`.
pub fn parse(text: &str, vars: &[&str]) -> Result<Expr, ExprError> {
    parser::Parser::new(text, vars)?.parse_all()
}

/// Conventional names `x1..xn`.
pub fn state_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

/// Parses with the conventional `x1..xn` variable names.
pub fn parse_state(text: &str, n: usize) -> Result<Expr, ExprError> {
    let names = state_names(n);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    parse(text, &refs)
}

impl Expr {
    /// Builds a power node, folding a variable-free exponent.
    pub fn power(base: Expr, exponent: Expr) -> Expr {
        if exponent.max_var().is_none() {
            if let Ok(p) = exponent.eval(&[]) {
                if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
                    return Expr::PowI(Box::new(base), p as i32);
                }
                return Expr::PowF(Box::new(base), p);
            }
        }
        Expr::Pow(Box::new(base), Box::new(exponent))
    }

    /// Highest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::PowI(a, _) | Expr::PowF(a, _) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        self.max_var().is_none()
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, ExprError> {
        self.eval_with(point)
    }

    /// Evaluates with any [`Scalar`] type bound to the variables.
    pub fn eval_with<S: Scalar>(&self, vars: &[S]) -> Result<S, ExprError> {
        Ok(match self {
            Expr::Const(c) => S::constant(*c),
            Expr::Var(i) => *vars.get(*i).ok_or(ExprError::Dimension {
                index: *i,
                len: vars.len(),
            })?,
            Expr::Neg(a) => -a.eval_with(vars)?,
            Expr::Add(a, b) => a.eval_with(vars)? + b.eval_with(vars)?,
            Expr::Sub(a, b) => a.eval_with(vars)? - b.eval_with(vars)?,
            Expr::Mul(a, b) => a.eval_with(vars)? * b.eval_with(vars)?,
            Expr::Div(a, b) => {
                let num = a.eval_with(vars)?;
                let den = b.eval_with(vars)?;
                if den.value() == 0.0 {
                    return Err(self.domain(DomainKind::DivisionByZero));
                }
                num / den
            }
            Expr::PowI(a, k) => {
                let base = a.eval_with(vars)?;
                if *k < 0 && base.value() == 0.0 {
                    return Err(self.domain(DomainKind::DivisionByZero));
                }
                base.powi(*k)
            }
            Expr::PowF(a, p) => {
                let base = a.eval_with(vars)?;
                if base.value() <= 0.0 {
                    return Err(self.domain(DomainKind::NonPositivePowerBase));
                }
                base.powf(*p)
            }
            Expr::Pow(a, b) => {
                let base = a.eval_with(vars)?;
                if base.value() <= 0.0 {
                    return Err(self.domain(DomainKind::NonPositivePowerBase));
                }
                let exponent = b.eval_with(vars)?;
                (exponent * base.ln()).exp()
            }
            Expr::Call(func, a) => {
                let x = a.eval_with(vars)?;
                match func {
                    Func::Sqrt if x.value() < 0.0 => {
                        return Err(self.domain(DomainKind::SqrtOfNegative))
                    }
                    Func::Log if x.value() <= 0.0 => {
                        return Err(self.domain(DomainKind::LogOfNonPositive))
                    }
                    Func::Sqrt => x.sqrt(),
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Log => x.ln(),
                    Func::Abs => x.abs(),
                }
            }
        })
    }

    fn domain(&self, kind: DomainKind) -> ExprError {
        ExprError::Domain {
            kind,
            expr: self.to_string(),
        }
    }

    /// Value and gradient in one forward pass.
    pub fn eval_dual(&self, point: &[f64]) -> Result<Dual, ExprError> {
        check_dim(point.len())?;
        let vars: Vec<Dual> = point
            .iter()
            .enumerate()
            .map(|(i, &v)| Dual::variable(v, i))
            .collect();
        self.eval_with(&vars)
    }

    /// Value, gradient and Hessian in one forward pass.
    pub fn eval_dual2(&self, point: &[f64]) -> Result<Dual2, ExprError> {
        check_dim(point.len())?;
        let vars: Vec<Dual2> = point
            .iter()
            .enumerate()
            .map(|(i, &v)| Dual2::variable(v, i))
            .collect();
        self.eval_with(&vars)
    }

    pub fn grad(&self, point: &[f64]) -> Result<DVector<f64>, ExprError> {
        let d = self.eval_dual(point)?;
        Ok(DVector::from_fn(point.len(), |i, _| d.g[i]))
    }

    pub fn hessian(&self, point: &[f64]) -> Result<DMatrix<f64>, ExprError> {
        let d = self.eval_dual2(point)?;
        let n = point.len();
        Ok(DMatrix::from_fn(n, n, |i, j| d.hessian_entry(i, j)))
    }

    /// Prints with caller-supplied variable names.
    pub fn display_with<'a>(&'a self, names: &'a [String]) -> Named<'a> {
        Named { expr: self, names }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, names: Option<&[String]>) -> fmt::Result {
        let bin = |f: &mut fmt::Formatter<'_>, a: &Expr, op: &str, b: &Expr| -> fmt::Result {
            f.write_str("(")?;
            a.write(f, names)?;
            write!(f, " {op} ")?;
            b.write(f, names)?;
            f.write_str(")")
        };
        match self {
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => {
                write!(f, "(-{})", -c)
            }
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => match names.and_then(|n| n.get(*i)) {
                Some(name) => f.write_str(name),
                None => write!(f, "x{}", i + 1),
            },
            Expr::Neg(a) => {
                f.write_str("(-")?;
                a.write(f, names)?;
                f.write_str(")")
            }
            Expr::Add(a, b) => bin(f, a, "+", b),
            Expr::Sub(a, b) => bin(f, a, "-", b),
            Expr::Mul(a, b) => bin(f, a, "*", b),
            Expr::Div(a, b) => bin(f, a, "/", b),
            Expr::PowI(a, k) => {
                f.write_str("(")?;
                a.write(f, names)?;
                write!(f, ")^({k})")
            }
            Expr::PowF(a, p) => {
                f.write_str("(")?;
                a.write(f, names)?;
                write!(f, ")^({p})")
            }
            Expr::Pow(a, b) => {
                f.write_str("(")?;
                a.write(f, names)?;
                f.write_str(")^(")?;
                b.write(f, names)?;
                f.write_str(")")
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write(f, names)?;
                f.write_str(")")
            }
        }
    }
}

fn check_dim(n: usize) -> Result<(), ExprError> {
    if n > MAX_VARS {
        Err(ExprError::TooManyVariables(n))
    } else {
        Ok(())
    }
}

/// Fully parenthesised, using `x1..xn` for variable names.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, None)
    }
}

pub struct Named<'a> {
    expr: &'a Expr,
    names: &'a [String],
}

impl fmt::Display for Named<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.write(f, Some(self.names))
    }
}
