//! Symbolic differentiation and substitution.
//!
//! Used where a derivative has to stay an expression, e.g. when a vector
//! field or metric is carried into new coordinates and must be
//! differentiated again afterwards.

use super::{Expr, Func};

fn c(v: f64) -> Expr {
    Expr::Const(v)
}

fn as_const(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(v) => Some(*v),
        _ => None,
    }
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => c(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => c(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => c(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => c(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    match (as_const(&a), as_const(&b)) {
        (Some(x), _) if x == 0.0 => c(0.0),
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), Some(y)) if y != 0.0 => c(x / y),
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(v) => c(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn powi(a: Expr, k: i32) -> Expr {
    match k {
        0 => c(1.0),
        1 => a,
        _ => Expr::PowI(Box::new(a), k),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

impl Expr {
    /// Partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Expr {
        match self {
            Expr::Const(_) => c(0.0),
            Expr::Var(i) => c(if *i == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.derivative(var)),
            Expr::Add(a, b) => add(a.derivative(var), b.derivative(var)),
            Expr::Sub(a, b) => sub(a.derivative(var), b.derivative(var)),
            Expr::Mul(a, b) => add(
                mul(a.derivative(var), (**b).clone()),
                mul((**a).clone(), b.derivative(var)),
            ),
            Expr::Div(a, b) => {
                let da = a.derivative(var);
                let db = b.derivative(var);
                if as_const(&db) == Some(0.0) {
                    return div(da, (**b).clone());
                }
                div(
                    sub(mul(da, (**b).clone()), mul((**a).clone(), db)),
                    powi((**b).clone(), 2),
                )
            }
            Expr::PowI(a, k) => mul(
                mul(c(*k as f64), powi((**a).clone(), k - 1)),
                a.derivative(var),
            ),
            Expr::PowF(a, p) => mul(
                mul(c(*p), Expr::PowF(a.clone(), p - 1.0)),
                a.derivative(var),
            ),
            Expr::Pow(a, b) => {
                // d(a^b) = a^b (b' ln a + b a'/a)
                let ln_a = call(Func::Log, (**a).clone());
                let inner = add(
                    mul(b.derivative(var), ln_a),
                    div(mul((**b).clone(), a.derivative(var)), (**a).clone()),
                );
                mul(self.clone(), inner)
            }
            Expr::Call(f, a) => {
                let da = a.derivative(var);
                if as_const(&da) == Some(0.0) {
                    return c(0.0);
                }
                let outer = match f {
                    Func::Sqrt => div(c(0.5), self.clone()),
                    Func::Sin => call(Func::Cos, (**a).clone()),
                    Func::Cos => neg(call(Func::Sin, (**a).clone())),
                    Func::Exp => self.clone(),
                    Func::Log => div(c(1.0), (**a).clone()),
                    Func::Abs => div((**a).clone(), self.clone()),
                };
                mul(outer, da)
            }
        }
    }

    /// Replaces every `Var(i)` by `subs[i]`.
    ///
    /// # Panics
    ///
    /// Panics if the expression references a variable beyond `subs`.
    pub fn substitute(&self, subs: &[Expr]) -> Expr {
        let s = |e: &Expr| e.substitute(subs);
        match self {
            Expr::Const(v) => c(*v),
            Expr::Var(i) => subs[*i].clone(),
            Expr::Neg(a) => neg(s(a)),
            Expr::Add(a, b) => add(s(a), s(b)),
            Expr::Sub(a, b) => sub(s(a), s(b)),
            Expr::Mul(a, b) => mul(s(a), s(b)),
            Expr::Div(a, b) => div(s(a), s(b)),
            Expr::PowI(a, k) => powi(s(a), *k),
            Expr::PowF(a, p) => Expr::PowF(Box::new(s(a)), *p),
            Expr::Pow(a, b) => Expr::Pow(Box::new(s(a)), Box::new(s(b))),
            Expr::Call(f, a) => call(*f, s(a)),
        }
    }

    pub(crate) fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
        terms.into_iter().fold(c(0.0), add)
    }

    pub(crate) fn product(a: Expr, b: Expr) -> Expr {
        mul(a, b)
    }
}
