//! Scalar types the expression evaluator is generic over.
//!
//! `f64` evaluates values only, [`Dual`] carries a gradient and [`Dual2`]
//! carries a gradient plus a packed upper-triangular Hessian. All three are
//! propagated through the same recursive evaluator, so values, gradients and
//! Hessians come from one code path.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Largest number of variables a differentiated expression may reference.
pub const MAX_VARS: usize = 8;

const HESS_LEN: usize = MAX_VARS * (MAX_VARS + 1) / 2;

#[inline]
fn packed(i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    // row-major upper triangle
    a * MAX_VARS - a * (a + 1) / 2 + b
}

/// Arithmetic needed by the evaluator.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn value(&self) -> f64;

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.value()`.
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self;

    fn powi(self, k: i32) -> Self {
        let v = self.value();
        let kf = k as f64;
        let f1 = if k == 0 { 0.0 } else { kf * v.powi(k - 1) };
        let f2 = if k == 0 || k == 1 {
            0.0
        } else {
            kf * (kf - 1.0) * v.powi(k - 2)
        };
        self.chain(v.powi(k), f1, f2)
    }

    fn powf(self, p: f64) -> Self {
        let v = self.value();
        self.chain(v.powf(p), p * v.powf(p - 1.0), p * (p - 1.0) * v.powf(p - 2.0))
    }

    fn sqrt(self) -> Self {
        let s = self.value().sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * s * s))
    }

    fn sin(self) -> Self {
        let v = self.value();
        self.chain(v.sin(), v.cos(), -v.sin())
    }

    fn cos(self) -> Self {
        let v = self.value();
        self.chain(v.cos(), -v.sin(), -v.cos())
    }

    fn exp(self) -> Self {
        let e = self.value().exp();
        self.chain(e, e, e)
    }

    fn ln(self) -> Self {
        let v = self.value();
        self.chain(v.ln(), 1.0 / v, -1.0 / (v * v))
    }

    fn abs(self) -> Self {
        let v = self.value();
        let s = if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.chain(v.abs(), s, 0.0)
    }
}

impl Scalar for f64 {
    #[inline]
    fn constant(c: f64) -> Self {
        c
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn chain(self, f0: f64, _f1: f64, _f2: f64) -> Self {
        f0
    }
    fn powi(self, k: i32) -> Self {
        f64::powi(self, k)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
}

/// First-order forward-mode dual number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub g: [f64; MAX_VARS],
}

impl Dual {
    pub fn variable(value: f64, index: usize) -> Self {
        let mut g = [0.0; MAX_VARS];
        g[index] = 1.0;
        Dual { v: value, g }
    }
}

impl Scalar for Dual {
    #[inline]
    fn constant(c: f64) -> Self {
        Dual {
            v: c,
            g: [0.0; MAX_VARS],
        }
    }
    #[inline]
    fn value(&self) -> f64 {
        self.v
    }
    #[inline]
    fn chain(self, f0: f64, f1: f64, _f2: f64) -> Self {
        let mut g = self.g;
        g.iter_mut().for_each(|x| *x *= f1);
        Dual { v: f0, g }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(mut self, rhs: Dual) -> Dual {
        self.v += rhs.v;
        for (a, b) in self.g.iter_mut().zip(rhs.g) {
            *a += b;
        }
        self
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(mut self, rhs: Dual) -> Dual {
        self.v -= rhs.v;
        for (a, b) in self.g.iter_mut().zip(rhs.g) {
            *a -= b;
        }
        self
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, rhs: Dual) -> Dual {
        let mut g = [0.0; MAX_VARS];
        for i in 0..MAX_VARS {
            g[i] = self.v * rhs.g[i] + rhs.v * self.g[i];
        }
        Dual {
            v: self.v * rhs.v,
            g,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, rhs: Dual) -> Dual {
        let inv = 1.0 / rhs.v;
        let q = self.v * inv;
        let mut g = [0.0; MAX_VARS];
        for i in 0..MAX_VARS {
            g[i] = (self.g[i] - q * rhs.g[i]) * inv;
        }
        Dual { v: q, g }
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(mut self) -> Dual {
        self.v = -self.v;
        self.g.iter_mut().for_each(|x| *x = -*x);
        self
    }
}

/// Second-order dual number: value, gradient and Hessian propagated together.
///
/// The Hessian is stored as a packed upper triangle, so the matrix handed
/// out by [`Dual2::hessian_entry`] is symmetric by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual2 {
    pub v: f64,
    pub g: [f64; MAX_VARS],
    h: [f64; HESS_LEN],
}

impl Dual2 {
    pub fn variable(value: f64, index: usize) -> Self {
        let mut g = [0.0; MAX_VARS];
        g[index] = 1.0;
        Dual2 {
            v: value,
            g,
            h: [0.0; HESS_LEN],
        }
    }

    pub fn hessian_entry(&self, i: usize, j: usize) -> f64 {
        self.h[packed(i, j)]
    }
}

impl Scalar for Dual2 {
    #[inline]
    fn constant(c: f64) -> Self {
        Dual2 {
            v: c,
            g: [0.0; MAX_VARS],
            h: [0.0; HESS_LEN],
        }
    }
    #[inline]
    fn value(&self) -> f64 {
        self.v
    }
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut out = Dual2::constant(f0);
        for i in 0..MAX_VARS {
            out.g[i] = f1 * self.g[i];
        }
        for i in 0..MAX_VARS {
            for j in i..MAX_VARS {
                let k = packed(i, j);
                out.h[k] = f1 * self.h[k] + f2 * self.g[i] * self.g[j];
            }
        }
        out
    }
}

impl Add for Dual2 {
    type Output = Dual2;
    fn add(mut self, rhs: Dual2) -> Dual2 {
        self.v += rhs.v;
        for (a, b) in self.g.iter_mut().zip(rhs.g) {
            *a += b;
        }
        for (a, b) in self.h.iter_mut().zip(rhs.h) {
            *a += b;
        }
        self
    }
}

impl Sub for Dual2 {
    type Output = Dual2;
    fn sub(mut self, rhs: Dual2) -> Dual2 {
        self.v -= rhs.v;
        for (a, b) in self.g.iter_mut().zip(rhs.g) {
            *a -= b;
        }
        for (a, b) in self.h.iter_mut().zip(rhs.h) {
            *a -= b;
        }
        self
    }
}

impl Mul for Dual2 {
    type Output = Dual2;
    fn mul(self, rhs: Dual2) -> Dual2 {
        let mut out = Dual2::constant(self.v * rhs.v);
        for i in 0..MAX_VARS {
            out.g[i] = self.v * rhs.g[i] + rhs.v * self.g[i];
        }
        for i in 0..MAX_VARS {
            for j in i..MAX_VARS {
                let k = packed(i, j);
                out.h[k] = self.v * rhs.h[k]
                    + rhs.v * self.h[k]
                    + self.g[i] * rhs.g[j]
                    + self.g[j] * rhs.g[i];
            }
        }
        out
    }
}

impl Div for Dual2 {
    type Output = Dual2;
    fn div(self, rhs: Dual2) -> Dual2 {
        let v = rhs.v;
        self * rhs.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }
}

impl Neg for Dual2 {
    type Output = Dual2;
    fn neg(mut self) -> Dual2 {
        self.v = -self.v;
        self.g.iter_mut().for_each(|x| *x = -*x);
        self.h.iter_mut().for_each(|x| *x = -*x);
        self
    }
}
