use nalgebra::{DMatrix, DVector};

use super::MetricField;
use crate::error::{Error, Result};
use crate::expr::{parse_state, Expr};

/// `x' = f(x)`, `y = h(x)` with `x ∈ R^n`, `y ∈ R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicalSystem {
    pub f: Vec<Expr>,
    pub h: Vec<Expr>,
}

impl DynamicalSystem {
    pub fn new(f: Vec<Expr>, h: Vec<Expr>) -> Result<Self> {
        let n = f.len();
        if let Some(k) = f.iter().chain(&h).filter_map(Expr::max_var).max() {
            if k >= n {
                return Err(Error::Dimension(format!(
                    "system references x{} but n = {n}",
                    k + 1
                )));
            }
        }
        Ok(DynamicalSystem { f, h })
    }

    pub fn parse(f: &[&str], h: &[&str]) -> Result<Self> {
        let n = f.len();
        let pf = f.iter().map(|s| parse_state(s, n)).collect::<Result<_, _>>()?;
        let ph = h.iter().map(|s| parse_state(s, n)).collect::<Result<_, _>>()?;
        Self::new(pf, ph)
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn m(&self) -> usize {
        self.h.len()
    }

    fn eval_all(exprs: &[Expr], x: &[f64]) -> Result<DVector<f64>> {
        let v = exprs
            .iter()
            .map(|e| e.eval(x))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::from(e).at(x))?;
        Ok(DVector::from_vec(v))
    }

    fn jacobian_of(exprs: &[Expr], x: &[f64]) -> Result<DMatrix<f64>> {
        let mut j = DMatrix::zeros(exprs.len(), x.len());
        for (r, e) in exprs.iter().enumerate() {
            let d = e.eval_dual(x).map_err(|e| Error::from(e).at(x))?;
            for c in 0..x.len() {
                j[(r, c)] = d.g[c];
            }
        }
        Ok(j)
    }

    pub fn eval_f(&self, x: &[f64]) -> Result<DVector<f64>> {
        Self::eval_all(&self.f, x)
    }

    pub fn eval_h(&self, x: &[f64]) -> Result<DVector<f64>> {
        Self::eval_all(&self.h, x)
    }

    /// `∂f/∂x` (n×n).
    pub fn jacobian_f(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Self::jacobian_of(&self.f, x)
    }

    /// `∂h/∂x` (m×n).
    pub fn jacobian_h(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Self::jacobian_of(&self.h, x)
    }

    /// Hessian of output `j`.
    pub fn hessian_h(&self, j: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        self.h[j].hessian(x).map_err(|e| Error::from(e).at(x))
    }
}

/// `L_f P(x) = Σ_m ∂P/∂x_m f_m + P ∂f/∂x + (∂f/∂x)ᵀ P`.
pub fn lie_derivative(p: &MetricField, sys: &DynamicalSystem, x: &[f64]) -> Result<DMatrix<f64>> {
    if sys.n() != p.dim() {
        return Err(Error::Dimension(format!(
            "system has n = {} but the metric is {}x{}",
            sys.n(),
            p.dim(),
            p.dim()
        )));
    }
    let pm = p.eval(x)?;
    let d = p.partials(x)?;
    let f = sys.eval_f(x)?;
    let jf = sys.jacobian_f(x)?;
    let mut l = &pm * &jf;
    l += jf.transpose() * &pm;
    for (m, dm) in d.iter().enumerate() {
        l += dm * f[m];
    }
    Ok(crate::linalg::symmetrize(&l))
}
