//! Metric fields `P(x)` and their calculus.

mod completeness;
mod coords;
mod domain;
mod system;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{parse_state, Expr};
use crate::linalg::extreme_eigenvalues;

pub use completeness::{completeness_probe, halton, CompletenessProbe, ProbeRow};
pub use coords::Diffeomorphism;
pub use domain::{BoxDomain, TensorGrid, DEFAULT_GRID, MAX_GRID_POINTS};
pub use system::{lie_derivative, DynamicalSystem};

/// Relative eigenvalue floor for positive definiteness.
pub const SPD_REL_TOL: f64 = 1e-12;

/// Symmetric matrix of expressions over a box domain. Only the upper
/// triangle is stored; the lower triangle mirrors it.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    n: usize,
    upper: Vec<Expr>,
    pub domain: BoxDomain,
}

fn upper_index(n: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    a * n - a * (a + 1) / 2 + b
}

impl MetricField {
    /// `upper` lists the upper triangle row by row: `P11, P12, .., P1n, P22, ..`.
    pub fn from_upper(n: usize, upper: Vec<Expr>, domain: BoxDomain) -> Result<Self> {
        if upper.len() != n * (n + 1) / 2 {
            return Err(Error::Dimension(format!(
                "a {n}x{n} metric needs {} upper-triangle entries, got {}",
                n * (n + 1) / 2,
                upper.len()
            )));
        }
        if domain.dim() != n {
            return Err(Error::Dimension(format!(
                "domain has dimension {} but the metric {n}",
                domain.dim()
            )));
        }
        if let Some(k) = upper.iter().filter_map(Expr::max_var).max() {
            if k >= n {
                return Err(Error::Dimension(format!(
                    "metric entry references x{} but n = {n}",
                    k + 1
                )));
            }
        }
        Ok(MetricField { n, upper, domain })
    }

    /// Parses upper-triangle entries written over `x1..xn`.
    pub fn parse_upper(n: usize, upper: &[&str], domain: BoxDomain) -> Result<Self> {
        let exprs = upper
            .iter()
            .map(|s| parse_state(s, n))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_upper(n, exprs, domain)
    }

    /// Constant metric from a symmetric matrix (upper triangle is used).
    pub fn constant(m: &DMatrix<f64>, domain: BoxDomain) -> Result<Self> {
        let n = m.nrows();
        let mut upper = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                upper.push(Expr::Const(m[(i, j)]));
            }
        }
        Self::from_upper(n, upper, domain)
    }

    pub fn identity(domain: BoxDomain) -> Self {
        let n = domain.dim();
        Self::constant(&DMatrix::identity(n, n), domain).expect("identity is well formed")
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> &Expr {
        &self.upper[upper_index(self.n, i, j)]
    }

    pub fn upper_entries(&self) -> &[Expr] {
        &self.upper
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, metric dimension is {}",
                x.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// `P(x)` without the positive-definiteness check.
    pub fn eval_unchecked(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in i..self.n {
                let v = self.entry(i, j).eval(x).map_err(|e| Error::from(e).at(x))?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }

    /// `P(x)`, rejecting matrices with `λ_min ≤ 1e-12·max(1, λ_max)`.
    pub fn eval(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.eval_unchecked(x)?;
        let (lo, hi) = extreme_eigenvalues(&m);
        if !(lo > SPD_REL_TOL * hi.max(1.0)) {
            return Err(Error::NotPositiveDefinite {
                x: x.to_vec(),
                lambda_min: lo,
            });
        }
        Ok(m)
    }

    /// `D[m][(k, l)] = ∂P_kl/∂x_m` from forward-mode derivatives of the
    /// entries.
    pub fn partials(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        self.check_point(x)?;
        let n = self.n;
        let mut d = vec![DMatrix::zeros(n, n); n];
        for i in 0..n {
            for j in i..n {
                let g = self
                    .entry(i, j)
                    .eval_dual(x)
                    .map_err(|e| Error::from(e).at(x))?;
                for (m, dm) in d.iter_mut().enumerate() {
                    dm[(i, j)] = g.g[m];
                    dm[(j, i)] = g.g[m];
                }
            }
        }
        Ok(d)
    }

    /// Christoffel symbols of the second kind at `x`.
    pub fn christoffel(&self, x: &[f64]) -> Result<Christoffel> {
        let p = self.eval(x)?;
        let pinv = spd_inverse(&p, x)?;
        let d = self.partials(x)?;
        let n = self.n;
        let mut first = vec![0.0; n * n * n];
        // first kind: Γ_mkl = ½ (∂_l P_mk + ∂_k P_ml − ∂_m P_kl)
        for m in 0..n {
            for k in 0..n {
                for l in k..n {
                    let v = 0.5 * (d[l][(m, k)] + d[k][(m, l)] - d[m][(k, l)]);
                    first[(m * n + k) * n + l] = v;
                    first[(m * n + l) * n + k] = v;
                }
            }
        }
        let mut data = vec![0.0; n * n * n];
        for i in 0..n {
            for k in 0..n {
                for l in k..n {
                    let v: f64 = (0..n)
                        .map(|m| pinv[(i, m)] * first[(m * n + k) * n + l])
                        .sum();
                    data[(i * n + k) * n + l] = v;
                    data[(i * n + l) * n + k] = v;
                }
            }
        }
        Ok(Christoffel { n, data })
    }

    /// Geodesic acceleration `-Γ(x)[v, v]`.
    pub fn geodesic_acceleration(&self, x: &[f64], v: &[f64]) -> Result<DVector<f64>> {
        let p = self.eval_unchecked(x)?;
        let d = self.partials(x)?;
        let n = self.n;
        let vv = DVector::from_column_slice(v);
        // c_m = Σ_l (∂_l P v)_m v_l − ½ vᵀ ∂_m P v
        let mut c = DVector::zeros(n);
        for l in 0..n {
            c += (&d[l] * &vv) * v[l];
        }
        for m in 0..n {
            c[m] -= 0.5 * vv.dot(&(&d[m] * &vv));
        }
        let chol = p.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
            x: x.to_vec(),
            lambda_min: f64::NAN,
        })?;
        Ok(-chol.solve(&c))
    }

    /// `vᵀ P(x) v`.
    pub fn quadratic(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        let p = self.eval_unchecked(x)?;
        let vv = DVector::from_column_slice(v);
        Ok(vv.dot(&(&p * &vv)))
    }

    /// `(λ_min, λ_max)` of `P(x)`.
    pub fn eigen_bounds(&self, x: &[f64]) -> Result<(f64, f64)> {
        Ok(extreme_eigenvalues(&self.eval(x)?))
    }
}

pub(crate) fn spd_inverse(p: &DMatrix<f64>, x: &[f64]) -> Result<DMatrix<f64>> {
    p.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::SingularMetric { x: x.to_vec() })
}

/// `Γ^i_kl` stored densely, symmetric in `(k, l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn get(&self, i: usize, k: usize, l: usize) -> f64 {
        self.data[(i * self.n + k) * self.n + l]
    }

    /// The matrix `(Γ^i_kl)_{kl}` for a fixed upper index.
    pub fn slice(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |k, l| self.get(i, k, l))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Largest `|Γ^i_kl − Γ^i_lk|`.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for k in 0..n {
                for l in 0..n {
                    worst = worst.max((self.get(i, k, l) - self.get(i, l, k)).abs());
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn example_metric() -> MetricField {
        MetricField::parse_upper(2, &["2+x2^2", "x1*x2-1", "1+x1^2"], BoxDomain::cube(2, 3.0))
            .unwrap()
    }

    #[test]
    fn evaluates_example_metric() {
        let p = example_metric();
        assert_eq!(p.eval(&[0.0, 0.0]).unwrap(), DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]));
        assert_eq!(p.eval(&[1.0, 1.0]).unwrap(), DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 2.0]));
        let id = MetricField::identity(BoxDomain::cube(2, 1.0));
        assert_eq!(id.eval(&[0.3, 0.1]).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn rejects_indefinite() {
        let p = MetricField::parse_upper(2, &["1", "x1", "1"], BoxDomain::cube(2, 3.0)).unwrap();
        assert!(p.eval(&[0.5, 0.0]).is_ok());
        match p.eval(&[2.0, 0.0]) {
            Err(Error::NotPositiveDefinite { lambda_min, .. }) => assert_relative_eq!(lambda_min, -1.0, epsilon = 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn partials_of_example_metric() {
        let p = example_metric();
        assert_eq!(p.partials(&[0.0, 3.0]).unwrap()[1][(0, 0)], 6.0);
        assert_eq!(p.partials(&[2.0, 0.0]).unwrap()[0][(1, 1)], 4.0);
        let c = MetricField::identity(BoxDomain::cube(2, 1.0));
        assert!(c.partials(&[0.2, 0.4]).unwrap().iter().all(|d| d.norm() == 0.0));
    }

    #[test]
    fn christoffel_examples() {
        let c = MetricField::identity(BoxDomain::cube(2, 1.0)).christoffel(&[0.1, 0.2]).unwrap();
        assert!((0..2).all(|i| c.slice(i).norm() == 0.0));

        let e = MetricField::parse_upper(1, &["exp(2*x1)"], BoxDomain::cube(1, 5.0)).unwrap();
        for x in [-1.0, 0.0, 0.7, 2.0] {
            assert_relative_eq!(e.christoffel(&[x]).unwrap().get(0, 0, 0), 1.0, epsilon = 1e-14);
        }

        // diag(1, 1+x1^2): Γ^1_22 = -x1, Γ^2_12 = x1/(1+x1^2)
        let d = MetricField::parse_upper(2, &["1", "0", "1+x1^2"], BoxDomain::cube(2, 3.0)).unwrap();
        let g = d.christoffel(&[1.5, -0.3]).unwrap();
        assert_relative_eq!(g.get(0, 1, 1), -1.5, epsilon = 1e-14);
        assert_relative_eq!(g.get(1, 0, 1), 1.5 / 3.25, epsilon = 1e-14);
    }

    #[test]
    fn acceleration_matches_christoffel_contraction() {
        let p = example_metric();
        let x = [0.4, -1.1];
        let v = [0.3, 0.9];
        let g = p.christoffel(&x).unwrap();
        let a = p.geodesic_acceleration(&x, &v).unwrap();
        for i in 0..2 {
            let mut s = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    s -= g.get(i, k, l) * v[k] * v[l];
                }
            }
            assert_relative_eq!(a[i], s, epsilon = 1e-13);
        }
    }

    #[test]
    fn arity_is_checked() {
        let bad = MetricField::parse_upper(2, &["1", "0"], BoxDomain::cube(2, 1.0));
        assert!(matches!(bad, Err(Error::Dimension(_))));
    }
}
