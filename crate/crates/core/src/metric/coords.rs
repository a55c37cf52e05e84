use nalgebra::{DMatrix, DVector};

use super::{BoxDomain, DynamicalSystem, MetricField};
use crate::error::{Error, Result};
use crate::expr::{parse_state, Expr};

/// Change of coordinates `x̄ = φ(x)` with an optional closed-form inverse
/// `x = ψ(x̄)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diffeomorphism {
    pub forward: Vec<Expr>,
    pub inverse: Option<Vec<Expr>>,
}

impl Diffeomorphism {
    pub fn new(forward: Vec<Expr>, inverse: Option<Vec<Expr>>) -> Result<Self> {
        let n = forward.len();
        if let Some(inv) = &inverse {
            if inv.len() != n {
                return Err(Error::Dimension(format!(
                    "forward map has {n} components, inverse has {}",
                    inv.len()
                )));
            }
        }
        let max = forward
            .iter()
            .chain(inverse.iter().flatten())
            .filter_map(Expr::max_var)
            .max();
        if let Some(k) = max {
            if k >= n {
                return Err(Error::Dimension(format!(
                    "coordinate change references x{} but n = {n}",
                    k + 1
                )));
            }
        }
        Ok(Diffeomorphism { forward, inverse })
    }

    pub fn parse(forward: &[&str], inverse: Option<&[&str]>) -> Result<Self> {
        let n = forward.len();
        let fw = forward
            .iter()
            .map(|s| parse_state(s, n))
            .collect::<Result<Vec<_>, _>>()?;
        let inv = match inverse {
            Some(list) => Some(
                list.iter()
                    .map(|s| parse_state(s, n))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            None => None,
        };
        Self::new(fw, inv)
    }

    pub fn identity(n: usize) -> Self {
        let vars: Vec<Expr> = (0..n).map(Expr::Var).collect();
        Diffeomorphism {
            forward: vars.clone(),
            inverse: Some(vars),
        }
    }

    pub fn dim(&self) -> usize {
        self.forward.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward
            .iter()
            .map(|e| e.eval(x))
            .collect::<Result<_, _>>()
            .map_err(|e| Error::from(e).at(x))
    }

    pub fn apply_inverse(&self, xbar: &[f64]) -> Result<Vec<f64>> {
        let inv = self.require_inverse()?;
        inv.iter()
            .map(|e| e.eval(xbar))
            .collect::<Result<_, _>>()
            .map_err(|e| Error::from(e).at(xbar))
    }

    fn require_inverse(&self) -> Result<&[Expr]> {
        self.inverse
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("coordinate change has no inverse map".into()))
    }

    /// `∂φ/∂x` at `x`.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut j = DMatrix::zeros(n, n);
        for (r, e) in self.forward.iter().enumerate() {
            let d = e.eval_dual(x).map_err(|e| Error::from(e).at(x))?;
            for c in 0..n {
                j[(r, c)] = d.g[c];
            }
        }
        Ok(j)
    }

    fn inverse_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let j = self.jacobian(x)?;
        let sv = j.singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if !(smin > 1e-12 * smax) {
            return Err(Error::SingularJacobian { x: x.to_vec() });
        }
        j.try_inverse()
            .ok_or_else(|| Error::SingularJacobian { x: x.to_vec() })
    }

    /// `(x̄, P̄)` with `P̄ = (∂φ/∂x)⁻ᵀ P(x) (∂φ/∂x)⁻¹` and `x̄ = φ(x)`.
    pub fn pushforward_metric(&self, p: &MetricField, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let jinv = self.inverse_jacobian(x)?;
        let pm = p.eval(x)?;
        let pbar = jinv.transpose() * pm * &jinv;
        Ok((self.apply(x)?, crate::linalg::symmetrize(&pbar)))
    }

    /// `(∂φ/∂x)ᵀ P̄ (∂φ/∂x)`: the inverse of [`Self::pushforward_metric`].
    pub fn pullback_matrix(&self, pbar: &DMatrix<f64>, x: &[f64]) -> Result<DMatrix<f64>> {
        let j = self.jacobian(x)?;
        Ok(crate::linalg::symmetrize(&(j.transpose() * pbar * j)))
    }

    /// Tangent vector `∂φ/∂x(x) v`.
    pub fn push_vector(&self, x: &[f64], v: &[f64]) -> Result<DVector<f64>> {
        Ok(self.jacobian(x)? * DVector::from_column_slice(v))
    }

    /// The symbolic Jacobian of `ψ`, `∂ψ_i/∂x̄_j`.
    fn inverse_jacobian_exprs(&self) -> Result<Vec<Vec<Expr>>> {
        let inv = self.require_inverse()?;
        let n = self.dim();
        Ok(inv
            .iter()
            .map(|e| (0..n).map(|j| e.derivative(j)).collect())
            .collect())
    }

    /// Metric expressed in the new coordinates,
    /// `P̄(x̄) = (∂ψ/∂x̄)ᵀ P(ψ(x̄)) (∂ψ/∂x̄)`, on the bounding box of the
    /// image of `P.domain`.
    pub fn transform_metric(&self, p: &MetricField) -> Result<MetricField> {
        let inv = self.require_inverse()?;
        let n = self.dim();
        let dpsi = self.inverse_jacobian_exprs()?;
        let pp: Vec<Vec<Expr>> = (0..n)
            .map(|i| (0..n).map(|j| p.entry(i, j).substitute(inv)).collect())
            .collect();
        let mut upper = Vec::with_capacity(n * (n + 1) / 2);
        for a in 0..n {
            for b in a..n {
                let terms = (0..n).flat_map(|i| {
                    let dpsi = &dpsi;
                    let pp = &pp;
                    (0..n).map(move |j| {
                        Expr::product(
                            Expr::product(dpsi[i][a].clone(), pp[i][j].clone()),
                            dpsi[j][b].clone(),
                        )
                    })
                });
                upper.push(Expr::sum(terms.collect::<Vec<_>>()));
            }
        }
        MetricField::from_upper(n, upper, self.image_domain(&p.domain)?)
    }

    /// System in the new coordinates: `f̄ = (∂φ/∂x ∘ ψ)(f ∘ ψ)`, `h̄ = h ∘ ψ`.
    pub fn transform_system(&self, sys: &DynamicalSystem) -> Result<DynamicalSystem> {
        let inv = self.require_inverse()?;
        let n = self.dim();
        let fpsi: Vec<Expr> = sys.f.iter().map(|e| e.substitute(inv)).collect();
        let f = self
            .forward
            .iter()
            .map(|phi| {
                Expr::sum(
                    (0..n)
                        .map(|j| Expr::product(phi.derivative(j).substitute(inv), fpsi[j].clone()))
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        let h = sys.h.iter().map(|e| e.substitute(inv)).collect();
        DynamicalSystem::new(f, h)
    }

    /// Bounding box of `φ(domain)` estimated on a fine grid, padded by 1%
    /// of each side.
    pub fn image_domain(&self, domain: &BoxDomain) -> Result<BoxDomain> {
        let n = self.dim();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for x in domain.grid(101) {
            let y = self.apply(&x)?;
            for i in 0..n {
                lo[i] = lo[i].min(y[i]);
                hi[i] = hi[i].max(y[i]);
            }
        }
        for i in 0..n {
            let pad = 0.01 * (hi[i] - lo[i]).max(1e-6);
            lo[i] -= pad;
            hi[i] += pad;
        }
        BoxDomain::new(lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::lie_derivative;
    use approx::assert_relative_eq;

    fn phi() -> Diffeomorphism {
        Diffeomorphism::parse(&["x1", "x2*sqrt(1+x1^2)"], Some(&["x1", "x2/sqrt(1+x1^2)"])).unwrap()
    }

    fn flat_in_phi() -> MetricField {
        MetricField::parse_upper(
            2,
            &[
                "1 - x1*x2/sqrt(1+x1^2) + x1^2*x2^2/(1+x1^2)",
                "x1*x2 - sqrt(1+x1^2)/2",
                "1+x1^2",
            ],
            BoxDomain::cube(2, 3.0),
        )
        .unwrap()
    }

    #[test]
    fn identity_map_keeps_metric() {
        let p = flat_in_phi();
        let id = Diffeomorphism::identity(2);
        let x = [0.3, -1.2];
        let (xb, pb) = id.pushforward_metric(&p, &x).unwrap();
        assert_eq!(xb, x.to_vec());
        assert!((pb - p.eval(&x).unwrap()).norm() < 1e-15);
    }

    #[test]
    fn flat_metric_pushes_forward_to_constant() {
        let p = flat_in_phi();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]);
        for x in [[0.0, 0.0], [1.0, 1.0], [-2.5, 0.7], [2.0, -3.0]] {
            let (_, pb) = phi().pushforward_metric(&p, &x).unwrap();
            assert!((pb - &expected).norm() < 1e-12, "at {x:?}");
        }
        let symbolic = phi().transform_metric(&p).unwrap();
        for xb in [[0.2, 0.1], [-1.0, 2.0]] {
            assert!((symbolic.eval(&xb).unwrap() - &expected).norm() < 1e-12);
        }
    }

    #[test]
    fn scaling_map() {
        let s = Diffeomorphism::parse(&["2*x1", "2*x2"], Some(&["x1/2", "x2/2"])).unwrap();
        let p = MetricField::identity(BoxDomain::cube(2, 1.0));
        let (_, pb) = s.pushforward_metric(&p, &[0.1, 0.2]).unwrap();
        assert!((pb - DMatrix::identity(2, 2) * 0.25).norm() < 1e-15);
    }

    #[test]
    fn pushforward_then_pullback() {
        let p = MetricField::parse_upper(2, &["2+x2^2", "x1*x2-1", "1+x1^2"], BoxDomain::cube(2, 3.0)).unwrap();
        for x in [[0.5, -1.0], [2.9, 2.9], [-1.7, 0.2]] {
            let (_, pb) = phi().pushforward_metric(&p, &x).unwrap();
            let back = phi().pullback_matrix(&pb, &x).unwrap();
            assert!((back - p.eval(&x).unwrap()).norm() < 1e-10);
        }
    }

    #[test]
    fn singular_jacobian() {
        let d = Diffeomorphism::parse(&["x1^3", "x2"], None).unwrap();
        let p = MetricField::identity(BoxDomain::cube(2, 1.0));
        assert!(matches!(
            d.pushforward_metric(&p, &[0.0, 0.5]),
            Err(Error::SingularJacobian { .. })
        ));
    }

    #[test]
    fn transformed_system_is_straight_line_motion() {
        let sys = DynamicalSystem::parse(&["x2*sqrt(1+x1^2)", "-(x1/sqrt(1+x1^2))*x2^2"], &["x1"]).unwrap();
        let bar = phi().transform_system(&sys).unwrap();
        for xb in [[0.3, 1.0], [-2.0, 0.4]] {
            let f = bar.eval_f(&xb).unwrap();
            assert_relative_eq!(f[0], xb[1], epsilon = 1e-12);
            assert_relative_eq!(f[1], 0.0, epsilon = 1e-12);
        }
        // Lie derivative transforms as a tensor
        let p = flat_in_phi();
        let pbar = phi().transform_metric(&p).unwrap();
        let x = [0.8, -0.4];
        let xb = phi().apply(&x).unwrap();
        let l = lie_derivative(&p, &sys, &x).unwrap();
        let lb = lie_derivative(&pbar, &bar, &xb).unwrap();
        let back = phi().pullback_matrix(&lb, &x).unwrap();
        assert!((back - l).norm() < 1e-11);
    }
}
