//! Built-in two-dimensional worked example.
//!
//! `x₁' = x₂√(1+x₁²)`, `x₂' = −x₁x₂²/√(1+x₁²)`, `y = x₁`. In the
//! coordinates `x̄ = (x₁, x₂√(1+x₁²))` the system is a double integrator,
//! which gives a closed-form Lyapunov function for the hand-built observer.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::metric::{BoxDomain, Diffeomorphism, DynamicalSystem, MetricField};
use crate::observer::{Gain, ReferenceObserver, RiemannianObserver};

pub const F: [&str; 2] = ["x2*sqrt(1+x1^2)", "-(x1/sqrt(1+x1^2))*x2^2"];
pub const H: [&str; 1] = ["x1"];
/// Upper triangle of the metric used by the condition checks.
pub const METRIC: [&str; 3] = ["2+x2^2", "x1*x2-1", "1+x1^2"];
/// Upper triangle of the metric that is constant in `x̄` coordinates.
pub const FLAT_METRIC: [&str; 3] = [
    "1 - x1*x2/sqrt(1+x1^2) + x1^2*x2^2/(1+x1^2)",
    "x1*x2 - sqrt(1+x1^2)/2",
    "1+x1^2",
];
pub const PHI: [&str; 2] = ["x1", "x2*sqrt(1+x1^2)"];
pub const PHI_INVERSE: [&str; 2] = ["x1", "x2/sqrt(1+x1^2)"];
/// Half-width of the default box; wide enough for the five-second runs.
pub const DOMAIN_RADIUS: f64 = 6.0;

#[derive(Debug, Clone)]
pub struct Example1 {
    pub system: DynamicalSystem,
    pub metric: MetricField,
    pub flat_metric: MetricField,
    pub phi: Diffeomorphism,
    /// The constant metric in `x̄` coordinates.
    pub pbar: DMatrix<f64>,
}

pub fn builtin_example1() -> Example1 {
    builtin_example1_on(BoxDomain::cube(2, DOMAIN_RADIUS)).expect("built-in example is well formed")
}

pub fn builtin_example1_on(domain: BoxDomain) -> Result<Example1> {
    Ok(Example1 {
        system: DynamicalSystem::parse(&F, &H)?,
        metric: MetricField::parse_upper(2, &METRIC, domain.clone())?,
        flat_metric: MetricField::parse_upper(2, &FLAT_METRIC, domain)?,
        phi: Diffeomorphism::parse(&PHI, Some(&PHI_INVERSE))?,
        pbar: DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]),
    })
}

/// `V(x̂, x) = e₁² − e₁e₂√(1+x₁²) + e₂²(1+x₁²)` with `e = x̂ − x`.
pub fn lyapunov_v(xhat: &[f64], x: &[f64]) -> f64 {
    let e1 = xhat[0] - x[0];
    let e2 = xhat[1] - x[1];
    let s2 = 1.0 + x[0] * x[0];
    e1 * e1 - e1 * e2 * s2.sqrt() + e2 * e2 * s2
}

/// Distance under [`FLAT_METRIC`]: the constant-metric length of
/// `φ(b) − φ(a)`.
pub fn flat_distance(a: &[f64], b: &[f64]) -> f64 {
    let phi = |x: &[f64]| [x[0], x[1] * (1.0 + x[0] * x[0]).sqrt()];
    let (pa, pb) = (phi(a), phi(b));
    let d = [pb[0] - pa[0], pb[1] - pa[1]];
    (d[0] * d[0] - d[0] * d[1] + d[1] * d[1]).sqrt()
}

impl Example1 {
    pub fn observer(&self, k_e: f64) -> RiemannianObserver {
        RiemannianObserver::new(self.metric.clone(), self.system.clone(), Gain::Constant(k_e))
            .expect("single-output example")
    }

    pub fn reference_observer(&self) -> ReferenceObserver {
        ReferenceObserver
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundle_values() {
        let ex = builtin_example1();
        assert_eq!(ex.system.eval_f(&[0.0, 1.0]).unwrap().as_slice(), &[1.0, 0.0]);
        assert_eq!(lyapunov_v(&[1.0, 0.0], &[0.0, 0.0]), 1.0);
        assert_eq!(ex.metric.eval(&[0.0, 0.0]).unwrap(), DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn v_is_not_symmetric() {
        let (a, b) = ([0.0, 0.0], [1.0, 1.0]);
        assert_eq!(lyapunov_v(&b, &a), 1.0);
        assert!((lyapunov_v(&a, &b) - (3.0 - 2f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn flat_metric_is_the_pullback_of_pbar() {
        let ex = builtin_example1();
        for x in [[0.4, -1.3], [2.0, 2.0], [-2.5, 0.1]] {
            let back = ex.phi.pullback_matrix(&ex.pbar, &x).unwrap();
            assert!((back - ex.flat_metric.eval(&x).unwrap()).norm() < 1e-13);
        }
    }

    #[test]
    fn pushforward_of_the_flat_metric_is_constant() {
        let ex = builtin_example1();
        let pbar = ex.phi.transform_metric(&ex.flat_metric).unwrap();
        for x in [[0.0, 0.0], [1.5, -2.0], [-0.7, 3.1]] {
            assert!((pbar.eval(&x).unwrap() - &ex.pbar).norm() < 1e-12);
        }
    }

    #[test]
    fn transformed_system_is_a_double_integrator() {
        let ex = builtin_example1();
        let sys = ex.phi.transform_system(&ex.system).unwrap();
        for x in [[0.3, -1.2], [2.0, 0.5]] {
            let f = sys.eval_f(&x).unwrap();
            assert!((f[0] - x[1]).abs() < 1e-14 && f[1].abs() < 1e-14, "{f:?}");
            assert_eq!(sys.eval_h(&x).unwrap()[0], x[0]);
        }
    }
}
