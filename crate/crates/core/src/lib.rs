//! Riemannian-metric tools for nonlinear observer analysis.
//!
//! The crate parses a system `x' = f(x), y = h(x)` and a metric `P(x)` from
//! text expressions, then provides:
//!
//! * metric calculus: partial derivatives, Christoffel symbols, Lie
//!   derivatives along `f`, pushforward under a change of coordinates;
//! * geodesics and Riemannian distance via a shooting method;
//! * grid checkers for the conditions a metric must satisfy to support a
//!   contracting observer;
//! * detectability checks along trajectories;
//! * simulation of the metric-based observer and decay verification.

pub mod conditions;
pub mod detect;
pub mod error;
pub mod example1;
pub mod expr;
pub mod geodesic;
pub mod linalg;
pub mod metric;
pub mod observer;
pub mod ode;
pub mod report;

pub use error::{Error, Result};
pub use conditions::{
    check_conditional_negativity, check_gain_margin, check_geodesic_convexity_spot, check_h2,
    check_totally_geodesic, fit_rho_q, RhoFit, RhoFitOptions, RhoTable,
};
pub use detect::{check_ltv_stability, detect_gain, linearize_along, TrajectoryLinearization};
pub use example1::{builtin_example1, Example1};
pub use expr::{Expr, ExprError};
pub use geodesic::{distance, geodesic_ivp, minimal_geodesic, GeodesicPath, MinimalGeodesic, ShootingOptions};
pub use metric::{BoxDomain, Diffeomorphism, DynamicalSystem, MetricField, TensorGrid};
pub use observer::{
    distance_trace, simulate, verify_decay, Gain, ObserverModel, ReferenceObserver, RiemannianObserver,
    SimOptions, SimulationTrace,
};
pub use report::{ConditionReport, Verdict};
