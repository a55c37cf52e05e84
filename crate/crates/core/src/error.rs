use thiserror::Error;

use crate::expr::ExprError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("evaluation failed at x = {x:?}: {source}")]
    EvalAt { x: Vec<f64>, source: ExprError },
    #[error("metric is not positive definite at x = {x:?} (smallest eigenvalue {lambda_min:e})")]
    NotPositiveDefinite { x: Vec<f64>, lambda_min: f64 },
    #[error("Jacobian of the coordinate change is singular at x = {x:?}")]
    SingularJacobian { x: Vec<f64> },
    #[error("metric is singular at x = {x:?}")]
    SingularMetric { x: Vec<f64> },
    #[error("velocity is zero")]
    ZeroVelocity,
    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },
    #[error("trajectory left the domain at t = {t} (x = {x:?})")]
    DomainExit { t: f64, x: Vec<f64> },
    #[error("boundary value solver did not converge (best residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("no finite rho up to rho_max at x = {x:?}")]
    Infeasible { x: Vec<f64> },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Attaches the evaluation point to bare expression errors.
    pub fn at(self, x: &[f64]) -> Error {
        match self {
            Error::Expr(source) => Error::EvalAt {
                x: x.to_vec(),
                source,
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
