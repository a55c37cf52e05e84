//! Linearization along trajectories and the detectability check.
//!
//! Along a solution `X(x, t)` the variational system is
//! `ξ' = A(t)ξ`, `η = C(t)ξ` with `A = ∂f/∂x(X)`, `C = ∂h/∂x(X)`, and the
//! metric gives the time-varying weight `Π(t) = P(X)`. The gain
//! `K = (ρ/2) Π⁻¹ Cᵀ` should make `V = ξᵀΠξ` decay like `e^{−qt/2}`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metric::{spd_inverse, BoxDomain, DynamicalSystem, MetricField};
use crate::ode::{integrate, no_guard, step_grid, OdeOptions};
use crate::report::{summarize, ConditionReport, Sample};

pub const LINEARIZATION_TOL: f64 = 1e-9;
/// Relative slack on the exponential envelope.
pub const ENVELOPE_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct TrajectoryLinearization {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub a: Vec<DMatrix<f64>>,
    pub c: Vec<DMatrix<f64>>,
    pub pi: Vec<DMatrix<f64>>,
    /// Smallest and largest eigenvalue of `Π` over the grid.
    pub p_lower: f64,
    pub p_upper: f64,
    system: DynamicalSystem,
    metric: MetricField,
}

impl TrajectoryLinearization {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn x0(&self) -> &[f64] {
        &self.x[0]
    }
}

/// Integrates `x' = f(x)` from `x0` and evaluates `A`, `C` and `Π` on the
/// output grid of spacing `dt`. A finite escape surfaces as
/// [`Error::IntegrationFailure`] carrying the escape time.
pub fn linearize_along(
    sys: &DynamicalSystem,
    p: &MetricField,
    x0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<TrajectoryLinearization> {
    if x0.len() != sys.n() || p.dim() != sys.n() {
        return Err(Error::Dimension("x0, system and metric must agree".into()));
    }
    let grid = step_grid(t_end, dt);
    let rhs = |_t: f64, x: &[f64], dx: &mut [f64]| -> Result<()> {
        dx.copy_from_slice(sys.eval_f(x)?.as_slice());
        Ok(())
    };
    let tr = integrate(rhs, 0.0, x0, &grid, &OdeOptions::with_tol(LINEARIZATION_TOL), no_guard)
        .into_result()?;
    let mut lin = TrajectoryLinearization {
        t: tr.t,
        x: Vec::new(),
        a: Vec::new(),
        c: Vec::new(),
        pi: Vec::new(),
        p_lower: f64::INFINITY,
        p_upper: 0.0,
        system: sys.clone(),
        metric: p.clone(),
    };
    for x in tr.y {
        let pi = p.eval(&x)?;
        let (lo, hi) = p.eigen_bounds(&x)?;
        lin.p_lower = lin.p_lower.min(lo);
        lin.p_upper = lin.p_upper.max(hi);
        lin.a.push(sys.jacobian_f(&x)?);
        lin.c.push(sys.jacobian_h(&x)?);
        lin.pi.push(pi);
        lin.x.push(x);
    }
    Ok(lin)
}

#[derive(Debug, Clone)]
pub struct GainSchedule {
    pub k: Vec<DMatrix<f64>>,
    /// `sup_j ‖K(t_j)‖₂`; no bound is imposed on it.
    pub sup_norm: f64,
    /// Grid times at which the state left `rho_domain`, so `ρ` was
    /// extrapolated by clamping.
    pub extrapolated: Vec<f64>,
}

/// `K(t_j) = (ρ(X(t_j))/2) Π(t_j)⁻¹ C(t_j)ᵀ`.
pub fn detect_gain<R>(
    lin: &TrajectoryLinearization,
    rho: R,
    rho_domain: Option<&BoxDomain>,
) -> Result<GainSchedule>
where
    R: Fn(&[f64]) -> f64,
{
    let mut out = GainSchedule {
        k: Vec::with_capacity(lin.len()),
        sup_norm: 0.0,
        extrapolated: Vec::new(),
    };
    for j in 0..lin.len() {
        let x = &lin.x[j];
        let pinv = spd_inverse(&lin.pi[j], x).map_err(|_| Error::SingularMetric { x: x.clone() })?;
        let k = pinv * lin.c[j].transpose() * (0.5 * rho(x));
        out.sup_norm = out.sup_norm.max(k.clone().svd(false, false).singular_values.max());
        out.k.push(k);
        if rho_domain.is_some_and(|d| !d.contains(x)) {
            out.extrapolated.push(lin.t[j]);
        }
    }
    Ok(out)
}

/// `count` initial conditions drawn uniformly from the unit cube
/// `[-1, 1]^n`, reproducible from `seed`.
pub fn seeded_initial_conditions(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

/// Per-run decay record of [`check_ltv_stability`].
#[derive(Debug, Clone)]
pub struct LtvRun {
    pub xi0: Vec<f64>,
    /// `V(ξ(t_j), t_j)` on the linearization grid.
    pub v: Vec<f64>,
}

/// Integrates `ξ' = (A − KC)ξ` for each initial `ξ` and checks
/// `V(t) ≤ V(0)·e^{−qt/2}·(1 + ENVELOPE_TOL)` at every grid time.
///
/// `A`, `C`, `Π` and `K` are evaluated on the exact state `X(t)` (the
/// state is integrated alongside `ξ`) rather than interpolated between
/// grid nodes; `ρ` is the same function given to [`detect_gain`].
pub fn check_ltv_stability<R>(
    lin: &TrajectoryLinearization,
    rho: R,
    q: f64,
    initial: &[Vec<f64>],
) -> Result<(ConditionReport, Vec<LtvRun>)>
where
    R: Fn(&[f64]) -> f64 + Sync,
{
    if !(q > 0.0) {
        return Err(Error::InvalidArgument("q must be positive".into()));
    }
    let n = lin.system.n();
    let (sys, p) = (&lin.system, &lin.metric);
    let runs: Vec<LtvRun> = initial
        .par_iter()
        .map(|xi0| -> Result<LtvRun> {
            if xi0.len() != n {
                return Err(Error::Dimension(format!("initial condition must have {n} entries")));
            }
            let rhs = |_t: f64, s: &[f64], ds: &mut [f64]| -> Result<()> {
                let (x, xi) = s.split_at(n);
                ds[..n].copy_from_slice(sys.eval_f(x)?.as_slice());
                let a = sys.jacobian_f(x)?;
                let c = sys.jacobian_h(x)?;
                let pinv = spd_inverse(&p.eval(x)?, x)?;
                let k = pinv * c.transpose() * (0.5 * rho(x));
                let xi = DVector::from_column_slice(xi);
                let dxi = (a - k * c) * xi;
                ds[n..].copy_from_slice(dxi.as_slice());
                Ok(())
            };
            let s0: Vec<f64> = lin.x0().iter().chain(xi0).copied().collect();
            let tr = integrate(rhs, 0.0, &s0, &lin.t, &OdeOptions::with_tol(LINEARIZATION_TOL), no_guard)
                .into_result()?;
            let v = tr
                .y
                .iter()
                .zip(&lin.pi)
                .map(|(s, pi)| {
                    let xi = DVector::from_column_slice(&s[n..]);
                    (xi.transpose() * pi * &xi)[0]
                })
                .collect();
            Ok(LtvRun { xi0: xi0.clone(), v })
        })
        .collect::<Result<_>>()?;

    let mut samples = Vec::new();
    let mut times = Vec::new();
    for run in &runs {
        let v0 = run.v[0];
        if v0 == 0.0 {
            continue;
        }
        // worst envelope ratio of this run
        let (j, ratio) = run
            .v
            .iter()
            .zip(&lin.t)
            .map(|(v, t)| v / (v0 * (-0.5 * q * t).exp()) - 1.0)
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, r)| if r > acc.1 { (j, r) } else { acc });
        samples.push(Sample {
            point: run.xi0.clone(),
            residual: ratio,
            direction: None,
        });
        times.push(lin.t[j]);
    }
    let mut report = summarize(ConditionReport::new("ltv-stability", ENVELOPE_TOL), &samples);
    if let Some(w) = crate::report::worst(&samples) {
        let i = samples.iter().position(|s| std::ptr::eq(s, w)).unwrap_or(0);
        report.witness_time = Some(times[i]);
    }
    report.detail = format!(
        "max over runs and times of V(t)/(V(0) exp(-q t/2)) - 1 with q = {q:e}; witness point is the initial xi"
    );
    Ok((report, runs))
}
