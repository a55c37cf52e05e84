//! Observers, system–observer simulation and decay verification.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geodesic::{minimal_geodesic, ShootingOptions};
use crate::metric::{spd_inverse, BoxDomain, DynamicalSystem, MetricField};
use crate::ode::{integrate, step_grid, OdeOptions};
use crate::report::{summarize, ConditionReport, Sample};

/// An observer driven by the measured output. Its internal state may differ
/// from the estimate it reports.
pub trait ObserverModel: Sync {
    fn internal_dim(&self) -> usize;
    /// Internal state whose estimate is `xhat0` when the output is `y0`.
    fn init(&self, xhat0: &[f64], y0: &[f64]) -> Result<Vec<f64>>;
    fn rhs(&self, z: &[f64], y: &[f64], dz: &mut [f64]) -> Result<()>;
    fn estimate(&self, z: &[f64], y: &[f64]) -> Result<Vec<f64>>;
}

/// Observer gain `k_E`: a constant or an expression over the estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum Gain {
    Constant(f64),
    Expr(Expr),
}

impl Gain {
    pub fn eval(&self, xhat: &[f64]) -> Result<f64> {
        let k = match self {
            Gain::Constant(k) => *k,
            Gain::Expr(e) => e.eval(xhat).map_err(|e| Error::from(e).at(xhat))?,
        };
        if !(k >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "observer gain must be non-negative, got {k} at {xhat:?}"
            )));
        }
        Ok(k)
    }
}

/// `x̂' = f(x̂) − ℓ·k_E(x̂)·P(x̂)⁻¹ ∂h/∂x(x̂)ᵀ · 2(h(x̂) − y)` for a single
/// output. `ℓ` (`scale`) multiplies the whole correction.
#[derive(Debug, Clone)]
pub struct RiemannianObserver {
    pub metric: MetricField,
    pub system: DynamicalSystem,
    pub gain: Gain,
    pub scale: f64,
}

impl RiemannianObserver {
    pub fn new(metric: MetricField, system: DynamicalSystem, gain: Gain) -> Result<Self> {
        if system.m() != 1 {
            return Err(Error::InvalidArgument(format!(
                "the metric observer needs a single output, got m = {}",
                system.m()
            )));
        }
        if system.n() != metric.dim() {
            return Err(Error::Dimension("system and metric dimensions differ".into()));
        }
        Ok(RiemannianObserver {
            metric,
            system,
            gain,
            scale: 1.0,
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// `F(x̂, y) − f(x̂)`.
    pub fn correction(&self, xhat: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        let p = self.metric.eval(xhat)?;
        let pinv = spd_inverse(&p, xhat)?;
        let c = self.system.jacobian_h(xhat)?;
        let h = self.system.eval_h(xhat)?;
        // ∂δ/∂y₁ for δ(y₁, y₂) = |y₁ − y₂|²
        let ddelta = 2.0 * (h[0] - y[0]);
        let k = self.gain.eval(xhat)?;
        Ok(pinv * c.transpose().column(0) * (-self.scale * k * ddelta))
    }

    /// `F(x̂, y)`.
    pub fn rhs_at(&self, xhat: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        Ok(self.system.eval_f(xhat)? + self.correction(xhat, y)?)
    }
}

impl ObserverModel for RiemannianObserver {
    fn internal_dim(&self) -> usize {
        self.system.n()
    }

    fn init(&self, xhat0: &[f64], _y0: &[f64]) -> Result<Vec<f64>> {
        Ok(xhat0.to_vec())
    }

    fn rhs(&self, z: &[f64], y: &[f64], dz: &mut [f64]) -> Result<()> {
        dz.copy_from_slice(self.rhs_at(z, y)?.as_slice());
        Ok(())
    }

    fn estimate(&self, z: &[f64], _y: &[f64]) -> Result<Vec<f64>> {
        Ok(z.to_vec())
    }
}

/// The hand-built observer of the two-dimensional worked example. It runs
/// in the flat coordinates `x̄ = (x₁, x₂√(1+x₁²))` and reports
/// `x̂ = (x̄̂₁, x̄̂₂/√(1+y²))`, which is why it is not of the form
/// `x̂' = F(x̂, y)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceObserver;

impl ReferenceObserver {
    /// Derivative of the internal state.
    pub fn derivative(zbar: &[f64], y: f64) -> [f64; 2] {
        let e = zbar[0] - y;
        [zbar[1] - e, -e]
    }

    pub fn output_map(zbar: &[f64], y: f64) -> [f64; 2] {
        [zbar[0], zbar[1] / (1.0 + y * y).sqrt()]
    }
}

impl ObserverModel for ReferenceObserver {
    fn internal_dim(&self) -> usize {
        2
    }

    fn init(&self, xhat0: &[f64], y0: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![xhat0[0], xhat0[1] * (1.0 + y0[0] * y0[0]).sqrt()])
    }

    fn rhs(&self, z: &[f64], y: &[f64], dz: &mut [f64]) -> Result<()> {
        dz.copy_from_slice(&Self::derivative(z, y[0]));
        Ok(())
    }

    fn estimate(&self, z: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        Ok(Self::output_map(z, y[0]).to_vec())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub t_end: f64,
    /// Output spacing.
    pub dt: f64,
    pub tol: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            t_end: 5.0,
            dt: 0.01,
            tol: 1e-9,
        }
    }
}

/// Joint trajectory of system and observer on the output grid.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SimulationTrace {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub xhat: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    /// Riemannian distance between `x̂` and `x`; `None` where the boundary
    /// value solver failed.
    pub d: Option<Vec<Option<f64>>>,
    /// Closed-form Lyapunov oracle, when one is known.
    pub v: Option<Vec<f64>>,
    /// Per-sample event flags (e.g. `bvp-failure`).
    pub flags: Vec<Vec<String>>,
    /// Why the run ended before `t_end`, if it did.
    pub stopped: Option<String>,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn attach_oracle<F: Fn(&[f64], &[f64]) -> f64>(&mut self, v: F) {
        self.v = Some(self.xhat.iter().zip(&self.x).map(|(a, b)| v(a, b)).collect());
    }
}

/// Integrates `x' = f(x)` jointly with the observer driven by `y = h(x)`.
/// Leaving `domain` (either state) or an integration failure ends the run
/// early; the samples so far are kept and `stopped` records the reason.
pub fn simulate(
    sys: &DynamicalSystem,
    observer: &dyn ObserverModel,
    x0: &[f64],
    xhat0: &[f64],
    domain: Option<&BoxDomain>,
    opts: &SimOptions,
) -> Result<SimulationTrace> {
    let n = sys.n();
    if x0.len() != n || xhat0.len() != n {
        return Err(Error::Dimension(format!("initial states must have {n} entries")));
    }
    let y0 = sys.eval_h(x0)?;
    let z0 = observer.init(xhat0, y0.as_slice())?;
    let nz = observer.internal_dim();
    let state0: Vec<f64> = x0.iter().chain(&z0).copied().collect();
    let rhs = |_t: f64, s: &[f64], ds: &mut [f64]| -> Result<()> {
        let (x, z) = s.split_at(n);
        let f = sys.eval_f(x)?;
        ds[..n].copy_from_slice(f.as_slice());
        let y = sys.eval_h(x)?;
        observer.rhs(z, y.as_slice(), &mut ds[n..])
    };
    let guard = |t: f64, s: &[f64]| -> Result<()> {
        let Some(dom) = domain else { return Ok(()) };
        let (x, z) = s.split_at(n);
        let y = sys.eval_h(x)?;
        let xhat = observer.estimate(z, y.as_slice())?;
        for v in [x, xhat.as_slice()] {
            if !dom.contains(v) {
                return Err(Error::DomainExit { t, x: v.to_vec() });
            }
        }
        Ok(())
    };
    let grid = step_grid(opts.t_end, opts.dt);
    let tr = integrate(rhs, 0.0, &state0, &grid, &OdeOptions::with_tol(opts.tol), guard);
    debug_assert_eq!(nz, tr.y.first().map_or(nz, |s| s.len() - n));

    let mut out = SimulationTrace {
        stopped: tr.failure.as_ref().map(|e| e.to_string()),
        ..Default::default()
    };
    for (t, s) in tr.t.iter().zip(&tr.y) {
        let (x, z) = s.split_at(n);
        let y = sys.eval_h(x)?;
        out.t.push(*t);
        out.x.push(x.to_vec());
        out.xhat.push(observer.estimate(z, y.as_slice())?);
        out.y.push(y.as_slice().to_vec());
        out.flags.push(Vec::new());
    }
    Ok(out)
}

/// Separation (relative to the state size) below which the distance is
/// taken from the metric at one end instead of a boundary value solve.
pub const NEAR_DIAGONAL: f64 = 1e-9;

/// Fills `trace.d` with `d(x̂(t), x(t))`, warm-starting each boundary value
/// solve from the previous one; failures are flagged and left empty.
pub fn distance_trace(p: &MetricField, trace: &mut SimulationTrace, opts: &ShootingOptions) {
    let mut d = Vec::with_capacity(trace.len());
    let mut warm: Option<Vec<f64>> = None;
    for j in 0..trace.len() {
        let (xh, x) = (&trace.xhat[j], &trace.x[j]);
        let gap = xh.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let size = x.iter().fold(1.0, |m: f64, v| m.max(v.abs()));
        if gap <= NEAR_DIAGONAL * size {
            // first-order length of the chord; exact up to O(gap²)
            let e: Vec<f64> = xh.iter().zip(x).map(|(a, b)| a - b).collect();
            d.push(p.quadratic(x, &e).ok().map(f64::sqrt));
            warm = None;
            continue;
        }
        let o = ShootingOptions {
            warm_start: warm.clone(),
            ..opts.clone()
        };
        match minimal_geodesic(p, xh, x, &o) {
            Ok(g) => {
                if g.ambiguous {
                    trace.flags[j].push("ambiguous-geodesic".into());
                }
                warm = Some(g.w);
                d.push(Some(g.length));
            }
            Err(_) => {
                trace.flags[j].push("bvp-failure".into());
                warm = None;
                d.push(None);
            }
        }
    }
    trace.d = Some(d);
}

/// Checks `D⁺d ≤ −(q/4)·d` by forward differences wherever `d < E` and
/// both states are interior to `domain`. The allowed slack is
/// `1e-3·max d`. `E` defaults to `1.1·d(0)`.
pub fn verify_decay(
    trace: &SimulationTrace,
    q: f64,
    e: Option<f64>,
    domain: Option<&BoxDomain>,
) -> Result<ConditionReport> {
    let d = trace
        .d
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("trace has no distance channel".into()))?;
    if !(q > 0.0) {
        return Err(Error::InvalidArgument("q must be positive".into()));
    }
    let dmax = d.iter().flatten().cloned().fold(0.0, f64::max);
    let tol_rate = 1e-3 * dmax;
    let e = e.unwrap_or_else(|| 1.1 * d.first().copied().flatten().unwrap_or(0.0));
    let mut report = ConditionReport::new("decay", 0.0);
    let mut samples = Vec::new();
    let mut times = Vec::new();
    for j in 0..trace.len().saturating_sub(1) {
        let (Some(d0), Some(d1)) = (d[j], d[j + 1]) else {
            report.skipped += 1;
            continue;
        };
        if d0 >= e {
            continue;
        }
        if let Some(dom) = domain {
            if !dom.interior(&trace.x[j], 0.0) || !dom.interior(&trace.xhat[j], 0.0) {
                continue;
            }
        }
        let rate = (d1 - d0) / (trace.t[j + 1] - trace.t[j]);
        samples.push(Sample {
            point: trace.xhat[j].iter().chain(&trace.x[j]).copied().collect(),
            residual: rate + 0.25 * q * d0 - tol_rate,
            direction: None,
        });
        times.push(trace.t[j]);
    }
    let mut report = summarize(report, &samples);
    if let Some(i) = crate::report::worst(&samples).and_then(|w| {
        samples.iter().position(|s| std::ptr::eq(s, w))
    }) {
        report.witness_time = Some(times[i]);
    }
    report.detail = format!(
        "forward-difference rate + (q/4) d - {tol_rate:.3e} over {} samples with d < {e:.6e}; witness point is (xhat, x)",
        samples.len()
    );
    Ok(report)
}

/// Smallest `k = 2^i`, `i = 0..=10`, for which the observer built by
/// `make` passes [`verify_decay`]; `None` if none does.
pub fn scan_gain<M>(
    make: M,
    sys: &DynamicalSystem,
    p: &MetricField,
    x0: &[f64],
    xhat0: &[f64],
    q: f64,
    domain: Option<&BoxDomain>,
    sim: &SimOptions,
    shooting: &ShootingOptions,
) -> Result<Option<(f64, ConditionReport)>>
where
    M: Fn(f64) -> Result<RiemannianObserver>,
{
    for i in 0..=10 {
        let k = f64::from(1u32 << i);
        let obs = make(k)?;
        let mut trace = simulate(sys, &obs, x0, xhat0, domain, sim)?;
        if trace.stopped.is_some() {
            continue;
        }
        distance_trace(p, &mut trace, shooting);
        let report = verify_decay(&trace, q, None, domain)?;
        if report.passed() {
            return Ok(Some((k, report)));
        }
    }
    Ok(None)
}
