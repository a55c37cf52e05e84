//! Dormand–Prince 5(4) integrator with continuous (dense) output.
//!
//! Solutions are reported only at caller-supplied output times, obtained
//! from the fourth-order continuous extension of each accepted step, so the
//! output grid never constrains step size control.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// difference between fifth- and fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Hairer's dense output coefficients
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-9,
            atol: 1e-9,
            h0: None,
            max_step: f64::INFINITY,
            max_steps: 1_000_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions {
            rtol: tol,
            atol: tol,
            ..Default::default()
        }
    }
}

/// States at the requested output times. When integration stops early the
/// samples reached so far are kept and `failure` holds the reason.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub failure: Option<Error>,
    pub steps: usize,
}

impl Trajectory {
    pub fn into_result(self) -> Result<Trajectory> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.y.last().map(Vec::as_slice)
    }
}

/// Integrates `y' = rhs(t, y)` from `(t0, y0)` and reports the state at each
/// of `t_out` (non-decreasing, all ≥ `t0`). `guard` sees every accepted step
/// and may abort integration by returning an error.
pub fn integrate<R, G>(
    mut rhs: R,
    t0: f64,
    y0: &[f64],
    t_out: &[f64],
    opts: &OdeOptions,
    mut guard: G,
) -> Trajectory
where
    R: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    G: FnMut(f64, &[f64]) -> Result<()>,
{
    let mut out = Trajectory {
        t: Vec::with_capacity(t_out.len()),
        y: Vec::with_capacity(t_out.len()),
        failure: None,
        steps: 0,
    };
    if let Err(e) = run(&mut rhs, t0, y0, t_out, opts, &mut guard, &mut out) {
        out.failure = Some(e);
    }
    out
}

fn run<R, G>(
    rhs: &mut R,
    t0: f64,
    y0: &[f64],
    t_out: &[f64],
    opts: &OdeOptions,
    guard: &mut G,
    out: &mut Trajectory,
) -> Result<()>
where
    R: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    G: FnMut(f64, &[f64]) -> Result<()>,
{
    let n = y0.len();
    let mut next = 0;
    while next < t_out.len() && t_out[next] <= t0 {
        out.t.push(t_out[next]);
        out.y.push(y0.to_vec());
        next += 1;
    }
    let Some(&t_end) = t_out.last() else {
        return Ok(());
    };
    if next == t_out.len() {
        return Ok(());
    }

    let eval = |rhs: &mut R, t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        rhs(t, y, dy).map_err(|e| e.at(y))?;
        if dy.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::IntegrationFailure {
                t,
                reason: "non-finite derivative".into(),
            })
        }
    };

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut cont = vec![vec![0.0; n]; 5];

    eval(rhs, t, &y, &mut k1)?;
    let span = t_end - t0;
    let mut h = match opts.h0 {
        Some(h) => h,
        None => initial_step(rhs, t, &y, &k1, opts, span)?,
    }
    .min(span)
    .min(opts.max_step);

    let mut fac_old: f64 = 1e-4;
    let mut rejected_last = false;

    loop {
        if out.steps >= opts.max_steps {
            return Err(Error::IntegrationFailure {
                t,
                reason: format!("exceeded {} steps", opts.max_steps),
            });
        }
        if h.abs() <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::IntegrationFailure {
                t,
                reason: "step size underflow".into(),
            });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        eval(rhs, t + C2 * h, &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        eval(rhs, t + C3 * h, &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        eval(rhs, t + C4 * h, &tmp, &mut k4)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        eval(rhs, t + C5 * h, &tmp, &mut k5)?;
        for i in 0..n {
            tmp[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        eval(rhs, t + h, &tmp, &mut k6)?;
        for i in 0..n {
            y1[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        eval(rhs, t + h, &y1, &mut k7)?;
        out.steps += 1;

        let mut err = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y1[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n.max(1) as f64).sqrt();
        if !err.is_finite() {
            h *= 0.1;
            rejected_last = true;
            continue;
        }

        // Lund stabilisation as in Hairer's DOPRI5
        let fac11 = err.powf(0.2 - 0.04 * 0.75);
        let fac = fac11 / fac_old.powf(0.04);
        let fac = (fac / 0.9).clamp(1.0 / 10.0, 1.0 / 0.2);
        let h_new = h / fac;

        if err <= 1.0 {
            fac_old = err.max(1e-4);
            for i in 0..n {
                let dy = y1[i] - y[i];
                let bspl = h * k1[i] - dy;
                cont[0][i] = y[i];
                cont[1][i] = dy;
                cont[2][i] = bspl;
                cont[3][i] = dy - h * k7[i] - bspl;
                cont[4][i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let t_new = if last { t_end } else { t + h };
            guard(t_new, &y1)?;
            while next < t_out.len() && t_out[next] <= t_new {
                let theta = (t_out[next] - t) / h;
                let theta1 = 1.0 - theta;
                let y_out: Vec<f64> = (0..n)
                    .map(|i| {
                        cont[0][i]
                            + theta
                                * (cont[1][i]
                                    + theta1 * (cont[2][i] + theta * (cont[3][i] + theta1 * cont[4][i])))
                    })
                    .collect();
                out.t.push(t_out[next]);
                out.y.push(y_out);
                next += 1;
            }
            std::mem::swap(&mut k1, &mut k7);
            std::mem::swap(&mut y, &mut y1);
            t = t_new;
            if last || next == t_out.len() {
                return Ok(());
            }
            let mut h_next = h_new.min(opts.max_step);
            if rejected_last {
                h_next = h_next.min(h);
            }
            h = h_next;
            rejected_last = false;
        } else {
            h /= (fac11 / 0.9).min(1.0 / 0.2);
            rejected_last = true;
        }
    }
}

fn initial_step<R>(
    rhs: &mut R,
    t: f64,
    y: &[f64],
    f0: &[f64],
    opts: &OdeOptions,
    span: f64,
) -> Result<f64>
where
    R: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len().max(1) as f64;
    let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let norm = |v: &[f64]| {
        (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let mut h0 = if d0 < 1e-10 || d1 < 1e-10 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span.abs());
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    rhs(t + h0, &y1, &mut f1).map_err(|e| e.at(&y1))?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span.abs()))
}

/// `n + 1` equally spaced times on `[0, t_end]`.
pub fn uniform_grid(t_end: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| t_end * i as f64 / n as f64).collect()
}

/// Grid with spacing `dt` from 0 to `t_end` inclusive; the last step is
/// shortened when `t_end` is not a multiple of `dt`.
pub fn step_grid(t_end: f64, dt: f64) -> Vec<f64> {
    let n = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let mut g: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
    g.push(t_end);
    g
}

/// Guard that accepts every step.
pub fn no_guard(_: f64, _: &[f64]) -> Result<()> {
    Ok(())
}
