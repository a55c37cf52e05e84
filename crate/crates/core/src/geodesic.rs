//! Geodesics, path length and Riemannian distance.
//!
//! The two-point problem is solved by shooting. The unknown is the initial
//! velocity `w` of a constant-speed geodesic parametrised over `[0, 1]`;
//! its speed `√(wᵀP(x₁)w)` is the length `ŝ`, and `w/ŝ` the unit initial
//! direction. Newton's method drives the endpoint residual to zero with a
//! forward-difference Jacobian.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metric::MetricField;
use crate::ode::{integrate, uniform_grid, OdeOptions};

/// Sampled geodesic: parameter, position and velocity at each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicPath {
    pub s: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Unit speed in the metric.
    pub normalized: bool,
}

impl GeodesicPath {
    pub fn start(&self) -> &[f64] {
        &self.x[0]
    }

    pub fn end(&self) -> &[f64] {
        self.x.last().expect("paths have at least one sample")
    }

    /// Parameter span `s_last − s_first`.
    pub fn span(&self) -> f64 {
        self.s.last().unwrap() - self.s[0]
    }

    /// Largest distance between corresponding samples of two paths with
    /// the same sample count.
    pub fn max_deviation(&self, other: &GeodesicPath) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
            .fold(0.0, f64::max)
    }

    fn trivial(x: &[f64]) -> GeodesicPath {
        GeodesicPath {
            s: vec![0.0],
            x: vec![x.to_vec()],
            v: vec![vec![0.0; x.len()]],
            normalized: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IvpOptions {
    /// Absolute and relative integration tolerance.
    pub tol: f64,
    /// Number of samples (made odd for Simpson's rule).
    pub samples: usize,
    /// Stop with `DomainExit` when the path leaves `P.domain`.
    pub enforce_domain: bool,
}

impl Default for IvpOptions {
    fn default() -> Self {
        IvpOptions {
            tol: 1e-9,
            samples: 101,
            enforce_domain: true,
        }
    }
}

/// `v / √(vᵀP(x)v)`.
pub fn normalize_velocity(p: &MetricField, x: &[f64], v: &[f64]) -> Result<DVector<f64>> {
    if v.iter().all(|c| *c == 0.0) {
        return Err(Error::ZeroVelocity);
    }
    let q = p.eval(x).map(|m| {
        let vv = DVector::from_column_slice(v);
        vv.dot(&(m * &vv))
    })?;
    Ok(DVector::from_column_slice(v) / q.sqrt())
}

/// Integrates the geodesic equation `γ'' = −Γ(γ)[γ', γ']` from `(x0, v0)`
/// over `[0, s_max]`. With `normalize`, `v0` is first scaled to unit speed.
pub fn geodesic_ivp(
    p: &MetricField,
    x0: &[f64],
    v0: &[f64],
    s_max: f64,
    normalize: bool,
    opts: &IvpOptions,
) -> Result<GeodesicPath> {
    let n = p.dim();
    if x0.len() != n || v0.len() != n {
        return Err(Error::Dimension(format!(
            "geodesic start needs {n} coordinates and {n} velocity components"
        )));
    }
    if !(s_max > 0.0) {
        return Err(Error::InvalidArgument("s_max must be positive".into()));
    }
    let v0: Vec<f64> = if normalize {
        normalize_velocity(p, x0, v0)?.as_slice().to_vec()
    } else {
        v0.to_vec()
    };
    let samples = opts.samples.max(3) | 1;
    let grid = uniform_grid(s_max, samples - 1);
    let y0: Vec<f64> = x0.iter().chain(&v0).copied().collect();
    let ode = OdeOptions::with_tol(opts.tol);
    let rhs = |_s: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let (x, v) = y.split_at(n);
        let a = p.geodesic_acceleration(x, v)?;
        dy[..n].copy_from_slice(v);
        dy[n..].copy_from_slice(a.as_slice());
        Ok(())
    };
    let guard = |s: f64, y: &[f64]| -> Result<()> {
        if opts.enforce_domain && !p.domain.contains(&y[..n]) {
            Err(Error::DomainExit {
                t: s,
                x: y[..n].to_vec(),
            })
        } else {
            Ok(())
        }
    };
    let tr = integrate(rhs, 0.0, &y0, &grid, &ode, guard).into_result()?;
    let (x, v) = tr
        .y
        .into_iter()
        .map(|mut y| {
            let v = y.split_off(n);
            (y, v)
        })
        .unzip();
    Ok(GeodesicPath {
        s: tr.t,
        x,
        v,
        normalized: normalize,
    })
}

/// Length `∫ √(γ'ᵀ P(γ) γ') ds` by composite Simpson's rule on the samples
/// (the final interval falls back to the trapezoid rule when the sample
/// count is even).
pub fn path_length(p: &MetricField, path: &GeodesicPath) -> Result<f64> {
    let speeds = path
        .x
        .iter()
        .zip(&path.v)
        .map(|(x, v)| p.quadratic(x, v).map(|q| q.max(0.0).sqrt()))
        .collect::<Result<Vec<_>>>()?;
    Ok(simpson(&path.s, &speeds))
}

/// Composite Simpson's rule on a possibly non-uniform grid.
pub fn simpson(s: &[f64], f: &[f64]) -> f64 {
    let n = s.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut i = 0;
    while i + 2 < n {
        let h0 = s[i + 1] - s[i];
        let h1 = s[i + 2] - s[i + 1];
        let hs = h0 + h1;
        total += hs / 6.0
            * (f[i] * (2.0 - h1 / h0) + f[i + 1] * hs * hs / (h0 * h1) + f[i + 2] * (2.0 - h0 / h1));
        i += 2;
    }
    if i + 1 < n {
        total += 0.5 * (s[i + 1] - s[i]) * (f[i] + f[i + 1]);
    }
    total
}

#[derive(Debug, Clone)]
pub struct ShootingOptions {
    /// Perturbed restarts in addition to the chord start.
    pub restarts: usize,
    pub seed: u64,
    pub max_newton: usize,
    /// Integration tolerance of the inner initial value problems.
    pub ivp_tol: f64,
    /// Forward-difference step for the shooting Jacobian.
    pub fd_step: f64,
    /// Samples of the returned path.
    pub samples: usize,
    /// Previous solution's `w` (see module docs) tried before the cold starts.
    pub warm_start: Option<Vec<f64>>,
    pub enforce_domain: bool,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions {
            restarts: 4,
            seed: 0,
            max_newton: 50,
            ivp_tol: 1e-11,
            fd_step: 1e-7,
            samples: 101,
            warm_start: None,
            enforce_domain: true,
        }
    }
}

/// Converged minimal-geodesic candidate.
#[derive(Debug, Clone)]
pub struct MinimalGeodesic {
    /// Unit-speed path over `[0, ŝ]`.
    pub path: GeodesicPath,
    /// `ŝ`, the length of the path.
    pub length: f64,
    /// Unit initial velocity.
    pub v0: Vec<f64>,
    /// Initial velocity of the `[0, 1]` parametrisation, `ŝ·v0`.
    pub w: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub candidates: usize,
    /// Two converged candidates of (nearly) equal length follow
    /// different paths.
    pub ambiguous: bool,
}

const AMBIGUITY_LENGTH_TOL: f64 = 1e-6;
const AMBIGUITY_PATH_TOL: f64 = 1e-5;
const TIE_TOL: f64 = 1e-9;

struct Shot {
    w: DVector<f64>,
    residual: f64,
    iterations: usize,
}

fn endpoint(p: &MetricField, x1: &[f64], w: &DVector<f64>, opts: &ShootingOptions) -> Result<DVector<f64>> {
    let ivp = IvpOptions {
        tol: opts.ivp_tol,
        samples: 3,
        enforce_domain: opts.enforce_domain,
    };
    let path = geodesic_ivp(p, x1, w.as_slice(), 1.0, false, &ivp)?;
    Ok(DVector::from_column_slice(path.end()))
}

fn newton(
    p: &MetricField,
    x1: &[f64],
    x2: &DVector<f64>,
    w0: DVector<f64>,
    opts: &ShootingOptions,
) -> std::result::Result<Shot, f64> {
    let n = x1.len();
    let target_tol = 1e-9 * (1.0 + x2.amax());
    let mut w = w0;
    let mut r = match endpoint(p, x1, &w, opts) {
        Ok(e) => e - x2,
        Err(_) => return Err(f64::INFINITY),
    };
    for it in 0..opts.max_newton {
        if r.amax() <= target_tol {
            return Ok(Shot {
                w,
                residual: r.amax(),
                iterations: it,
            });
        }
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = opts.fd_step * w[j].abs().max(1.0);
            let mut wp = w.clone();
            wp[j] += h;
            match endpoint(p, x1, &wp, opts) {
                Ok(e) => jac.set_column(j, &((e - x2 - &r) / h)),
                Err(_) => return Err(r.amax()),
            }
        }
        let step = match jac.clone().lu().solve(&(-&r)) {
            Some(s) if s.iter().all(|c| c.is_finite()) => s,
            _ => jac
                .svd(true, true)
                .solve(&(-&r), 1e-12)
                .map_err(|_| r.amax())?,
        };
        let norm = r.norm();
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=30 {
            let trial = &w + &step * lambda;
            if let Ok(e) = endpoint(p, x1, &trial, opts) {
                let rt = e - x2;
                if rt.norm() < norm {
                    w = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(r.amax());
        }
    }
    if r.amax() <= target_tol {
        Ok(Shot {
            w,
            residual: r.amax(),
            iterations: opts.max_newton,
        })
    } else {
        Err(r.amax())
    }
}

fn starts(x1: &[f64], x2: &[f64], opts: &ShootingOptions) -> Vec<DVector<f64>> {
    let chord = DVector::from_iterator(x1.len(), x2.iter().zip(x1).map(|(b, a)| b - a));
    let scale = chord.norm();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = vec![chord.clone()];
    for _ in 0..opts.restarts {
        let noise = DVector::from_fn(x1.len(), |_, _| rng.gen_range(-1.0..1.0));
        out.push(&chord + noise * (0.5 * scale));
    }
    out
}

/// Minimal geodesic from `x1` to `x2` by multi-start shooting. Returns the
/// shortest converged candidate; exact ties go to the lexicographically
/// smaller unit initial velocity.
pub fn minimal_geodesic(
    p: &MetricField,
    x1: &[f64],
    x2: &[f64],
    opts: &ShootingOptions,
) -> Result<MinimalGeodesic> {
    let n = p.dim();
    if x1.len() != n || x2.len() != n {
        return Err(Error::Dimension(format!("endpoints must have {n} coordinates")));
    }
    if x1 == x2 {
        return Ok(MinimalGeodesic {
            path: GeodesicPath::trivial(x1),
            length: 0.0,
            v0: vec![0.0; n],
            w: vec![0.0; n],
            residual: 0.0,
            iterations: 0,
            candidates: 1,
            ambiguous: false,
        });
    }
    let target = DVector::from_column_slice(x2);

    if let Some(w) = &opts.warm_start {
        if w.len() == n {
            if let Ok(shot) = newton(p, x1, &target, DVector::from_column_slice(w), opts) {
                return finish(p, x1, vec![shot], opts);
            }
        }
    }

    let results: Vec<std::result::Result<Shot, f64>> = starts(x1, x2, opts)
        .into_par_iter()
        .map(|w0| newton(p, x1, &target, w0, opts))
        .collect();
    let mut best_residual = f64::INFINITY;
    let mut shots = Vec::new();
    for r in results {
        match r {
            Ok(s) => shots.push(s),
            Err(res) => best_residual = best_residual.min(res),
        }
    }
    if shots.is_empty() {
        return Err(Error::NoConvergence {
            residual: best_residual,
        });
    }
    finish(p, x1, shots, opts)
}

fn finish(p: &MetricField, x1: &[f64], shots: Vec<Shot>, opts: &ShootingOptions) -> Result<MinimalGeodesic> {
    let p1 = p.eval(x1)?;
    let mut cands: Vec<(f64, Vec<f64>, Shot)> = shots
        .into_iter()
        .map(|s| {
            let len = s.w.dot(&(&p1 * &s.w)).sqrt();
            let v0: Vec<f64> = s.w.iter().map(|c| c / len).collect();
            (len, v0, s)
        })
        .collect();
    cands.sort_by(|a, b| {
        if (a.0 - b.0).abs() < TIE_TOL {
            a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal)
        } else {
            a.0.total_cmp(&b.0)
        }
    });
    let count = cands.len();
    let ivp = IvpOptions {
        tol: opts.ivp_tol,
        samples: opts.samples,
        enforce_domain: opts.enforce_domain,
    };
    let unit = |c: &(f64, Vec<f64>, Shot)| geodesic_ivp(p, x1, &c.1, c.0, false, &ivp);
    let path = unit(&cands[0])?;

    let mut ambiguous = false;
    for other in cands.iter().skip(1) {
        if (other.0 - cands[0].0).abs() < AMBIGUITY_LENGTH_TOL {
            if let Ok(q) = unit(other) {
                if q.max_deviation(&path) > AMBIGUITY_PATH_TOL {
                    ambiguous = true;
                }
            }
        }
    }
    let (length, v0, shot) = cands.swap_remove(0);
    Ok(MinimalGeodesic {
        path: GeodesicPath {
            normalized: true,
            ..path
        },
        length,
        v0,
        w: shot.w.as_slice().to_vec(),
        residual: shot.residual,
        iterations: shot.iterations,
        candidates: count,
        ambiguous,
    })
}

/// Riemannian distance; zero for equal points.
pub fn distance(p: &MetricField, x1: &[f64], x2: &[f64], opts: &ShootingOptions) -> Result<f64> {
    if x1 == x2 {
        return Ok(0.0);
    }
    Ok(minimal_geodesic(p, x1, x2, opts)?.length)
}
