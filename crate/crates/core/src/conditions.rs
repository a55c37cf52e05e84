//! Grid checkers for the metric conditions behind contracting observers.
//!
//! Every checker evaluates a residual per sample point, in parallel, and
//! reduces the results in input order so reports are reproducible.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geodesic::{minimal_geodesic, ShootingOptions};
use crate::linalg::{null_space, sym_spectral_norm, top_eigenpair};
use crate::metric::{lie_derivative, DynamicalSystem, MetricField, TensorGrid};
use crate::report::{summarize, ConditionReport, Sample, Verdict};

/// Singular values below `RANK_REL_TOL · σ_max` count as zero.
pub const RANK_REL_TOL: f64 = 1e-10;
pub const NEGATIVITY_TOL: f64 = 1e-9;
pub const H2_TOL: f64 = 1e-9;
pub const TOTALLY_GEODESIC_TOL: f64 = 1e-8;
pub const CONVEXITY_TOL: f64 = 1e-6;
/// Level-set membership required of convexity sample pairs.
pub const LEVEL_SET_TOL: f64 = 1e-10;

/// Orthonormal basis of `ker ∂h/∂x(x)` and the rank of `∂h/∂x(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBasis {
    pub basis: DMatrix<f64>,
    pub rank: usize,
}

pub fn kernel_basis(sys: &DynamicalSystem, x: &[f64]) -> Result<KernelBasis> {
    let c = sys.jacobian_h(x)?;
    let (basis, rank) = null_space(&c, RANK_REL_TOL);
    Ok(KernelBasis { basis, rank })
}

fn rank_deficient(sys: &DynamicalSystem, k: &KernelBasis) -> bool {
    k.rank < sys.m().min(sys.n())
}

/// Projected top eigenpair of `Bᵀ M B`, lifted back to a direction `B u`.
fn projected_top(m: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<(f64, Vec<f64>)> {
    if b.ncols() == 0 {
        return None;
    }
    let proj = b.transpose() * m * b;
    let (lam, u) = top_eigenpair(&proj);
    Some((lam, (b * u).as_slice().to_vec()))
}

fn collect_samples(
    results: Vec<Result<(Option<Sample>, Option<Vec<f64>>)>>,
    report: &mut ConditionReport,
) -> Result<Vec<Sample>> {
    let mut samples = Vec::with_capacity(results.len());
    for r in results {
        let (sample, deficient) = r?;
        if let Some(s) = sample {
            samples.push(s);
        }
        if let Some(x) = deficient {
            report.rank_deficient_points.push(x);
        }
    }
    Ok(samples)
}

/// `λ_max(Bᵀ L_fP(x) B) ≤ tol` at every point, with `B` a kernel basis of
/// `∂h/∂x(x)`. Points with a trivial kernel impose no constraint.
pub fn check_conditional_negativity(
    p: &MetricField,
    sys: &DynamicalSystem,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<ConditionReport> {
    let mut report = ConditionReport::new("conditional-negativity", tol);
    let results: Vec<_> = points
        .par_iter()
        .map(|x| {
            let l = lie_derivative(p, sys, x)?;
            let k = kernel_basis(sys, x)?;
            let deficient = rank_deficient(sys, &k).then(|| x.clone());
            let sample = projected_top(&l, &k.basis).map(|(lam, dir)| Sample {
                point: x.clone(),
                residual: lam,
                direction: Some(dir),
            });
            Ok((sample, deficient))
        })
        .collect();
    let samples = collect_samples(results, &mut report)?;
    let mut report = summarize(report, &samples);
    report.grid_size = points.len();
    report.detail = format!(
        "max over {} points of the largest eigenvalue of L_fP restricted to ker dh/dx",
        points.len()
    );
    Ok(report)
}

#[derive(Debug, Clone, Copy)]
pub struct RhoFitOptions {
    pub rho_max: f64,
    /// Relative bisection tolerance for both ρ and q.
    pub rel_tol: f64,
}

impl Default for RhoFitOptions {
    fn default() -> Self {
        RhoFitOptions {
            rho_max: 1e6,
            rel_tol: 1e-6,
        }
    }
}

/// `ρ` sampled on a tensor grid, multilinearly interpolated and clamped to
/// the grid box elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoTable {
    pub grid: TensorGrid,
    pub values: Vec<f64>,
}

impl RhoTable {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct RhoFit {
    pub table: RhoTable,
    /// The `q` the table was fitted for.
    pub q: f64,
    /// Largest `q` for which every grid point admits `ρ ≤ ρ_max`.
    pub q_achieved: f64,
    pub report: ConditionReport,
}

/// Per-point data of the inequality `L − ρ CᵀC + qP ≤ 0`.
struct H2Data {
    l: DMatrix<f64>,
    ctc: DMatrix<f64>,
    p: DMatrix<f64>,
}

impl H2Data {
    fn at(p: &MetricField, sys: &DynamicalSystem, x: &[f64]) -> Result<Self> {
        let c = sys.jacobian_h(x)?;
        Ok(H2Data {
            l: lie_derivative(p, sys, x)?,
            ctc: c.transpose() * c,
            p: p.eval(x)?,
        })
    }

    fn matrix(&self, rho: f64, q: f64) -> DMatrix<f64> {
        &self.l - &self.ctc * rho + &self.p * q
    }

    fn top(&self, rho: f64, q: f64) -> (f64, DVector<f64>) {
        top_eigenpair(&self.matrix(rho, q))
    }

    /// Smallest `ρ ∈ [0, ρ_max]` with `λ_max ≤ 0`, or `None`.
    fn min_rho(&self, q: f64, opts: &RhoFitOptions) -> Option<f64> {
        if self.top(0.0, q).0 <= 0.0 {
            return Some(0.0);
        }
        if self.top(opts.rho_max, q).0 > 0.0 {
            return None;
        }
        let (mut lo, mut hi) = (0.0, opts.rho_max);
        while hi - lo > opts.rel_tol * hi {
            let mid = 0.5 * (lo + hi);
            if self.top(mid, q).0 <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

/// Fits `ρ(x)` on the grid so that `L_fP − ρ ∂hᵀ∂h + qP ≤ 0`, and finds the
/// largest feasible `q`. With `q_target = None` the table is fitted for
/// half the achieved `q`, which keeps `ρ` well below `ρ_max`.
pub fn fit_rho_q(
    p: &MetricField,
    sys: &DynamicalSystem,
    grid: &TensorGrid,
    q_target: Option<f64>,
    opts: &RhoFitOptions,
) -> Result<RhoFit> {
    let data: Vec<H2Data> = grid
        .points
        .par_iter()
        .map(|x| H2Data::at(p, sys, x))
        .collect::<Result<_>>()?;

    let first_infeasible = |q: f64| -> Option<usize> {
        let bad: Vec<bool> = data
            .par_iter()
            .map(|d| d.top(opts.rho_max, q).0 > 0.0)
            .collect();
        bad.iter().position(|b| *b)
    };
    if let Some(i) = first_infeasible(0.0) {
        return Err(Error::Infeasible {
            x: grid.points[i].clone(),
        });
    }
    let mut hi = 1.0;
    let mut lo = 0.0;
    while first_infeasible(hi).is_none() {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            break;
        }
    }
    if hi <= 1e6 {
        while hi - lo > opts.rel_tol * hi {
            let mid = 0.5 * (lo + hi);
            if first_infeasible(mid).is_none() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let q_achieved = lo;
    let q = q_target.unwrap_or(0.5 * q_achieved);

    let fitted: Vec<(f64, Sample)> = data
        .par_iter()
        .zip(grid.points.par_iter())
        .map(|(d, x)| {
            let rho = d.min_rho(q, opts).unwrap_or(opts.rho_max);
            let (lam, v) = d.top(rho, q);
            (
                rho,
                Sample {
                    point: x.clone(),
                    residual: lam,
                    direction: Some(v.as_slice().to_vec()),
                },
            )
        })
        .collect();
    let (values, samples): (Vec<f64>, Vec<Sample>) = fitted.into_iter().unzip();
    let mut report = summarize(ConditionReport::new("fit-rho-q", 0.0), &samples);
    report.detail = format!(
        "q = {q:e} (largest feasible {q_achieved:e}), max rho = {:e}, rho_max = {:e}",
        values.iter().cloned().fold(0.0, f64::max),
        opts.rho_max
    );
    Ok(RhoFit {
        table: RhoTable {
            grid: grid.clone(),
            values,
        },
        q,
        q_achieved,
        report,
    })
}

/// `λ_max(L_fP − ρ ∂hᵀ∂h + qP) ≤ tol` at every point.
pub fn check_h2<F>(
    p: &MetricField,
    sys: &DynamicalSystem,
    rho: F,
    q: f64,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<ConditionReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let samples = points
        .par_iter()
        .map(|x| {
            let d = H2Data::at(p, sys, x)?;
            let (lam, v) = d.top(rho(x), q);
            Ok(Sample {
                point: x.clone(),
                residual: lam,
                direction: Some(v.as_slice().to_vec()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = summarize(ConditionReport::new("h2", tol), &samples);
    report.detail = format!("q = {q:e}");
    Ok(report)
}

/// Kernel-projected second fundamental form of the output level sets:
/// `max_j ‖Bᵀ Q_j B‖₂` with `Q_j = ∂²h_j − Σ_i ∂h_j/∂x_i Γ^i`.
pub fn totally_geodesic_residual(
    p: &MetricField,
    sys: &DynamicalSystem,
    x: &[f64],
) -> Result<(f64, Option<Vec<f64>>, KernelBasis)> {
    let k = kernel_basis(sys, x)?;
    if k.basis.ncols() == 0 {
        return Ok((0.0, None, k));
    }
    let gamma = p.christoffel(x)?;
    let c = sys.jacobian_h(x)?;
    let n = p.dim();
    let mut worst = (f64::NEG_INFINITY, None);
    for j in 0..sys.m() {
        let mut q = sys.hessian_h(j, x)?;
        for i in 0..n {
            q -= gamma.slice(i) * c[(j, i)];
        }
        let proj = k.basis.transpose() * &q * &k.basis;
        let norm = sym_spectral_norm(&proj);
        if norm > worst.0 {
            let (lo_dir, hi_dir) = {
                let neg = -&proj;
                (top_eigenpair(&neg), top_eigenpair(&proj))
            };
            let u = if lo_dir.0 > hi_dir.0 { lo_dir.1 } else { hi_dir.1 };
            worst = (norm, Some((&k.basis * u).as_slice().to_vec()));
        }
    }
    Ok((worst.0, worst.1, k))
}

pub fn check_totally_geodesic(
    p: &MetricField,
    sys: &DynamicalSystem,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<ConditionReport> {
    let mut report = ConditionReport::new("totally-geodesic", tol);
    let results: Vec<_> = points
        .par_iter()
        .map(|x| {
            let (res, dir, k) = totally_geodesic_residual(p, sys, x)?;
            let deficient = rank_deficient(sys, &k).then(|| x.clone());
            let sample = dir.map(|d| Sample {
                point: x.clone(),
                residual: res,
                direction: Some(d),
            });
            Ok((sample, deficient))
        })
        .collect();
    let samples = collect_samples(results, &mut report)?;
    let mut report = summarize(report, &samples);
    report.grid_size = points.len();
    report.detail = "max over points and outputs of |B^T Q_j B|_2".into();
    Ok(report)
}

/// Solves minimal geodesics between pairs on the level set `h = y` and
/// measures how far they stray from it.
pub fn check_geodesic_convexity_spot(
    p: &MetricField,
    sys: &DynamicalSystem,
    y: &[f64],
    pairs: &[(Vec<f64>, Vec<f64>)],
    opts: &ShootingOptions,
    tol: f64,
) -> Result<ConditionReport> {
    let off_level = |x: &[f64]| -> Result<f64> {
        let h = sys.eval_h(x)?;
        Ok(h.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    };
    for (a, b) in pairs {
        for x in [a, b] {
            let gap = off_level(x)?;
            if gap > LEVEL_SET_TOL {
                return Err(Error::InvalidArgument(format!(
                    "pair point {x:?} is {gap:e} away from the level set"
                )));
            }
        }
    }
    let results: Vec<Result<Option<Sample>>> = pairs
        .par_iter()
        .map(|(a, b)| {
            if a == b {
                return Ok(Some(Sample {
                    point: a.clone(),
                    residual: 0.0,
                    direction: None,
                }));
            }
            match minimal_geodesic(p, a, b, opts) {
                Ok(g) => {
                    let mut worst = (0.0, a.clone());
                    for x in &g.path.x {
                        let gap = off_level(x)?;
                        if gap > worst.0 {
                            worst = (gap, x.clone());
                        }
                    }
                    Ok(Some(Sample {
                        point: worst.1,
                        residual: worst.0,
                        direction: Some(g.v0),
                    }))
                }
                Err(Error::NoConvergence { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut report = ConditionReport::new("geodesic-convexity", tol);
    let mut samples = Vec::new();
    for r in results {
        match r? {
            Some(s) => samples.push(s),
            None => report.skipped += 1,
        }
    }
    let mut report = summarize(report, &samples);
    report.detail = format!("{} pairs on the level set h = {y:?}", pairs.len());
    Ok(report)
}

/// Inner products along the minimal geodesic from `x` (with `y = h(x)`) to
/// `x̂` between the geodesic velocity and the observer correction
/// `F(γ(s), y) − f(γ(s))`. Passes when all are strictly negative on the
/// interior samples.
pub fn check_gain_margin<F>(
    p: &MetricField,
    sys: &DynamicalSystem,
    observer: F,
    x: &[f64],
    xhat: &[f64],
    opts: &ShootingOptions,
) -> Result<ConditionReport>
where
    F: Fn(&[f64], &[f64]) -> Result<DVector<f64>>,
{
    if x == xhat {
        return Err(Error::InvalidArgument("gain margin needs x != xhat".into()));
    }
    let g = minimal_geodesic(p, x, xhat, opts)?;
    let y = sys.eval_h(x)?;
    let mut values = Vec::new();
    let last = g.path.x.len() - 1;
    for (gx, gv) in g.path.x.iter().zip(&g.path.v).take(last).skip(1) {
        let corr = observer(gx, y.as_slice())? - sys.eval_f(gx)?;
        let pv = p.eval(gx)? * DVector::from_column_slice(gv);
        values.push((pv.dot(&corr), gx.clone()));
    }
    let scale = values
        .iter()
        .map(|(v, _)| v.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let threshold = -1e-12 * scale;
    let samples: Vec<Sample> = values
        .into_iter()
        .map(|(v, pt)| Sample {
            point: pt,
            residual: v - threshold,
            direction: None,
        })
        .collect();
    // strictness: a residual of exactly zero fails too
    let mut report = summarize(ConditionReport::new("gain-margin", 0.0), &samples);
    if report.worst_residual >= 0.0 {
        report.verdict = Verdict::Fail;
    }
    report.detail = format!(
        "geodesic length {:.6e}; residual is the inner product plus 1e-12 times its largest magnitude",
        g.length
    );
    Ok(report)
}

/// Serializable summary of a ρ fit.
#[derive(Debug, Clone, Serialize)]
pub struct RhoFitSummary {
    pub q: f64,
    pub q_achieved: f64,
    pub rho_max_fitted: f64,
    pub report: ConditionReport,
}

impl From<&RhoFit> for RhoFitSummary {
    fn from(f: &RhoFit) -> Self {
        RhoFitSummary {
            q: f.q,
            q_achieved: f.q_achieved,
            rho_max_fitted: f.table.max(),
            report: f.report.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example1::builtin_example1;
    use crate::metric::BoxDomain;

    fn sys(f: &[&str], h: &[&str]) -> DynamicalSystem {
        DynamicalSystem::parse(f, h).unwrap()
    }

    fn square(r: f64, per_axis: usize) -> Vec<Vec<f64>> {
        BoxDomain::cube(2, r).grid(per_axis)
    }

    #[test]
    fn kernel_of_linear_outputs() {
        let s = sys(&["0", "0", "0"], &["x1 + x2"]);
        let k = kernel_basis(&s, &[0.3, 0.1, -2.0]).unwrap();
        assert_eq!(k.rank, 1);
        assert_eq!(k.basis.ncols(), 2);
        let c = s.jacobian_h(&[0.0; 3]).unwrap();
        assert!((c * &k.basis).norm() < 1e-14);
        assert!((k.basis.transpose() * &k.basis - DMatrix::identity(2, 2)).norm() < 1e-13);
    }

    #[test]
    fn kernel_at_critical_point_of_output() {
        let s = sys(&["0", "0"], &["x1^2"]);
        let k = kernel_basis(&s, &[0.0, 1.0]).unwrap();
        assert_eq!((k.rank, k.basis.ncols()), (0, 2));
        let k = kernel_basis(&s, &[1.0, 1.0]).unwrap();
        assert_eq!((k.rank, k.basis.ncols()), (1, 1));
    }

    #[test]
    fn negativity_depends_on_metric() {
        let ex = builtin_example1();
        let pts = square(2.0, 21);
        let good = check_conditional_negativity(&ex.metric, &ex.system, &pts, NEGATIVITY_TOL).unwrap();
        assert_eq!(good.verdict, Verdict::Pass, "{good:?}");
        assert!(good.rank_deficient_points.is_empty());

        let flat = MetricField::identity(BoxDomain::cube(2, 2.0));
        let bad = check_conditional_negativity(&flat, &ex.system, &pts, NEGATIVITY_TOL).unwrap();
        assert_eq!(bad.verdict, Verdict::Fail);
        assert!(bad.worst_residual > NEGATIVITY_TOL);
        assert!(bad.witness_point.is_some() && bad.witness_direction.is_some());
    }

    #[test]
    fn zero_vector_field_is_marginally_negative() {
        let s = sys(&["0", "0"], &["x1"]);
        let p = MetricField::identity(BoxDomain::cube(2, 1.0));
        let r = check_conditional_negativity(&p, &s, &square(1.0, 5), NEGATIVITY_TOL).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.worst_residual, 0.0);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let s = sys(&["-x1", "-x2"], &["x1^2"]);
        let p = MetricField::identity(BoxDomain::cube(2, 1.0));
        let r = check_conditional_negativity(&p, &s, &square(1.0, 3), NEGATIVITY_TOL).unwrap();
        assert_eq!(r.rank_deficient_points, vec![vec![0.0, -1.0], vec![0.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn contracting_system_reaches_its_rate() {
        let s = sys(&["-x1", "-x2"], &["x1"]);
        let grid = BoxDomain::cube(2, 1.0).tensor_grid(5);
        let p = MetricField::identity(grid.domain.clone());
        let fit = fit_rho_q(&p, &s, &grid, None, &RhoFitOptions::default()).unwrap();
        assert!((fit.q_achieved - 2.0).abs() < 1e-5, "{}", fit.q_achieved);
        assert!(fit.q_achieved <= 2.0);
        assert_eq!(fit.report.verdict, Verdict::Pass);
        assert_eq!(fit.table.max(), 0.0);
    }

    #[test]
    fn detectable_linear_pair_gets_positive_q() {
        // double integrator observed through its position; the LMI
        // [[q-ρ, 1-q/2], [1-q/2, q-1]] ≤ 0 is feasible for every q < 1
        let s = sys(&["x2", "0"], &["x1"]);
        let grid = BoxDomain::cube(2, 1.0).tensor_grid(3);
        let p = MetricField::constant(
            &DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]),
            grid.domain.clone(),
        )
        .unwrap();
        let fit = fit_rho_q(&p, &s, &grid, None, &RhoFitOptions::default()).unwrap();
        assert!((fit.q_achieved - 1.0).abs() < 1e-5, "{}", fit.q_achieved);
        assert_eq!(fit.q, 0.5 * fit.q_achieved);
        assert_eq!(fit.report.verdict, Verdict::Pass);
    }

    #[test]
    fn infeasible_metric_is_rejected() {
        let ex = builtin_example1();
        let grid = BoxDomain::cube(2, 1.0).tensor_grid(5);
        let flat = MetricField::identity(grid.domain.clone());
        let err = fit_rho_q(&flat, &ex.system, &grid, None, &RhoFitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
    }

    #[test]
    fn fitted_rho_round_trips_through_h2() {
        let ex = builtin_example1();
        let grid = BoxDomain::cube(2, 2.0).tensor_grid(11);
        let fit = fit_rho_q(&ex.metric, &ex.system, &grid, None, &RhoFitOptions::default()).unwrap();
        assert!(fit.q > 0.0);
        let ok = check_h2(&ex.metric, &ex.system, |x| fit.table.eval(x), fit.q, &grid.points, H2_TOL).unwrap();
        assert_eq!(ok.verdict, Verdict::Pass, "{ok:?}");
        let bad = check_h2(&ex.metric, &ex.system, |x| fit.table.eval(x), 2.0 * fit.q_achieved, &grid.points, H2_TOL)
            .unwrap();
        assert_eq!(bad.verdict, Verdict::Fail);
    }

    #[test]
    fn h2_without_injection() {
        let s = sys(&["-x1", "-x2"], &["x1"]);
        let p = MetricField::identity(BoxDomain::cube(2, 1.0));
        let pts = square(1.0, 3);
        let r = check_h2(&p, &s, |_| 0.0, 2.0, &pts, H2_TOL).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        let r = check_h2(&p, &s, |_| 0.0, 2.1, &pts, H2_TOL).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!((r.worst_residual - 0.1).abs() < 1e-12);
    }

    #[test]
    fn output_level_sets_are_totally_geodesic_for_the_example_metric() {
        let ex = builtin_example1();
        let r = check_totally_geodesic(&ex.metric, &ex.system, &square(2.0, 21), TOTALLY_GEODESIC_TOL).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        assert!(r.worst_residual < 1e-12);
    }

    #[test]
    fn diagonal_metric_bends_level_sets() {
        let ex = builtin_example1();
        let p = MetricField::parse_upper(2, &["1", "0", "1+x1^2"], BoxDomain::cube(2, 2.0)).unwrap();
        let r = check_totally_geodesic(&p, &ex.system, &square(2.0, 21), TOTALLY_GEODESIC_TOL).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.witness_point.is_some());
    }

    #[test]
    fn linear_output_under_constant_metric() {
        let s = sys(&["0", "0", "0"], &["x1 - 2*x3"]);
        let p = MetricField::constant(
            &DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.5]),
            BoxDomain::cube(3, 1.0),
        )
        .unwrap();
        let r = check_totally_geodesic(&p, &s, &BoxDomain::cube(3, 1.0).grid(3), TOTALLY_GEODESIC_TOL).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.worst_residual, 0.0);
    }

    fn quick() -> ShootingOptions {
        ShootingOptions {
            restarts: 2,
            samples: 41,
            ..Default::default()
        }
    }

    #[test]
    fn level_sets_of_the_example_are_convex() {
        let ex = builtin_example1();
        let pairs = vec![
            (vec![0.5, -1.0], vec![0.5, 1.5]),
            (vec![0.5, 0.0], vec![0.5, 0.0]),
            (vec![0.5, 2.0], vec![0.5, -2.0]),
        ];
        let r = check_geodesic_convexity_spot(&ex.metric, &ex.system, &[0.5], &pairs, &quick(), CONVEXITY_TOL)
            .unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
    }

    #[test]
    fn circle_is_not_convex_in_the_plane() {
        let s = sys(&["0", "0"], &["x1^2 + x2^2"]);
        let p = MetricField::identity(BoxDomain::cube(2, 2.0));
        let pairs = vec![(vec![1.0, 0.0], vec![0.0, 1.0])];
        let r = check_geodesic_convexity_spot(&p, &s, &[1.0], &pairs, &quick(), CONVEXITY_TOL).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!((r.worst_residual - 0.5).abs() < 1e-3, "{}", r.worst_residual);
    }

    #[test]
    fn convexity_pairs_must_lie_on_the_level_set() {
        let ex = builtin_example1();
        let pairs = vec![(vec![0.5, 0.0], vec![0.6, 0.0])];
        assert!(check_geodesic_convexity_spot(&ex.metric, &ex.system, &[0.5], &pairs, &quick(), CONVEXITY_TOL)
            .is_err());
    }

    #[test]
    fn gain_margin_sign() {
        let ex = builtin_example1();
        let opts = quick();
        let (x, xhat) = ([0.2, 0.4], [0.9, -0.3]);
        let obs = ex.observer(4.0);
        let r = check_gain_margin(&ex.metric, &ex.system, |a, y| obs.rhs_at(a, y), &x, &xhat, &opts).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        let off = ex.observer(0.0);
        let r = check_gain_margin(&ex.metric, &ex.system, |a, y| off.rhs_at(a, y), &x, &xhat, &opts).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn fit_is_reproducible_across_thread_counts() {
        let ex = builtin_example1();
        let grid = BoxDomain::cube(2, 2.0).tensor_grid(21);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| fit_rho_q(&ex.metric, &ex.system, &grid, None, &RhoFitOptions::default()).unwrap())
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a.q.to_bits(), b.q.to_bits());
        assert_eq!(a.table, b.table);
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn fitted_condition_gives_a_gain_margin() {
        let ex = builtin_example1();
        let grid = BoxDomain::cube(2, 2.0).tensor_grid(21);
        let fit = fit_rho_q(&ex.metric, &ex.system, &grid, None, &RhoFitOptions::default()).unwrap();
        let h2 = check_h2(&ex.metric, &ex.system, |x| fit.table.eval(x), fit.q, &grid.points, H2_TOL).unwrap();
        assert!(h2.passed());
        let obs = ex.observer(1.0);
        let opts = ShootingOptions {
            restarts: 2,
            ..Default::default()
        };
        for (x, xhat) in [([0.0, 0.5], [0.5, 0.0]), ([-0.4, 0.2], [0.3, 0.9])] {
            let r = check_gain_margin(&ex.metric, &ex.system, |a, y| obs.rhs_at(a, y), &x, &xhat, &opts).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }
}
