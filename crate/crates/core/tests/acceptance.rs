//! End-to-end acceptance checks on the two-dimensional worked example.
//!
//! Runs without the libtest harness so every criterion prints one
//! `PASS`/`FAIL` line; the process exits non-zero if any criterion fails.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use riemobs_core::conditions::{NEGATIVITY_TOL, TOTALLY_GEODESIC_TOL};
use riemobs_core::detect::seeded_initial_conditions;
use riemobs_core::example1::{flat_distance, lyapunov_v};
use riemobs_core::observer::scan_gain;
use riemobs_core::*;

/// Baselines frozen from the first full run of criterion 7.
const BASELINE_Q: f64 = 0.4472;
const BASELINE_K: f64 = 1.0;
/// Relative tolerance on the frozen `q`.
const BASELINE_Q_TOL: f64 = 1e-3;

const T_PIPELINE: f64 = 4.0;
const K_INVARIANCE: f64 = 2.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Result<Outcome>;

fn main() {
    let checks: [(&str, &str, Check); 11] = [
        ("1", "Lyapunov decay of the reference observer", lyapunov_decay),
        ("2", "KL error bound for the reference observer", kl_bound),
        ("3", "example metric distance equals sqrt V on random pairs", distance_oracle),
        ("3f", "flat metric distance equals its closed form", flat_distance_oracle),
        ("4", "Christoffel symbol G^1_22 vanishes", christoffel_regression),
        ("5", "metric eigenvalue bounds", eigen_bounds),
        ("6", "constant metrics fail conditional negativity, example metric passes", constant_metric_impossibility),
        ("7", "metric observer pipeline with gain margin", observer_pipeline),
        ("8", "totally geodesic output level sets", totally_geodesic),
        ("9", "detectability along the trajectory", detectability),
        ("10", "coordinate invariance", coordinate_invariance),
    ];
    let mut failures = 0;
    for (id, name, check) in checks {
        let start = Instant::now();
        let out = check().unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        if !out.pass {
            failures += 1;
        }
        println!(
            "{} [{id}] {name}: {} ({secs:.2}s)",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    println!("acceptance: {} of {} passed", checks.len() - failures, checks.len());
    if failures > 0 {
        std::process::exit(1);
    }
}

fn rel_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

fn sq_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn reference_run(x0: &[f64], xhat0: &[f64]) -> Result<SimulationTrace> {
    let ex = builtin_example1();
    let opts = SimOptions {
        t_end: 5.0,
        dt: 0.01,
        tol: 1e-9,
    };
    let mut tr = simulate(&ex.system, &ReferenceObserver, x0, xhat0, None, &opts)?;
    tr.attach_oracle(lyapunov_v);
    Ok(tr)
}

fn lyapunov_decay() -> Result<Outcome> {
    let tr = reference_run(&[0.0, 1.0], &[1.0, 0.0])?;
    let v = tr.v.as_ref().unwrap();
    let worst = tr
        .t
        .iter()
        .zip(v)
        .map(|(t, vt)| (vt - v[0] * (-t).exp()).abs() / v[0])
        .fold(0.0, f64::max);
    Ok(outcome(
        worst <= 1e-6 && tr.stopped.is_none(),
        format!("max |V(t) - V(0)e^-t|/V(0) = {worst:.3e} (tol 1e-6)"),
    ))
}

fn kl_bound() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..20 {
        let s: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (x0, xhat0) = (&s[..2], &s[2..]);
        let tr = reference_run(x0, xhat0)?;
        let e0 = sq_norm(x0, xhat0);
        for ((t, x), xh) in tr.t.iter().zip(&tr.x).zip(&tr.xhat) {
            let bound = 3.0 * (-t).exp() * (1.0 + x0[0] * x0[0]) * e0 * (1.0 + 1e-3);
            worst = worst.max(sq_norm(x, xh) / bound);
        }
    }
    Ok(outcome(
        worst <= 1.0,
        format!("max |X - Xhat|^2 / bound = {worst:.4} over 20 pairs (pass iff <= 1)"),
    ))
}

fn distance_oracle() -> Result<Outcome> {
    let ex = builtin_example1();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = ShootingOptions::default();
    let (mut worst, mut bad, mut failed) = (0.0f64, 0, 0);
    for _ in 0..50 {
        let xhat: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        match distance(&ex.metric, &xhat, &x, &opts) {
            Ok(d) => {
                let err = (d - lyapunov_v(&xhat, &x).sqrt()).abs();
                worst = worst.max(err);
                if err > 1e-5 {
                    bad += 1;
                }
            }
            Err(_) => failed += 1,
        }
    }
    Ok(outcome(
        bad == 0 && failed == 0,
        format!("{bad} of 50 pairs off by more than 1e-5, worst {worst:.3e}, {failed} solver failures"),
    ))
}

fn flat_distance_oracle() -> Result<Outcome> {
    let ex = builtin_example1();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = ShootingOptions::default();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let a: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let d = distance(&ex.flat_metric, &a, &b, &opts)?;
        worst = worst.max((d - flat_distance(&a, &b)).abs());
    }
    Ok(outcome(worst <= 1e-5, format!("worst error {worst:.3e} over 50 pairs (tol 1e-5)")))
}

fn christoffel_regression() -> Result<Outcome> {
    let ex = builtin_example1();
    let mut worst = 0.0f64;
    for x in BoxDomain::cube(2, 3.0).grid(41) {
        worst = worst.max(ex.metric.christoffel(&x)?.get(0, 1, 1).abs());
    }
    Ok(outcome(worst <= 1e-10, format!("max |G^1_22| = {worst:.3e} on 41x41 (tol 1e-10)")))
}

fn eigen_bounds() -> Result<Outcome> {
    let ex = builtin_example1();
    let (mut lo_gap, mut hi_gap) = (f64::INFINITY, f64::INFINITY);
    for x in BoxDomain::cube(2, 3.0).grid(41) {
        let (lo, hi) = ex.metric.eigen_bounds(&x)?;
        lo_gap = lo_gap.min(lo - 1.0 / 3.0);
        hi_gap = hi_gap.min(3.0 + x[0] * x[0] + x[1] * x[1] - hi);
    }
    Ok(outcome(
        lo_gap >= -1e-12 && hi_gap >= -1e-12,
        format!("min(lambda_min - 1/3) = {lo_gap:.4e}, min(3 + |x|^2 - lambda_max) = {hi_gap:.4e}"),
    ))
}

fn constant_metrics(domain: &BoxDomain) -> Result<Vec<MetricField>> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut out = vec![MetricField::identity(domain.clone())];
    for _ in 0..2 {
        let a = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let spd = &a * a.transpose() + DMatrix::identity(2, 2) * 0.1;
        out.push(MetricField::constant(&spd, domain.clone())?);
    }
    Ok(out)
}

/// Verdicts of the negativity check for the constant metrics and the example metric.
fn negativity_verdicts(
    sys: &DynamicalSystem,
    constants: &[MetricField],
    p_ex: &MetricField,
    points: &[Vec<f64>],
) -> Result<(Vec<ConditionReport>, ConditionReport)> {
    let bad = constants
        .iter()
        .map(|p| check_conditional_negativity(p, sys, points, NEGATIVITY_TOL))
        .collect::<Result<Vec<_>>>()?;
    let good = check_conditional_negativity(p_ex, sys, points, NEGATIVITY_TOL)?;
    Ok((bad, good))
}

fn constant_metric_impossibility() -> Result<Outcome> {
    let ex = builtin_example1();
    let domain = BoxDomain::cube(2, 3.0);
    let points = domain.grid(41);
    let (bad, good) = negativity_verdicts(&ex.system, &constant_metrics(&domain)?, &ex.metric, &points)?;
    let all_fail = bad
        .iter()
        .all(|r| r.verdict == Verdict::Fail && r.witness_point.is_some());
    let residuals: Vec<String> = bad.iter().map(|r| format!("{:.3e}", r.worst_residual)).collect();
    Ok(outcome(
        all_fail && good.passed(),
        format!(
            "constant metrics worst residuals [{}], example metric worst {:.3e} (tol 1e-9)",
            residuals.join(", "),
            good.worst_residual
        ),
    ))
}

struct Fitted {
    ex: Example1,
    fit: RhoFit,
    domain: BoxDomain,
}

fn fitted() -> Result<Fitted> {
    let ex = builtin_example1();
    let domain = BoxDomain::cube(2, 2.0);
    let grid = domain.tensor_grid(41);
    let fit = fit_rho_q(&ex.metric, &ex.system, &grid, None, &RhoFitOptions::default())?;
    Ok(Fitted { ex, fit, domain })
}

fn observer_pipeline() -> Result<Outcome> {
    let Fitted { ex, fit, domain } = fitted()?;
    if !(fit.q_achieved > 0.0) {
        return Ok(outcome(false, format!("q_achieved = {}", fit.q_achieved)));
    }
    let (x0, xhat0) = ([0.0, 0.5], [0.5, 0.0]);
    let sim = SimOptions {
        t_end: T_PIPELINE,
        ..Default::default()
    };
    let shooting = ShootingOptions::default();
    let make = |k: f64| Ok(ex.observer(k));
    let Some((k, _)) = scan_gain(make, &ex.system, &ex.metric, &x0, &xhat0, fit.q, Some(&domain), &sim, &shooting)?
    else {
        return Ok(outcome(false, format!("no gain in 2^0..2^10 passes with q = {:.4e}", fit.q)));
    };
    let mut margins = Vec::new();
    for scale in [2.0, 4.0] {
        let obs = ex.observer(k).with_scale(scale);
        let mut tr = simulate(&ex.system, &obs, &x0, &xhat0, Some(&domain), &sim)?;
        distance_trace(&ex.metric, &mut tr, &shooting);
        margins.push(verify_decay(&tr, fit.q, None, Some(&domain))?);
    }
    let q_ok = ((fit.q - BASELINE_Q) / BASELINE_Q).abs() <= BASELINE_Q_TOL;
    let pass = q_ok && k == BASELINE_K && margins.iter().all(|r| r.passed());
    Ok(outcome(
        pass,
        format!(
            "q_achieved = {:.4e}, q = {:.4e} (baseline {BASELINE_Q}), k_E = {k} (baseline {BASELINE_K}), scaled by 2/4: {:?}/{:?}",
            fit.q_achieved, fit.q, margins[0].verdict, margins[1].verdict
        ),
    ))
}

fn totally_geodesic_verdicts(
    sys: &DynamicalSystem,
    p_ex: &MetricField,
    diag: &MetricField,
    points: &[Vec<f64>],
) -> Result<(ConditionReport, ConditionReport)> {
    Ok((
        check_totally_geodesic(p_ex, sys, points, TOTALLY_GEODESIC_TOL)?,
        check_totally_geodesic(diag, sys, points, TOTALLY_GEODESIC_TOL)?,
    ))
}

fn diag_metric(domain: &BoxDomain) -> Result<MetricField> {
    MetricField::parse_upper(2, &["1", "0", "1+x1^2"], domain.clone())
}

fn totally_geodesic() -> Result<Outcome> {
    let ex = builtin_example1();
    let domain = BoxDomain::cube(2, 3.0);
    let points = domain.grid(41);
    let (good, bad) = totally_geodesic_verdicts(&ex.system, &ex.metric, &diag_metric(&domain)?, &points)?;
    let witness_off_axis = bad.witness_point.as_ref().is_some_and(|w| w[0] != 0.0);
    Ok(outcome(
        good.passed() && good.worst_residual <= 1e-8 && bad.verdict == Verdict::Fail && witness_off_axis,
        format!(
            "example metric residual {:.3e}, diag(1, 1+x1^2) residual {:.3e} at {:?}",
            good.worst_residual, bad.worst_residual, bad.witness_point
        ),
    ))
}

fn detectability() -> Result<Outcome> {
    let Fitted { ex, fit, .. } = fitted()?;
    let lin = linearize_along(&ex.system, &ex.metric, &[0.0, 0.5], T_PIPELINE, 0.01)?;
    let gains = detect_gain(&lin, |x| fit.table.eval(x), Some(&fit.table.grid.domain))?;
    let xis = seeded_initial_conditions(2, 8, 9);
    let (report, _) = check_ltv_stability(&lin, |x| fit.table.eval(x), fit.q, &xis)?;
    Ok(outcome(
        report.passed(),
        format!(
            "worst envelope ratio - 1 = {:.3e} (tol 1e-6), q = {:.4e}, sup |K| = {:.3e}",
            report.worst_residual, fit.q, gains.sup_norm
        ),
    ))
}

fn coordinate_invariance() -> Result<Outcome> {
    let ex = builtin_example1();
    let phi = &ex.phi;
    let domain = BoxDomain::cube(2, 3.0);
    let points = domain.grid(41);
    let mapped = points.iter().map(|x| phi.apply(x)).collect::<Result<Vec<_>>>()?;
    let sys_bar = phi.transform_system(&ex.system)?;

    // negativity
    let constants = constant_metrics(&domain)?;
    let (bad, good) = negativity_verdicts(&ex.system, &constants, &ex.metric, &points)?;
    let constants_bar = constants
        .iter()
        .map(|p| phi.transform_metric(p))
        .collect::<Result<Vec<_>>>()?;
    let p_bar = phi.transform_metric(&ex.metric)?;
    let (bad_bar, good_bar) = negativity_verdicts(&sys_bar, &constants_bar, &p_bar, &mapped)?;
    let negativity_same = good.verdict == good_bar.verdict
        && bad.iter().zip(&bad_bar).all(|(a, b)| a.verdict == b.verdict);

    // totally geodesic
    let diag = diag_metric(&domain)?;
    let (tg, tg_bad) = totally_geodesic_verdicts(&ex.system, &ex.metric, &diag, &points)?;
    let (tg_bar, tg_bad_bar) =
        totally_geodesic_verdicts(&sys_bar, &p_bar, &phi.transform_metric(&diag)?, &mapped)?;
    let tg_same = tg.verdict == tg_bar.verdict && tg_bad.verdict == tg_bad_bar.verdict;

    // observer trajectories
    let sim = SimOptions {
        t_end: T_PIPELINE,
        ..Default::default()
    };
    let (x0, xhat0) = ([0.0, 0.5], [0.5, 0.0]);
    let obs = ex.observer(K_INVARIANCE);
    let obs_bar = RiemannianObserver::new(p_bar, sys_bar.clone(), Gain::Constant(K_INVARIANCE))?;
    let tr = simulate(&ex.system, &obs, &x0, &xhat0, None, &sim)?;
    let tr_bar = simulate(&sys_bar, &obs_bar, &phi.apply(&x0)?, &phi.apply(&xhat0)?, None, &sim)?;
    let mut gap = 0.0f64;
    for (a, b) in tr.xhat.iter().zip(&tr_bar.xhat) {
        gap = gap.max(rel_gap(a, &phi.apply_inverse(b)?));
    }
    for (a, b) in tr.x.iter().zip(&tr_bar.x) {
        gap = gap.max(rel_gap(a, &phi.apply_inverse(b)?));
    }
    let same_len = tr.len() == tr_bar.len();
    Ok(outcome(
        negativity_same && tg_same && same_len && gap <= 1e-6,
        format!(
            "negativity verdicts {}, totally geodesic verdicts {}, trajectory gap {gap:.3e} (tol 1e-6)",
            if negativity_same { "agree" } else { "differ" },
            if tg_same { "agree" } else { "differ" },
        ),
    ))
}
