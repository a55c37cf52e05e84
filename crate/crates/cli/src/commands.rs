use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Value};

use riemobs_core::conditions::RhoFitSummary;
use riemobs_core::detect::seeded_initial_conditions;
use riemobs_core::example1::lyapunov_v;
use riemobs_core::metric::completeness_probe;
use riemobs_core::*;

use crate::config::ProblemConfig;
use crate::output::{geodesic_csv, trace_csv};

/// Flags shared by the subcommands.
#[derive(Debug, Clone, Default)]
pub struct Flags {
    pub seed: u64,
    pub tol: Option<f64>,
    pub from: Option<Vec<f64>>,
    pub to: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub k_e: Option<f64>,
    pub q: Option<f64>,
    pub e: Option<f64>,
}

/// Everything a subcommand produces. Serialized as the JSON report.
#[derive(Debug, Serialize)]
pub struct Run {
    pub command: String,
    pub config_sha256: Option<String>,
    pub seed: u64,
    pub status: &'static str,
    pub checks: Vec<ConditionReport>,
    pub values: BTreeMap<String, Value>,
    #[serde(skip)]
    pub artifacts: Vec<(String, String)>,
}

impl Run {
    fn new(command: &str, cfg: Option<&ProblemConfig>, flags: &Flags) -> Self {
        Run {
            command: command.into(),
            config_sha256: cfg.map(|c| c.sha256.clone()),
            seed: flags.seed,
            status: "ok",
            checks: Vec::new(),
            values: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    fn value(&mut self, key: &str, v: impl Serialize) {
        self.values.insert(key.into(), json!(v));
    }

    fn finish(mut self) -> Self {
        if !self.checks.is_empty() {
            self.status = if self.checks.iter().all(ConditionReport::passed) {
                "pass"
            } else {
                "fail"
            };
        }
        self
    }

    pub fn exit_code(&self) -> i32 {
        if self.status == "fail" {
            1
        } else {
            0
        }
    }
}

pub const COMMANDS: [&str; 11] = [
    "check-metric",
    "check-negativity",
    "fit-rho-q",
    "check-totally-geodesic",
    "check-convexity",
    "check-detectability",
    "geodesic",
    "distance",
    "simulate",
    "verify-decay",
    "demo-example1",
];

pub fn run(name: &str, cfg: Option<&ProblemConfig>, flags: &Flags) -> anyhow::Result<Run> {
    if name == "demo-example1" {
        return demo_example1(flags);
    }
    let cfg = cfg.ok_or_else(|| anyhow::anyhow!("`{name}` needs --config"))?;
    let run = match name {
        "check-metric" => check_metric(cfg, flags)?,
        "check-negativity" => check_negativity(cfg, flags)?,
        "fit-rho-q" => fit_rho(cfg, flags)?,
        "check-totally-geodesic" => check_tg(cfg, flags)?,
        "check-convexity" => check_convexity(cfg, flags)?,
        "check-detectability" => check_detectability(cfg, flags)?,
        "geodesic" => geodesic(cfg, flags)?,
        "distance" => distance_cmd(cfg, flags)?,
        "simulate" => simulate_cmd(cfg, flags)?,
        "verify-decay" => verify_decay_cmd(cfg, flags)?,
        other => anyhow::bail!("unknown subcommand `{other}`"),
    };
    Ok(run.finish())
}

fn shooting(flags: &Flags) -> ShootingOptions {
    ShootingOptions {
        seed: flags.seed,
        ..Default::default()
    }
}

fn grid_points(cfg: &ProblemConfig) -> Vec<Vec<f64>> {
    cfg.domain.grid(cfg.grid)
}

fn spd_report(cfg: &ProblemConfig) -> anyhow::Result<(ConditionReport, f64, f64)> {
    let mut report = ConditionReport::new("spd", 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let points = grid_points(cfg);
    for x in &points {
        let (l, h) = cfg.metric.eigen_bounds(x)?;
        hi = hi.max(h);
        // residual is -λ_min; the first minimiser in grid order is the witness
        if -l > report.worst_residual {
            report.worst_residual = -l;
            report.witness_point = Some(x.clone());
        }
        lo = lo.min(l);
    }
    report.grid_size = points.len();
    if !(lo > 0.0) {
        report.verdict = Verdict::Fail;
    }
    report.detail = "residual is minus the smallest eigenvalue; fails unless every grid point is positive definite".into();
    Ok((report, lo, hi))
}

fn check_metric(cfg: &ProblemConfig, flags: &Flags) -> anyhow::Result<Run> {
    let mut run = Run::new("check-metric", Some(cfg), flags);
    for check in &cfg.checks.run {
        match check.as_str() {
            "spd" => {
                let (report, lo, hi) = spd_report(cfg)?;
                run.checks.push(report);
                run.value("lambda_min", lo);
                run.value("lambda_max", hi);
            }
            "negativity" => {
                run.checks.push(negativity(cfg, flags)?);
                if let Some(t) = transformed(cfg)? {
                    let tol = flags.tol.unwrap_or(cfg.checks.negativity_tol);
                    let mut r = check_conditional_negativity(&t.metric, &t.system, &t.points, tol)?;
                    r.check += "-transformed";
                    run.checks.push(r);
                }
            }
            "totally-geodesic" => {
                run.checks.push(totally_geodesic(cfg, flags)?);
                if let Some(t) = transformed(cfg)? {
                    let tol = flags.tol.unwrap_or(cfg.checks.totally_geodesic_tol);
                    let mut r = check_totally_geodesic(&t.metric, &t.system, &t.points, tol)?;
                    r.check += "-transformed";
                    run.checks.push(r);
                }
            }
            "completeness" => {
                let r = cfg
                    .domain
                    .lower
                    .iter()
                    .chain(&cfg.domain.upper)
                    .fold(0.0f64, |m, v| m.max(v.abs()));
                let radii: Vec<f64> = [0.125, 0.25, 0.5, 1.0].iter().map(|s| s * r).collect();
                let probe = completeness_probe(&cfg.metric, &radii, 1.0, flags.seed)?;
                run.value("completeness", &probe);
            }
            other => anyhow::bail!("unknown check `{other}`"),
        }
    }
    Ok(run)
}

/// The problem in the coordinates of `[diffeo]`, at the images of the grid.
struct Transformed {
    system: DynamicalSystem,
    metric: MetricField,
    points: Vec<Vec<f64>>,
}

fn transformed(cfg: &ProblemConfig) -> anyhow::Result<Option<Transformed>> {
    let Some(phi) = &cfg.diffeo else { return Ok(None) };
    if phi.inverse.is_none() {
        return Ok(None);
    }
    Ok(Some(Transformed {
        system: phi.transform_system(&cfg.system)?,
        metric: phi.transform_metric(&cfg.metric)?,
        points: grid_points(cfg)
            .iter()
            .map(|x| phi.apply(x))
            .collect::<Result<_, _>>()?,
    }))
}

fn negativity(cfg: &ProblemConfig, flags: &Flags) -> anyhow::Result<ConditionReport> {
    let tol = flags.tol.unwrap_or(cfg.checks.negativity_tol);
    Ok(check_conditional_negativity(&cfg.metric, &cfg.system, &grid_points(cfg), tol)?)
}

fn totally_geodesic(cfg: &ProblemConfig, flags: &Flags) -> anyhow::Result<ConditionReport> {
    let tol = flags.tol.unwrap_or(cfg.checks.totally_geodesic_tol);
    Ok(check_totally_geodesic(&cfg.metric, &cfg.system, &grid_points(cfg), tol)?)
}

fn check_negativity(cfg: &ProblemConfig, flags: &Flags) -> anyhow::Result<Run> {
    let mut run = Run::new("check-negativity", Some(cfg), flags);
    run.checks.push(negativity(cfg, flags)?);
    Ok(run)
}

fn check_tg(cfg: &ProblemConfig, flags: &Flags) -> anyhow::Result<Run> {
    let mut run = Run::new("check-totally-geodesic", Some(cfg), flags);
    run.checks.push(totally_geodesic(cfg, flags)?);
    Ok(run)
}

/// A fit, or the failing report when no finite ρ exists somewhere.
fn fit(cfg: &ProblemConfig, flags: &Flags) -> anyhow::Result<Result<RhoFit, ConditionReport>> {
    let grid = cfg.domain.tensor_grid(cfg.grid);
    let opts = RhoFitOptions {
        rho_max: cfg.checks.rho_max,
        ..Default::default()
    };
    let q = flags.q.or(cfg.observer.q);
    match fit_rho_q(&cfg.metric, &cfg.system, &grid, q, &opts) {
        Ok(f) => Ok(Ok(f)),
        Err(Error::Infeasible { x }) => {
            let mut report = ConditionReport::new("fit-rho-q", 0.0);
            report.verdict = Verdict::Fail;
            report.witness_point = Some(x);
            report.grid_size = grid.len();
            report.detail = format!("no rho <= {:e} makes the inequality hold even with q = 0", opts.rho_max);
            Ok(Err(report))
        }
        Err(e) => Err(e.into()),
    }
}

fn fit_rho(cfg: &ProblemConfig, flags: &Flags) -> anyhow::Result<Run> {
    let mut run = Run::new("fit-rho-q", Some(cfg), flags);
    match fit(cfg, flags)? {
        Ok(f) => {
            let summary = RhoFitSummary::from(&f);
            run.value("q", summary.q);
            run.value("q_achieved", summary.q_achieved);
            run.value("rho_max_fitted", summary.rho_max_fitted);
            run.checks.push(summary.report);
        }
        Err(report) => run.checks.push(report),
    }
    Ok(run)
}

fn check_convexity(cfg: &ProblemConfig, flags: &Flags) -> anyhow::Result<Run> {
    let mut run = Run::new("check-convexity", Some(cfg), flags);
    let y = cfg
        .checks
        .convexity_level
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("checks.convexity_level required"))?;
    if cfg.checks.convexity_pairs.is_empty() {
        anyhow::bail!("checks.convexity_pairs required");
    }
    let tol = flags.tol.unwrap_or(cfg.checks.convexity_tol);
    run.checks.push(check_geodesic_convexity_spot(
        &cfg.metric,
        &cfg.system,
        y,
        &cfg.checks.convexity_pairs,
        &shooting(flags),
        tol,
    )?);
    Ok(run)
}

fn initial_states(cfg: &ProblemConfig) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let x0 = cfg.observer.x0.clone().ok_or_else(|| anyhow::anyhow!("observer.x0 required"))?;
    let xhat0 = cfg
        .observer
        .xhat0
        .clone()
        .ok_or_else(|| anyhow::anyhow!("observer.xhat0 required"))?;
    Ok((x0, xhat0))
}

fn check_detectability(cfg: &ProblemConfig, flags: &Flags) -> anyhow::Result<Run> {
    let mut run = Run::new("check-detectability", Some(cfg), flags);
    let f = match fit(cfg, flags)? {
        Ok(f) => f,
        Err(report) => {
            run.checks.push(report);
            return Ok(run);
        }
    };
    let (x0, _) = initial_states(cfg)?;
    let t_end = flags.t_end.unwrap_or(cfg.observer.t_end);
    let lin = linearize_along(&cfg.system, &cfg.metric, &x0, t_end, cfg.observer.dt)?;
    let rho = |x: &[f64]| f.table.eval(x);
    let gains = detect_gain(&lin, rho, Some(&cfg.domain))?;
    let xis = seeded_initial_conditions(cfg.system.n(), cfg.checks.ltv_samples, flags.seed);
    let tol = flags.tol.unwrap_or(cfg.checks.h2_tol);
    run.checks.push(check_h2(&cfg.metric, &cfg.system, rho, f.q, &grid_points(cfg), tol)?);
    let (report, _) = check_ltv_stability(&lin, rho, f.q, &xis)?;
    run.value("q", f.q);
    run.value("sup_gain_norm", gains.sup_norm);
    run.value("extrapolated_times", gains.extrapolated.len());
    run.value("p_lower", lin.p_lower);
    run.value("p_upper", lin.p_upper);
    run.checks.push(report);
    Ok(run)
}

fn endpoints(cfg: &ProblemConfig, flags: &Flags) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let n = cfg.system.n();
    let from = flags.from.clone().ok_or_else(|| anyhow::anyhow!("--from required"))?;
    let to = flags.to.clone().ok_or_else(|| anyhow::anyhow!("--to required"))?;
    for (v, name) in [(&from, "--from"), (&to, "--to")] {
        if v.len() != n {
            anyhow::bail!("{name} needs {n} comma-separated numbers, got {}", v.len());
        }
    }
    Ok((from, to))
}

fn geodesic(cfg: &ProblemConfig, flags: &Flags) -> anyhow::Result<Run> {
    let mut run = Run::new("geodesic", Some(cfg), flags);
    let (a, b) = endpoints(cfg, flags)?;
    let g = minimal_geodesic(&cfg.metric, &a, &b, &shooting(flags))?;
    run.value("length", g.length);
    run.value("v0", &g.v0);
    run.value("residual", g.residual);
    run.value("iterations", g.iterations);
    run.value("ambiguous", g.ambiguous);
    run.artifacts.push(("geodesic.csv".into(), geodesic_csv(&g.path)?));
    Ok(run)
}

fn distance_cmd(cfg: &ProblemConfig, flags: &Flags) -> anyhow::Result<Run> {
    let mut run = Run::new("distance", Some(cfg), flags);
    let (a, b) = endpoints(cfg, flags)?;
    run.value("distance", distance(&cfg.metric, &a, &b, &shooting(flags))?);
    Ok(run)
}

fn observer(cfg: &ProblemConfig, flags: &Flags) -> anyhow::Result<RiemannianObserver> {
    let gain = match flags.k_e {
        Some(k) if k >= 0.0 => Gain::Constant(k),
        Some(k) => anyhow::bail!("--kE must be non-negative, got {k}"),
        None => cfg.observer.gain.clone(),
    };
    Ok(RiemannianObserver::new(cfg.metric.clone(), cfg.system.clone(), gain)?)
}

/// Simulates the metric observer and fills the distance channel.
fn traced(cfg: &ProblemConfig, flags: &Flags, run: &mut Run) -> anyhow::Result<SimulationTrace> {
    let (x0, xhat0) = initial_states(cfg)?;
    let sim = SimOptions {
        t_end: flags.t_end.unwrap_or(cfg.observer.t_end),
        dt: cfg.observer.dt,
        tol: flags.tol.unwrap_or(1e-9),
    };
    let obs = observer(cfg, flags)?;
    let mut tr = simulate(&cfg.system, &obs, &x0, &xhat0, Some(&cfg.domain), &sim)?;
    distance_trace(&cfg.metric, &mut tr, &shooting(flags));
    run.value("samples", tr.len());
    run.value("stopped", &tr.stopped);
    run.value(
        "bvp_failures",
        tr.flags.iter().filter(|f| f.iter().any(|s| s == "bvp-failure")).count(),
    );
    run.artifacts.push(("trace.csv".into(), trace_csv(&tr)?));
    Ok(tr)
}

fn simulate_cmd(cfg: &ProblemConfig, flags: &Flags) -> anyhow::Result<Run> {
    let mut run = Run::new("simulate", Some(cfg), flags);
    let tr = traced(cfg, flags, &mut run)?;
    if let Some(reason) = &tr.stopped {
        anyhow::bail!("simulation stopped early: {reason}");
    }
    Ok(run)
}

fn verify_decay_cmd(cfg: &ProblemConfig, flags: &Flags) -> anyhow::Result<Run> {
    let mut run = Run::new("verify-decay", Some(cfg), flags);
    let q = match flags.q.or(cfg.observer.q) {
        Some(q) => q,
        None => match fit(cfg, flags)? {
            Ok(f) => f.q,
            Err(report) => {
                run.checks.push(report);
                return Ok(run);
            }
        },
    };
    let tr = traced(cfg, flags, &mut run)?;
    let e = flags.e.or(cfg.observer.e);
    run.value("q", q);
    run.checks.push(verify_decay(&tr, q, e, Some(&cfg.domain))?);
    Ok(run)
}

fn demo_example1(flags: &Flags) -> anyhow::Result<Run> {
    let mut run = Run::new("demo-example1", None, flags);
    let ex = builtin_example1();
    let sim = SimOptions {
        t_end: flags.t_end.unwrap_or(5.0),
        dt: 0.01,
        tol: flags.tol.unwrap_or(1e-9),
    };
    let (x0, xhat0) = ([0.0, 1.0], [1.0, 0.0]);
    let mut tr = simulate(&ex.system, &ReferenceObserver, &x0, &xhat0, None, &sim)?;
    tr.attach_oracle(lyapunov_v);
    distance_trace(&ex.metric, &mut tr, &shooting(flags));
    let v = tr.v.as_ref().expect("oracle attached");
    let mut report = ConditionReport::new("lyapunov-decay", 1e-6);
    report.grid_size = tr.len();
    for (j, (t, vt)) in tr.t.iter().zip(v).enumerate() {
        let r = (vt - v[0] * (-t).exp()).abs() / v[0];
        if r > report.worst_residual {
            report.worst_residual = r;
            report.witness_time = Some(*t);
            report.witness_point = Some(tr.xhat[j].iter().chain(&tr.x[j]).copied().collect());
        }
    }
    if report.worst_residual > report.tolerance || tr.stopped.is_some() {
        report.verdict = Verdict::Fail;
    }
    report.detail = "max over samples of |V(t) - V(0) exp(-t)| / V(0) for the reference observer".into();
    run.value("V0", v[0]);
    run.value("x0", x0);
    run.value("xhat0", xhat0);
    run.checks.push(report);
    run.artifacts.push(("trace.csv".into(), trace_csv(&tr)?));
    Ok(run.finish())
}
