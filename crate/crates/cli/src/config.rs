//! Problem configuration files.
//!
//! ```toml
//! [system]
//! n = 2
//! f = ["x2", "-x1"]
//! h = ["x1"]
//!
//! [metric]
//! upper = ["1", "0", "1"]        # P11, P12, P22
//!
//! [domain]
//! lower = [-2, -2]
//! upper = [2, 2]
//! grid = 41
//! ```
//!
//! Optional sections: `[observer]`, `[checks]`, `[diffeo]`.

use std::fmt;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use riemobs_core::expr::{parse_state, Expr};
use riemobs_core::{BoxDomain, Diffeomorphism, DynamicalSystem, Gain, MetricField};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        write!(f, "{} {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: Option<RawSystem>,
    metric: Option<RawMetric>,
    domain: Option<RawDomain>,
    #[serde(default)]
    observer: RawObserver,
    #[serde(default)]
    checks: RawChecks,
    diffeo: Option<RawDiffeo>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    n: Option<usize>,
    m: Option<usize>,
    f: Option<Vec<String>>,
    h: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    upper: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
    grid: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawGain {
    Number(f64),
    Expr(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObserver {
    #[serde(rename = "kE")]
    k_e: Option<RawGain>,
    q: Option<f64>,
    #[serde(rename = "E")]
    e: Option<f64>,
    #[serde(rename = "T")]
    t: Option<f64>,
    dt: Option<f64>,
    x0: Option<Vec<f64>>,
    xhat0: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChecks {
    run: Option<Vec<String>>,
    negativity_tol: Option<f64>,
    h2_tol: Option<f64>,
    totally_geodesic_tol: Option<f64>,
    convexity_tol: Option<f64>,
    rho_max: Option<f64>,
    convexity_level: Option<Vec<f64>>,
    /// Each entry is `[a1, .., an, b1, .., bn]`.
    convexity_pairs: Option<Vec<Vec<f64>>>,
    ltv_samples: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiffeo {
    phi: Option<Vec<String>>,
    inverse: Option<Vec<String>>,
}

pub const CHECK_NAMES: [&str; 4] = ["spd", "negativity", "totally-geodesic", "completeness"];

#[derive(Debug, Clone)]
pub struct ObserverConfig {
    pub gain: Gain,
    pub q: Option<f64>,
    pub e: Option<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub x0: Option<Vec<f64>>,
    pub xhat0: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ChecksConfig {
    pub run: Vec<String>,
    pub negativity_tol: f64,
    pub h2_tol: f64,
    pub totally_geodesic_tol: f64,
    pub convexity_tol: f64,
    pub rho_max: f64,
    pub convexity_level: Option<Vec<f64>>,
    pub convexity_pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub ltv_samples: usize,
}

#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub sha256: String,
    pub system: DynamicalSystem,
    pub metric: MetricField,
    pub domain: BoxDomain,
    pub grid: usize,
    pub observer: ObserverConfig,
    pub checks: ChecksConfig,
    pub diffeo: Option<Diffeomorphism>,
}

pub fn load_config(path: &Path) -> Result<ProblemConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        line: None,
        field: path.display().to_string(),
        message: format!("cannot be read: {e}"),
    })?;
    parse_config(&text)
}

/// 1-based line of the byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line on which `key` is assigned inside `[section]`.
fn key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn section_line(text: &str, section: &str) -> Option<usize> {
    text.lines()
        .position(|l| l.trim() == format!("[{section}]"))
        .map(|i| i + 1)
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: key_line(self.text, section, key).or_else(|| section_line(self.text, section)),
            field: format!("{section}.{key}"),
            message: message.into(),
        }
    }

    fn missing_section(&self, section: &str) -> ConfigError {
        ConfigError {
            line: None,
            field: format!("[{section}]"),
            message: "section required".into(),
        }
    }

    fn required<T>(&self, v: Option<T>, section: &str, key: &str) -> Result<T, ConfigError> {
        v.ok_or_else(|| self.err(section, key, "required"))
    }

    fn exprs(&self, items: &[String], n: usize, section: &str, key: &str) -> Result<Vec<Expr>, ConfigError> {
        items
            .iter()
            .enumerate()
            .map(|(i, s)| {
                parse_state(s, n).map_err(|e| self.err(section, key, format!("entry {}: {e}", i + 1)))
            })
            .collect()
    }

    fn vector(&self, v: &[f64], n: usize, section: &str, key: &str) -> Result<(), ConfigError> {
        if v.len() != n {
            return Err(self.err(section, key, format!("expected {n} entries (n = {n}), got {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(self.err(section, key, "entries must be finite"));
        }
        Ok(())
    }

    fn positive(&self, v: Option<f64>, section: &str, key: &str) -> Result<(), ConfigError> {
        match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(self.err(section, key, "must be positive")),
            _ => Ok(()),
        }
    }
}

pub fn parse_config(text: &str) -> Result<ProblemConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
        line: e.span().map(|s| line_of(text, s.start)),
        field: "config".into(),
        message: format!("parse error: {}", e.message()),
    })?;
    let cx = Ctx { text };

    let sys = raw.system.ok_or_else(|| cx.missing_section("system"))?;
    let f = cx.required(sys.f, "system", "f")?;
    let h = cx.required(sys.h, "system", "h")?;
    let n = sys.n.unwrap_or(f.len());
    if n == 0 {
        return Err(cx.err("system", "n", "must be positive"));
    }
    if f.len() != n {
        return Err(cx.err("system", "f", format!("expected {n} entries (n = {n}), got {}", f.len())));
    }
    if h.is_empty() {
        return Err(cx.err("system", "h", "must have at least one entry"));
    }
    if let Some(m) = sys.m {
        if h.len() != m {
            return Err(cx.err("system", "h", format!("expected {m} entries (m = {m}), got {}", h.len())));
        }
    }
    let system = DynamicalSystem::new(cx.exprs(&f, n, "system", "f")?, cx.exprs(&h, n, "system", "h")?)
        .map_err(|e| cx.err("system", "f", e.to_string()))?;

    let dom = raw.domain.ok_or_else(|| cx.missing_section("domain"))?;
    let lower = cx.required(dom.lower, "domain", "lower")?;
    let upper = cx.required(dom.upper, "domain", "upper")?;
    cx.vector(&lower, n, "domain", "lower")?;
    cx.vector(&upper, n, "domain", "upper")?;
    if lower.iter().zip(&upper).any(|(a, b)| a >= b) {
        return Err(cx.err("domain", "upper", "must exceed domain.lower on every axis"));
    }
    let domain = BoxDomain::new(lower, upper).map_err(|e| cx.err("domain", "lower", e.to_string()))?;
    let grid = dom.grid.unwrap_or(riemobs_core::metric::DEFAULT_GRID);
    if grid < 2 {
        return Err(cx.err("domain", "grid", "needs at least 2 points per axis"));
    }
    if (grid as f64).powi(n as i32) > riemobs_core::metric::MAX_GRID_POINTS as f64 {
        return Err(cx.err(
            "domain",
            "grid",
            format!("{grid}^{n} points exceed the limit of {}", riemobs_core::metric::MAX_GRID_POINTS),
        ));
    }

    let met = raw.metric.ok_or_else(|| cx.missing_section("metric"))?;
    let up = cx.required(met.upper, "metric", "upper")?;
    let need = n * (n + 1) / 2;
    if up.len() != need {
        return Err(cx.err(
            "metric",
            "upper",
            format!("a {n}x{n} metric needs {need} upper-triangle entries, got {}", up.len()),
        ));
    }
    let metric = MetricField::from_upper(n, cx.exprs(&up, n, "metric", "upper")?, domain.clone())
        .map_err(|e| cx.err("metric", "upper", e.to_string()))?;

    let o = raw.observer;
    let gain = match o.k_e {
        None => Gain::Constant(1.0),
        Some(RawGain::Number(k)) if k >= 0.0 => Gain::Constant(k),
        Some(RawGain::Number(_)) => return Err(cx.err("observer", "kE", "must be non-negative")),
        Some(RawGain::Expr(s)) => Gain::Expr(
            parse_state(&s, n).map_err(|e| cx.err("observer", "kE", e.to_string()))?,
        ),
    };
    cx.positive(o.q, "observer", "q")?;
    cx.positive(o.e, "observer", "E")?;
    cx.positive(o.t, "observer", "T")?;
    cx.positive(o.dt, "observer", "dt")?;
    for (v, key) in [(&o.x0, "x0"), (&o.xhat0, "xhat0")] {
        if let Some(v) = v {
            cx.vector(v, n, "observer", key)?;
        }
    }
    let observer = ObserverConfig {
        gain,
        q: o.q,
        e: o.e,
        t_end: o.t.unwrap_or(5.0),
        dt: o.dt.unwrap_or(0.01),
        x0: o.x0,
        xhat0: o.xhat0,
    };

    let c = raw.checks;
    let run = c.run.unwrap_or_else(|| vec!["spd".into()]);
    if let Some(bad) = run.iter().find(|r| !CHECK_NAMES.contains(&r.as_str())) {
        return Err(cx.err(
            "checks",
            "run",
            format!("unknown check `{bad}` (expected one of {})", CHECK_NAMES.join(", ")),
        ));
    }
    for (v, key) in [
        (c.negativity_tol, "negativity_tol"),
        (c.h2_tol, "h2_tol"),
        (c.totally_geodesic_tol, "totally_geodesic_tol"),
        (c.convexity_tol, "convexity_tol"),
        (c.rho_max, "rho_max"),
    ] {
        cx.positive(v, "checks", key)?;
    }
    if let Some(y) = &c.convexity_level {
        if y.len() != system.m() {
            return Err(cx.err("checks", "convexity_level", format!("expected {} entries (m)", system.m())));
        }
    }
    let mut pairs = Vec::new();
    for (i, p) in c.convexity_pairs.unwrap_or_default().into_iter().enumerate() {
        if p.len() != 2 * n {
            return Err(cx.err(
                "checks",
                "convexity_pairs",
                format!("pair {} needs {} entries (two points), got {}", i + 1, 2 * n, p.len()),
            ));
        }
        pairs.push((p[..n].to_vec(), p[n..].to_vec()));
    }
    let checks = ChecksConfig {
        run,
        negativity_tol: c.negativity_tol.unwrap_or(riemobs_core::conditions::NEGATIVITY_TOL),
        h2_tol: c.h2_tol.unwrap_or(riemobs_core::conditions::H2_TOL),
        totally_geodesic_tol: c.totally_geodesic_tol.unwrap_or(riemobs_core::conditions::TOTALLY_GEODESIC_TOL),
        convexity_tol: c.convexity_tol.unwrap_or(riemobs_core::conditions::CONVEXITY_TOL),
        rho_max: c.rho_max.unwrap_or(1e6),
        convexity_level: c.convexity_level,
        convexity_pairs: pairs,
        ltv_samples: c.ltv_samples.unwrap_or(8),
    };

    let diffeo = match raw.diffeo {
        None => None,
        Some(d) => {
            let phi = cx.required(d.phi, "diffeo", "phi")?;
            if phi.len() != n {
                return Err(cx.err("diffeo", "phi", format!("expected {n} entries (n = {n}), got {}", phi.len())));
            }
            let fwd = cx.exprs(&phi, n, "diffeo", "phi")?;
            let inv = match d.inverse {
                Some(inv) if inv.len() != n => {
                    return Err(cx.err("diffeo", "inverse", format!("expected {n} entries, got {}", inv.len())))
                }
                Some(inv) => Some(cx.exprs(&inv, n, "diffeo", "inverse")?),
                None => None,
            };
            Some(Diffeomorphism::new(fwd, inv).map_err(|e| cx.err("diffeo", "phi", e.to_string()))?)
        }
    };

    Ok(ProblemConfig {
        sha256: hex::encode(Sha256::digest(text.as_bytes())),
        system,
        metric,
        domain,
        grid,
        observer,
        checks,
        diffeo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use riemobs_core::builtin_example1;

    const EXAMPLE: &str = include_str!("../configs/example1.cfg");

    #[test]
    fn shipped_example_matches_the_builtin_bundle() {
        let cfg = parse_config(EXAMPLE).unwrap();
        let ex = builtin_example1();
        for x in [[0.0, 0.0], [0.7, -1.2], [-2.5, 2.9]] {
            assert_eq!(cfg.system.eval_f(&x).unwrap(), ex.system.eval_f(&x).unwrap());
            assert_eq!(cfg.system.eval_h(&x).unwrap(), ex.system.eval_h(&x).unwrap());
            assert_eq!(cfg.metric.eval(&x).unwrap(), ex.metric.eval(&x).unwrap());
            let phi = cfg.diffeo.as_ref().unwrap();
            assert_eq!(phi.apply(&x).unwrap(), ex.phi.apply(&x).unwrap());
        }
        assert_eq!(cfg.sha256.len(), 64);
    }

    fn replace(from: &str, to: &str) -> String {
        assert!(EXAMPLE.contains(from), "{from}");
        EXAMPLE.replacen(from, to, 1)
    }

    #[test]
    fn missing_output_map() {
        let text = replace("h = [\"x1\"]", "");
        let e = parse_config(&text).unwrap_err();
        assert!(e.to_string().ends_with("system.h required"), "{e}");
        assert_eq!(e.line, section_line(&text, "system"));
    }

    #[test]
    fn arity_mismatch() {
        let text = replace("f = [", "f = [\"x1\", ");
        let e = parse_config(&text).unwrap_err();
        assert_eq!(e.field, "system.f");
        assert!(e.message.contains("expected 2 entries"), "{e}");
        assert_eq!(e.line, key_line(&text, "system", "f"));
    }

    #[test]
    fn unknown_variable_names_the_field_and_line() {
        let text = replace("\"1+x1^2\"]", "\"1+x3^2\"]");
        let e = parse_config(&text).unwrap_err();
        assert_eq!(e.field, "metric.upper");
        assert!(e.message.contains("x3"), "{e}");
        assert!(e.line.is_some());
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let e = parse_config("[system]\nn = 2\nf = [\"x1\"\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.starts_with("parse error"));
    }

    #[test]
    fn box_bounds_are_ordered() {
        let text = replace("upper = [3.0, 3.0]", "upper = [3.0, -3.0]");
        assert_eq!(parse_config(&text).unwrap_err().field, "domain.upper");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = replace("[system]", "[system]\nbogus = 1");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn gain_may_be_an_expression() {
        let text = replace("kE = 1.0", "kE = \"1 + x1^2\"");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.observer.gain.eval(&[2.0, 0.0]).unwrap(), 5.0);
    }
}
