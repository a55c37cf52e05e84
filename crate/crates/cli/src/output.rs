use std::fmt::Write as _;

use riemobs_core::{GeodesicPath, SimulationTrace};

use crate::commands::Run;

fn finish(w: csv::Writer<Vec<u8>>) -> anyhow::Result<String> {
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv: {e}"))?;
    Ok(String::from_utf8(bytes)?)
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Columns `t, x1..xn, xhat1..xhatn, y1..ym, d, V, flags`; `d` and `V`
/// are blank where unavailable, flags are `;`-separated.
pub fn trace_csv(tr: &SimulationTrace) -> anyhow::Result<String> {
    let n = tr.x.first().map_or(0, Vec::len);
    let m = tr.y.first().map_or(0, Vec::len);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("xhat{i}")));
    header.extend((1..=m).map(|i| format!("y{i}")));
    header.extend(["d".into(), "V".into(), "flags".into()]);
    w.write_record(&header)?;
    for j in 0..tr.len() {
        let mut row = vec![num(tr.t[j])];
        row.extend(tr.x[j].iter().map(|v| num(*v)));
        row.extend(tr.xhat[j].iter().map(|v| num(*v)));
        row.extend(tr.y[j].iter().map(|v| num(*v)));
        row.push(tr.d.as_ref().and_then(|d| d[j]).map(num).unwrap_or_default());
        row.push(tr.v.as_ref().map(|v| num(v[j])).unwrap_or_default());
        row.push(tr.flags[j].join(";"));
        w.write_record(&row)?;
    }
    finish(w)
}

/// Columns `s, x1..xn, v1..vn`.
pub fn geodesic_csv(path: &GeodesicPath) -> anyhow::Result<String> {
    let n = path.x.first().map_or(0, Vec::len);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header = vec!["s".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for ((s, x), v) in path.s.iter().zip(&path.x).zip(&path.v) {
        let mut row = vec![num(*s)];
        row.extend(x.iter().chain(v).map(|c| num(*c)));
        w.write_record(&row)?;
    }
    finish(w)
}

fn fmt_point(p: &Option<Vec<f64>>) -> String {
    match p {
        Some(v) => format!(
            "({})",
            v.iter().map(|c| format!("{c:.6}")).collect::<Vec<_>>().join(", ")
        ),
        None => "-".into(),
    }
}

pub fn human(run: &Run) -> String {
    let mut s = String::new();
    if run.command == "distance" {
        if let Some(d) = run.values.get("distance") {
            let _ = writeln!(s, "{d}");
            return s;
        }
    }
    let _ = writeln!(s, "{}: {}", run.command, run.status);
    for c in &run.checks {
        let _ = writeln!(
            s,
            "  {:<22} {:<12} worst residual {:.6e} (tol {:.1e}), witness {}{}",
            c.check,
            format!("{:?}", c.verdict).to_lowercase(),
            c.worst_residual,
            c.tolerance,
            fmt_point(&c.witness_point),
            c.witness_time.map(|t| format!(" at t = {t:.4}")).unwrap_or_default()
        );
        if !c.rank_deficient_points.is_empty() {
            let _ = writeln!(s, "    rank-deficient points: {}", c.rank_deficient_points.len());
        }
        if c.skipped > 0 {
            let _ = writeln!(s, "    skipped samples: {}", c.skipped);
        }
    }
    for (k, v) in &run.values {
        let _ = writeln!(s, "  {k} = {v}");
    }
    s
}
