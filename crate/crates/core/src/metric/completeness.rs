use rayon::prelude::*;
use serde::Serialize;

use super::MetricField;
use crate::error::{Error, Result};
use crate::linalg::extreme_eigenvalues;

/// Samples per ball.
pub const PROBE_SAMPLES: usize = 2000;

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Radical inverse of `index` in base `PRIMES[dim]`.
pub fn halton(index: u64, dim: usize) -> f64 {
    let base = PRIMES[dim];
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRow {
    pub radius: f64,
    pub min_eigenvalue: f64,
    pub growth: f64,
}

/// Sampled lower bound of `P` on balls and the growth `r²·p̲(r)`. This is
/// evidence about completeness, never a proof.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletenessProbe {
    pub rows: Vec<ProbeRow>,
    pub threshold: f64,
    /// Growth is increasing in `r` and exceeds `threshold` at the last radius.
    pub evidence: bool,
}

/// Estimates `p̲(r) = min_{|x| ≤ r} λ_min(P(x))` for each radius from
/// [`PROBE_SAMPLES`] Halton points in the ball plus the `2n` axis points on
/// its boundary. `seed` shifts the Halton index.
pub fn completeness_probe(
    p: &MetricField,
    radii: &[f64],
    threshold: f64,
    seed: u64,
) -> Result<CompletenessProbe> {
    let n = p.dim();
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "radii must be positive and strictly increasing".into(),
        ));
    }
    let unit = unit_ball_points(n, seed);
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let mins = unit
            .par_iter()
            .map(|u| {
                let x: Vec<f64> = u.iter().map(|c| c * r).collect();
                let m = p.eval(&x)?;
                Ok(extreme_eigenvalues(&m).0)
            })
            .collect::<Result<Vec<f64>>>()?;
        let lo = mins.into_iter().fold(f64::INFINITY, f64::min);
        rows.push(ProbeRow {
            radius: r,
            min_eigenvalue: lo,
            growth: r * r * lo,
        });
    }
    let increasing = rows.windows(2).all(|w| w[1].growth > w[0].growth);
    let evidence = increasing && rows.last().is_some_and(|r| r.growth > threshold);
    Ok(CompletenessProbe {
        rows,
        threshold,
        evidence,
    })
}

fn unit_ball_points(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut pts = Vec::with_capacity(PROBE_SAMPLES + 2 * n);
    for i in 0..n {
        for s in [-1.0, 1.0] {
            let mut e = vec![0.0; n];
            e[i] = s;
            pts.push(e);
        }
    }
    let mut index = 1 + seed.wrapping_mul(1_000_003);
    let mut accepted = 0;
    while accepted < PROBE_SAMPLES {
        let u: Vec<f64> = (0..n).map(|d| 2.0 * halton(index, d) - 1.0).collect();
        index += 1;
        if u.iter().map(|c| c * c).sum::<f64>() <= 1.0 {
            pts.push(u);
            accepted += 1;
        }
    }
    pts
}
