use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }
}

/// Outcome of a grid or sample based check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub check: String,
    pub verdict: Verdict,
    /// Largest residual seen; `fail` implies it exceeds `tolerance`.
    pub worst_residual: f64,
    pub witness_point: Option<Vec<f64>>,
    pub witness_direction: Option<Vec<f64>>,
    /// Time stamp of the witness for trajectory checks.
    pub witness_time: Option<f64>,
    pub grid_size: usize,
    pub tolerance: f64,
    /// Points where the output Jacobian loses rank.
    pub rank_deficient_points: Vec<Vec<f64>>,
    /// Samples that could not be evaluated (solver failures).
    pub skipped: usize,
    pub detail: String,
}

impl ConditionReport {
    pub fn new(check: &str, tolerance: f64) -> Self {
        ConditionReport {
            check: check.to_string(),
            verdict: Verdict::Pass,
            worst_residual: f64::NEG_INFINITY,
            witness_point: None,
            witness_direction: None,
            witness_time: None,
            grid_size: 0,
            tolerance,
            rank_deficient_points: Vec::new(),
            skipped: 0,
            detail: String::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict.is_pass()
    }
}

/// Per-sample residual used in deterministic reductions.
#[derive(Debug, Clone)]
pub(crate) struct Sample {
    pub point: Vec<f64>,
    pub residual: f64,
    pub direction: Option<Vec<f64>>,
}

/// Worst sample: largest residual, ties broken by the lexicographically
/// smallest point.
pub(crate) fn worst(samples: &[Sample]) -> Option<&Sample> {
    samples.iter().reduce(|best, s| {
        use std::cmp::Ordering::*;
        match s.residual.total_cmp(&best.residual) {
            Greater => s,
            Less => best,
            Equal => {
                if s.point.partial_cmp(&best.point) == Some(Less) {
                    s
                } else {
                    best
                }
            }
        }
    })
}

/// Fills verdict, worst residual and witness from samples.
pub(crate) fn summarize(mut report: ConditionReport, samples: &[Sample]) -> ConditionReport {
    report.grid_size = samples.len() + report.skipped;
    if let Some(w) = worst(samples) {
        report.worst_residual = w.residual;
        // passing reports also carry the extremal point, for inspection
        report.witness_point = Some(w.point.clone());
        report.witness_direction = w.direction.clone();
        if w.residual > report.tolerance {
            report.verdict = Verdict::Fail;
        }
    }
    if report.verdict == Verdict::Pass && report.skipped > 0 {
        report.verdict = Verdict::Inconclusive;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(point: Vec<f64>, residual: f64) -> Sample {
        Sample {
            point,
            residual,
            direction: None,
        }
    }

    #[test]
    fn worst_breaks_ties_lexicographically() {
        let v = vec![s(vec![1.0, 0.0], 2.0), s(vec![0.0, 5.0], 2.0), s(vec![3.0, 3.0], 1.0)];
        assert_eq!(worst(&v).unwrap().point, vec![0.0, 5.0]);
    }

    #[test]
    fn fail_implies_witness() {
        let r = summarize(ConditionReport::new("t", 1e-9), &[s(vec![0.5], 1e-3), s(vec![0.0], -1.0)]);
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.worst_residual > r.tolerance);
        assert_eq!(r.witness_point, Some(vec![0.5]));
        assert_eq!(r.grid_size, 2);
    }

    #[test]
    fn skipped_samples_make_passes_inconclusive() {
        let mut base = ConditionReport::new("t", 1e-9);
        base.skipped = 1;
        let r = summarize(base, &[s(vec![0.0], -1.0)]);
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }
}
