use serde::Serialize;

use crate::error::{Error, Result};

/// Default number of grid nodes per axis.
pub const DEFAULT_GRID: usize = 41;
/// Upper bound on the total number of grid nodes.
pub const MAX_GRID_POINTS: usize = 100_000;

/// Axis-aligned box `[lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension(format!(
                "box has {} lower and {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidArgument(format!(
                    "axis {} bounds [{lo}, {hi}] must be finite with lower < upper",
                    i + 1
                )));
            }
        }
        Ok(BoxDomain { lower, upper })
    }

    /// The cube `[-r, r]^n`.
    pub fn cube(n: usize, r: f64) -> Self {
        BoxDomain {
            lower: vec![-r; n],
            upper: vec![r; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Strictly inside, at least `margin` away from every face.
    pub fn interior(&self, x: &[f64], margin: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v > lo + margin && *v < hi - margin)
    }

    /// Nodes of [`Self::tensor_grid`].
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        self.tensor_grid(per_axis).points
    }

    /// Tensor grid with `per_axis` nodes per axis (endpoints included), in
    /// lexicographic order with the last axis varying fastest. `per_axis`
    /// is reduced when the total would exceed [`MAX_GRID_POINTS`].
    pub fn tensor_grid(&self, per_axis: usize) -> TensorGrid {
        let n = self.dim();
        let mut k = per_axis.max(2);
        while n > 0 && k > 2 && (k as f64).powi(n as i32) > MAX_GRID_POINTS as f64 {
            k -= 1;
        }
        let total = k.pow(n as u32);
        let points = (0..total)
            .map(|mut idx| {
                let mut p = vec![0.0; n];
                for i in (0..n).rev() {
                    p[i] = self.node(i, idx % k, k);
                    idx /= k;
                }
                p
            })
            .collect();
        TensorGrid {
            domain: self.clone(),
            per_axis: k,
            points,
        }
    }

    fn node(&self, axis: usize, j: usize, k: usize) -> f64 {
        let s = j as f64 / (k - 1) as f64;
        self.lower[axis] + s * (self.upper[axis] - self.lower[axis])
    }
}

/// Regular grid over a box, with values attached by index for multilinear
/// interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    pub domain: BoxDomain,
    pub per_axis: usize,
    pub points: Vec<Vec<f64>>,
}

impl TensorGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Multilinear interpolation of node `values` at `x`, clamped to the box.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let n = self.domain.dim();
        let k = self.per_axis;
        let mut cell = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for i in 0..n {
            let lo = self.domain.lower[i];
            let hi = self.domain.upper[i];
            let mut t = (x[i].clamp(lo, hi) - lo) / (hi - lo) * (k - 1) as f64;
            // snap to nodes so that interpolation at a node returns its value
            if (t - t.round()).abs() < 1e-9 {
                t = t.round();
            }
            let c = (t.floor() as usize).min(k - 2);
            cell[i] = c;
            frac[i] = t - c as f64;
        }
        let mut total = 0.0;
        for corner in 0..(1usize << n) {
            let mut weight = 1.0;
            let mut idx = 0;
            for i in 0..n {
                let up = (corner >> i) & 1;
                weight *= if up == 1 { frac[i] } else { 1.0 - frac[i] };
                idx = idx * k + cell[i] + up;
            }
            if weight != 0.0 {
                total += weight * values[idx];
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_order_and_size() {
        let b = BoxDomain::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let g = b.grid(3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![0.0, -1.0]);
        assert_eq!(g[1], vec![0.0, 0.0]);
        assert_eq!(g[8], vec![1.0, 1.0]);
    }

    #[test]
    fn interpolation_is_exact_on_affine_data() {
        let g = BoxDomain::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap().tensor_grid(5);
        let f = |p: &[f64]| 2.0 * p[0] - p[1] + 0.5;
        let values: Vec<f64> = g.points.iter().map(|p| f(p)).collect();
        for x in [[0.3, 1.7], [-1.0, 0.0], [0.99, 0.01], [0.5, 1.0]] {
            assert!((g.interpolate(&values, &x) - f(&x)).abs() < 1e-14);
        }
        // clamped outside the box
        assert!((g.interpolate(&values, &[5.0, 1.0]) - f(&[1.0, 1.0])).abs() < 1e-14);
        for (p, v) in g.points.iter().zip(&values) {
            assert_eq!(g.interpolate(&values, p), *v);
        }
    }

    #[test]
    fn grid_is_capped() {
        let b = BoxDomain::cube(4, 1.0);
        assert!(b.grid(41).len() <= MAX_GRID_POINTS);
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(BoxDomain::new(vec![1.0], vec![1.0]).is_err());
        assert!(BoxDomain::new(vec![0.0], vec![f64::INFINITY]).is_err());
        assert!(BoxDomain::new(vec![0.0, 0.0], vec![1.0]).is_err());
    }
}
