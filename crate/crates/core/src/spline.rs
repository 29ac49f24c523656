//! Clamped uniform B-spline bases on a bounded interval.
//!
//! A [`SplineGrid`] with `g` intervals and order `k` carries the open-uniform
//! knot vector `[a,..a, a, a+h, .., b, b,..b]` (the endpoints repeated `k`
//! extra times, `g + 2k + 1` knots total) and spans `g + k` basis functions.
//! Evaluation uses the Cox-de Boor recurrence
//!
//! ```text
//! B[i,0](z) = 1 if t[i] <= z < t[i+1] else 0
//! B[i,d](z) = (z - t[i])/(t[i+d] - t[i]) * B[i,d-1](z)
//!           + (t[i+d+1] - z)/(t[i+d+1] - t[i+1]) * B[i+1,d-1](z)
//! ```
//!
//! with zero-denominator terms dropped, and the right endpoint closed so that
//! `basis(b)` is the one-hot vector on the last basis function. Inputs are
//! clamped to `[a, b]` before evaluation. Derivatives come from the standard
//! reduction to order `k - 1`:
//!
//! ```text
//! B'[i,k](z) = k * ( B[i,k-1](z)/(t[i+k] - t[i])
//!                  - B[i+1,k-1](z)/(t[i+k+1] - t[i+1]) )
//! ```

use crate::error::{Error, Result};

/// Default evaluation range for modulator splines.
pub const SPLINE_RANGE: (f64, f64) = (-1.25, 1.25);

#[derive(Debug, Clone, PartialEq)]
pub struct SplineGrid {
    a: f64,
    b: f64,
    intervals: usize,
    order: usize,
    knots: Vec<f64>,
}

impl SplineGrid {
    pub fn new(a: f64, b: f64, intervals: usize, order: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::Validation(format!("bad spline range [{a}, {b}]")));
        }
        if intervals == 0 {
            return Err(Error::Validation("spline grid needs at least one interval".into()));
        }
        if order == 0 {
            return Err(Error::Validation("spline order must be at least 1".into()));
        }
        let mut knots = Vec::with_capacity(intervals + 2 * order + 1);
        knots.extend(std::iter::repeat_n(a, order));
        let h = (b - a) / intervals as f64;
        for i in 0..=intervals {
            knots.push(if i == intervals { b } else { a + i as f64 * h });
        }
        knots.extend(std::iter::repeat_n(b, order));
        Ok(SplineGrid {
            a,
            b,
            intervals,
            order,
            knots,
        })
    }

    /// Grid on the default range.
    pub fn with_defaults(intervals: usize, order: usize) -> Result<Self> {
        Self::new(SPLINE_RANGE.0, SPLINE_RANGE.1, intervals, order)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn basis_count(&self) -> usize {
        self.intervals + self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn clamp(&self, z: f64) -> f64 {
        z.clamp(self.a, self.b)
    }

    /// Whether `z` lies inside the evaluation range, i.e. the clamp is the
    /// identity and gradients may flow through it.
    pub fn in_range(&self, z: f64) -> bool {
        (self.a..=self.b).contains(&z)
    }

    /// Dense basis vector at `clamp(z)`, length [`Self::basis_count`].
    pub fn basis(&self, z: f64) -> Vec<f64> {
        self.rows(z).1
    }

    /// Basis vector together with its derivative in `z` (of the clamped
    /// input; the caller decides whether the clamp gates the gradient).
    pub fn basis_and_deriv(&self, z: f64) -> (Vec<f64>, Vec<f64>) {
        let (lower, bz) = self.rows(z);
        let k = self.order as f64;
        let t = &self.knots;
        let n = self.basis_count();
        let mut dz = vec![0.0; n];
        for i in 0..n {
            let mut d = 0.0;
            let den0 = t[i + self.order] - t[i];
            if den0 > 0.0 {
                d += lower[i] / den0;
            }
            let den1 = t[i + self.order + 1] - t[i + 1];
            if den1 > 0.0 {
                d -= lower[i + 1] / den1;
            }
            dz[i] = k * d;
        }
        (bz, dz)
    }

    /// Runs the full triangle, returning the order `k - 1` row (over one more
    /// index) alongside the order `k` row.
    fn rows(&self, z: f64) -> (Vec<f64>, Vec<f64>) {
        let z = self.clamp(z);
        let t = &self.knots;
        let cells = t.len() - 1;
        let mut row = vec![0.0; cells];
        // Degree 0: indicator of the half-open knot interval, except that the
        // last nonempty interval also owns its right endpoint.
        let last = self.order + self.intervals - 1;
        for i in 0..cells {
            if (t[i] <= z && z < t[i + 1]) || (i == last && z == self.b) {
                row[i] = 1.0;
            }
        }
        let mut lower = row.clone();
        for d in 1..=self.order {
            if d == self.order {
                lower = row.clone();
            }
            let mut next = vec![0.0; cells];
            for i in 0..cells - d {
                let mut v = 0.0;
                let den0 = t[i + d] - t[i];
                if den0 > 0.0 {
                    v += (z - t[i]) / den0 * row[i];
                }
                let den1 = t[i + d + 1] - t[i + 1];
                if den1 > 0.0 {
                    v += (t[i + d + 1] - z) / den1 * row[i + 1];
                }
                next[i] = v;
            }
            row = next;
        }
        row.truncate(self.basis_count());
        lower.truncate(self.basis_count() + 1);
        (lower, row)
    }
}

impl Default for SplineGrid {
    /// 8 intervals, cubic order, default range.
    fn default() -> Self {
        SplineGrid::with_defaults(8, 3).expect("default grid parameters are valid")
    }
}
