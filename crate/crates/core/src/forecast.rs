//! Training-free forecasting of cached features: reuse and truncated Taylor
//! extrapolation over finite differences.
//!
//! A [`DiffTable`] ingests the feature produced at each full-compute step
//! (nominally every `spacing` steps) and maintains chained differences
//!
//! ```text
//! level[0] = newest value
//! level[i] = level[i-1](newest) - level[i-1](previous)
//! ```
//!
//! so `level[1]` is the backward difference at the newest step and `level[i]`
//! the i-th backward difference, all at the full-compute spacing `N`.
//!
//! [`taylor_forecast`] extrapolates `k` steps past the newest entry with the
//! Gregory-Newton backward form: for `u = k / N`,
//!
//! ```text
//! prediction = sum_i  u (u+1) .. (u+i-1) / i!  *  level[i]
//! ```
//!
//! The binomial coefficients make the direction of the differences matter:
//! with levels oriented newest-minus-previous and positive `u` the series
//! reproduces any stream polynomial in the step index up to the requested
//! order exactly. Flipping the first difference (previous minus newest, the
//! other convention one could read into a `(-k)^i` truncated Taylor form)
//! breaks even linear streams, which the tests pin down.
//!
//! Order 0 degenerates to plain reuse of the newest feature.

use crate::error::{Error, Result};
use crate::trajectory::Feature;

/// Highest supported extrapolation order. Chained differences amplify noise
/// by 2^i, so anything past this is numerically useless on real streams.
pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct DiffTable {
    spacing: usize,
    max_order: usize,
    levels: Vec<Feature>,
    updates: usize,
}

impl DiffTable {
    pub fn new(spacing: usize, max_order: usize) -> Result<Self> {
        if spacing == 0 {
            return Err(Error::Validation("table spacing must be positive".into()));
        }
        if max_order > MAX_ORDER {
            return Err(Error::Validation(format!(
                "max order {max_order} exceeds supported maximum {MAX_ORDER}"
            )));
        }
        Ok(DiffTable {
            spacing,
            max_order,
            levels: Vec::new(),
            updates: 0,
        })
    }

    pub fn spacing(&self) -> usize {
        self.spacing
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Differences currently held, lowest order first.
    pub fn levels(&self) -> &[Feature] {
        &self.levels
    }

    pub fn update_count(&self) -> usize {
        self.updates
    }

    /// Highest difference order the table can currently serve.
    pub fn available_order(&self) -> Option<usize> {
        self.levels.len().checked_sub(1)
    }

    /// Absorbs the feature computed at a full step and re-chains the
    /// difference levels.
    pub fn update(&mut self, f: &Feature) -> Result<()> {
        if let Some(first) = self.levels.first() {
            if first.dim() != f.dim() {
                return Err(Error::DimMismatch {
                    place: "table update",
                    expected: first.dim(),
                    got: f.dim(),
                });
            }
        }
        let depth = self.levels.len().min(self.max_order);
        let mut next = Vec::with_capacity(depth + 1);
        next.push(f.clone());
        for i in 0..depth {
            let diff = next[i].sub(&self.levels[i])?;
            next.push(diff);
        }
        self.levels = next;
        self.updates += 1;
        Ok(())
    }
}

/// A forecast plus the difference order that actually backed it.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub feature: Feature,
    pub order_used: usize,
}

/// Extrapolates `k` steps past the newest table entry at the requested
/// order, falling back to the largest order the table can serve.
pub fn taylor_forecast(table: &DiffTable, k: usize, order: usize) -> Result<Forecast> {
    let available = table.available_order().ok_or(Error::EmptyTable)?;
    if k == 0 || k >= table.spacing() {
        return Err(Error::Validation(format!(
            "forecast offset must satisfy 1 <= k < spacing, got k = {k} at spacing {}",
            table.spacing()
        )));
    }
    if order > table.max_order() {
        return Err(Error::Validation(format!(
            "requested order {order} exceeds table maximum {}",
            table.max_order()
        )));
    }
    let m = order.min(available);
    let u = k as f64 / table.spacing() as f64;
    let mut out = table.levels()[0].clone();
    let mut coeff = 1.0;
    for i in 1..=m {
        coeff *= (u + (i - 1) as f64) / i as f64;
        out.add_scaled(&table.levels()[i], coeff)?;
    }
    Ok(Forecast {
        feature: out,
        order_used: m,
    })
}

/// Order-0 forecast: the newest cached feature, unchanged.
pub fn reuse_forecast(table: &DiffTable) -> Result<Feature> {
    table.levels().first().cloned().ok_or(Error::EmptyTable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scalar(x: f64) -> Feature {
        Feature::new(vec![x]).unwrap()
    }

    fn levels_of(table: &DiffTable) -> Vec<f64> {
        table.levels().iter().map(|f| f[0]).collect()
    }

    #[test]
    fn update_chains_differences() {
        let mut t = DiffTable::new(5, 2).unwrap();
        t.update(&scalar(1.0)).unwrap();
        assert_eq!(levels_of(&t), vec![1.0]);
        t.update(&scalar(3.0)).unwrap();
        assert_eq!(levels_of(&t), vec![3.0, 2.0]);
        t.update(&scalar(7.0)).unwrap();
        assert_eq!(levels_of(&t), vec![7.0, 4.0, 2.0]);
        assert_eq!(t.update_count(), 3);
    }

    #[test]
    fn update_depth_is_capped_by_max_order() {
        let mut t = DiffTable::new(5, 1).unwrap();
        for x in [1.0, 3.0, 7.0, 15.0] {
            t.update(&scalar(x)).unwrap();
        }
        assert_eq!(levels_of(&t), vec![15.0, 8.0]);
    }

    #[test]
    fn linear_stream_is_continued_exactly() {
        // Values -15 then -5 arrive at spacing 5; the stream gains 2 per
        // step, so two steps past the newest entry it reads -1.
        let mut t = DiffTable::new(5, 2).unwrap();
        t.update(&scalar(-15.0)).unwrap();
        t.update(&scalar(-5.0)).unwrap();
        let f = taylor_forecast(&t, 2, 1).unwrap();
        assert_relative_eq!(f.feature[0], -1.0, max_relative = 1e-12);
        assert_eq!(f.order_used, 1);
        // The opposite difference orientation would walk the wrong way.
        let wrong = -5.0 + (2.0 / 5.0) * (-10.0);
        assert_relative_eq!(wrong, -9.0);
    }

    #[test]
    fn quadratic_stream_is_continued_exactly() {
        // g(s) = s^2 sampled at s = 0, 4, 8; forecast continues past s = 8.
        let mut t = DiffTable::new(4, 2).unwrap();
        for s in [0.0f64, 4.0, 8.0] {
            t.update(&scalar(s * s)).unwrap();
        }
        assert_eq!(levels_of(&t), vec![64.0, 48.0, 32.0]);
        for k in 1..4usize {
            let f = taylor_forecast(&t, k, 2).unwrap();
            let s = 8.0 + k as f64;
            assert_relative_eq!(f.feature[0], s * s, max_relative = 1e-12);
        }
    }

    #[test]
    fn order_falls_back_to_available_history() {
        let mut t = DiffTable::new(10, 2).unwrap();
        t.update(&scalar(5.0)).unwrap();
        let f = taylor_forecast(&t, 3, 2).unwrap();
        assert_eq!(f.order_used, 0);
        assert_eq!(f.feature[0], 5.0);
        t.update(&scalar(9.0)).unwrap();
        let f = taylor_forecast(&t, 3, 2).unwrap();
        assert_eq!(f.order_used, 1);
    }

    #[test]
    fn reuse_is_the_order_zero_forecast() {
        let mut t = DiffTable::new(7, 3).unwrap();
        for x in [2.5, -0.75, 11.0] {
            t.update(&scalar(x)).unwrap();
        }
        let r = reuse_forecast(&t).unwrap();
        let f = taylor_forecast(&t, 3, 0).unwrap();
        assert_eq!(r, f.feature);
        assert_eq!(r[0], 11.0);
    }

    #[test]
    fn input_validation() {
        let empty = DiffTable::new(5, 2).unwrap();
        assert!(matches!(reuse_forecast(&empty), Err(Error::EmptyTable)));
        assert!(matches!(taylor_forecast(&empty, 1, 0), Err(Error::EmptyTable)));
        assert!(DiffTable::new(0, 2).is_err());
        assert!(DiffTable::new(5, MAX_ORDER + 1).is_err());

        let mut t = DiffTable::new(5, 2).unwrap();
        t.update(&scalar(1.0)).unwrap();
        assert!(taylor_forecast(&t, 0, 1).is_err());
        assert!(taylor_forecast(&t, 5, 1).is_err());
        assert!(taylor_forecast(&t, 1, 3).is_err());
        assert!(t.update(&Feature::new(vec![1.0, 2.0]).unwrap()).is_err());
    }

    #[test]
    fn vector_streams_forecast_channel_wise() {
        let mut t = DiffTable::new(3, 1).unwrap();
        t.update(&Feature::new(vec![0.0, 10.0]).unwrap()).unwrap();
        t.update(&Feature::new(vec![3.0, 4.0]).unwrap()).unwrap();
        let f = taylor_forecast(&t, 2, 1).unwrap().feature;
        assert_relative_eq!(f[0], 5.0, max_relative = 1e-12);
        assert_relative_eq!(f[1], 0.0, epsilon = 1e-12);
    }

    proptest! {
        /// Degree-m polynomial streams sampled at spacing N are continued
        /// exactly by an order-m forecast, for every in-range offset.
        #[test]
        fn polynomial_streams_are_exact(
            n in 2usize..11,
            degree in 0usize..5,
            coeffs in proptest::collection::vec(-2.0f64..2.0, 5),
            start in 0usize..20,
        ) {
            let poly = |s: f64| -> f64 {
                coeffs.iter().take(degree + 1).rev().fold(0.0, |acc, c| acc * s + c)
            };
            let mut t = DiffTable::new(n, degree).unwrap();
            for i in 0..=degree {
                t.update(&scalar(poly((start + i * n) as f64))).unwrap();
            }
            let newest = (start + degree * n) as f64;
            for k in 1..n {
                let f = taylor_forecast(&t, k, degree).unwrap();
                let want = poly(newest + k as f64);
                let err = (f.feature[0] - want).abs();
                let scale = want.abs().max(1.0);
                prop_assert!(err / scale < 1e-9, "k {k}: {} vs {want}", f.feature[0]);
            }
        }
    }
}
