//! Core domain types: features, step schedules and recorded trajectories.
//!
//! Trajectories are the storage artifact of the whole pipeline: one file per
//! seed holding the timestep grid, the feature stream (one backbone output
//! per step) and the solver state at each step. Stored reals are binary32,
//! all computation stays in binary64; [`Trajectory::new`] therefore rounds
//! every real to its nearest binary32 value once, at construction, so that a
//! write/read cycle is bit-exact for any trajectory this crate can produce.

use crate::error::{Error, Result};

/// One cached backbone output, a dense vector of `dim()` reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature(Vec<f64>);

impl Feature {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("feature must have at least one channel".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature"));
        }
        Ok(Feature(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `self - other`, channel-wise.
    pub fn sub(&self, other: &Feature) -> Result<Feature> {
        self.check_dim(other.dim())?;
        Ok(Feature(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    /// `self += scale * other`, channel-wise.
    pub fn add_scaled(&mut self, other: &Feature, scale: f64) -> Result<()> {
        self.check_dim(other.dim())?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
        Ok(())
    }

    /// Mean absolute difference over channels.
    pub fn mean_abs_diff(&self, other: &Feature) -> Result<f64> {
        self.check_dim(other.dim())?;
        let sum: f64 = self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum();
        Ok(sum / self.0.len() as f64)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Feature) -> Result<f64> {
        self.check_dim(other.dim())?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    fn check_dim(&self, other: usize) -> Result<()> {
        if self.0.len() != other {
            return Err(Error::DimMismatch {
                place: "feature",
                expected: self.0.len(),
                got: other,
            });
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for Feature {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Uniform denoising schedule: `steps` points from t = 1 down to t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    steps: usize,
}

impl Schedule {
    pub fn new(steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Validation(format!(
                "schedule needs at least 2 steps, got {steps}"
            )));
        }
        Ok(Schedule { steps })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Timestep at step index `s`: `1 - s / (steps - 1)`. The endpoints are
    /// exact, t(0) = 1 and t(steps - 1) = 0.
    pub fn t(&self, s: usize) -> f64 {
        debug_assert!(s < self.steps);
        1.0 - s as f64 / (self.steps - 1) as f64
    }

    pub fn timesteps(&self) -> Vec<f64> {
        (0..self.steps).map(|s| self.t(s)).collect()
    }
}

/// The last `k` entries of `history`, oldest first. A history shorter than
/// `k` is left-padded by repeating its oldest entry, so the result always has
/// exactly `k` entries.
pub fn window(history: &[Feature], k: usize) -> Result<Vec<&Feature>> {
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    if k == 0 {
        return Err(Error::Validation("window length must be positive".into()));
    }
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let idx = (history.len() + i).checked_sub(k);
        out.push(&history[idx.unwrap_or(0)]);
    }
    Ok(out)
}

/// A recorded run: timesteps, one feature per step, one state per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    timesteps: Vec<f64>,
    features: Vec<Feature>,
    states: Vec<Vec<f64>>,
    seed: u64,
    backbone_tag: String,
}

fn quantize(x: f64) -> f64 {
    x as f32 as f64
}

impl Trajectory {
    /// Builds and validates a trajectory. Every real is rounded to its
    /// nearest binary32 value here, making the binary format lossless.
    pub fn new(
        timesteps: Vec<f64>,
        features: Vec<Vec<f64>>,
        states: Vec<Vec<f64>>,
        seed: u64,
        backbone_tag: impl Into<String>,
    ) -> Result<Self> {
        let steps = timesteps.len();
        if steps < 2 {
            return Err(Error::Validation(format!(
                "trajectory needs at least 2 steps, got {steps}"
            )));
        }
        if features.len() != steps {
            return Err(Error::DimMismatch {
                place: "trajectory features",
                expected: steps,
                got: features.len(),
            });
        }
        if states.len() != steps {
            return Err(Error::DimMismatch {
                place: "trajectory states",
                expected: steps,
                got: states.len(),
            });
        }
        let timesteps: Vec<f64> = timesteps.into_iter().map(quantize).collect();
        if timesteps.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("trajectory timesteps"));
        }
        if (timesteps[0] - 1.0).abs() > 1e-12 || timesteps[steps - 1].abs() > 1e-12 {
            return Err(Error::Validation(
                "timesteps must run from 1 down to 0".into(),
            ));
        }
        if timesteps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Validation(
                "timesteps must be strictly decreasing".into(),
            ));
        }
        let dim = features[0].len();
        let state_dim = states[0].len();
        if state_dim == 0 {
            return Err(Error::Validation("states must have at least one channel".into()));
        }
        let mut qfeatures = Vec::with_capacity(steps);
        for f in features {
            if f.len() != dim {
                return Err(Error::DimMismatch {
                    place: "trajectory feature dim",
                    expected: dim,
                    got: f.len(),
                });
            }
            qfeatures.push(Feature::new(f.into_iter().map(quantize).collect())?);
        }
        let mut qstates = Vec::with_capacity(steps);
        for s in states {
            if s.len() != state_dim {
                return Err(Error::DimMismatch {
                    place: "trajectory state dim",
                    expected: state_dim,
                    got: s.len(),
                });
            }
            let s: Vec<f64> = s.into_iter().map(quantize).collect();
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("trajectory states"));
            }
            qstates.push(s);
        }
        Ok(Trajectory {
            timesteps,
            features: qfeatures,
            states: qstates,
            seed,
            backbone_tag: backbone_tag.into(),
        })
    }

    pub fn steps(&self) -> usize {
        self.timesteps.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].dim()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn timestep(&self, s: usize) -> f64 {
        self.timesteps[s]
    }

    pub fn timesteps(&self) -> &[f64] {
        &self.timesteps
    }

    pub fn feature(&self, s: usize) -> &Feature {
        &self.features[s]
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn state(&self, s: usize) -> &[f64] {
        &self.states[s]
    }

    /// State recorded at the final step, t = 0.
    pub fn endpoint(&self) -> &[f64] {
        self.states.last().expect("validated non-empty")
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Label of the backbone that produced the run. In-memory metadata only;
    /// the binary format does not persist it.
    pub fn backbone_tag(&self) -> &str {
        &self.backbone_tag
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lin_traj(steps: usize, dim: usize) -> Trajectory {
        let sched = Schedule::new(steps).unwrap();
        let feats: Vec<Vec<f64>> = (0..steps)
            .map(|s| (0..dim).map(|d| s as f64 + d as f64 * 0.5).collect())
            .collect();
        let states = feats.clone();
        Trajectory::new(sched.timesteps(), feats, states, 9, "test").unwrap()
    }

    #[test]
    fn schedule_endpoints_are_exact() {
        for steps in [2usize, 3, 50, 101] {
            let sched = Schedule::new(steps).unwrap();
            assert_eq!(sched.t(0), 1.0);
            assert_eq!(sched.t(steps - 1), 0.0);
            let ts = sched.timesteps();
            assert!(ts.windows(2).all(|w| w[1] < w[0]));
        }
        assert!(Schedule::new(1).is_err());
    }

    #[test]
    fn schedule_spacing_is_uniform() {
        let sched = Schedule::new(50).unwrap();
        let ts = sched.timesteps();
        let h = ts[0] - ts[1];
        for w in ts.windows(2) {
            assert_relative_eq!(w[0] - w[1], h, max_relative = 1e-12);
        }
    }

    #[test]
    fn feature_rejects_bad_input() {
        assert!(Feature::new(vec![]).is_err());
        assert!(Feature::new(vec![1.0, f64::NAN]).is_err());
        assert!(Feature::new(vec![f64::INFINITY]).is_err());
        assert!(Feature::new(vec![0.0]).is_ok());
    }

    #[test]
    fn window_takes_newest_k_oldest_first() {
        let h: Vec<Feature> = (0..5)
            .map(|i| Feature::new(vec![i as f64]).unwrap())
            .collect();
        let w = window(&h, 3).unwrap();
        let got: Vec<f64> = w.iter().map(|f| f[0]).collect();
        assert_eq!(got, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn window_pads_short_history_with_oldest() {
        let h: Vec<Feature> = (0..2)
            .map(|i| Feature::new(vec![i as f64]).unwrap())
            .collect();
        let w = window(&h, 4).unwrap();
        let got: Vec<f64> = w.iter().map(|f| f[0]).collect();
        assert_eq!(got, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn window_rejects_empty_history_and_zero_k() {
        let h: Vec<Feature> = vec![];
        assert!(matches!(window(&h, 3), Err(Error::EmptyHistory)));
        let h = vec![Feature::new(vec![1.0]).unwrap()];
        assert!(window(&h, 0).is_err());
    }

    #[test]
    fn trajectory_validates_shape_and_grid() {
        let t = lin_traj(5, 3);
        assert_eq!(t.steps(), 5);
        assert_eq!(t.feature_dim(), 3);
        assert_eq!(t.state_dim(), 3);
        assert_eq!(t.endpoint(), t.state(4));

        let sched = Schedule::new(3).unwrap();
        let f = vec![vec![0.0]; 3];
        // Non-decreasing grid.
        assert!(Trajectory::new(vec![1.0, 0.2, 0.2], f.clone(), f.clone(), 0, "t").is_err());
        // Wrong endpoints.
        assert!(Trajectory::new(vec![0.9, 0.5, 0.0], f.clone(), f.clone(), 0, "t").is_err());
        // Mismatched lengths.
        assert!(Trajectory::new(sched.timesteps(), vec![vec![0.0]; 2], f.clone(), 0, "t").is_err());
        // Ragged feature dims.
        assert!(Trajectory::new(
            sched.timesteps(),
            vec![vec![0.0], vec![0.0, 1.0], vec![0.0]],
            f,
            0,
            "t"
        )
        .is_err());
    }

    #[test]
    fn construction_quantizes_to_binary32() {
        let sched = Schedule::new(2).unwrap();
        let x = 0.1f64; // not representable in binary32
        let t = Trajectory::new(
            sched.timesteps(),
            vec![vec![x], vec![x]],
            vec![vec![x], vec![x]],
            0,
            "t",
        )
        .unwrap();
        assert_eq!(t.feature(0)[0], 0.1f32 as f64);
        assert_ne!(t.feature(0)[0], 0.1f64);
        // Quantization is idempotent.
        assert_eq!(t.feature(0)[0] as f32 as f64, t.feature(0)[0]);
    }

    #[test]
    fn feature_arithmetic_helpers() {
        let a = Feature::new(vec![1.0, 2.0, 3.0]).unwrap();
        let b = Feature::new(vec![0.5, 0.5, 0.5]).unwrap();
        let d = a.sub(&b).unwrap();
        assert_eq!(d.as_slice(), &[0.5, 1.5, 2.5]);
        let mut c = a.clone();
        c.add_scaled(&b, 2.0).unwrap();
        assert_eq!(c.as_slice(), &[2.0, 3.0, 4.0]);
        assert_relative_eq!(a.mean_abs_diff(&b).unwrap(), (0.5 + 1.5 + 2.5) / 3.0);
        let short = Feature::new(vec![1.0]).unwrap();
        assert!(a.sub(&short).is_err());
    }
}
