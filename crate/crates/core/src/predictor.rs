//! The learned stage-aware feature predictor.
//!
//! One expert predicts the feature at `pred_step` from the `K` newest cached
//! features (oldest first in the window):
//!
//! ```text
//! z    = W . concat(window) + b          residual direction, one per channel
//! dt   = offsets(schedule, pred_step)    timestep offsets, length S
//! out  = h_t + modulator(dt) * z         h_t = newest history entry
//! ```
//!
//! The modulator collapses the whole offset vector to a single scalar, so the
//! temporal position rescales the residual identically across channels. A
//! [`StagePredictor`] owns three experts and routes each step to the expert
//! of its stage; history entries are always treated as constants (gradients
//! never flow into the window), which keeps closed-loop training one step
//! deep.

use crate::error::{Error, Result};
use crate::modulator::{Modulator, ModulatorCache, ModulatorGrad, ModulatorKind};
use crate::plan::{stage_for_step, StageConfig};
use crate::rng::SeededRng;
use crate::spline::SplineGrid;
use crate::trajectory::{window, Feature, Schedule};

/// Offset vector fed to the modulator for a prediction at `pred_step`:
/// entry `j` is `t(pred_step) - t(S - 1 - j)`, i.e. offsets against the
/// schedule's timesteps taken in descending step order, oldest offset first.
pub fn offsets(schedule: &Schedule, pred_step: usize) -> Vec<f64> {
    let s = schedule.steps();
    let tp = schedule.t(pred_step);
    (0..s).map(|j| tp - schedule.t(s - 1 - j)).collect()
}

/// Dimensions and kind of a modulator to build, used by inits and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModulatorSpec {
    pub kind: ModulatorKind,
    /// Component count for the spline head, hidden width for the MLP head.
    pub width: usize,
    pub grid_intervals: usize,
    pub spline_order: usize,
}

impl ModulatorSpec {
    pub fn kan(width: usize) -> Self {
        ModulatorSpec {
            kind: ModulatorKind::Kan,
            width,
            grid_intervals: 8,
            spline_order: 3,
        }
    }

    pub fn mlp(width: usize) -> Self {
        ModulatorSpec {
            kind: ModulatorKind::Mlp,
            width,
            grid_intervals: 0,
            spline_order: 0,
        }
    }

    fn build(&self, input_len: usize, seed: u64) -> Result<Modulator> {
        match self.kind {
            ModulatorKind::Kan => {
                let grid = SplineGrid::with_defaults(self.grid_intervals, self.spline_order)?;
                Ok(Modulator::Kan(crate::modulator::KanScalar::init(
                    input_len, self.width, grid, seed,
                )?))
            }
            ModulatorKind::Mlp => Ok(Modulator::Mlp(crate::modulator::MlpScalar::init(
                input_len, self.width, seed,
            )?)),
        }
    }
}

impl Default for ModulatorSpec {
    fn default() -> Self {
        ModulatorSpec::kan(16)
    }
}

/// One per-stage predictor head.
#[derive(Debug, Clone, PartialEq)]
pub struct LesaExpert {
    window: usize,
    feature_dim: usize,
    /// Projection onto the residual direction, `feature_dim x (window * feature_dim)`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub modulator: Modulator,
}

/// Forward activations kept for [`LesaExpert::backward`].
#[derive(Debug, Clone)]
pub struct PredictCache {
    concat: Vec<f64>,
    z: Vec<f64>,
    alpha: f64,
    mod_cache: ModulatorCache,
    pred_step: usize,
}

impl PredictCache {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn pred_step(&self) -> usize {
        self.pred_step
    }
}

#[derive(Debug, Clone)]
pub struct ExpertGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub modulator: ModulatorGrad,
}

impl LesaExpert {
    /// Fresh expert: zero projection (the prediction starts as pure reuse)
    /// and a seeded modulator.
    pub fn init(
        window: usize,
        feature_dim: usize,
        input_len: usize,
        spec: &ModulatorSpec,
        seed: u64,
    ) -> Result<Self> {
        if window == 0 {
            return Err(Error::Validation("expert window must be positive".into()));
        }
        if feature_dim == 0 {
            return Err(Error::Validation("feature dim must be positive".into()));
        }
        Ok(LesaExpert {
            window,
            feature_dim,
            w: vec![0.0; feature_dim * window * feature_dim],
            b: vec![0.0; feature_dim],
            modulator: spec.build(input_len, seed)?,
        })
    }

    pub fn from_parts(
        window: usize,
        feature_dim: usize,
        w: Vec<f64>,
        b: Vec<f64>,
        modulator: Modulator,
    ) -> Result<Self> {
        if w.len() != feature_dim * window * feature_dim || b.len() != feature_dim {
            return Err(Error::Validation("expert parameter shapes do not match dims".into()));
        }
        Ok(LesaExpert {
            window,
            feature_dim,
            w,
            b,
            modulator,
        })
    }

    pub fn window_len(&self) -> usize {
        self.window
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn predict(
        &self,
        history: &[Feature],
        schedule: &Schedule,
        pred_step: usize,
    ) -> Result<(Feature, PredictCache)> {
        if pred_step >= schedule.steps() {
            return Err(Error::Validation(format!(
                "pred step {pred_step} outside schedule of {} steps",
                schedule.steps()
            )));
        }
        if self.modulator.input_len() != schedule.steps() {
            return Err(Error::DimMismatch {
                place: "modulator input length",
                expected: self.modulator.input_len(),
                got: schedule.steps(),
            });
        }
        let win = window(history, self.window)?;
        let d = self.feature_dim;
        let mut concat = Vec::with_capacity(self.window * d);
        for f in &win {
            if f.dim() != d {
                return Err(Error::DimMismatch {
                    place: "history feature dim",
                    expected: d,
                    got: f.dim(),
                });
            }
            concat.extend_from_slice(f.as_slice());
        }
        let cols = concat.len();
        let mut z = self.b.clone();
        for (row, zv) in z.iter_mut().enumerate() {
            let wrow = &self.w[row * cols..(row + 1) * cols];
            let mut acc = 0.0;
            for (wv, cv) in wrow.iter().zip(&concat) {
                acc += wv * cv;
            }
            *zv += acc;
        }
        let dt = offsets(schedule, pred_step);
        let (alpha, mod_cache) = self.modulator.forward(&dt)?;
        let base = win.last().expect("window is non-empty");
        let out: Vec<f64> = base
            .as_slice()
            .iter()
            .zip(&z)
            .map(|(h, zv)| h + alpha * zv)
            .collect();
        let out = Feature::new(out)?;
        Ok((
            out,
            PredictCache {
                concat,
                z,
                alpha,
                mod_cache,
                pred_step,
            },
        ))
    }

    /// Parameter gradients of a scalar loss given `dout` = dLoss/dPrediction.
    /// History inputs are constants by contract, so no gradient is returned
    /// for them.
    pub fn backward(&self, cache: &PredictCache, dout: &[f64]) -> Result<ExpertGrad> {
        let d = self.feature_dim;
        if dout.len() != d {
            return Err(Error::DimMismatch {
                place: "prediction gradient",
                expected: d,
                got: dout.len(),
            });
        }
        if cache.concat.len() != self.window * d || cache.z.len() != d {
            return Err(Error::StaleCache("predict cache shape does not match expert"));
        }
        let cols = cache.concat.len();
        let mut gw = vec![0.0; self.w.len()];
        let mut gb = vec![0.0; d];
        let mut dalpha = 0.0;
        for row in 0..d {
            dalpha += dout[row] * cache.z[row];
            let dz = cache.alpha * dout[row];
            gb[row] = dz;
            let grow = &mut gw[row * cols..(row + 1) * cols];
            for (g, cv) in grow.iter_mut().zip(&cache.concat) {
                *g = dz * cv;
            }
        }
        let gmod = self.modulator.backward(&cache.mod_cache, dalpha)?;
        Ok(ExpertGrad {
            w: gw,
            b: gb,
            modulator: gmod,
        })
    }

    pub(crate) fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.w, &self.b];
        out.extend(self.modulator.tensors());
        out
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.w.as_mut_slice(), self.b.as_mut_slice()];
        out.extend(self.modulator.tensors_mut());
        out
    }
}

impl ExpertGrad {
    pub(crate) fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.w, &self.b];
        out.extend(self.modulator.tensors());
        out
    }
}

/// Three experts plus the boundaries that route steps to them.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePredictor {
    steps: usize,
    feature_dim: usize,
    stages: StageConfig,
    experts: Vec<LesaExpert>,
}

impl StagePredictor {
    /// Builds three fresh experts with the given per-stage windows. Expert
    /// modulator seeds are drawn from `seed` in stage order.
    pub fn init(
        steps: usize,
        feature_dim: usize,
        stages: StageConfig,
        windows: (usize, usize, usize),
        spec: &ModulatorSpec,
        seed: u64,
    ) -> Result<Self> {
        stages.validate(steps)?;
        let mut rng = SeededRng::new(seed);
        let experts = [windows.0, windows.1, windows.2]
            .iter()
            .map(|&k| LesaExpert::init(k, feature_dim, steps, spec, rng.next_u64()))
            .collect::<Result<Vec<_>>>()?;
        Ok(StagePredictor {
            steps,
            feature_dim,
            stages,
            experts,
        })
    }

    /// Single-expert baseline: one expert shared by every stage, stored as
    /// three identical copies so the model stays format-compatible. Training
    /// keeps the copies synchronized via [`StagePredictor::tie_sync`].
    pub fn init_unsegmented(
        steps: usize,
        feature_dim: usize,
        stages: StageConfig,
        window: usize,
        spec: &ModulatorSpec,
        seed: u64,
    ) -> Result<Self> {
        stages.validate(steps)?;
        let mut rng = SeededRng::new(seed);
        let shared = LesaExpert::init(window, feature_dim, steps, spec, rng.next_u64())?;
        Ok(StagePredictor {
            steps,
            feature_dim,
            stages,
            experts: vec![shared.clone(), shared.clone(), shared],
        })
    }

    pub fn from_parts(
        steps: usize,
        feature_dim: usize,
        stages: StageConfig,
        experts: Vec<LesaExpert>,
    ) -> Result<Self> {
        stages.validate(steps)?;
        if experts.len() != 3 {
            return Err(Error::Validation(format!(
                "stage predictor needs exactly 3 experts, got {}",
                experts.len()
            )));
        }
        for e in &experts {
            if e.feature_dim() != feature_dim {
                return Err(Error::DimMismatch {
                    place: "expert feature dim",
                    expected: feature_dim,
                    got: e.feature_dim(),
                });
            }
            if e.modulator.input_len() != steps {
                return Err(Error::DimMismatch {
                    place: "expert modulator input",
                    expected: steps,
                    got: e.modulator.input_len(),
                });
            }
        }
        Ok(StagePredictor {
            steps,
            feature_dim,
            stages,
            experts,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn stages(&self) -> StageConfig {
        self.stages
    }

    pub fn experts(&self) -> &[LesaExpert] {
        &self.experts
    }

    #[cfg(test)]
    pub(crate) fn experts_mut(&mut self) -> &mut [LesaExpert] {
        &mut self.experts
    }

    pub fn expert(&self, idx: usize) -> &LesaExpert {
        &self.experts[idx]
    }

    /// Expert index (0-based) owning `step`.
    pub fn expert_index(&self, step: usize) -> usize {
        stage_for_step(step, self.stages.b1, self.stages.b2) - 1
    }

    /// Predicts the feature at `pred_step`, returning the index of the
    /// expert that served it.
    pub fn predict_at(
        &self,
        history: &[Feature],
        schedule: &Schedule,
        pred_step: usize,
    ) -> Result<(Feature, PredictCache, usize)> {
        if schedule.steps() != self.steps {
            return Err(Error::DimMismatch {
                place: "predictor schedule",
                expected: self.steps,
                got: schedule.steps(),
            });
        }
        let idx = self.expert_index(pred_step);
        let (out, cache) = self.experts[idx].predict(history, schedule, pred_step)?;
        Ok((out, cache, idx))
    }

    /// Copies expert 0 into the other two slots (tied single-expert mode).
    pub fn tie_sync(&mut self) {
        let shared = self.experts[0].clone();
        self.experts[1] = shared.clone();
        self.experts[2] = shared;
    }

    /// Whether all three experts hold identical parameters.
    pub fn experts_identical(&self) -> bool {
        self.experts[0] == self.experts[1] && self.experts[1] == self.experts[2]
    }

    pub(crate) fn tensors(&self) -> Vec<&[f64]> {
        self.experts.iter().flat_map(|e| e.tensors()).collect()
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.experts.iter_mut().flat_map(|e| e.tensors_mut()).collect()
    }
}
