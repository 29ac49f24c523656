//! Two-phase predictor training and the optimizer behind it.
//!
//! Ground-truth guided training feeds the predictor real feature histories
//! and asks for the next Predict-step feature; closed-loop training replays
//! the step plan and feeds the predictor its own earlier outputs at Predict
//! steps, so it sees the same drifted histories inference will produce.
//! Either way a mini-batch is all Predict steps of one trajectory, the loss
//! is the channel-mean L1 distance, history entries are constants for the
//! backward pass, and each step's gradient reaches only the expert that owns
//! the step's stage.
//!
//! The optimizer is AdamW with decoupled weight decay and global-norm
//! gradient clipping applied before the moment updates.

use std::path::Path;

use crate::backbone::Backbone;
use crate::error::{Error, Result};
use crate::io::{trajectory_file_name, write_trajectory};
use crate::numfmt::g9;
use crate::plan::{StepKind, StepPlan};
use crate::predictor::{ExpertGrad, StagePredictor};
use crate::trajectory::{Feature, Schedule, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
    pub epochs_gt: usize,
    pub epochs_cl: usize,
    /// Train all stages as one shared expert: gradients from every step are
    /// routed to expert 0 and the copies are re-synchronized after each
    /// optimizer step.
    pub tie_experts: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
            epochs_gt: 1,
            epochs_cl: 2,
            tie_experts: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Validation(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return Err(Error::Validation(format!(
                "clip norm {} must be positive",
                self.clip_norm
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Validation("weight decay must be non-negative".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Validation(format!("{name} {b} outside [0, 1)")));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::Validation("optimizer eps must be positive".into()));
        }
        Ok(())
    }
}

/// Adam moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(model: &StagePredictor) -> Self {
        let shapes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
        AdamState {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Gradient accumulator shaped like a predictor's full tensor list.
#[derive(Debug, Clone)]
pub struct PredictorGrads {
    slots: Vec<Vec<f64>>,
}

impl PredictorGrads {
    pub fn zeros(model: &StagePredictor) -> Self {
        PredictorGrads {
            slots: model.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    /// Adds one expert's gradient into the slots of expert `expert_idx`.
    pub fn add_expert(
        &mut self,
        model: &StagePredictor,
        expert_idx: usize,
        grad: &ExpertGrad,
    ) -> Result<()> {
        let offset: usize = model.experts()[..expert_idx]
            .iter()
            .map(|e| e.tensors().len())
            .sum();
        for (i, g) in grad.tensors().into_iter().enumerate() {
            let slot = &mut self.slots[offset + i];
            if slot.len() != g.len() {
                return Err(Error::DimMismatch {
                    place: "gradient slot",
                    expected: slot.len(),
                    got: g.len(),
                });
            }
            for (s, gv) in slot.iter_mut().zip(g) {
                *s += gv;
            }
        }
        Ok(())
    }

    pub fn global_norm(&self) -> f64 {
        self.slots
            .iter()
            .flat_map(|s| s.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn slots(&self) -> &[Vec<f64>] {
        &self.slots
    }
}

/// One AdamW step with global-norm clipping:
///
/// ```text
/// g <- g * min(1, clip / |g|)
/// m <- b1 m + (1 - b1) g        v <- b2 v + (1 - b2) g^2
/// p <- p - lr mhat / (sqrt(vhat) + eps) - lr wd p
/// ```
///
/// With `tie_experts` the synchronized copies are refreshed afterwards.
pub fn optimizer_step(
    model: &mut StagePredictor,
    grads: &PredictorGrads,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.slots.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradients"));
    }
    let norm = grads.global_norm();
    let scale = if norm > cfg.clip_norm {
        cfg.clip_norm / norm
    } else {
        1.0
    };
    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.step as i32);
    let mut tensors = model.tensors_mut();
    if tensors.len() != grads.slots.len() {
        return Err(Error::DimMismatch {
            place: "optimizer tensors",
            expected: tensors.len(),
            got: grads.slots.len(),
        });
    }
    for ((params, gs), (ms, vs)) in tensors
        .iter_mut()
        .zip(&grads.slots)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for i in 0..params.len() {
            let g = gs[i] * scale;
            ms[i] = cfg.beta1 * ms[i] + (1.0 - cfg.beta1) * g;
            vs[i] = cfg.beta2 * vs[i] + (1.0 - cfg.beta2) * g * g;
            let mhat = ms[i] / bc1;
            let vhat = vs[i] / bc2;
            params[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps) + cfg.lr * cfg.weight_decay * params[i];
        }
    }
    drop(tensors);
    if cfg.tie_experts {
        model.tie_sync();
    }
    Ok(())
}

/// One line of the training log CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub phase: &'static str,
    pub epoch: usize,
    pub trajectory: usize,
    pub mean_l1: f64,
}

pub const TRAIN_LOG_HEADER: &str = "phase,epoch,trajectory,mean_l1";

pub fn training_log_csv(rows: &[TrainLogRow]) -> String {
    let mut out = String::from(TRAIN_LOG_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.phase,
            r.epoch,
            r.trajectory,
            g9(r.mean_l1)
        ));
    }
    out
}

fn l1_grad(pred: &Feature, target: &Feature, denom: f64) -> Vec<f64> {
    pred.as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| {
            let d = p - t;
            if d > 0.0 {
                1.0 / denom
            } else if d < 0.0 {
                -1.0 / denom
            } else {
                0.0
            }
        })
        .collect()
}

fn check_dataset(model: &StagePredictor, data: &[Trajectory], plan: &StepPlan, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Validation("training dataset is empty".into()));
    }
    if plan.steps() != model.steps() {
        return Err(Error::DimMismatch {
            place: "training plan",
            expected: model.steps(),
            got: plan.steps(),
        });
    }
    for t in data {
        if t.steps() != model.steps() {
            return Err(Error::DimMismatch {
                place: "trajectory steps",
                expected: model.steps(),
                got: t.steps(),
            });
        }
        if t.feature_dim() != model.feature_dim() {
            return Err(Error::DimMismatch {
                place: "trajectory feature dim",
                expected: model.feature_dim(),
                got: t.feature_dim(),
            });
        }
    }
    if cfg.tie_experts && !model.experts_identical() {
        return Err(Error::Validation(
            "tied training needs identical experts to start from".into(),
        ));
    }
    Ok(())
}

fn run_phase(
    model: &mut StagePredictor,
    data: &[Trajectory],
    plan: &StepPlan,
    cfg: &TrainConfig,
    phase: &'static str,
    epochs: usize,
    log: &mut Vec<TrainLogRow>,
) -> Result<Vec<f64>> {
    let sched = Schedule::new(model.steps())?;
    let predict_steps: Vec<usize> = (0..plan.steps())
        .filter(|&s| matches!(plan.kind(s), StepKind::Predict))
        .collect();
    let batch = predict_steps.len();
    let denom = (model.feature_dim() * batch.max(1)) as f64;
    let mut adam = AdamState::new(model);
    let mut curve = Vec::with_capacity(epochs);
    let mut history: Vec<Feature> = Vec::with_capacity(model.steps());
    for epoch in 0..epochs {
        let mut epoch_loss = 0.0;
        for (ti, traj) in data.iter().enumerate() {
            let mut grads = PredictorGrads::zeros(model);
            let mut batch_loss = 0.0;
            if phase == "gt" {
                for &s in &predict_steps {
                    let target = traj.feature(s);
                    let (pred, cache, idx) = model.predict_at(&traj.features()[..s], &sched, s)?;
                    batch_loss += pred.mean_abs_diff(target)?;
                    let dout = l1_grad(&pred, target, denom);
                    let eg = model.expert(idx).backward(&cache, &dout)?;
                    grads.add_expert(model, if cfg.tie_experts { 0 } else { idx }, &eg)?;
                }
            } else {
                history.clear();
                for s in 0..plan.steps() {
                    if matches!(plan.kind(s), StepKind::Full) {
                        history.push(traj.feature(s).clone());
                        continue;
                    }
                    let target = traj.feature(s);
                    let (pred, cache, idx) = model.predict_at(&history, &sched, s)?;
                    batch_loss += pred.mean_abs_diff(target)?;
                    let dout = l1_grad(&pred, target, denom);
                    let eg = model.expert(idx).backward(&cache, &dout)?;
                    grads.add_expert(model, if cfg.tie_experts { 0 } else { idx }, &eg)?;
                    history.push(pred);
                }
            }
            let mean_l1 = if batch == 0 { 0.0 } else { batch_loss / batch as f64 };
            if !mean_l1.is_finite() {
                return Err(Error::LossNotFinite {
                    phase,
                    epoch,
                    trajectory: ti,
                });
            }
            if batch > 0 {
                optimizer_step(model, &grads, &mut adam, cfg)?;
            }
            log.push(TrainLogRow {
                phase,
                epoch,
                trajectory: ti,
                mean_l1,
            });
            epoch_loss += mean_l1;
        }
        curve.push(epoch_loss / data.len() as f64);
    }
    Ok(curve)
}

/// Ground-truth guided phase: histories are real features, targets are the
/// Predict-step features, `cfg.epochs_gt` passes. Returns the per-epoch mean
/// loss curve and appends per-batch rows to `log`.
pub fn train_gt_guided(
    model: &mut StagePredictor,
    data: &[Trajectory],
    plan: &StepPlan,
    cfg: &TrainConfig,
    log: &mut Vec<TrainLogRow>,
) -> Result<Vec<f64>> {
    check_dataset(model, data, plan, cfg)?;
    run_phase(model, data, plan, cfg, "gt", cfg.epochs_gt, log)
}

/// Closed-loop autoregressive phase: the plan is replayed and the model's own
/// predictions (constants for the backward pass, recomputed every epoch with
/// current weights) fill the history at Predict steps.
pub fn train_closed_loop(
    model: &mut StagePredictor,
    data: &[Trajectory],
    plan: &StepPlan,
    cfg: &TrainConfig,
    log: &mut Vec<TrainLogRow>,
) -> Result<Vec<f64>> {
    check_dataset(model, data, plan, cfg)?;
    run_phase(model, data, plan, cfg, "cl", cfg.epochs_cl, log)
}

/// Records one full-compute trajectory per seed and persists each one under
/// its canonical file name in `dir`.
pub fn prepare_dataset(backbone: &Backbone, seeds: &[u64], dir: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    if seeds.is_empty() {
        return Err(Error::Validation("dataset needs at least one seed".into()));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let traj = backbone.record(seed)?;
        write_trajectory(dir.join(trajectory_file_name(seed)), &traj)?;
        out.push(traj);
    }
    Ok(out)
}
