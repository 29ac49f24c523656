//! Step plans: which schedule steps compute the backbone in full and which
//! are served from the cache, plus the FLOP accounting that turns a plan into
//! a speedup figure.
//!
//! A plan marks step `s` as Full when `s` is a multiple of the interval `N`,
//! when it is one of the two stage boundaries, or when it is the final step.
//! Boundary and endpoint anchors keep every stage transition and the t = 0
//! output grounded in a true backbone call; everything else is Predict.

use crate::error::{Error, Result};

/// Stage boundaries `(b1, b2)` splitting a schedule into three step ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageConfig {
    pub b1: usize,
    pub b2: usize,
}

impl Default for StageConfig {
    fn default() -> Self {
        StageConfig { b1: 16, b2: 41 }
    }
}

impl StageConfig {
    pub fn new(b1: usize, b2: usize) -> Self {
        StageConfig { b1, b2 }
    }

    pub fn validate(&self, steps: usize) -> Result<()> {
        if !(0 < self.b1 && self.b1 < self.b2 && self.b2 < steps) {
            return Err(Error::Validation(format!(
                "stage boundaries must satisfy 0 < b1 < b2 < steps, got ({}, {}) for {steps} steps",
                self.b1, self.b2
            )));
        }
        Ok(())
    }
}

/// Default history window lengths per stage.
pub const DEFAULT_WINDOWS: (usize, usize, usize) = (4, 8, 8);

/// Stage id (1, 2 or 3) owning a step: 1 below `b1`, 2 in `[b1, b2)`,
/// 3 from `b2` on.
pub fn stage_for_step(step: usize, b1: usize, b2: usize) -> usize {
    if step < b1 {
        1
    } else if step < b2 {
        2
    } else {
        3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Full,
    Predict,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepPlan {
    interval: usize,
    stages: StageConfig,
    labels: Vec<StepKind>,
}

impl StepPlan {
    pub fn build(steps: usize, interval: usize, stages: StageConfig) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Validation(format!(
                "plan needs at least 2 steps, got {steps}"
            )));
        }
        if interval == 0 {
            return Err(Error::Validation("interval must be positive".into()));
        }
        stages.validate(steps)?;
        let labels = (0..steps)
            .map(|s| {
                if s % interval == 0 || s == stages.b1 || s == stages.b2 || s == steps - 1 {
                    StepKind::Full
                } else {
                    StepKind::Predict
                }
            })
            .collect();
        Ok(StepPlan {
            interval,
            stages,
            labels,
        })
    }

    /// Plan that computes every step in full (the unaccelerated baseline).
    pub fn all_full(steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Validation(format!(
                "plan needs at least 2 steps, got {steps}"
            )));
        }
        Ok(StepPlan {
            interval: 1,
            stages: StageConfig::default(),
            labels: vec![StepKind::Full; steps],
        })
    }

    pub fn steps(&self) -> usize {
        self.labels.len()
    }

    pub fn interval(&self) -> usize {
        self.interval
    }

    pub fn stages(&self) -> StageConfig {
        self.stages
    }

    pub fn kind(&self, s: usize) -> StepKind {
        self.labels[s]
    }

    pub fn is_full(&self, s: usize) -> bool {
        self.labels[s] == StepKind::Full
    }

    pub fn full_count(&self) -> usize {
        self.labels.iter().filter(|k| **k == StepKind::Full).count()
    }

    pub fn predict_count(&self) -> usize {
        self.steps() - self.full_count()
    }

    pub fn full_steps(&self) -> Vec<usize> {
        (0..self.steps()).filter(|&s| self.is_full(s)).collect()
    }
}

/// Per-step compute costs, in whatever unit the caller prefers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub full_cost: f64,
    pub predict_cost: f64,
}

impl Default for CostModel {
    /// Unit cost per full step, free predictions. This reproduces the pure
    /// step-count speedup `steps / full_count`.
    fn default() -> Self {
        CostModel {
            full_cost: 1.0,
            predict_cost: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlopAccount {
    pub full_steps: usize,
    pub predict_steps: usize,
    pub baseline: f64,
    pub total: f64,
    pub speedup: f64,
}

pub fn flop_account(plan: &StepPlan, cost: &CostModel) -> Result<FlopAccount> {
    if !(cost.full_cost.is_finite() && cost.predict_cost.is_finite()) {
        return Err(Error::NonFinite("cost model"));
    }
    if cost.full_cost <= 0.0 || cost.predict_cost < 0.0 {
        return Err(Error::Validation(
            "full cost must be positive and predict cost non-negative".into(),
        ));
    }
    let full = plan.full_count();
    let predict = plan.predict_count();
    let baseline = plan.steps() as f64 * cost.full_cost;
    let total = full as f64 * cost.full_cost + predict as f64 * cost.predict_cost;
    if total == 0.0 {
        return Err(Error::Validation("plan has zero total cost".into()));
    }
    Ok(FlopAccount {
        full_steps: full,
        predict_steps: predict,
        baseline,
        total,
        speedup: baseline / total,
    })
}
