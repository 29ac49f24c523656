//! Fixtures shared by the benchmark targets: a mid-sized synthetic backbone
//! and a briefly trained predictor, so the hot paths run on realistic data
//! instead of zeros.

use lesa_core::plan::DEFAULT_WINDOWS;
use lesa_core::train::train_gt_guided;
use lesa_core::{
    Backbone, ModulatorSpec, StageConfig, StagePredictor, StepPlan, SynthParams, TrainConfig,
    Trajectory,
};

pub fn synth_backbone(dim: usize) -> Backbone {
    Backbone::Synth(SynthParams {
        dim,
        ..SynthParams::default()
    })
}

pub fn stages() -> StageConfig {
    StageConfig::new(16, 41)
}

pub fn plan(n: usize) -> StepPlan {
    StepPlan::build(50, n, stages()).expect("default plan builds")
}

/// Two GT epochs over eight recordings: enough to move the weights off their
/// zero initialization so the predict path exercises real arithmetic.
pub fn quick_model(backbone: &Backbone, plan: &StepPlan) -> StagePredictor {
    let data: Vec<Trajectory> = (0..8)
        .map(|seed| backbone.record(seed).expect("recording succeeds"))
        .collect();
    let mut model = StagePredictor::init(
        backbone.steps(),
        backbone.dim(),
        stages(),
        DEFAULT_WINDOWS,
        &ModulatorSpec::kan(16),
        1,
    )
    .expect("model init");
    let cfg = TrainConfig {
        lr: 1e-3,
        epochs_gt: 2,
        ..TrainConfig::default()
    };
    train_gt_guided(&mut model, &data, plan, &cfg, &mut Vec::new()).expect("training succeeds");
    model
}

#[cfg(test)]
mod tests {
    use super::*;
    use lesa_core::{run_accelerated, Method};

    #[test]
    fn fixtures_build_and_run() {
        let backbone = synth_backbone(4);
        let plan = plan(10);
        let model = quick_model(&backbone, &plan);
        let traj = run_accelerated(&backbone, &plan, &Method::Lesa(model), 99).unwrap();
        assert_eq!(traj.steps(), 50);
    }
}
