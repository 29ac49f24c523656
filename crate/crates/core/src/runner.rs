//! Accelerated inference: walk a step plan, compute the true feature at Full
//! steps, and substitute a cached or predicted one at Predict steps.
//!
//! The solver consumes whatever feature was emitted, so prediction errors
//! feed back into later states exactly as they would in a real accelerated
//! run. With [`Method::Full`] every step computes the true feature and the
//! result is bit-identical to the backbone's own recording.

use crate::backbone::{gmm_velocity, sample_init, synth_trajectory, Backbone, DIVERGE_LIMIT};
use crate::error::{Error, Result};
use crate::forecast::{reuse_forecast, taylor_forecast, DiffTable};
use crate::plan::{StepKind, StepPlan};
use crate::predictor::StagePredictor;
use crate::trajectory::{Feature, Schedule, Trajectory};

/// How Predict steps obtain their feature.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// No substitution: every step runs the backbone.
    Full,
    /// Repeat the newest full-step feature.
    Reuse,
    /// Truncated Taylor extrapolation of the given order.
    Taylor(usize),
    /// Learned stage predictor with spline modulators.
    Lesa(StagePredictor),
    /// Learned stage predictor with MLP modulators, kept separate so reports
    /// can name the ablation.
    LesaMlp(StagePredictor),
}

impl Method {
    /// Validated Taylor method; orders past 2 are the table's business, not a
    /// comparison method.
    pub fn taylor(order: usize) -> Result<Method> {
        if order > 2 {
            return Err(Error::Validation(format!(
                "taylor method order must be 0, 1, or 2, got {order}"
            )));
        }
        Ok(Method::Taylor(order))
    }

    pub fn label(&self) -> String {
        match self {
            Method::Full => "full".into(),
            Method::Reuse => "reuse".into(),
            Method::Taylor(m) => format!("taylor:{m}"),
            Method::Lesa(_) => "lesa".into(),
            Method::LesaMlp(_) => "lesa-mlp".into(),
        }
    }

    pub fn model(&self) -> Option<&StagePredictor> {
        match self {
            Method::Lesa(m) | Method::LesaMlp(m) => Some(m),
            _ => None,
        }
    }

    fn table_order(&self) -> usize {
        match self {
            Method::Taylor(m) => *m,
            _ => 0,
        }
    }
}

fn check_method(backbone: &Backbone, plan: &StepPlan, method: &Method) -> Result<()> {
    if plan.steps() != backbone.steps() {
        return Err(Error::DimMismatch {
            place: "plan length",
            expected: backbone.steps(),
            got: plan.steps(),
        });
    }
    if let Some(model) = method.model() {
        if model.steps() != backbone.steps() {
            return Err(Error::DimMismatch {
                place: "model schedule",
                expected: backbone.steps(),
                got: model.steps(),
            });
        }
        if model.feature_dim() != backbone.dim() {
            return Err(Error::DimMismatch {
                place: "model feature dim",
                expected: backbone.dim(),
                got: model.feature_dim(),
            });
        }
    }
    Ok(())
}

/// Runs one accelerated trajectory for `seed` under `plan` and `method`.
pub fn run_accelerated(
    backbone: &Backbone,
    plan: &StepPlan,
    method: &Method,
    seed: u64,
) -> Result<Trajectory> {
    check_method(backbone, plan, method)?;
    let steps = plan.steps();
    let sched = Schedule::new(steps)?;
    let mut table = DiffTable::new(plan.interval(), method.table_order())?;
    let mut history: Vec<Feature> = Vec::with_capacity(steps);
    let mut last_full = 0usize;

    // The synthetic stream is stateless: the true feature at a step does not
    // depend on what was emitted earlier, so precompute it once. The mixture
    // flow is stateful and evaluated on the (possibly drifted) solver state.
    let truth = match backbone {
        Backbone::Synth(p) => Some(synth_trajectory(p, seed)?),
        Backbone::Gmm { .. } => None,
    };
    let mut x = match backbone {
        Backbone::Gmm { spec, .. } => sample_init(seed, spec.dim()),
        Backbone::Synth(_) => Vec::new(),
    };

    let mut features: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(steps);
    for s in 0..steps {
        let full = matches!(plan.kind(s), StepKind::Full) || matches!(method, Method::Full);
        let f = if full {
            match backbone {
                Backbone::Gmm { spec, .. } => {
                    if x.iter().any(|v| v.abs() > DIVERGE_LIMIT) {
                        return Err(Error::Diverged { step: s });
                    }
                    Feature::new(gmm_velocity(spec, &x, sched.t(s))?)?
                }
                Backbone::Synth(_) => truth.as_ref().expect("synth truth").feature(s).clone(),
            }
        } else {
            match method {
                Method::Full => unreachable!("full method computes every step"),
                Method::Reuse => reuse_forecast(&table)?,
                Method::Taylor(m) => taylor_forecast(&table, s - last_full, *m)?.feature,
                Method::Lesa(model) | Method::LesaMlp(model) => {
                    model.predict_at(&history, &sched, s)?.0
                }
            }
        };
        if matches!(plan.kind(s), StepKind::Full) {
            table.update(&f)?;
            last_full = s;
        }
        history.push(f.clone());
        match backbone {
            Backbone::Gmm { .. } => {
                states.push(x.clone());
                if s + 1 < steps {
                    let dt = sched.t(s + 1) - sched.t(s);
                    for (xi, fi) in x.iter_mut().zip(f.as_slice()) {
                        *xi += dt * fi;
                    }
                }
            }
            Backbone::Synth(_) => states.push(f.as_slice().to_vec()),
        }
        features.push(f.into_vec());
    }
    Trajectory::new(sched.timesteps(), features, states, seed, backbone.tag())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{GmmSpec, SynthParams};
    use crate::plan::{StageConfig, StepPlan};
    use crate::predictor::ModulatorSpec;

    fn gmm_backbone() -> Backbone {
        Backbone::Gmm {
            spec: GmmSpec::seeded(4, 8, 4.0, 0.5, 7).unwrap(),
            steps: 50,
        }
    }

    fn plan(n: usize) -> StepPlan {
        StepPlan::build(50, n, StageConfig::default()).unwrap()
    }

    #[test]
    fn full_method_matches_the_recording_bit_for_bit() {
        let b = gmm_backbone();
        for n in [2, 5, 10] {
            let run = run_accelerated(&b, &plan(n), &Method::Full, 3).unwrap();
            assert_eq!(run, b.record(3).unwrap());
        }
        let s = Backbone::Synth(SynthParams::default());
        let run = run_accelerated(&s, &plan(10), &Method::Full, 3).unwrap();
        assert_eq!(run, s.record(3).unwrap());
    }

    #[test]
    fn reuse_repeats_the_last_full_feature() {
        let b = Backbone::Synth(SynthParams::default());
        let p = plan(5);
        let run = run_accelerated(&b, &p, &Method::Reuse, 1).unwrap();
        let mut last_full = 0;
        for s in 0..p.steps() {
            if p.is_full(s) {
                last_full = s;
            } else {
                assert_eq!(run.feature(s), run.feature(last_full), "step {s}");
            }
        }
    }

    #[test]
    fn constant_stream_is_exact_for_every_training_free_method() {
        let p = SynthParams {
            rho: (1.0, 1.0, 1.0),
            c: 0.0,
            eps: 0.0,
            ..SynthParams::default()
        };
        let b = Backbone::Synth(p);
        let reference = b.record(4).unwrap();
        for method in [Method::Reuse, Method::taylor(1).unwrap(), Method::taylor(2).unwrap()] {
            let run = run_accelerated(&b, &plan(10), &method, 4).unwrap();
            assert_eq!(run, reference, "{}", method.label());
        }
    }

    #[test]
    fn zero_model_equals_reuse() {
        let b = gmm_backbone();
        let model = StagePredictor::init(
            50,
            8,
            StageConfig::default(),
            (4, 8, 8),
            &ModulatorSpec::kan(4),
            0,
        )
        .unwrap();
        let p = plan(10);
        let lesa = run_accelerated(&b, &p, &Method::Lesa(model), 5).unwrap();
        let reuse = run_accelerated(&b, &p, &Method::Reuse, 5).unwrap();
        assert_eq!(lesa, reuse);
    }

    #[test]
    fn taylor_beats_reuse_on_the_smooth_flow() {
        let b = gmm_backbone();
        let p = plan(10);
        let (mut e_reuse, mut e_taylor) = (0.0, 0.0);
        for seed in 0..10 {
            let full = b.record(seed).unwrap();
            let norm: f64 = full.endpoint().iter().map(|v| v * v).sum::<f64>().sqrt();
            for (method, acc) in [
                (Method::Reuse, &mut e_reuse),
                (Method::taylor(1).unwrap(), &mut e_taylor),
            ] {
                let run = run_accelerated(&b, &p, &method, seed).unwrap();
                let d: f64 = run
                    .endpoint()
                    .iter()
                    .zip(full.endpoint())
                    .map(|(a, r)| (a - r) * (a - r))
                    .sum::<f64>()
                    .sqrt();
                *acc += d / norm;
            }
        }
        assert!(
            e_taylor <= e_reuse,
            "taylor {e_taylor} should not trail reuse {e_reuse}"
        );
    }

    #[test]
    fn mismatched_resources_are_rejected() {
        let b = gmm_backbone();
        let short = StepPlan::build(20, 5, StageConfig::new(6, 13)).unwrap();
        assert!(run_accelerated(&b, &short, &Method::Reuse, 0).is_err());
        let model = StagePredictor::init(
            50,
            3,
            StageConfig::default(),
            (4, 8, 8),
            &ModulatorSpec::kan(2),
            0,
        )
        .unwrap();
        assert!(run_accelerated(&b, &plan(10), &Method::Lesa(model), 0).is_err());
        assert!(Method::taylor(3).is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let b = Backbone::Synth(SynthParams::default());
        let p = plan(7);
        let m = Method::taylor(2).unwrap();
        assert_eq!(
            run_accelerated(&b, &p, &m, 9).unwrap(),
            run_accelerated(&b, &p, &m, 9).unwrap()
        );
    }
}
