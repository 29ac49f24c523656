//! Feature-cache acceleration for iterative denoising loops.
//!
//! A sampler that walks a fixed step schedule spends almost all of its budget
//! on backbone evaluations. This crate implements the cache side of that
//! trade: a handful of steps are computed in full, every other step is served
//! from a forecast of the cached feature stream. Three forecasters are
//! provided, from cheapest to most capable:
//!
//! * plain reuse of the newest cached feature,
//! * truncated Taylor extrapolation over finite differences ([`forecast`]),
//! * a learned stage-aware predictor that modulates a linear residual with a
//!   scalar spline network evaluated on timestep offsets ([`predictor`]).
//!
//! Two oracle backbones make the whole loop testable on a desk: a Gaussian
//! mixture with a closed-form rectified-flow velocity, and a synthetic
//! stage-dependent autoregressive feature generator ([`backbone`]). Training
//! ([`train`]), step planning with FLOP accounting ([`plan`]), accelerated
//! runs ([`runner`]), metrics ([`metrics`]) and comparison reports
//! ([`report`]) round out the pipeline; [`io`] fixes the binary formats for
//! trajectories and trained models.

pub mod backbone;
pub mod config;
pub mod error;
pub mod forecast;
pub mod io;
pub mod metrics;
pub mod modulator;
pub mod numfmt;
pub mod plan;
pub mod predictor;
pub mod report;
pub mod rng;
pub mod runner;
pub mod spline;
pub mod trajectory;
pub mod train;

pub use backbone::{Backbone, GmmComponent, GmmSpec, SynthParams};
pub use config::{BackboneConfig, BackboneKind};
pub use error::{Error, Result};
pub use forecast::{taylor_forecast, DiffTable, Forecast};
pub use metrics::{cosine_curve, pca_project, psnr, rasterize, ssim, PcaProjection};
pub use modulator::{KanScalar, MlpScalar, Modulator, ModulatorKind};
pub use spline::SplineGrid;
pub use plan::{flop_account, stage_for_step, CostModel, FlopAccount, StageConfig, StepKind, StepPlan};
pub use predictor::{offsets, LesaExpert, ModulatorSpec, StagePredictor};
pub use report::{compare, Report, ReportRow};
pub use rng::SeededRng;
pub use runner::{run_accelerated, Method};
pub use trajectory::{window, Feature, Schedule, Trajectory};
pub use train::{train_closed_loop, train_gt_guided, AdamState, TrainConfig, TrainLogRow};
