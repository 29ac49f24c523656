//! Oracle backbones that stand in for a heavyweight denoiser.
//!
//! Two flavors. The Gaussian-mixture flow has a closed-form conditional
//! velocity, so a full-compute run is exact and cheap to integrate with
//! explicit Euler from t = 1 down to t = 0. The synthetic generator emits a
//! feature stream with three hand-shaped regimes (noisy, smooth with drift,
//! oscillatory refinement) so stage-dependent behavior is guaranteed rather
//! than hoped for. In both cases the recorded feature is the per-step model
//! output, the quantity a cache must supply for the run to proceed.

use crate::error::{Error, Result};
use crate::plan::stage_for_step;
use crate::rng::SeededRng;
use crate::trajectory::{Schedule, Trajectory};

/// One mixture component with isotropic scalar spread.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub sigma: f64,
}

/// Gaussian mixture data distribution for the rectified-flow oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmSpec {
    dim: usize,
    components: Vec<GmmComponent>,
}

impl GmmSpec {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Validation("mixture needs at least one component".into()));
        }
        let dim = components[0].mean.len();
        if dim == 0 {
            return Err(Error::Validation("mixture means need at least one channel".into()));
        }
        let mut wsum = 0.0;
        for c in &components {
            if c.mean.len() != dim {
                return Err(Error::DimMismatch {
                    place: "mixture mean",
                    expected: dim,
                    got: c.mean.len(),
                });
            }
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::Validation("mixture weights must be positive".into()));
            }
            if !(c.sigma.is_finite() && c.sigma > 0.0) {
                return Err(Error::Validation("mixture sigmas must be positive".into()));
            }
            if c.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("mixture mean"));
            }
            wsum += c.weight;
        }
        if (wsum - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "mixture weights sum to {wsum}, expected 1"
            )));
        }
        Ok(GmmSpec { dim, components })
    }

    /// Equal-weight mixture with means drawn on a sphere of the given radius.
    pub fn seeded(k: usize, dim: usize, radius: f64, sigma: f64, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Validation("mixture needs at least one component".into()));
        }
        let mut rng = SeededRng::new(seed);
        let components = (0..k)
            .map(|_| GmmComponent {
                weight: 1.0 / k as f64,
                mean: rng.unit_vec(dim).iter().map(|v| radius * v).collect(),
                sigma,
            })
            .collect();
        GmmSpec::new(components)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }
}

/// Standard normal draw at t = 1, the saved initial noise of a run.
pub fn sample_init(seed: u64, dim: usize) -> Vec<f64> {
    SeededRng::new(seed).normal_vec(dim)
}

/// Exact conditional velocity of the linear interpolation
/// `x_t = (1 - t) x0 + t eps` under the mixture prior:
///
/// ```text
/// s_k^2(t) = (1 - t)^2 sigma_k^2 + t^2
/// r_k ~ w_k N(x; (1 - t) mu_k, s_k^2 I)            (normalized)
/// v_k = ((t - (1 - t) sigma_k^2) / s_k^2) (x - (1 - t) mu_k) - mu_k
/// v = sum_k r_k v_k
/// ```
///
/// Responsibilities go through log-sum-exp, so far-away x stays stable.
pub fn gmm_velocity(spec: &GmmSpec, x: &[f64], t: f64) -> Result<Vec<f64>> {
    if x.len() != spec.dim {
        return Err(Error::DimMismatch {
            place: "gmm state",
            expected: spec.dim,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gmm state"));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Validation(format!("time {t} outside [0, 1]")));
    }
    let d = spec.dim as f64;
    let mut logits = Vec::with_capacity(spec.components.len());
    for c in &spec.components {
        let s2 = (1.0 - t).powi(2) * c.sigma * c.sigma + t * t;
        let mut dist2 = 0.0;
        for (xi, mi) in x.iter().zip(&c.mean) {
            let r = xi - (1.0 - t) * mi;
            dist2 += r * r;
        }
        logits.push(c.weight.ln() - 0.5 * d * (std::f64::consts::TAU * s2).ln() - dist2 / (2.0 * s2));
    }
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let norm: f64 = logits.iter().map(|l| (l - top).exp()).sum();
    let mut v = vec![0.0; spec.dim];
    for (c, l) in spec.components.iter().zip(&logits) {
        let r = (l - top).exp() / norm;
        let s2 = (1.0 - t).powi(2) * c.sigma * c.sigma + t * t;
        let gain = (t - (1.0 - t) * c.sigma * c.sigma) / s2;
        for i in 0..spec.dim {
            v[i] += r * (gain * (x[i] - (1.0 - t) * c.mean[i]) - c.mean[i]);
        }
    }
    Ok(v)
}

/// State magnitude beyond which an integration counts as diverged.
pub const DIVERGE_LIMIT: f64 = 1e6;

/// Explicit Euler through the full schedule, recording the state and the
/// velocity at every step. `seed` is carried as trajectory metadata only;
/// the integration itself depends on nothing but `(spec, schedule, x_init)`.
pub fn integrate_full(
    spec: &GmmSpec,
    schedule: &Schedule,
    x_init: &[f64],
    seed: u64,
) -> Result<Trajectory> {
    let steps = schedule.steps();
    let mut x = x_init.to_vec();
    let mut features = Vec::with_capacity(steps);
    let mut states = Vec::with_capacity(steps);
    for s in 0..steps {
        if x.iter().any(|v| v.abs() > DIVERGE_LIMIT) {
            return Err(Error::Diverged { step: s });
        }
        let v = gmm_velocity(spec, &x, schedule.t(s))?;
        states.push(x.clone());
        if s + 1 < steps {
            let dt = schedule.t(s + 1) - schedule.t(s);
            for (xi, vi) in x.iter_mut().zip(&v) {
                *xi += dt * vi;
            }
        }
        features.push(v);
    }
    Trajectory::new(schedule.timesteps(), features, states, seed, "gmm")
}

/// Shape of the synthetic stage-dependent feature stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub dim: usize,
    pub steps: usize,
    pub b1: usize,
    pub b2: usize,
    /// Per-stage AR coefficients.
    pub rho: (f64, f64, f64),
    /// Stage-2 drift scale.
    pub c: f64,
    /// Stage-3 oscillation amplitude.
    pub eps: f64,
    /// Stage-3 oscillation frequency.
    pub omega: f64,
    /// Seeds the drift directions shared by every trajectory of this
    /// backbone; per-run noise comes from the recording seed instead.
    pub seed: u64,
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Validation("synth dim must be positive".into()));
        }
        if !(0 < self.b1 && self.b1 < self.b2 && self.b2 < self.steps) {
            return Err(Error::Validation(format!(
                "synth boundaries ({}, {}) must satisfy 0 < b1 < b2 < {}",
                self.b1, self.b2, self.steps
            )));
        }
        for rho in [self.rho.0, self.rho.1, self.rho.2] {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::Validation(format!("ar coefficient {rho} outside [0, 1]")));
            }
        }
        for (name, v) in [("c", self.c), ("eps", self.eps), ("omega", self.omega)] {
            if !v.is_finite() {
                return Err(Error::Validation(format!("synth.{name} must be finite")));
            }
        }
        Ok(())
    }
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            dim: 8,
            steps: 50,
            b1: 16,
            b2: 41,
            rho: (0.90, 0.998, 0.96),
            c: 1.6,
            eps: 1.0,
            omega: 0.9,
            seed: 0,
        }
    }
}

/// Per-step feature stream with three regimes:
///
/// ```text
/// f_0 = unit-normalized Gaussian draw
/// f_s = rho_j f_{s-1} + drift_j(s) + sqrt(1 - rho_j^2) xi_s
/// drift_1 = 0
/// drift_2(s) = c (s - b1 + 1) / S  u
/// drift_3(s) = eps sin(omega s)    w
/// ```
///
/// where u and w are fixed unit vectors drawn from `p.seed` and the noise
/// stream comes from `traj_seed`. States mirror features.
pub fn synth_trajectory(p: &SynthParams, traj_seed: u64) -> Result<Trajectory> {
    p.validate()?;
    let mut dirs = SeededRng::new(p.seed);
    let u = dirs.unit_vec(p.dim);
    let w = dirs.unit_vec(p.dim);
    let mut rng = SeededRng::new(traj_seed);
    let mut features = Vec::with_capacity(p.steps);
    features.push(rng.unit_vec(p.dim));
    for s in 1..p.steps {
        let xi = rng.normal_vec(p.dim);
        let (rho, drift): (f64, Option<(f64, &[f64])>) = match stage_for_step(s, p.b1, p.b2) {
            1 => (p.rho.0, None),
            2 => {
                let gain = p.c * (s - p.b1 + 1) as f64 / p.steps as f64;
                (p.rho.1, Some((gain, &u)))
            }
            _ => {
                let gain = p.eps * (p.omega * s as f64).sin();
                (p.rho.2, Some((gain, &w)))
            }
        };
        let noise = (1.0 - rho * rho).max(0.0).sqrt();
        let prev = &features[s - 1];
        let f: Vec<f64> = (0..p.dim)
            .map(|i| {
                let d = drift.map_or(0.0, |(g, dir)| g * dir[i]);
                rho * prev[i] + d + noise * xi[i]
            })
            .collect();
        features.push(f);
    }
    let sched = Schedule::new(p.steps)?;
    let states = features.clone();
    Trajectory::new(sched.timesteps(), features, states, traj_seed, "synth")
}

/// A configured oracle, ready to record runs.
#[derive(Debug, Clone, PartialEq)]
pub enum Backbone {
    Gmm { spec: GmmSpec, steps: usize },
    Synth(SynthParams),
}

impl Backbone {
    pub fn steps(&self) -> usize {
        match self {
            Backbone::Gmm { steps, .. } => *steps,
            Backbone::Synth(p) => p.steps,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Backbone::Gmm { spec, .. } => spec.dim(),
            Backbone::Synth(p) => p.dim,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Backbone::Gmm { .. } => "gmm",
            Backbone::Synth(_) => "synth",
        }
    }

    /// Full-compute reference run for one recording seed.
    pub fn record(&self, seed: u64) -> Result<Trajectory> {
        match self {
            Backbone::Gmm { spec, steps } => {
                let sched = Schedule::new(*steps)?;
                let x0 = sample_init(seed, spec.dim());
                integrate_full(spec, &sched, &x0, seed)
            }
            Backbone::Synth(p) => synth_trajectory(p, seed),
        }
    }
}
