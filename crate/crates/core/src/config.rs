//! Text configuration for backbones: `key=value` lines, one per setting.
//!
//! Recognized keys: `backbone` (gmm or synth), `steps`, `dim`, `seed`,
//! `gmm.components`, `gmm.radius`, `gmm.sigma`, `synth.b1`, `synth.b2`,
//! `synth.rho1`, `synth.rho2`, `synth.rho3`, `synth.c`, `synth.eps`,
//! `synth.omega`. Blank lines and `#` comments are skipped; unknown keys are
//! rejected rather than ignored so typos fail loudly.

use crate::backbone::{Backbone, GmmSpec, SynthParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackboneKind {
    Gmm,
    Synth,
}

/// Parsed configuration with defaults for every field; `build` turns it into
/// a ready backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    pub steps: usize,
    pub dim: usize,
    pub seed: u64,
    pub gmm_components: usize,
    pub gmm_radius: f64,
    pub gmm_sigma: f64,
    pub synth_b1: usize,
    pub synth_b2: usize,
    pub synth_rho: (f64, f64, f64),
    pub synth_c: f64,
    pub synth_eps: f64,
    pub synth_omega: f64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        let synth = SynthParams::default();
        BackboneConfig {
            kind: BackboneKind::Gmm,
            steps: 50,
            dim: 8,
            seed: 0,
            gmm_components: 4,
            gmm_radius: 4.0,
            gmm_sigma: 0.5,
            synth_b1: synth.b1,
            synth_b2: synth.b2,
            synth_rho: synth.rho,
            synth_c: synth.c,
            synth_eps: synth.eps,
            synth_omega: synth.omega,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for key `{key}`")))
}

impl BackboneConfig {
    /// Defaults overlaid with the settings in `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = BackboneConfig::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Applies `key=value` lines on top of the current settings.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "backbone" => {
                self.kind = match value {
                    "gmm" => BackboneKind::Gmm,
                    "synth" => BackboneKind::Synth,
                    other => {
                        return Err(Error::Config(format!(
                            "backbone must be gmm or synth, got `{other}`"
                        )))
                    }
                }
            }
            "steps" => self.steps = parse_num(key, value)?,
            "dim" => self.dim = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "gmm.components" => self.gmm_components = parse_num(key, value)?,
            "gmm.radius" => self.gmm_radius = parse_num(key, value)?,
            "gmm.sigma" => self.gmm_sigma = parse_num(key, value)?,
            "synth.b1" => self.synth_b1 = parse_num(key, value)?,
            "synth.b2" => self.synth_b2 = parse_num(key, value)?,
            "synth.rho1" => self.synth_rho.0 = parse_num(key, value)?,
            "synth.rho2" => self.synth_rho.1 = parse_num(key, value)?,
            "synth.rho3" => self.synth_rho.2 = parse_num(key, value)?,
            "synth.c" => self.synth_c = parse_num(key, value)?,
            "synth.eps" => self.synth_eps = parse_num(key, value)?,
            "synth.omega" => self.synth_omega = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Backbone> {
        if self.steps < 2 {
            return Err(Error::Config(format!(
                "steps must be at least 2, got {}",
                self.steps
            )));
        }
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        match self.kind {
            BackboneKind::Gmm => {
                let spec = GmmSpec::seeded(
                    self.gmm_components,
                    self.dim,
                    self.gmm_radius,
                    self.gmm_sigma,
                    self.seed,
                )?;
                Ok(Backbone::Gmm {
                    spec,
                    steps: self.steps,
                })
            }
            BackboneKind::Synth => {
                let params = SynthParams {
                    dim: self.dim,
                    steps: self.steps,
                    b1: self.synth_b1,
                    b2: self.synth_b2,
                    rho: self.synth_rho,
                    c: self.synth_c,
                    eps: self.synth_eps,
                    omega: self.synth_omega,
                    seed: self.seed,
                };
                params.validate()?;
                Ok(Backbone::Synth(params))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_builds_the_documented_gmm() {
        let b = BackboneConfig::default().build().unwrap();
        match b {
            Backbone::Gmm { spec, steps } => {
                assert_eq!(steps, 50);
                assert_eq!(spec.dim(), 8);
                assert_eq!(spec.components().len(), 4);
                assert_relative_eq!(spec.components()[0].sigma, 0.5);
            }
            _ => panic!("expected gmm"),
        }
    }

    #[test]
    fn parse_overrides_defaults() {
        let text = "\
# synthetic benchmark
backbone = synth
steps=50
dim = 16
seed=3

synth.rho1 = 0.6
synth.c=0.1
";
        let cfg = BackboneConfig::parse(text).unwrap();
        let b = cfg.build().unwrap();
        match b {
            Backbone::Synth(p) => {
                assert_eq!(p.dim, 16);
                assert_eq!(p.seed, 3);
                assert_relative_eq!(p.rho.0, 0.6);
                assert_relative_eq!(p.rho.1, 0.998);
                assert_relative_eq!(p.c, 0.1);
            }
            _ => panic!("expected synth"),
        }
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        let err = BackboneConfig::parse("gmm.radis=4").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("gmm.radis"));
        assert!(matches!(
            BackboneConfig::parse("steps=fifty"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            BackboneConfig::parse("backbone=vae"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            BackboneConfig::parse("no equals sign"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn build_validates_ranges() {
        let cfg = BackboneConfig {
            steps: 1,
            ..BackboneConfig::default()
        };
        assert!(cfg.build().is_err());
        let cfg = BackboneConfig {
            kind: BackboneKind::Synth,
            synth_b1: 45,
            synth_b2: 40,
            ..BackboneConfig::default()
        };
        assert!(cfg.build().is_err());
    }
}
